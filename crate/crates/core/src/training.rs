//! Mini-batch optimizers, stopping rules and initialization schemes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{self, LabeledDataset, SyntheticKind};
use crate::loss::{self, LossConfig};
use crate::math;
use crate::network::{self, NetworkSpec, ParamVector, Workspace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
    AdamW,
    Rmsprop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient for SGD, Adam and RMSprop; decoupled
    /// decay for AdamW.
    pub weight_decay: f64,
    pub rms_alpha: f64,
    pub shuffle_seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            learning_rate: 0.2,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            rms_alpha: 0.99,
            shuffle_seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn adamw(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            learning_rate,
            weight_decay: 0.01,
            ..Self::default()
        }
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self {
            kind: OptimizerKind::Rmsprop,
            learning_rate,
            ..Self::default()
        }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.shuffle_seed = seed;
        self
    }

    /// A zero learning rate is accepted (it freezes θ).
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.rms_alpha) {
            return bad("rms_alpha must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps must be positive and weight_decay non-negative");
        }
        Ok(())
    }
}

/// Optimizer state; the update formulas follow the PyTorch definitions.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, num_params: usize) -> Result<Self> {
        cfg.validate()?;
        let moments = match cfg.kind {
            OptimizerKind::Sgd => 0,
            _ => num_params,
        };
        Ok(Self {
            cfg,
            step: 0,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
        })
    }

    /// Applies one update in place. `grad` may be modified (weight decay).
    pub fn step(&mut self, theta: &mut [f64], grad: &mut [f64]) {
        let c = self.cfg;
        let lr = c.learning_rate;
        self.step = self.step.saturating_add(1);
        if c.weight_decay != 0.0 && c.kind != OptimizerKind::AdamW {
            for (g, t) in grad.iter_mut().zip(theta.iter()) {
                *g += c.weight_decay * t;
            }
        }
        match c.kind {
            OptimizerKind::Sgd => {
                for (t, g) in theta.iter_mut().zip(grad.iter()) {
                    *t -= lr * g;
                }
            }
            OptimizerKind::Adam | OptimizerKind::AdamW => {
                if c.kind == OptimizerKind::AdamW {
                    let shrink = 1.0 - lr * c.weight_decay;
                    theta.iter_mut().for_each(|t| *t *= shrink);
                }
                let bc1 = 1.0 - math::powi(c.beta1, self.step);
                let bc2 = 1.0 - math::powi(c.beta2, self.step);
                for i in 0..theta.len() {
                    let g = grad[i];
                    self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
                    self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
                    let denom = math::sqrt(self.v[i] / bc2) + c.eps;
                    theta[i] -= lr * (self.m[i] / bc1) / denom;
                }
            }
            OptimizerKind::Rmsprop => {
                for i in 0..theta.len() {
                    let g = grad[i];
                    self.v[i] = c.rms_alpha * self.v[i] + (1.0 - c.rms_alpha) * g * g;
                    theta[i] -= lr * g / (math::sqrt(self.v[i]) + c.eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct StopCriteria {
    pub max_epochs: usize,
    pub loss_window: usize,
    pub loss_tol: f64,
    pub require_full_train_accuracy: bool,
}

impl Default for StopCriteria {
    fn default() -> Self {
        Self {
            max_epochs: 5000,
            loss_window: 20,
            loss_tol: 1e-5,
            require_full_train_accuracy: true,
        }
    }
}

impl StopCriteria {
    /// Stops at the first epoch with 100% training accuracy.
    pub fn until_fit(max_epochs: usize) -> Self {
        Self {
            max_epochs,
            loss_window: 1,
            loss_tol: f64::INFINITY,
            require_full_train_accuracy: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.loss_window == 0 {
            return Err(Error::InvalidConfig(
                "max_epochs and loss_window must be at least 1".into(),
            ));
        }
        if !(self.loss_tol >= 0.0) {
            return Err(Error::InvalidConfig("loss_tol must be non-negative".into()));
        }
        Ok(())
    }

    fn satisfied(&self, history: &[f64], accuracy: f64) -> bool {
        if self.require_full_train_accuracy && accuracy < 1.0 {
            return false;
        }
        if history.len() < self.loss_window {
            return false;
        }
        let tail = &history[history.len() - self.loss_window..];
        let hi = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = tail.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo < self.loss_tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub final_train_accuracy: f64,
    /// Full-dataset loss after each epoch.
    pub loss_history: Vec<f64>,
    pub converged: bool,
    pub checkpoint_epochs: Vec<usize>,
    pub checkpoint_params: Vec<ParamVector>,
}

/// Mini-batch training with a seeded shuffle per epoch. Checkpoint epoch 0
/// is `theta0`; epoch `e` is the state after `e` epochs.
pub fn train(
    spec: &NetworkSpec,
    theta0: &ParamVector,
    data: &LabeledDataset,
    loss: LossConfig,
    opt: &OptimizerConfig,
    stop: &StopCriteria,
    checkpoint_at: &[usize],
) -> Result<(ParamVector, TrainReport)> {
    loss::check_batch(spec, theta0, data)?;
    stop.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let mut optimizer = Optimizer::new(*opt, spec.num_params())?;
    let mut theta = theta0.clone();
    let mut ws = Workspace::new(spec);
    let mut grad = vec![0.0; spec.num_params()];
    let mut rng = ChaCha8Rng::seed_from_u64(opt.shuffle_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    // A single batch covering the data keeps index order so that one epoch
    // is exactly one full-batch gradient step.
    let full_batch = opt.batch_size >= data.len();

    let mut report = TrainReport {
        epochs_run: 0,
        final_loss: loss::loss_only(&mut ws, theta.as_slice(), data, loss),
        final_train_accuracy: loss::accuracy_with(&mut ws, theta.as_slice(), data),
        loss_history: Vec::new(),
        converged: false,
        checkpoint_epochs: Vec::new(),
        checkpoint_params: Vec::new(),
    };
    if checkpoint_at.contains(&0) {
        report.checkpoint_epochs.push(0);
        report.checkpoint_params.push(theta.clone());
    }

    for epoch in 1..=stop.max_epochs {
        if !full_batch {
            order.shuffle(&mut rng);
        }
        for batch in order.chunks(opt.batch_size) {
            loss::loss_and_grad_into(
                &mut ws,
                theta.as_slice(),
                data,
                Some(batch),
                loss,
                &mut grad,
            );
            optimizer.step(theta.as_mut_slice(), &mut grad);
        }
        let l = loss::loss_only(&mut ws, theta.as_slice(), data, loss);
        if !l.is_finite() || theta.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let acc = loss::accuracy_with(&mut ws, theta.as_slice(), data);
        report.loss_history.push(l);
        report.epochs_run = epoch;
        report.final_loss = l;
        report.final_train_accuracy = acc;
        if checkpoint_at.contains(&epoch) {
            report.checkpoint_epochs.push(epoch);
            report.checkpoint_params.push(theta.clone());
        }
        if stop.satisfied(&report.loss_history, acc) {
            report.converged = true;
            break;
        }
    }
    Ok((theta, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InitScheme {
    #[default]
    Normal,
    Adversarial,
    LargeNorm,
    WideMargin,
}

impl InitScheme {
    pub const ALL: [InitScheme; 4] = [
        InitScheme::Normal,
        InitScheme::Adversarial,
        InitScheme::LargeNorm,
        InitScheme::WideMargin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::Normal => "normal",
            InitScheme::Adversarial => "adversarial",
            InitScheme::LargeNorm => "large_norm",
            InitScheme::WideMargin => "wide_margin",
        }
    }
}

impl core::fmt::Display for InitScheme {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        InitScheme::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown init scheme {s:?}; expected one of normal, adversarial, large_norm, wide_margin"
                ))
            })
    }
}

/// Settings of the auxiliary fits behind the non-trivial schemes.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct InitParams {
    pub target_norm: f64,
    /// Seed of the random relabeling; the init seed is used when absent.
    pub label_seed: Option<u64>,
    pub aux_optimizer: OptimizerConfig,
    pub aux_stop: StopCriteria,
    pub aux_loss: LossConfig,
}

impl Default for InitParams {
    fn default() -> Self {
        Self {
            target_norm: 100.0,
            label_seed: None,
            aux_optimizer: OptimizerConfig::adam(0.01),
            aux_stop: StopCriteria::until_fit(20_000),
            aux_loss: LossConfig::default(),
        }
    }
}

/// Uniform random labels, one independent stream per sample index.
pub fn random_labels(n: usize, num_classes: usize, seed: u64) -> Vec<usize> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng.random_range(0..num_classes)
        })
        .collect()
}

/// Starting parameters for `scheme`. `pretrain` overrides the pulled-in
/// checkerboard used by the wide-margin scheme; by default one is generated
/// with the same size as `data`.
pub fn make_init(
    scheme: InitScheme,
    spec: &NetworkSpec,
    data: &LabeledDataset,
    seed: u64,
    params: &InitParams,
    pretrain: Option<&LabeledDataset>,
) -> Result<ParamVector> {
    let theta = network::init_params(spec, seed);
    match scheme {
        InitScheme::Normal => Ok(theta),
        InitScheme::LargeNorm => {
            if !(params.target_norm > 0.0 && params.target_norm.is_finite()) {
                return Err(Error::InvalidConfig("target_norm must be positive".into()));
            }
            Ok(theta.scaled(params.target_norm / theta.norm()))
        }
        InitScheme::Adversarial => {
            let labels = random_labels(
                data.len(),
                data.num_classes(),
                params.label_seed.unwrap_or(seed),
            );
            let shuffled = data.with_labels(labels)?;
            fit_auxiliary(spec, &theta, &shuffled, params, seed)
        }
        InitScheme::WideMargin => {
            let generated;
            let target = match pretrain {
                Some(d) => d,
                None => {
                    let per_class = (data.len() / data.num_classes()).max(1);
                    generated = dataset::gen_synthetic(
                        SyntheticKind::CheckerboardPulledIn,
                        per_class,
                        seed,
                    )?;
                    &generated
                }
            };
            fit_auxiliary(spec, &theta, target, params, seed)
        }
    }
}

fn fit_auxiliary(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    params: &InitParams,
    seed: u64,
) -> Result<ParamVector> {
    let opt = params.aux_optimizer.with_seed(seed);
    let (fitted, report) = train(
        spec,
        theta,
        data,
        params.aux_loss,
        &opt,
        &params.aux_stop,
        &[],
    )?;
    if report.final_train_accuracy < 1.0 {
        return Err(Error::AuxTrainingFailed {
            epochs: report.epochs_run,
            accuracy: report.final_train_accuracy,
        });
    }
    Ok(fitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::gen_synthetic;
    use crate::network::{init_params, Activation};

    fn quadratic_step(cfg: OptimizerConfig, theta: [f64; 2], grad: [f64; 2]) -> [f64; 2] {
        let mut opt = Optimizer::new(cfg, 2).unwrap();
        let mut t = theta;
        let mut g = grad;
        opt.step(&mut t, &mut g);
        t
    }

    #[test]
    fn first_adam_step_moves_by_lr_times_sign() {
        // With zero moments the bias-corrected step is g / (|g| + eps).
        let t = quadratic_step(OptimizerConfig::adam(0.1), [1.0, -2.0], [2.0, -0.5]);
        let e0 = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        let e1 = -2.0 + 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((t[0] - e0).abs() < 1e-15 && (t[1] - e1).abs() < 1e-15);
    }

    #[test]
    fn second_adam_step_matches_formula() {
        let mut opt = Optimizer::new(OptimizerConfig::adam(0.1), 1).unwrap();
        let mut t = [1.0];
        opt.step(&mut t, &mut [2.0]);
        opt.step(&mut t, &mut [1.0]);
        let m = 0.9 * 0.1 * 2.0 + 0.1 * 1.0;
        let v = 0.999 * 0.001 * 4.0 + 0.001 * 1.0;
        let mh = m / (1.0 - 0.81);
        let vh: f64 = v / (1.0 - 0.999 * 0.999);
        let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8) - 0.1 * mh / (vh.sqrt() + 1e-8);
        assert!((t[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn adamw_is_adam_plus_decoupled_decay() {
        let theta = [1.5, -0.5];
        let grad = [0.3, 0.7];
        let adam = quadratic_step(OptimizerConfig::adam(0.05), theta, grad);
        let adamw = quadratic_step(OptimizerConfig::adamw(0.05), theta, grad);
        for i in 0..2 {
            let decay = 0.05 * 0.01 * theta[i];
            assert!((adam[i] - decay - adamw[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn rmsprop_step_matches_formula() {
        let t = quadratic_step(OptimizerConfig::rmsprop(0.01), [1.0, 1.0], [3.0, -1.0]);
        for (got, g) in t.iter().zip([3.0f64, -1.0]) {
            let v = 0.01 * g * g;
            assert!((got - (1.0 - 0.01 * g / (v.sqrt() + 1e-8))).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_l2_penalty() {
        let mut cfg = OptimizerConfig::sgd(0.5);
        cfg.weight_decay = 0.1;
        let t = quadratic_step(cfg, [2.0, 0.0], [1.0, 1.0]);
        assert_eq!(t, [2.0 - 0.5 * (1.0 + 0.2), -0.5]);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let spec = NetworkSpec::new(vec![2, 5, 3], Activation::Relu).unwrap();
        let data = gen_synthetic(SyntheticKind::Gaussian, 10, 1).unwrap();
        let theta0 = init_params(&spec, 1);
        let stop = StopCriteria {
            max_epochs: 5,
            ..StopCriteria::default()
        };
        let (theta, report) = train(
            &spec,
            &theta0,
            &data,
            LossConfig::default(),
            &OptimizerConfig::sgd(0.0).with_batch_size(7),
            &stop,
            &[0, 3],
        )
        .unwrap();
        assert_eq!(theta, theta0);
        assert_eq!(report.loss_history.len(), 5);
        assert!(report
            .loss_history
            .iter()
            .all(|&l| l == report.loss_history[0]));
        assert_eq!(report.checkpoint_epochs, vec![0, 3]);
        assert_eq!(report.checkpoint_params[1], theta0);
    }

    #[test]
    fn full_batch_epoch_is_one_gradient_step() {
        let spec = NetworkSpec::new(vec![2, 6, 3], Activation::Relu).unwrap();
        let data = gen_synthetic(SyntheticKind::Gaussian, 8, 3).unwrap();
        let theta0 = init_params(&spec, 3);
        let stop = StopCriteria {
            max_epochs: 1,
            ..StopCriteria::default()
        };
        let opt = OptimizerConfig::sgd(0.2).with_batch_size(1000);
        let (theta, _) = train(
            &spec,
            &theta0,
            &data,
            LossConfig::default(),
            &opt,
            &stop,
            &[],
        )
        .unwrap();
        let g = loss::grad_loss(&spec, &theta0, &data, LossConfig::default()).unwrap();
        let expected: Vec<f64> = theta0
            .as_slice()
            .iter()
            .zip(g.as_slice())
            .map(|(t, g)| t - 0.2 * g)
            .collect();
        assert_eq!(theta.as_slice(), &expected[..]);
    }

    #[test]
    fn divergence_is_reported() {
        let spec = NetworkSpec::new(vec![2, 8, 3], Activation::Relu).unwrap();
        let data = gen_synthetic(SyntheticKind::Gaussian, 10, 1).unwrap();
        let theta0 = init_params(&spec, 1).scaled(50.0);
        let stop = StopCriteria {
            max_epochs: 200,
            ..StopCriteria::default()
        };
        let r = train(
            &spec,
            &theta0,
            &data,
            LossConfig::default(),
            &OptimizerConfig::sgd(1e6),
            &stop,
            &[],
        );
        assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
    }

    #[test]
    fn random_labels_depend_only_on_index() {
        let a = random_labels(50, 3, 7);
        let b = random_labels(80, 3, 7);
        assert_eq!(a[..], b[..50]);
        assert!(a.iter().all(|&y| y < 3));
        assert_ne!(a, random_labels(50, 3, 8));
    }

    #[test]
    fn large_norm_rescales() {
        let spec = NetworkSpec::new(vec![2, 32, 32, 3], Activation::Relu).unwrap();
        let data = gen_synthetic(SyntheticKind::Gaussian, 5, 1).unwrap();
        let t = make_init(
            InitScheme::LargeNorm,
            &spec,
            &data,
            4,
            &InitParams::default(),
            None,
        )
        .unwrap();
        assert!((t.norm() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in InitScheme::ALL {
            assert_eq!(s.as_str().parse::<InitScheme>().unwrap(), s);
        }
        assert_eq!(
            "large-norm".parse::<InitScheme>().unwrap(),
            InitScheme::LargeNorm
        );
        assert!("bogus".parse::<InitScheme>().is_err());
    }
}
