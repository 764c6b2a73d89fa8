//! Classification losses on top of the raw logits.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::LabeledDataset;
use crate::math;
use crate::network::{self, NetworkSpec, ParamVector, Workspace};
use crate::par;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LossKind {
    /// Softmax cross-entropy on the logits.
    #[default]
    CrossEntropy,
    /// Negative log-likelihood of an explicit log-softmax output layer.
    Nll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct LossConfig {
    pub kind: LossKind,
    pub reduction: Reduction,
}

impl LossConfig {
    pub fn new(kind: LossKind, reduction: Reduction) -> Self {
        Self { kind, reduction }
    }

    pub(crate) fn scale(&self, n: usize) -> f64 {
        match self.reduction {
            Reduction::Mean => 1.0 / n as f64,
            Reduction::Sum => 1.0,
        }
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + math::ln(z.iter().map(|&v| math::exp(v - m)).sum::<f64>())
}

/// Single-sample loss; writes `∂loss/∂logits` into `dlogits`.
pub(crate) fn sample_loss(
    kind: LossKind,
    logits: &[f64],
    label: usize,
    dlogits: &mut [f64],
) -> f64 {
    let lse = log_sum_exp(logits);
    match kind {
        LossKind::CrossEntropy => {
            for (d, &z) in dlogits.iter_mut().zip(logits) {
                *d = math::exp(z - lse);
            }
            dlogits[label] -= 1.0;
            lse - logits[label]
        }
        LossKind::Nll => {
            let log_probs: Vec<f64> = logits.iter().map(|&z| z - lse).collect();
            // Upstream gradient on the log-probabilities is -e_y; pull it
            // back through log-softmax: dz = g - softmax * Σg.
            let upstream_sum = -1.0;
            for (j, (d, &lp)) in dlogits.iter_mut().zip(&log_probs).enumerate() {
                let g = if j == label { -1.0 } else { 0.0 };
                *d = g - math::exp(lp) * upstream_sum;
            }
            -log_probs[label]
        }
    }
}

pub(crate) fn check_batch(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
) -> Result<()> {
    if theta.len() != spec.num_params() {
        return Err(Error::ShapeMismatch {
            what: "parameter vector",
            expected: spec.num_params(),
            got: theta.len(),
        });
    }
    if data.dim() != spec.input_dim() {
        return Err(Error::ShapeMismatch {
            what: "input vector",
            expected: spec.input_dim(),
            got: data.dim(),
        });
    }
    if let Some(&bad) = data.labels().iter().find(|&&y| y >= spec.num_classes()) {
        return Err(Error::InvalidLabel {
            label: bad,
            classes: spec.num_classes(),
        });
    }
    Ok(())
}

/// Loss and gradient over the samples `indices` of `data` (all when `None`).
/// The gradient is accumulated into `grad`, which is zeroed first.
pub(crate) fn loss_and_grad_into(
    ws: &mut Workspace,
    theta: &[f64],
    data: &LabeledDataset,
    indices: Option<&[usize]>,
    cfg: LossConfig,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = indices.map_or(data.len(), <[usize]>::len);
    let scale = cfg.scale(n);
    let c = ws_classes(ws);
    let mut dlogits = vec![0.0; c];
    let mut total = 0.0;
    let mut visit = |i: usize| {
        ws.forward(theta, data.sample(i));
        total += sample_loss(cfg.kind, ws.logits(), data.label(i), &mut dlogits);
        ws.backward(theta, &dlogits, scale, grad);
    };
    match indices {
        Some(idx) => idx.iter().for_each(|&i| visit(i)),
        None => (0..data.len()).for_each(&mut visit),
    }
    total * scale
}

pub(crate) fn loss_only(
    ws: &mut Workspace,
    theta: &[f64],
    data: &LabeledDataset,
    cfg: LossConfig,
) -> f64 {
    let mut dlogits = vec![0.0; ws_classes(ws)];
    let mut total = 0.0;
    for (x, y) in data.iter() {
        ws.forward(theta, x);
        total += sample_loss(cfg.kind, ws.logits(), y, &mut dlogits);
    }
    total * cfg.scale(data.len())
}

fn ws_classes(ws: &Workspace) -> usize {
    ws.logits().len()
}

/// Training loss `L(θ; D)`.
pub fn batch_loss(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    cfg: LossConfig,
) -> Result<f64> {
    check_batch(spec, theta, data)?;
    let mut ws = Workspace::new(spec);
    Ok(loss_only(&mut ws, theta.as_slice(), data, cfg))
}

/// The loss restricted to the samples of class `class`.
pub fn per_class_loss(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    class: usize,
    cfg: LossConfig,
) -> Result<f64> {
    let sub = data.restrict_to_class(class)?;
    batch_loss(spec, theta, &sub, cfg)
}

/// Exact gradient of the batch loss by reverse accumulation.
pub fn grad_loss(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    cfg: LossConfig,
) -> Result<ParamVector> {
    check_batch(spec, theta, data)?;
    let mut ws = Workspace::new(spec);
    let mut g = ParamVector::zeros(spec);
    loss_and_grad_into(&mut ws, theta.as_slice(), data, None, cfg, g.as_mut_slice());
    Ok(g)
}

/// Gradient of the loss of the single sample `(x, label)`.
pub fn sample_gradient(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &[f64],
    label: usize,
    kind: LossKind,
) -> Result<ParamVector> {
    if label >= spec.num_classes() {
        return Err(Error::InvalidLabel {
            label,
            classes: spec.num_classes(),
        });
    }
    let logits = network::forward(spec, theta, x)?;
    let mut ws = Workspace::new(spec);
    let mut g = ParamVector::zeros(spec);
    let mut dlogits = vec![0.0; logits.len()];
    ws.forward(theta.as_slice(), x);
    sample_loss(kind, ws.logits(), label, &mut dlogits);
    ws.backward(theta.as_slice(), &dlogits, 1.0, g.as_mut_slice());
    Ok(g)
}

/// Gradient of the single-sample loss at the network's own prediction
/// `ŷ = argmax f_θ(x)`: the direction that most strengthens the current
/// dominating class.
pub fn reinforcing_gradient(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &[f64],
    kind: LossKind,
) -> Result<ParamVector> {
    let y_hat = network::predict(spec, theta, x)?;
    sample_gradient(spec, theta, x, y_hat, kind)
}

/// Which label each per-sample gradient is taken at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientLabel {
    /// The dataset label `y_i`.
    True,
    /// The prediction `ŷ_i` (reinforcing gradient).
    Predicted,
}

/// Per-sample gradients stacked row-wise (`n × p`).
pub fn per_sample_gradients(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    which: GradientLabel,
    kind: LossKind,
) -> Result<Vec<f64>> {
    check_batch(spec, theta, data)?;
    let p = spec.num_params();
    let rows = par::map_indexed(data.len(), |i| {
        let mut ws = Workspace::new(spec);
        let mut g = vec![0.0; p];
        let x = data.sample(i);
        ws.forward(theta.as_slice(), x);
        let label = match which {
            GradientLabel::True => data.label(i),
            GradientLabel::Predicted => network::argmax(ws.logits()),
        };
        let mut dlogits = vec![0.0; spec.num_classes()];
        sample_loss(kind, ws.logits(), label, &mut dlogits);
        ws.backward(theta.as_slice(), &dlogits, 1.0, &mut g);
        g
    });
    Ok(rows.concat())
}

/// Fraction of samples whose prediction equals the label.
pub fn accuracy(spec: &NetworkSpec, theta: &ParamVector, data: &LabeledDataset) -> Result<f64> {
    check_batch(spec, theta, data)?;
    let mut ws = Workspace::new(spec);
    Ok(accuracy_with(&mut ws, theta.as_slice(), data))
}

pub(crate) fn accuracy_with(ws: &mut Workspace, theta: &[f64], data: &LabeledDataset) -> f64 {
    let correct = data
        .iter()
        .filter(|(x, y)| {
            ws.forward(theta, x);
            network::argmax(ws.logits()) == *y
        })
        .count();
    correct as f64 / data.len() as f64
}
