//! Second-order structure of the training loss.
//!
//! Hessian-vector products are central differences of the exact gradient,
//! `Hv ≈ (∇L(θ + hv) − ∇L(θ − hv)) / 2h`, and the dense Hessian is assembled
//! column by column from them. Everything here works on an [`Objective`], so
//! the same code serves the network loss and closed-form test surfaces.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::LabeledDataset;
use crate::linalg::{self, SpectralDecomposition, SymmetricMatrix, DEFAULT_P_MAX, ZERO_NORM};
use crate::loss::{self, GradientLabel, LossConfig, LossKind};
use crate::network::{Activation, NetworkSpec, ParamVector, Workspace};
use crate::par;
use crate::{Error, Result};

/// A twice-differentiable scalar function of a flat parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, theta: &[f64]) -> f64;

    /// Writes `∇f(θ)` into `grad` and returns `f(θ)`.
    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64;

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.value_and_gradient(theta, &mut g);
        g
    }
}

/// The training loss `L(θ; D)` of a network as an [`Objective`].
///
/// Built with [`TrainingObjective::frozen_at`], ReLU gates are pinned to
/// their on/off state at a reference point. The loss is then smooth in θ and
/// agrees with the true loss on the linear piece containing that point, so
/// differences of its gradient give the almost-everywhere Hessian without
/// kink crossings.
#[derive(Debug, Clone)]
pub struct TrainingObjective<'a> {
    spec: &'a NetworkSpec,
    data: &'a LabeledDataset,
    loss: LossConfig,
    patterns: Option<Vec<bool>>,
}

impl<'a> TrainingObjective<'a> {
    pub fn new(spec: &'a NetworkSpec, data: &'a LabeledDataset, loss: LossConfig) -> Result<Self> {
        loss::check_batch(spec, &ParamVector::zeros(spec), data)?;
        Ok(Self {
            spec,
            data,
            loss,
            patterns: None,
        })
    }

    /// Pins ReLU gates at `theta`; other activations are left untouched.
    pub fn frozen_at(
        spec: &'a NetworkSpec,
        data: &'a LabeledDataset,
        loss: LossConfig,
        theta: &ParamVector,
    ) -> Result<Self> {
        let mut obj = Self::new(spec, data, loss)?;
        loss::check_batch(spec, theta, data)?;
        if spec.activation() == Activation::Relu {
            let mut ws = Workspace::new(spec);
            let mut patterns = Vec::new();
            for x in data.iter().map(|(x, _)| x) {
                ws.forward(theta.as_slice(), x);
                patterns.extend(ws.pattern());
            }
            obj.patterns = Some(patterns);
        }
        Ok(obj)
    }

    fn hidden_units(&self) -> usize {
        let w = self.spec.layer_widths();
        w[1..w.len() - 1].iter().sum()
    }

    fn gated_pass(&self, theta: &[f64], patterns: &[bool], mut grad: Option<&mut [f64]>) -> f64 {
        let mut ws = Workspace::new(self.spec);
        let units = self.hidden_units();
        let scale = self.loss.scale(self.data.len());
        let mut dlogits = vec![0.0; self.spec.num_classes()];
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut total = 0.0;
        for (i, (x, y)) in self.data.iter().enumerate() {
            ws.forward_gated(theta, x, &patterns[i * units..(i + 1) * units]);
            total += loss::sample_loss(self.loss.kind, ws.logits(), y, &mut dlogits);
            if let Some(g) = grad.as_deref_mut() {
                ws.backward(theta, &dlogits, scale, g);
            }
        }
        total * scale
    }
}

impl Objective for TrainingObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.num_params()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        match &self.patterns {
            Some(p) => self.gated_pass(theta, p, None),
            None => {
                let mut ws = Workspace::new(self.spec);
                loss::loss_only(&mut ws, theta, self.data, self.loss)
            }
        }
    }

    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        match &self.patterns {
            Some(p) => self.gated_pass(theta, p, Some(grad)),
            None => {
                let mut ws = Workspace::new(self.spec);
                loss::loss_and_grad_into(&mut ws, theta, self.data, None, self.loss, grad)
            }
        }
    }
}

/// `f(θ) = ½ θᵀAθ + bᵀθ`, whose Hessian is exactly `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub a: SymmetricMatrix,
    pub b: Vec<f64>,
}

impl Quadratic {
    pub fn new(a: SymmetricMatrix) -> Self {
        let b = vec![0.0; a.dim()];
        Self { a, b }
    }

    pub fn with_linear(a: SymmetricMatrix, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.dim() {
            return Err(Error::DimMismatch {
                expected: a.dim(),
                got: b.len(),
            });
        }
        Ok(Self { a, b })
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn value(&self, theta: &[f64]) -> f64 {
        0.5 * linalg::dot(theta, &self.a.mul_vec(theta)) + linalg::dot(&self.b, theta)
    }

    fn value_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let at = self.a.mul_vec(theta);
        for ((g, a), b) in grad.iter_mut().zip(&at).zip(&self.b) {
            *g = a + b;
        }
        0.5 * linalg::dot(theta, &at) + linalg::dot(&self.b, theta)
    }
}

/// `√ε` of `f64`.
pub const SQRT_EPSILON: f64 = 1.490_116_119_384_765_6e-8;
/// `∛ε` of `f64`.
pub const CBRT_EPSILON: f64 = 6.055_454_452_393_343e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CurvatureConfig {
    /// Finite-difference step is `fd_scale · (1 + ‖θ‖) / ‖v‖`.
    pub fd_scale: f64,
    pub p_max: usize,
    /// Project the assembled matrix onto the symmetric matrices. Without it
    /// assembly fails with [`Error::NotSymmetric`] unless the columns happen
    /// to agree to the `from_row_major` tolerance.
    pub symmetrize: bool,
}

impl Default for CurvatureConfig {
    fn default() -> Self {
        Self {
            fd_scale: SQRT_EPSILON,
            p_max: DEFAULT_P_MAX,
            symmetrize: true,
        }
    }
}

impl CurvatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fd_scale > 0.0 && self.fd_scale.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "finite-difference scale must be positive, got {}",
                self.fd_scale
            )));
        }
        Ok(())
    }

    pub fn step(&self, theta_norm: f64, v_norm: f64) -> f64 {
        self.fd_scale * (1.0 + theta_norm) / v_norm
    }
}

/// `H(θ)·v` by central differences of the gradient.
pub fn hvp_of<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    v: &[f64],
    cfg: &CurvatureConfig,
) -> Result<Vec<f64>> {
    check_dim(obj.dim(), theta.len())?;
    check_dim(obj.dim(), v.len())?;
    cfg.validate()?;
    let v_norm = linalg::norm(v);
    if v_norm < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let h = cfg.step(linalg::norm(theta), v_norm);
    let mut out = vec![0.0; theta.len()];
    hvp_raw(obj, theta, v, h, &mut out);
    Ok(out)
}

fn hvp_raw<O: Objective + ?Sized>(obj: &O, theta: &[f64], v: &[f64], h: f64, out: &mut [f64]) {
    let mut shifted = theta.to_vec();
    linalg::axpy(h, v, &mut shifted);
    let mut g_plus = vec![0.0; theta.len()];
    obj.value_and_gradient(&shifted, &mut g_plus);
    shifted.copy_from_slice(theta);
    linalg::axpy(-h, v, &mut shifted);
    obj.value_and_gradient(&shifted, out);
    let inv = 0.5 / h;
    for (o, p) in out.iter_mut().zip(&g_plus) {
        *o = (p - *o) * inv;
    }
}

/// Hessian-vector product of the training loss (ReLU gates frozen at θ).
pub fn hvp(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    v: &[f64],
    loss: LossConfig,
    cfg: &CurvatureConfig,
) -> Result<Vec<f64>> {
    let obj = TrainingObjective::frozen_at(spec, data, loss, theta)?;
    hvp_of(&obj, theta.as_slice(), v, cfg)
}

/// A dense Hessian together with the symmetry defect of its raw columns.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianAssembly {
    pub matrix: SymmetricMatrix,
    /// `max |M − Mᵀ|` before symmetrization.
    pub asymmetry: f64,
}

impl HessianAssembly {
    /// Asymmetry relative to `1 + max |H|`.
    pub fn relative_asymmetry(&self) -> f64 {
        self.asymmetry / (1.0 + self.matrix.max_abs())
    }
}

/// Dense Hessian with column `j` equal to `hvp(e_j)`.
pub fn dense_hessian_of<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    cfg: &CurvatureConfig,
) -> Result<HessianAssembly> {
    let p = obj.dim();
    check_dim(p, theta.len())?;
    cfg.validate()?;
    if p > cfg.p_max {
        return Err(Error::TooLarge {
            dim: p,
            max: cfg.p_max,
        });
    }
    let h = cfg.step(linalg::norm(theta), 1.0);
    let columns = par::map_indexed(p, |j| {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        let mut col = vec![0.0; p];
        hvp_raw(obj, theta, &e, h, &mut col);
        col
    });
    let mut data = vec![0.0; p * p];
    for (j, col) in columns.iter().enumerate() {
        for (i, &c) in col.iter().enumerate() {
            data[i * p + j] = c;
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Hessian"));
    }
    if cfg.symmetrize {
        let (matrix, asymmetry) = SymmetricMatrix::symmetrized(p, data)?;
        Ok(HessianAssembly { matrix, asymmetry })
    } else {
        let matrix = SymmetricMatrix::from_row_major(p, data)?;
        let asymmetry = (0..p)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .fold(0.0_f64, |m, (i, j)| {
                m.max((matrix.get(i, j) - matrix.get(j, i)).abs())
            });
        Ok(HessianAssembly { matrix, asymmetry })
    }
}

/// Dense Hessian of the training loss (ReLU gates frozen at θ).
pub fn dense_hessian(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    loss: LossConfig,
    cfg: &CurvatureConfig,
) -> Result<HessianAssembly> {
    let obj = TrainingObjective::frozen_at(spec, data, loss, theta)?;
    dense_hessian_of(&obj, theta.as_slice(), cfg)
}

/// Hessian of the loss restricted to the samples of one class.
pub fn per_class_hessian(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    class: usize,
    loss: LossConfig,
    cfg: &CurvatureConfig,
) -> Result<HessianAssembly> {
    let sub = data.restrict_to_class(class)?;
    dense_hessian(spec, theta, &sub, loss, cfg)
}

/// `(1/n) Σ g_i g_iᵀ` over per-sample gradients at the true labels.
pub fn gradient_covariance(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    kind: LossKind,
) -> Result<SymmetricMatrix> {
    if data.is_empty() {
        return Err(Error::InvalidConfig(
            "gradient covariance needs at least one sample".into(),
        ));
    }
    let p = spec.num_params();
    if p > DEFAULT_P_MAX {
        return Err(Error::TooLarge {
            dim: p,
            max: DEFAULT_P_MAX,
        });
    }
    let rows = loss::per_sample_gradients(spec, theta, data, GradientLabel::True, kind)?;
    Ok(SymmetricMatrix::gram(p, &rows, 1.0 / data.len() as f64))
}

/// The pieces of a second-order expansion along a unit direction `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorTerms {
    pub base: f64,
    pub stepped: f64,
    /// `⟨∇L(θ), d⟩`
    pub linear: f64,
    /// `½ Σ λ_i ⟨d, v_i⟩²`
    pub quadratic: f64,
}

impl TaylorTerms {
    pub fn residual(&self) -> f64 {
        (self.stepped - self.base - self.linear - self.quadratic).abs()
    }
}

/// Expands `obj` around `θ` along `direction` (normalized here) using the
/// eigenpairs of `decomp` for the second-order term.
pub fn taylor_terms<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    direction: &[f64],
    decomp: &SpectralDecomposition,
) -> Result<TaylorTerms> {
    let p = obj.dim();
    check_dim(p, theta.len())?;
    check_dim(p, direction.len())?;
    check_dim(p, decomp.dim())?;
    let n = linalg::norm(direction);
    if n < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    let d: Vec<f64> = direction.iter().map(|x| x / n).collect();
    let mut grad = vec![0.0; p];
    let base = obj.value_and_gradient(theta, &mut grad);
    let mut shifted = theta.to_vec();
    linalg::axpy(1.0, &d, &mut shifted);
    let stepped = obj.value(&shifted);
    let quadratic = 0.5
        * decomp
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let a = linalg::dot(&d, decomp.eigenvector(i));
                l * a * a
            })
            .sum::<f64>();
    Ok(TaylorTerms {
        base,
        stepped,
        linear: linalg::dot(&grad, &d),
        quadratic,
    })
}

/// Second-order Taylor residual of the training loss along the normalized
/// reinforcing gradient of `x`.
pub fn taylor_residual(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    x: &[f64],
    decomp: &SpectralDecomposition,
    loss: LossConfig,
) -> Result<f64> {
    let g = loss::reinforcing_gradient(spec, theta, x, loss.kind)?;
    let obj = TrainingObjective::new(spec, data, loss)?;
    taylor_terms(&obj, theta.as_slice(), g.as_slice(), decomp).map(|t| t.residual())
}

/// Number of leading eigenvalues separated from the bulk: the index
/// `i ∈ [1, min(3C, p − 1)]` with the largest gap `λ_i − λ_{i+1}` (ties go
/// to the smaller index). `eigenvalues` must be sorted descending.
pub fn spectrum_outliers(eigenvalues: &[f64], num_classes: usize) -> usize {
    let p = eigenvalues.len();
    if p < 2 {
        return p;
    }
    let cap = (3 * num_classes).min(p - 1).max(1);
    let mut best = 1;
    let mut best_gap = f64::NEG_INFINITY;
    for i in 1..=cap {
        let gap = eigenvalues[i - 1] - eigenvalues[i];
        if gap > best_gap {
            best_gap = gap;
            best = i;
        }
    }
    best
}

/// Equal-width histogram of a spectrum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Histogram {
            bin_edges: vec![0.0; bins + 1],
            counts: vec![0; bins],
        };
    }
    let width = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let bin_edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { bin_edges, counts }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimMismatch { expected, got });
    }
    Ok(())
}
