//! The eigenvector-counting generalization measure, classical flatness
//! measures, and margin estimation through the top eigenvector.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::alignment::{self, AlignmentMatrix, EpsilonAggregation};
use crate::curvature::{self, CurvatureConfig};
use crate::dataset::LabeledDataset;
use crate::linalg::{self, SpectralDecomposition, SymmetricMatrix, ZERO_NORM};
use crate::loss::{self, GradientLabel, LossConfig, LossKind};
use crate::network::{NetworkSpec, ParamVector, Workspace};
use crate::{Error, Result};

/// `m_i = mean_s |A_i(x_s)|` and `G = #{i : m_i > ε} / p` over an alignment
/// matrix that spans all `p` eigenvectors.
pub fn generalization_measure(am: &AlignmentMatrix, epsilon: f64) -> (Vec<f64>, f64) {
    let m = am.mean_abs_columns();
    let g = count_above(&m, epsilon);
    (m, g)
}

/// Fraction of entries strictly above `epsilon`.
pub fn count_above(m: &[f64], epsilon: f64) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.iter().filter(|&&v| v > epsilon).count() as f64 / m.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassicalMeasures {
    pub trace: f64,
    pub lambda_max: f64,
    pub param_norm: f64,
}

pub fn classical_measures(
    decomp: &SpectralDecomposition,
    theta: &ParamVector,
) -> ClassicalMeasures {
    ClassicalMeasures {
        trace: decomp.trace(),
        lambda_max: decomp.eigenvalues().first().copied().unwrap_or(0.0),
        param_norm: theta.norm(),
    }
}

/// Settings of the full report pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ReportConfig {
    pub loss: LossConfig,
    pub curvature: CurvatureConfig,
    pub epsilon_directions: usize,
    pub epsilon_seed: u64,
    pub epsilon_aggregation: EpsilonAggregation,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            curvature: CurvatureConfig::default(),
            epsilon_directions: 5,
            epsilon_seed: 0,
            epsilon_aggregation: EpsilonAggregation::MeanOfMax,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeneralizationReport {
    #[cfg_attr(feature = "serde", serde(rename = "G"))]
    pub g: f64,
    pub epsilon: f64,
    pub epsilon_directions: usize,
    pub epsilon_seed: u64,
    pub epsilon_aggregation: EpsilonAggregation,
    pub num_params: usize,
    pub m: Vec<f64>,
    pub trace: f64,
    pub lambda_max: f64,
    pub param_norm: f64,
    pub outlier_count: usize,
    pub hessian_asymmetry: f64,
    pub eigen_residual: f64,
    /// Filled in by callers that track configuration provenance.
    pub config_fingerprint: String,
}

/// Everything computed on the way to a [`GeneralizationReport`].
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: GeneralizationReport,
    pub hessian: SymmetricMatrix,
    pub decomposition: SpectralDecomposition,
    pub alignments: AlignmentMatrix,
}

/// Hessian, spectrum, full alignment matrix, ε and G for one minimum.
pub fn analyze(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    cfg: &ReportConfig,
) -> Result<Analysis> {
    let hess = curvature::dense_hessian(spec, theta, data, cfg.loss, &cfg.curvature)?;
    let decomp = linalg::eigh_symmetric(&hess.matrix, cfg.curvature.p_max)?;
    let p = spec.num_params();
    let grads =
        loss::per_sample_gradients(spec, theta, data, GradientLabel::Predicted, cfg.loss.kind)?;
    let am = alignment::alignment_matrix_from_gradients(&grads, p, &decomp, p)?;
    let epsilon = alignment::epsilon_from_gradients(
        &grads,
        p,
        cfg.epsilon_directions,
        cfg.epsilon_seed,
        cfg.epsilon_aggregation,
    )?;
    let (m, g) = generalization_measure(&am, epsilon);
    let classical = classical_measures(&decomp, theta);
    let report = GeneralizationReport {
        g,
        epsilon,
        epsilon_directions: cfg.epsilon_directions,
        epsilon_seed: cfg.epsilon_seed,
        epsilon_aggregation: cfg.epsilon_aggregation,
        num_params: p,
        m,
        trace: classical.trace,
        lambda_max: classical.lambda_max,
        param_norm: classical.param_norm,
        outlier_count: curvature::spectrum_outliers(decomp.eigenvalues(), spec.num_classes()),
        hessian_asymmetry: hess.asymmetry,
        eigen_residual: decomp.residual(),
        config_fingerprint: String::new(),
    };
    Ok(Analysis {
        report,
        hessian: hess.matrix,
        decomposition: decomp,
        alignments: am,
    })
}

/// Indices of the smallest and largest entries; ties go to the smaller
/// index.
pub fn select_extreme_samples(column: &[f64]) -> Result<(usize, usize)> {
    if column.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least two samples to pick extremes, got {}",
            column.len()
        )));
    }
    let mut lo = 0;
    let mut hi = 0;
    for (i, &v) in column.iter().enumerate().skip(1) {
        if v < column[lo] {
            lo = i;
        }
        if v > column[hi] {
            hi = i;
        }
    }
    Ok((lo, hi))
}

/// Axis-aligned box in input space.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundsBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoundsBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidConfig(
                "bounds box needs lower <= upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// Bounding box of `data`, widened by `fraction` of its extent on every
    /// side (by `fraction` itself for a degenerate coordinate).
    pub fn around(data: &LabeledDataset, fraction: f64) -> Self {
        let (lower, upper) = data
            .bounds()
            .into_iter()
            .map(|(lo, hi)| {
                let pad = if hi > lo {
                    (hi - lo) * fraction
                } else {
                    fraction
                };
                (lo - pad, hi + pad)
            })
            .unzip();
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(&self.lower)
                .zip(&self.upper)
                .all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn project(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct MarginSearch {
    /// Euclidean length of the first ascent step.
    pub step: f64,
    pub fd_step: f64,
    pub target: f64,
    pub max_iter: usize,
    pub bounds_fraction: f64,
    /// Estimates below this achieved alignment are flagged.
    pub confidence_threshold: f64,
}

impl Default for MarginSearch {
    fn default() -> Self {
        Self {
            step: 0.05,
            fd_step: 1e-4,
            target: 0.999,
            max_iter: 500,
            bounds_fraction: 0.1,
            confidence_threshold: 0.99,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySearch {
    pub x: Vec<f64>,
    pub start_alignment: f64,
    pub alignment: f64,
    pub iterations: usize,
    /// `|A₁|` after each accepted step, starting with the initial value.
    pub accepted: Vec<f64>,
}

struct AbsAlignment<'a> {
    theta: &'a [f64],
    v: &'a [f64],
    v_norm: f64,
    kind: LossKind,
    ws: Workspace,
    grad: Vec<f64>,
    dlogits: Vec<f64>,
}

impl<'a> AbsAlignment<'a> {
    fn new(
        spec: &'a NetworkSpec,
        theta: &'a ParamVector,
        v: &'a [f64],
        kind: LossKind,
    ) -> Result<Self> {
        if v.len() != spec.num_params() {
            return Err(Error::DimMismatch {
                expected: spec.num_params(),
                got: v.len(),
            });
        }
        let v_norm = linalg::norm(v);
        if v_norm < ZERO_NORM {
            return Err(Error::ZeroVector);
        }
        Ok(Self {
            theta: theta.as_slice(),
            v,
            v_norm,
            kind,
            ws: Workspace::new(spec),
            grad: vec![0.0; spec.num_params()],
            dlogits: vec![0.0; spec.num_classes()],
        })
    }

    fn eval(&mut self, x: &[f64]) -> f64 {
        self.ws.forward(self.theta, x);
        let y_hat = crate::network::argmax(self.ws.logits());
        loss::sample_loss(self.kind, self.ws.logits(), y_hat, &mut self.dlogits);
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        self.ws
            .backward(self.theta, &self.dlogits, 1.0, &mut self.grad);
        let gn = linalg::norm(&self.grad);
        if gn < ZERO_NORM {
            return 0.0;
        }
        (linalg::dot(&self.grad, self.v) / (gn * self.v_norm))
            .clamp(-1.0, 1.0)
            .abs()
    }
}

/// Projected ascent on `|A₁(x)|` over the input coordinates with central
/// finite-difference gradients. Each step moves `step` along the normalized
/// ascent direction; a step that does not improve is halved and retried.
pub fn find_boundary_point(
    spec: &NetworkSpec,
    theta: &ParamVector,
    v1: &[f64],
    x_start: &[f64],
    bounds: &BoundsBox,
    search: &MarginSearch,
    kind: LossKind,
) -> Result<BoundarySearch> {
    if x_start.len() != spec.input_dim() || bounds.dim() != spec.input_dim() {
        return Err(Error::WrongDim {
            expected: spec.input_dim(),
            got: if x_start.len() != spec.input_dim() {
                x_start.len()
            } else {
                bounds.dim()
            },
        });
    }
    if !bounds.contains(x_start) {
        return Err(Error::InvalidConfig(
            "boundary search must start inside the bounds box".into(),
        ));
    }
    let mut f = AbsAlignment::new(spec, theta, v1, kind)?;
    let d = x_start.len();
    let mut x = x_start.to_vec();
    let start = f.eval(&x);
    let mut best = start;
    let mut accepted = vec![start];
    let mut step = search.step;
    let mut iterations = 0;
    let mut probe = x.clone();
    let mut grad = vec![0.0; d];
    let mut candidate = vec![0.0; d];
    while best < search.target && iterations < search.max_iter {
        iterations += 1;
        for j in 0..d {
            probe.copy_from_slice(&x);
            probe[j] = x[j] + search.fd_step;
            let up = f.eval(&probe);
            probe[j] = x[j] - search.fd_step;
            let down = f.eval(&probe);
            grad[j] = (up - down) / (2.0 * search.fd_step);
        }
        let gn = linalg::norm(&grad);
        if gn < ZERO_NORM {
            break;
        }
        for j in 0..d {
            candidate[j] = x[j] + step * grad[j] / gn;
        }
        bounds.project(&mut candidate);
        let value = f.eval(&candidate);
        if value > best {
            best = value;
            x.copy_from_slice(&candidate);
            accepted.push(value);
        } else {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    if best < search.target && best <= start {
        return Err(Error::NoProgress {
            start_alignment: start,
            iterations,
        });
    }
    Ok(BoundarySearch {
        x,
        start_alignment: start,
        alignment: best,
        iterations,
        accepted,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginEstimate {
    pub x_b: Vec<f64>,
    pub index_min: usize,
    pub index_max: usize,
    pub x_t_min: Vec<f64>,
    pub x_t_max: Vec<f64>,
    pub d_min: f64,
    pub d_max: f64,
    pub margin: f64,
    pub achieved_alignment: f64,
    pub iterations: usize,
    pub low_confidence: bool,
}

impl MarginEstimate {
    /// The training extreme the margin is measured from.
    pub fn nearest_extreme(&self) -> &[f64] {
        if self.d_min <= self.d_max {
            &self.x_t_min
        } else {
            &self.x_t_max
        }
    }
}

/// Margin from the samples with extreme signed alignment to `v₁`, through a
/// boundary point found by ascent started at their midpoint.
pub fn estimate_margin(
    spec: &NetworkSpec,
    theta: &ParamVector,
    decomp: &SpectralDecomposition,
    data: &LabeledDataset,
    bounds: &BoundsBox,
    search: &MarginSearch,
    kind: LossKind,
) -> Result<MarginEstimate> {
    if decomp.dim() != spec.num_params() || decomp.dim() == 0 {
        return Err(Error::DimMismatch {
            expected: spec.num_params(),
            got: decomp.dim(),
        });
    }
    let am = alignment::alignment_matrix(spec, theta, data, decomp, 1, kind)?;
    let (lo, hi) = select_extreme_samples(&am.column(0))?;
    let x_t_min = data.sample(lo).to_vec();
    let x_t_max = data.sample(hi).to_vec();
    let mut start: Vec<f64> = x_t_min
        .iter()
        .zip(&x_t_max)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    bounds.project(&mut start);
    let found = find_boundary_point(
        spec,
        theta,
        decomp.eigenvector(0),
        &start,
        bounds,
        search,
        kind,
    )?;
    let dist = |t: &[f64]| {
        let diff: Vec<f64> = found.x.iter().zip(t).map(|(a, b)| a - b).collect();
        linalg::norm(&diff)
    };
    let d_min = dist(&x_t_min);
    let d_max = dist(&x_t_max);
    Ok(MarginEstimate {
        index_min: lo,
        index_max: hi,
        d_min,
        d_max,
        margin: d_min.min(d_max),
        achieved_alignment: found.alignment,
        iterations: found.iterations,
        low_confidence: found.alignment < search.confidence_threshold,
        x_b: found.x,
        x_t_min,
        x_t_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_synthetic, SyntheticKind};
    use crate::linalg::SymmetricMatrix;
    use crate::network::{init_params, Activation};

    #[test]
    fn g_counts_columns_strictly_above_epsilon() {
        let mut m = vec![0.001; 100];
        m[3] = 0.5;
        m[40] = 0.02;
        assert_eq!(count_above(&m, 0.01), 0.02);
        assert_eq!(count_above(&m, 0.1), 0.01);
        assert_eq!(count_above(&m, 0.5), 0.0);
        assert_eq!(count_above(&m, 1.0), 0.0);
        // Monotone in ε.
        let mut last = 1.0;
        for e in [0.0, 0.001, 0.01, 0.1, 0.6] {
            let g = count_above(&m, e);
            assert!(g <= last);
            last = g;
        }
    }

    #[test]
    fn identity_hessian_measures() {
        let decomp = linalg::eigh_symmetric(&SymmetricMatrix::identity(3), 10).unwrap();
        let spec = NetworkSpec::new(vec![1, 1, 1], Activation::Relu).unwrap();
        let theta = ParamVector::from_values(&spec, vec![3.0, 0.0, 4.0, 0.0]).unwrap();
        let c = classical_measures(&decomp, &theta);
        assert_eq!((c.trace, c.lambda_max, c.param_norm), (3.0, 1.0, 5.0));
    }

    #[test]
    fn extremes_and_ties() {
        assert_eq!(select_extreme_samples(&[0.9, -0.8, 0.1]).unwrap(), (1, 0));
        assert_eq!(select_extreme_samples(&[0.2, 0.2, 0.2]).unwrap(), (0, 0));
        assert!(select_extreme_samples(&[1.0]).is_err());
    }

    #[test]
    fn bounds_box_padding() {
        let d = LabeledDataset::new("b", 2, 2, vec![0.0, 1.0, 10.0, 1.0], vec![0, 1]).unwrap();
        let b = BoundsBox::around(&d, 0.1);
        assert_eq!(b.lower, vec![-1.0, 0.9]);
        assert_eq!(b.upper, vec![11.0, 1.1]);
        let mut x = [20.0, 0.0];
        b.project(&mut x);
        assert_eq!(x, [11.0, 0.9]);
    }

    #[test]
    fn search_at_target_returns_start() {
        let spec = NetworkSpec::new(vec![2, 4, 2], Activation::Relu).unwrap();
        let theta = init_params(&spec, 3);
        let x = [0.3, 0.2];
        let g = loss::reinforcing_gradient(&spec, &theta, &x, LossKind::CrossEntropy).unwrap();
        let bounds = BoundsBox::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let r = find_boundary_point(
            &spec,
            &theta,
            g.as_slice(),
            &x,
            &bounds,
            &MarginSearch::default(),
            LossKind::CrossEntropy,
        )
        .unwrap();
        assert_eq!(r.x, x.to_vec());
        assert_eq!(r.iterations, 0);
        assert!(r.alignment > 0.999);
    }

    #[test]
    fn accepted_alignments_never_decrease() {
        let spec = NetworkSpec::new(vec![2, 8, 3], Activation::Relu).unwrap();
        let theta = init_params(&spec, 5);
        let data = gen_synthetic(SyntheticKind::Gaussian, 5, 2).unwrap();
        let v: Vec<f64> = (0..spec.num_params())
            .map(|i| ((i * 7) % 5) as f64 - 2.0)
            .collect();
        let bounds = BoundsBox::around(&data, 0.1);
        if let Ok(r) = find_boundary_point(
            &spec,
            &theta,
            &v,
            &[0.0, 0.0],
            &bounds,
            &MarginSearch::default(),
            LossKind::CrossEntropy,
        ) {
            assert!(r.accepted.windows(2).all(|w| w[1] >= w[0]));
            assert!(bounds.contains(&r.x));
        }
    }
}
