//! Cosine alignment of reinforcing gradients with parameter-space directions.
//!
//! `A_i(x) = cos(g_θ(x), v_i)` where `g_θ(x)` is the gradient of the sample
//! loss at the predicted label. A gradient with norm below `1e-12` has
//! alignment exactly 0 with every direction and is flagged.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{GridSpec, LabeledDataset};
use crate::linalg::{self, SpectralDecomposition, ZERO_NORM};
use crate::loss::{self, GradientLabel, LossKind};
use crate::math;
use crate::network::{self, NetworkSpec, ParamVector};
use crate::par;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub value: f64,
    pub zero_gradient: bool,
}

#[inline]
fn cos_with_norms(g: &[f64], g_norm: f64, v: &[f64], v_norm: f64) -> f64 {
    (linalg::dot(g, v) / (g_norm * v_norm)).clamp(-1.0, 1.0)
}

/// Alignment of an already computed gradient with `v`.
pub fn alignment_of_gradient(g: &[f64], v: &[f64]) -> Result<Alignment> {
    if g.len() != v.len() {
        return Err(Error::DimMismatch {
            expected: g.len(),
            got: v.len(),
        });
    }
    let gn = linalg::norm(g);
    if gn < ZERO_NORM {
        return Ok(Alignment {
            value: 0.0,
            zero_gradient: true,
        });
    }
    let vn = linalg::norm(v);
    if vn < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(Alignment {
        value: cos_with_norms(g, gn, v, vn),
        zero_gradient: false,
    })
}

/// `A(x) = cos(g_θ(x), v)`.
pub fn alignment(
    spec: &NetworkSpec,
    theta: &ParamVector,
    x: &[f64],
    v: &[f64],
    kind: LossKind,
) -> Result<Alignment> {
    let g = loss::reinforcing_gradient(spec, theta, x, kind)?;
    alignment_of_gradient(g.as_slice(), v)
}

/// Alignments of every sample with the top `k` eigenvectors, row-major
/// `n × k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    values: Vec<f64>,
    eigen_indices: Vec<usize>,
    sample_ids: Vec<usize>,
    zero_gradient: Vec<bool>,
}

impl AlignmentMatrix {
    pub fn num_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn k(&self) -> usize {
        self.eigen_indices.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.k()..(s + 1) * self.k()]
    }

    pub fn get(&self, s: usize, i: usize) -> f64 {
        self.values[s * self.k() + i]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.num_samples()).map(|s| self.get(s, i)).collect()
    }

    pub fn eigen_indices(&self) -> &[usize] {
        &self.eigen_indices
    }

    pub fn sample_ids(&self) -> &[usize] {
        &self.sample_ids
    }

    pub fn zero_gradient(&self) -> &[bool] {
        &self.zero_gradient
    }

    /// Mean of `|A_i|` over samples for every column.
    pub fn mean_abs_columns(&self) -> Vec<f64> {
        let k = self.k();
        let mut m = vec![0.0; k];
        for row in self.values.chunks_exact(k.max(1)) {
            for (mi, a) in m.iter_mut().zip(row) {
                *mi += a.abs();
            }
        }
        let n = self.num_samples().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Alignment matrix from stacked gradients (`n × p`) and the top `k`
/// eigenvectors.
pub fn alignment_matrix_from_gradients(
    gradients: &[f64],
    p: usize,
    decomp: &SpectralDecomposition,
    k: usize,
) -> Result<AlignmentMatrix> {
    if decomp.dim() != p {
        return Err(Error::DimMismatch {
            expected: p,
            got: decomp.dim(),
        });
    }
    if k > p {
        return Err(Error::DimMismatch {
            expected: p,
            got: k,
        });
    }
    if p == 0 || gradients.len() % p != 0 {
        return Err(Error::ShapeMismatch {
            what: "gradient rows",
            expected: p,
            got: gradients.len(),
        });
    }
    let n = gradients.len() / p;
    let v_norms: Vec<f64> = (0..k)
        .map(|i| linalg::norm(decomp.eigenvector(i)))
        .collect();
    let rows = par::map_indexed(n, |s| {
        let g = &gradients[s * p..(s + 1) * p];
        let gn = linalg::norm(g);
        if gn < ZERO_NORM {
            return (vec![0.0; k], true);
        }
        let row = (0..k)
            .map(|i| cos_with_norms(g, gn, decomp.eigenvector(i), v_norms[i]))
            .collect();
        (row, false)
    });
    let mut values = Vec::with_capacity(n * k);
    let mut zero_gradient = Vec::with_capacity(n);
    for (row, z) in rows {
        values.extend_from_slice(&row);
        zero_gradient.push(z);
    }
    Ok(AlignmentMatrix {
        values,
        eigen_indices: (0..k).collect(),
        sample_ids: (0..n).collect(),
        zero_gradient,
    })
}

pub fn alignment_matrix(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    decomp: &SpectralDecomposition,
    k: usize,
    kind: LossKind,
) -> Result<AlignmentMatrix> {
    let g = loss::per_sample_gradients(spec, theta, data, GradientLabel::Predicted, kind)?;
    alignment_matrix_from_gradients(&g, spec.num_params(), decomp, k)
}

/// Predictions and alignments on every node of a 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: GridSpec,
    /// `values[i]` holds `A_i` per node (flat index `r·res + c`).
    pub values: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
}

impl GridField {
    pub fn value(&self, eigen: usize, row: usize, col: usize) -> f64 {
        self.values[eigen][row * self.grid.resolution + col]
    }

    pub fn prediction(&self, row: usize, col: usize) -> usize {
        self.predictions[row * self.grid.resolution + col]
    }
}

fn require_2d(spec: &NetworkSpec) -> Result<()> {
    if spec.input_dim() != 2 {
        return Err(Error::WrongDim {
            expected: 2,
            got: spec.input_dim(),
        });
    }
    Ok(())
}

pub fn grid_alignment_field(
    spec: &NetworkSpec,
    theta: &ParamVector,
    decomp: &SpectralDecomposition,
    k: usize,
    grid: &GridSpec,
    kind: LossKind,
) -> Result<GridField> {
    require_2d(spec)?;
    grid.validate()?;
    let p = spec.num_params();
    if decomp.dim() != p || k > p {
        return Err(Error::DimMismatch {
            expected: p,
            got: if decomp.dim() != p { decomp.dim() } else { k },
        });
    }
    let v_norms: Vec<f64> = (0..k)
        .map(|i| linalg::norm(decomp.eigenvector(i)))
        .collect();
    let nodes = par::map_indexed(grid.num_nodes(), |idx| -> Result<(usize, Vec<f64>)> {
        let x = grid.node_at(idx);
        let y_hat = network::predict(spec, theta, &x)?;
        let g = loss::sample_gradient(spec, theta, &x, y_hat, kind)?;
        let gn = g.norm();
        let a = if gn < ZERO_NORM {
            vec![0.0; k]
        } else {
            (0..k)
                .map(|i| cos_with_norms(g.as_slice(), gn, decomp.eigenvector(i), v_norms[i]))
                .collect()
        };
        Ok((y_hat, a))
    });
    let mut values = vec![Vec::with_capacity(grid.num_nodes()); k];
    let mut predictions = Vec::with_capacity(grid.num_nodes());
    for node in nodes {
        let (y, a) = node?;
        predictions.push(y);
        for (col, v) in values.iter_mut().zip(a) {
            col.push(v);
        }
    }
    Ok(GridField {
        grid: *grid,
        values,
        predictions,
    })
}

/// How the per-direction maxima are combined into ε.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EpsilonAggregation {
    /// Mean over directions of the maximum `|cos|` over samples.
    #[default]
    MeanOfMax,
    /// Maximum over directions of the mean `|cos|` over samples.
    MaxOfMean,
}

/// Random-direction baseline from stacked per-sample gradients (`n × p`).
/// Each direction has i.i.d. standard normal entries, drawn in sequence
/// from one ChaCha8 stream seeded with `seed`.
pub fn epsilon_from_gradients(
    gradients: &[f64],
    p: usize,
    directions: usize,
    seed: u64,
    aggregation: EpsilonAggregation,
) -> Result<f64> {
    if directions == 0 {
        return Err(Error::InvalidConfig(
            "at least one random direction is needed".into(),
        ));
    }
    if p == 0 || gradients.is_empty() || gradients.len() % p != 0 {
        return Err(Error::ShapeMismatch {
            what: "gradient rows",
            expected: p,
            got: gradients.len(),
        });
    }
    let n = gradients.len() / p;
    let norms: Vec<f64> = gradients.chunks_exact(p).map(linalg::norm).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_direction = Vec::with_capacity(directions);
    for _ in 0..directions {
        let r: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
        let rn = linalg::norm(&r);
        let cosines = gradients.chunks_exact(p).zip(&norms).map(|(g, &gn)| {
            if gn < ZERO_NORM {
                0.0
            } else {
                cos_with_norms(g, gn, &r, rn).abs()
            }
        });
        per_direction.push(match aggregation {
            EpsilonAggregation::MeanOfMax => cosines.fold(0.0_f64, f64::max),
            EpsilonAggregation::MaxOfMean => cosines.sum::<f64>() / n as f64,
        });
    }
    Ok(match aggregation {
        EpsilonAggregation::MeanOfMax => per_direction.iter().sum::<f64>() / directions as f64,
        EpsilonAggregation::MaxOfMean => per_direction.iter().copied().fold(0.0_f64, f64::max),
    })
}

pub fn random_direction_epsilon(
    spec: &NetworkSpec,
    theta: &ParamVector,
    data: &LabeledDataset,
    directions: usize,
    seed: u64,
    aggregation: EpsilonAggregation,
    kind: LossKind,
) -> Result<f64> {
    let g = loss::per_sample_gradients(spec, theta, data, GradientLabel::Predicted, kind)?;
    epsilon_from_gradients(&g, spec.num_params(), directions, seed, aggregation)
}

/// Grid-edge approximation of the decision boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryScan {
    pub grid: GridSpec,
    /// Midpoints of grid edges whose endpoints are predicted differently.
    pub points: Vec<[f64; 2]>,
}

impl BoundaryScan {
    /// Number of boundary-crossing grid edges.
    pub fn cell_count(&self) -> usize {
        self.points.len()
    }

    /// L₂ distance from `x` to the nearest boundary point, if any.
    pub fn nearest_distance(&self, x: &[f64]) -> Option<f64> {
        self.points
            .iter()
            .map(|b| math::hypot(b[0] - x[0], b[1] - x[1]))
            .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.min(d))))
    }
}

pub fn boundary_scan_2d(
    spec: &NetworkSpec,
    theta: &ParamVector,
    grid: &GridSpec,
) -> Result<BoundaryScan> {
    require_2d(spec)?;
    grid.validate()?;
    let res = grid.resolution;
    let preds = par::map_indexed(grid.num_nodes(), |idx| {
        network::predict(spec, theta, &grid.node_at(idx))
    });
    let preds: Vec<usize> = preds.into_iter().collect::<Result<_>>()?;
    let mut points = Vec::new();
    for r in 0..res {
        for c in 0..res {
            let here = preds[r * res + c];
            let a = grid.node(r, c);
            if c + 1 < res && preds[r * res + c + 1] != here {
                let b = grid.node(r, c + 1);
                points.push([(a[0] + b[0]) / 2.0, a[1]]);
            }
            if r + 1 < res && preds[(r + 1) * res + c] != here {
                let b = grid.node(r + 1, c);
                points.push([a[0], (a[1] + b[1]) / 2.0]);
            }
        }
    }
    Ok(BoundaryScan {
        grid: *grid,
        points,
    })
}
