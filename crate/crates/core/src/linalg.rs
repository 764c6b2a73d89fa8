//! Dense vector and symmetric-matrix primitives.
//!
//! Vectors are plain `&[f64]` slices. Matrices are stored row-major. The
//! eigensolver reduces the matrix to tridiagonal form with Householder
//! reflections and then runs the implicit QL iteration, accumulating the
//! transformations so that every eigenvector is returned.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Default largest dimension accepted by [`eigh_symmetric`].
pub const DEFAULT_P_MAX: usize = 5000;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let na = norm(a);
    let nb = norm(b);
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// A real symmetric matrix in row-major storage.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = d;
        }
        m
    }

    /// Wraps row-major data, checking
    /// `|M[i,j] - M[j,i]| <= 1e-9 * (1 + max|M|)` and finiteness.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::ShapeMismatch {
                what: "symmetric matrix entries",
                expected: dim * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        let asym = asymmetry(dim, &data);
        if asym > 1e-9 * (1.0 + max_abs(&data)) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        Ok(Self { dim, data })
    }

    /// Projects an arbitrary square matrix onto the symmetric matrices,
    /// `(M + Mᵀ) / 2`. Returns the projection and `max |M - Mᵀ|`.
    pub fn symmetrized(dim: usize, mut data: Vec<f64>) -> Result<(Self, f64)> {
        if data.len() != dim * dim {
            return Err(Error::ShapeMismatch {
                what: "square matrix entries",
                expected: dim * dim,
                got: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("square matrix"));
        }
        let asym = asymmetry(dim, &data);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Ok((Self { dim, data }, asym))
    }

    /// Builds `(1/scale) * Σ_r rows[r] rows[r]ᵀ` from `count` row vectors of
    /// length `dim` stored contiguously.
    pub fn gram(dim: usize, rows: &[f64], scale: f64) -> Self {
        let count = if dim == 0 { 0 } else { rows.len() / dim };
        let mut m = Self::zeros(dim);
        for r in 0..count {
            let g = &rows[r * dim..(r + 1) * dim];
            for i in 0..dim {
                let gi = g[i];
                if gi == 0.0 {
                    continue;
                }
                let row = &mut m.data[i * dim..i * dim + i + 1];
                for (mij, gj) in row.iter_mut().zip(&g[..=i]) {
                    *mij += gi * gj;
                }
            }
        }
        let inv = 1.0 / scale;
        for i in 0..dim {
            for j in 0..=i {
                let v = m.data[i * dim + j] * inv;
                m.data[i * dim + j] = v;
                m.data[j * dim + i] = v;
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn into_row_major(self) -> Vec<f64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| dot(self.row(i), v)).collect()
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * c).collect(),
        }
    }
}

fn asymmetry(dim: usize, data: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..dim {
        for j in (i + 1)..dim {
            worst = worst.max((data[i * dim + j] - data[j * dim + i]).abs());
        }
    }
    worst
}

/// Eigenvalues in descending order with their unit eigenvectors.
///
/// Each eigenvector's entry of largest magnitude is non-negative (the first
/// such entry when several tie), which makes the output independent of the
/// arbitrary sign the solver happens to produce.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralDecomposition {
    dim: usize,
    eigenvalues: Vec<f64>,
    /// Eigenvector `i` occupies `vectors[i * dim..(i + 1) * dim]`.
    vectors: Vec<f64>,
    /// `max_i ‖M v_i − λ_i v_i‖₂` measured against the input matrix.
    residual: f64,
}

impl SpectralDecomposition {
    /// Assembles a decomposition from explicit parts. Eigenpairs are sorted
    /// descending and sign-normalized; `residual` is left at zero because no
    /// source matrix is known.
    pub fn from_parts(dim: usize, eigenvalues: Vec<f64>, vectors: Vec<f64>) -> Result<Self> {
        if eigenvalues.len() != dim || vectors.len() != dim * dim {
            return Err(Error::ShapeMismatch {
                what: "spectral decomposition",
                expected: dim * dim,
                got: vectors.len(),
            });
        }
        let mut d = Self {
            dim,
            eigenvalues,
            vectors,
            residual: 0.0,
        };
        d.sort_and_fix_signs();
        Ok(d)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.eigenvalues[i]
    }

    pub fn eigenvector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// All eigenvectors, one after the other.
    pub fn eigenvectors_flat(&self) -> &[f64] {
        &self.vectors
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// `Σ λ_i v_i v_iᵀ` in row-major order.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for k in 0..n {
            let lam = self.eigenvalues[k];
            let v = self.eigenvector(k);
            for i in 0..n {
                let s = lam * v[i];
                axpy(s, v, &mut out[i * n..(i + 1) * n]);
            }
        }
        out
    }

    fn sort_and_fix_signs(&mut self) {
        let n = self.dim;
        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort keeps equal eigenvalues in solver order.
        order.sort_by(|&a, &b| self.eigenvalues[b].total_cmp(&self.eigenvalues[a]));
        let mut values = Vec::with_capacity(n);
        let mut vectors = Vec::with_capacity(n * n);
        for &k in &order {
            values.push(self.eigenvalues[k]);
            let v = &self.vectors[k * n..(k + 1) * n];
            let mut pivot = 0;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[pivot].abs() {
                    pivot = i;
                }
            }
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            vectors.extend(v.iter().map(|x| {
                let y = sign * x;
                // Avoid -0.0 so repeated runs compare bit-identical.
                if y == 0.0 {
                    0.0
                } else {
                    y
                }
            }));
        }
        self.eigenvalues = values;
        self.vectors = vectors;
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Fails with [`Error::TooLarge`] when `m.dim() > max_dim`.
pub fn eigh_symmetric(m: &SymmetricMatrix, max_dim: usize) -> Result<SpectralDecomposition> {
    let n = m.dim();
    if n > max_dim {
        return Err(Error::TooLarge {
            dim: n,
            max: max_dim,
        });
    }
    if n == 0 {
        return Ok(SpectralDecomposition {
            dim: 0,
            eigenvalues: Vec::new(),
            vectors: Vec::new(),
            residual: 0.0,
        });
    }
    // `w` holds the transpose of the working matrix so the inner loops of
    // both phases stream through contiguous rows.
    let mut w = m.as_row_major().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut w, &mut d, &mut e);
    tridiagonal_ql(n, &mut w, &mut d, &mut e)?;

    let mut dec = SpectralDecomposition {
        dim: n,
        eigenvalues: d,
        vectors: w,
        residual: 0.0,
    };
    dec.sort_and_fix_signs();
    dec.residual = (0..n)
        .map(|i| {
            let v = dec.eigenvector(i);
            let lam = dec.eigenvalues[i];
            let mv = m.mul_vec(v);
            let r: f64 = mv
                .iter()
                .zip(v)
                .map(|(a, b)| {
                    let d = a - lam * b;
                    d * d
                })
                .sum();
            math::sqrt(r)
        })
        .fold(0.0, f64::max);
    Ok(dec)
}

// Householder reduction to tridiagonal form (EISPACK tred2). On exit `w[j*n+k]`
// is entry (k, j) of the accumulated orthogonal transform, `d` the diagonal
// and `e[1..]` the sub-diagonal.
fn tridiagonalize(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) {
    for j in 0..n {
        d[j] = w[j * n + (n - 1)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in &d[..i] {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = w[j * n + (i - 1)];
                w[j * n + i] = 0.0;
                w[i * n + j] = 0.0;
            }
        } else {
            for dk in &mut d[..i] {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = math::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in &mut e[..i] {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                w[i * n + j] = f;
                let col = &w[j * n..j * n + i];
                g = e[j] + col[j] * f;
                for k in (j + 1)..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                let col = &mut w[j * n..j * n + i];
                for k in j..i {
                    col[k] -= f * e[k] + g * d[k];
                }
                d[j] = col[i - 1];
                w[j * n + i] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        w[i * n + (n - 1)] = w[i * n + i];
        w[i * n + i] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = w[(i + 1) * n + k] / h;
            }
            for j in 0..=i {
                let (head, tail) = w.split_at_mut((i + 1) * n);
                let next = &tail[..=i];
                let col = &mut head[j * n..j * n + i + 1];
                let g = dot(next, col);
                for k in 0..=i {
                    col[k] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            w[(i + 1) * n + k] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = w[j * n + (n - 1)];
        w[j * n + (n - 1)] = 0.0;
    }
    w[(n - 1) * n + (n - 1)] = 1.0;
    e[0] = 0.0;
}

// Implicit QL on the symmetric tridiagonal matrix (EISPACK tql2). Rotations
// are applied to the rows of `w`, which end up holding the eigenvectors.
fn tridiagonal_ql(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64]) -> Result<()> {
    const MAX_SWEEPS: usize = 64;
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1 = 0.0_f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS {
                    return Err(Error::NoConvergence);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = math::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in &mut d[(l + 2)..n] {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = math::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    let (lo, hi) = w.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_next = &mut hi[..n];
                    for (a, b) in row_i.iter_mut().zip(row_next.iter_mut()) {
                        let t = *b;
                        *b = s * *a + c * t;
                        *a = c * *a - s * t;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Index-matched overlap `β_i = |cos(v_i^A, v_i^B)|` of the top `k`
/// eigenvectors of two decompositions.
pub fn subspace_overlap(
    a: &SpectralDecomposition,
    b: &SpectralDecomposition,
    k: usize,
) -> Result<Vec<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if k > a.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            got: k,
        });
    }
    (0..k)
        .map(|i| cosine_similarity(a.eigenvector(i), b.eigenvector(i)).map(f64::abs))
        .collect()
}
