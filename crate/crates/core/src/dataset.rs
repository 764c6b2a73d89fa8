//! Labeled datasets, synthetic 2-D generators and dataset transforms.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::math;
use crate::{Error, Result};

/// Inputs `X` (n × d, row-major) with labels in `0..C`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
    name: String,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "dataset dimension must be positive".into(),
            ));
        }
        if labels.is_empty() {
            return Err(Error::InvalidConfig(
                "dataset must contain at least one sample".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch {
                what: "dataset features",
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::InvalidLabel {
                label: bad,
                classes: num_classes,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        Ok(Self {
            features,
            labels,
            dim,
            num_classes,
            name: name.into(),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.features
            .chunks_exact(self.dim)
            .zip(self.labels.iter().copied())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// The samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::ShapeMismatch {
                    what: "subset index",
                    expected: self.len(),
                    got: i,
                });
            }
            features.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Self::new(
            self.name.clone(),
            self.dim,
            self.num_classes,
            features,
            labels,
        )
    }

    /// Samples whose label is `class`, with the class count unchanged.
    pub fn restrict_to_class(&self, class: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.labels[i] == class)
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptyClass(class));
        }
        let mut d = self.subset(&idx)?;
        d.name = format!("{}[class={class}]", self.name);
        Ok(d)
    }

    /// Same inputs with replacement labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::ShapeMismatch {
                what: "replacement labels",
                expected: self.len(),
                got: labels.len(),
            });
        }
        Self::new(
            self.name.clone(),
            self.dim,
            self.num_classes,
            self.features.clone(),
            labels,
        )
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Per-coordinate `(min, max)` over all samples.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut b = vec![(f64::INFINITY, f64::NEG_INFINITY); self.dim];
        for x in self.features.chunks_exact(self.dim) {
            for (bi, &v) in b.iter_mut().zip(x) {
                bi.0 = bi.0.min(v);
                bi.1 = bi.1.max(v);
            }
        }
        b
    }
}

/// Regular 2-D grid over `[x_min, x_max] × [y_min, y_max]`. Node `(r, c)`
/// sits at `(x_min + c·dx, y_min + r·dy)` and has flat index `r·res + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, resolution: usize) -> Result<Self> {
        let g = Self {
            x_min,
            x_max,
            y_min,
            y_max,
            resolution,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid covering the bounding box of a 2-D dataset expanded by
    /// `margin_fraction` of its extent on every side.
    pub fn around(data: &LabeledDataset, margin_fraction: f64, resolution: usize) -> Result<Self> {
        if data.dim() != 2 {
            return Err(Error::WrongDim {
                expected: 2,
                got: data.dim(),
            });
        }
        let b = data.bounds();
        let pad = |(lo, hi): (f64, f64)| {
            let ext = (hi - lo).max(1e-6);
            (lo - margin_fraction * ext, hi + margin_fraction * ext)
        };
        let (x0, x1) = pad(b[0]);
        let (y0, y1) = pad(b[1]);
        Self::new(x0, x1, y0, y1, resolution)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) {
            return Err(Error::InvalidConfig(format!(
                "degenerate grid bounds {self:?}"
            )));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidConfig(
                "grid resolution must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.resolution - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.resolution - 1) as f64
    }

    pub fn num_nodes(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn node(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.x_min + col as f64 * self.dx(),
            self.y_min + row as f64 * self.dy(),
        ]
    }

    pub fn node_at(&self, index: usize) -> [f64; 2] {
        self.node(index / self.resolution, index % self.resolution)
    }
}

/// Synthetic 2-D dataset families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SyntheticKind {
    Gaussian,
    Circle,
    HalfMoon,
    Hierarchical,
    Checkerboard,
    CheckerboardPulledIn,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 6] = [
        SyntheticKind::Gaussian,
        SyntheticKind::Circle,
        SyntheticKind::HalfMoon,
        SyntheticKind::Hierarchical,
        SyntheticKind::Checkerboard,
        SyntheticKind::CheckerboardPulledIn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticKind::Gaussian => "gaussian",
            SyntheticKind::Circle => "circle",
            SyntheticKind::HalfMoon => "half_moon",
            SyntheticKind::Hierarchical => "hierarchical",
            SyntheticKind::Checkerboard => "checkerboard",
            SyntheticKind::CheckerboardPulledIn => "checkerboard_pulled_in",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            SyntheticKind::Gaussian => 3,
            SyntheticKind::Hierarchical => 4,
            _ => 2,
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Returned for an unrecognised dataset name; lists the valid ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownKind(pub String);

impl fmt::Display for UnknownKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown dataset kind `{}`; valid kinds: ", self.0)?;
        for (i, k) in SyntheticKind::ALL.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(k.as_str())?;
        }
        Ok(())
    }
}

impl core::error::Error for UnknownKind {}

impl FromStr for SyntheticKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        SyntheticKind::ALL
            .iter()
            .copied()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| UnknownKind(s.to_string()))
    }
}

/// Generator constants. Every field can be overridden; the defaults give
/// separable datasets with the boundary structure each family is used for.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SyntheticParams {
    pub gaussian_means: Vec<[f64; 2]>,
    pub gaussian_sigma: f64,
    pub circle_radii: [f64; 2],
    pub circle_noise: f64,
    pub moon_noise: f64,
    pub hierarchical_super_separation: f64,
    pub hierarchical_intra_separation: f64,
    pub hierarchical_sigma: f64,
    /// Distance along φ₂ between neighbouring clusters; neighbours belong to
    /// alternating classes.
    pub checker_row_spacing: f64,
    pub checker_clusters_per_class: usize,
    /// Class means sit at `φ₁ = ∓checker_class_offset`.
    pub checker_class_offset: f64,
    /// Multiplier applied to the φ₁ class offset for the pulled-in variant.
    pub checker_pull_factor: f64,
    pub checker_sigma: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            gaussian_means: vec![[0.0, 2.0], [-2.0, -1.0], [2.0, -1.0]],
            gaussian_sigma: 0.4,
            circle_radii: [1.0, 2.0],
            circle_noise: 0.12,
            moon_noise: 0.1,
            hierarchical_super_separation: 4.0,
            hierarchical_intra_separation: 1.2,
            hierarchical_sigma: 0.25,
            checker_row_spacing: 2.0,
            checker_clusters_per_class: 3,
            checker_class_offset: 1.0,
            checker_pull_factor: 0.5,
            checker_sigma: 0.25,
        }
    }
}

/// Generates a synthetic dataset with the default constants.
pub fn gen_synthetic(kind: SyntheticKind, n_per_class: usize, seed: u64) -> Result<LabeledDataset> {
    gen_synthetic_with(kind, n_per_class, seed, &SyntheticParams::default())
}

pub fn gen_synthetic_with(
    kind: SyntheticKind,
    n_per_class: usize,
    seed: u64,
    params: &SyntheticParams,
) -> Result<LabeledDataset> {
    if n_per_class == 0 {
        return Err(Error::InvalidConfig(
            "n_per_class must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = kind.num_classes();
    let mut features = Vec::with_capacity(classes * n_per_class * 2);
    let mut labels = Vec::with_capacity(classes * n_per_class);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    match kind {
        SyntheticKind::Gaussian => {
            if params.gaussian_means.len() != 3 {
                return Err(Error::InvalidConfig(
                    "gaussian needs exactly 3 means".into(),
                ));
            }
            for (c, m) in params.gaussian_means.iter().enumerate() {
                for _ in 0..n_per_class {
                    features.push(m[0] + params.gaussian_sigma * gauss(&mut rng));
                    features.push(m[1] + params.gaussian_sigma * gauss(&mut rng));
                    labels.push(c);
                }
            }
        }
        SyntheticKind::Circle => {
            for (c, &r) in params.circle_radii.iter().enumerate() {
                for _ in 0..n_per_class {
                    let t = rng.random_range(0.0..2.0 * PI);
                    let rr = r + params.circle_noise * gauss(&mut rng);
                    features.push(rr * math::cos(t));
                    features.push(rr * math::sin(t));
                    labels.push(c);
                }
            }
        }
        SyntheticKind::HalfMoon => {
            for c in 0..2 {
                for i in 0..n_per_class {
                    let t = if n_per_class == 1 {
                        0.0
                    } else {
                        PI * i as f64 / (n_per_class - 1) as f64
                    };
                    let (x, y) = if c == 0 {
                        (math::cos(t), math::sin(t))
                    } else {
                        (1.0 - math::cos(t), 0.5 - math::sin(t))
                    };
                    features.push(x + params.moon_noise * gauss(&mut rng));
                    features.push(y + params.moon_noise * gauss(&mut rng));
                    labels.push(c);
                }
            }
        }
        SyntheticKind::Hierarchical => {
            let s = params.hierarchical_super_separation / 2.0;
            let t = params.hierarchical_intra_separation / 2.0;
            let means = [[-s, -t], [-s, t], [s, -t], [s, t]];
            for (c, m) in means.iter().enumerate() {
                for _ in 0..n_per_class {
                    features.push(m[0] + params.hierarchical_sigma * gauss(&mut rng));
                    features.push(m[1] + params.hierarchical_sigma * gauss(&mut rng));
                    labels.push(c);
                }
            }
        }
        SyntheticKind::Checkerboard | SyntheticKind::CheckerboardPulledIn => {
            let k = params.checker_clusters_per_class.max(1);
            let offset = if kind == SyntheticKind::CheckerboardPulledIn {
                params.checker_class_offset * params.checker_pull_factor
            } else {
                params.checker_class_offset
            };
            // 2k clusters along φ₂, alternating class, centred on zero.
            let center = (2 * k - 1) as f64 * params.checker_row_spacing / 2.0;
            for c in 0..2 {
                let phi1 = if c == 0 { -offset } else { offset };
                for i in 0..n_per_class {
                    let cluster = i % k;
                    let phi2 = (2 * cluster + c) as f64 * params.checker_row_spacing - center;
                    features.push(phi1 + params.checker_sigma * gauss(&mut rng));
                    features.push(phi2 + params.checker_sigma * gauss(&mut rng));
                    labels.push(c);
                }
            }
        }
    }
    LabeledDataset::new(kind.as_str(), 2, classes, features, labels)
}

/// Stratified, seeded train/test split. Within each class the samples are
/// shuffled and the first `round(fraction · n_c)` go to training; both
/// outputs keep the original sample order.
pub fn split(
    data: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; data.len()];
    for c in 0..data.num_classes() {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.label(i) == c).collect();
        if idx.is_empty() {
            continue;
        }
        let take = math::round(train_fraction * idx.len() as f64) as usize;
        if take == 0 {
            return Err(Error::ClassTooSmall { class: c });
        }
        idx.shuffle(&mut rng);
        for &i in &idx[..take.min(idx.len())] {
            in_train[i] = true;
        }
    }
    let train: Vec<usize> = (0..data.len()).filter(|&i| in_train[i]).collect();
    let test: Vec<usize> = (0..data.len()).filter(|&i| !in_train[i]).collect();
    if test.is_empty() {
        return Err(Error::InvalidConfig("split leaves no test samples".into()));
    }
    Ok((data.subset(&train)?, data.subset(&test)?))
}

/// 4×4 average pooling of 28×28 images (d = 784 → 49), row-major.
pub fn downsample_images(data: &LabeledDataset) -> Result<LabeledDataset> {
    const SIDE: usize = 28;
    const FACTOR: usize = 4;
    const OUT: usize = SIDE / FACTOR;
    if data.dim() != SIDE * SIDE {
        return Err(Error::WrongDim {
            expected: SIDE * SIDE,
            got: data.dim(),
        });
    }
    let mut features = Vec::with_capacity(data.len() * OUT * OUT);
    for img in data.features().chunks_exact(SIDE * SIDE) {
        for r in 0..OUT {
            for c in 0..OUT {
                let mut acc = 0.0;
                for dr in 0..FACTOR {
                    let row = &img[(r * FACTOR + dr) * SIDE + c * FACTOR..][..FACTOR];
                    acc += row.iter().sum::<f64>();
                }
                features.push(acc / (FACTOR * FACTOR) as f64);
            }
        }
    }
    LabeledDataset::new(
        format!("{}[pool4]", data.name()),
        OUT * OUT,
        data.num_classes(),
        features,
        data.labels().to_vec(),
    )
}
