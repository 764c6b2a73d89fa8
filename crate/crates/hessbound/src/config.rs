//! Experiment configuration (TOML) and its fingerprint.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hessbound_core::alignment::EpsilonAggregation;
use hessbound_core::analysis::{MarginSearch, ReportConfig};
use hessbound_core::dataset::{
    downsample_images, gen_synthetic_with, SyntheticKind, SyntheticParams,
};
use hessbound_core::training::{InitParams, InitScheme, OptimizerConfig, StopCriteria};
use hessbound_core::{Activation, LabeledDataset, LossConfig, NetworkSpec};

use crate::error::{Error, Result};
use crate::{io, loaders};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// A synthetic kind, `iris`, `mnist`, or `csv`.
    pub kind: String,
    pub n_per_class: usize,
    pub seed: u64,
    /// Iris CSV or dataset CSV.
    pub path: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub digits: Vec<u8>,
    /// 4×4 pooling of MNIST images to 49 features.
    pub downsample: bool,
    pub synthetic: SyntheticParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: "gaussian".into(),
            n_per_class: 100,
            seed: 0,
            path: None,
            images: None,
            labels: None,
            digits: vec![0, 1, 7],
            downsample: true,
            synthetic: SyntheticParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub widths: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub scheme: InitScheme,
    pub seeds: Vec<u64>,
    pub optimizer: OptimizerConfig,
    /// Replaces `optimizer` for runs started from one scheme.
    pub scheme_optimizer: SchemeOptimizers,
    pub stop: StopCriteria,
    pub loss: LossConfig,
    pub init: InitParams,
    pub checkpoint_at: Vec<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            scheme: InitScheme::Normal,
            seeds: vec![0],
            optimizer: OptimizerConfig::default(),
            scheme_optimizer: SchemeOptimizers::default(),
            stop: StopCriteria::default(),
            loss: LossConfig::default(),
            init: InitParams::default(),
            checkpoint_at: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeOptimizers {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal: Option<OptimizerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversarial: Option<OptimizerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub large_norm: Option<OptimizerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wide_margin: Option<OptimizerConfig>,
}

impl SchemeOptimizers {
    pub fn get(&self, scheme: InitScheme) -> Option<&OptimizerConfig> {
        match scheme {
            InitScheme::Normal => self.normal.as_ref(),
            InitScheme::Adversarial => self.adversarial.as_ref(),
            InitScheme::LargeNorm => self.large_norm.as_ref(),
            InitScheme::WideMargin => self.wide_margin.as_ref(),
        }
    }

    fn iter(&self) -> impl Iterator<Item = &OptimizerConfig> {
        [
            &self.normal,
            &self.adversarial,
            &self.large_norm,
            &self.wide_margin,
        ]
        .into_iter()
        .flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Eigenvector columns written to the alignment CSV and grid fields.
    pub k: usize,
    pub grid_resolution: usize,
    pub grid_margin: f64,
    pub histogram_bins: usize,
    pub epsilon_directions: usize,
    pub epsilon_seed: u64,
    pub epsilon_aggregation: EpsilonAggregation,
    pub curvature: hessbound_core::curvature::CurvatureConfig,
    pub margin: MarginSearch,
    pub schemes: Vec<InitScheme>,
    pub reparam_alpha: f64,
    pub reparam_probes: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            k: 5,
            grid_resolution: 101,
            grid_margin: 0.1,
            histogram_bins: 50,
            epsilon_directions: 5,
            epsilon_seed: 0,
            epsilon_aggregation: EpsilonAggregation::MeanOfMax,
            curvature: Default::default(),
            margin: MarginSearch::default(),
            schemes: vec![InitScheme::Normal, InitScheme::Adversarial],
            reparam_alpha: 2.0,
            reparam_probes: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Makes dataset file paths relative to the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.dataset.path,
            &mut self.dataset.images,
            &mut self.dataset.labels,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.training.seeds.is_empty() {
            return Err(Error::Config("training.seeds must not be empty".into()));
        }
        let d = &self.dataset;
        match d.kind.as_str() {
            "iris" | "csv" => match &d.path {
                Some(p) if p.exists() => {}
                Some(p) => {
                    return Err(Error::Config(format!(
                        "dataset file {} does not exist",
                        p.display()
                    )))
                }
                None => {
                    return Err(Error::Config(format!(
                        "dataset.path is required for kind {}",
                        d.kind
                    )))
                }
            },
            "mnist" => {
                for (what, p) in [("images", &d.images), ("labels", &d.labels)] {
                    match p {
                        Some(p) if p.exists() => {}
                        Some(p) => {
                            return Err(Error::Config(format!(
                                "MNIST {what} file {} does not exist",
                                p.display()
                            )))
                        }
                        None => {
                            return Err(Error::Config(format!(
                                "dataset.{what} is required for mnist"
                            )))
                        }
                    }
                }
            }
            other => {
                other
                    .parse::<SyntheticKind>()
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        self.network_spec()?;
        self.training.optimizer.validate()?;
        for opt in self.training.scheme_optimizer.iter() {
            opt.validate()?;
        }
        self.training.stop.validate()?;
        self.analysis.curvature.validate()?;
        Ok(())
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        NetworkSpec::new(self.model.widths.clone(), self.model.activation)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        let d = &self.dataset;
        match d.kind.as_str() {
            "iris" => loaders::load_iris(d.path.as_ref().expect("validated")),
            "csv" => io::read_dataset_csv(d.path.as_ref().expect("validated")),
            "mnist" => {
                let raw = loaders::load_mnist_subset(
                    d.images.as_ref().expect("validated"),
                    d.labels.as_ref().expect("validated"),
                    &d.digits,
                    d.n_per_class,
                    d.seed,
                )?;
                Ok(if d.downsample {
                    downsample_images(&raw)?
                } else {
                    raw
                })
            }
            kind => {
                let kind: SyntheticKind =
                    kind.parse()
                        .map_err(|e: hessbound_core::dataset::UnknownKind| {
                            Error::Config(e.to_string())
                        })?;
                Ok(gen_synthetic_with(
                    kind,
                    d.n_per_class,
                    d.seed,
                    &d.synthetic,
                )?)
            }
        }
    }

    pub fn report_config(&self) -> ReportConfig {
        ReportConfig {
            loss: self.training.loss,
            curvature: self.analysis.curvature,
            epsilon_directions: self.analysis.epsilon_directions,
            epsilon_seed: self.analysis.epsilon_seed,
            epsilon_aggregation: self.analysis.epsilon_aggregation,
        }
    }

    /// Optimizer for one run; the seed drives the batch shuffle.
    pub fn optimizer_for(&self, scheme: InitScheme, seed: u64) -> OptimizerConfig {
        self.training
            .scheme_optimizer
            .get(scheme)
            .unwrap_or(&self.training.optimizer)
            .with_seed(seed)
    }

    /// SHA-256 over the canonical JSON of the resolved config.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
