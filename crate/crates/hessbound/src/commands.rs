//! The experiment steps behind each CLI subcommand, usable as a library.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use hessbound_core::alignment::grid_alignment_field;
use hessbound_core::analysis::{
    analyze, estimate_margin, Analysis, BoundsBox, GeneralizationReport, MarginEstimate,
};
use hessbound_core::curvature::{self, histogram, spectrum_outliers};
use hessbound_core::dataset::{gen_synthetic_with, GridSpec, SyntheticKind};
use hessbound_core::linalg::eigh_symmetric;
use hessbound_core::network::{alpha_scale, forward};
use hessbound_core::training::{make_init, train, InitScheme, TrainReport};
use hessbound_core::{LabeledDataset, NetworkSpec, ParamVector};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::io::{self, ParamDocument, SpectrumDocument, TrainReportDocument};

/// A resolved experiment: config, architecture and training data.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub spec: NetworkSpec,
    pub data: LabeledDataset,
    pub fingerprint: String,
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub scheme: InitScheme,
    pub seed: u64,
    pub theta0: ParamVector,
    pub theta: ParamVector,
    pub report: TrainReport,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.network_spec()?;
        let data = config.load_dataset()?;
        if data.dim() != spec.input_dim() || data.num_classes() != spec.num_classes() {
            return Err(Error::Config(format!(
                "model widths {:?} do not fit dataset {} (d = {}, C = {})",
                spec.layer_widths(),
                data.name(),
                data.dim(),
                data.num_classes()
            )));
        }
        let fingerprint = config.fingerprint();
        Ok(Self {
            config,
            spec,
            data,
            fingerprint,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(ExperimentConfig::load(path)?)
    }

    /// The pulled-in checkerboard that wide-margin pretraining fits.
    fn pretrain_data(&self) -> Result<Option<LabeledDataset>> {
        let d = &self.config.dataset;
        if self.config.training.scheme != InitScheme::WideMargin
            && !self
                .config
                .analysis
                .schemes
                .contains(&InitScheme::WideMargin)
        {
            return Ok(None);
        }
        match d.kind.parse::<SyntheticKind>() {
            Ok(SyntheticKind::Checkerboard) => Ok(Some(gen_synthetic_with(
                SyntheticKind::CheckerboardPulledIn,
                d.n_per_class,
                d.seed,
                &d.synthetic,
            )?)),
            _ => Ok(None),
        }
    }

    pub fn train_run(
        &self,
        scheme: InitScheme,
        seed: u64,
        checkpoint_at: &[usize],
    ) -> Result<TrainedRun> {
        let t = &self.config.training;
        let pretrain = self.pretrain_data()?;
        let theta0 = make_init(
            scheme,
            &self.spec,
            &self.data,
            seed,
            &t.init,
            pretrain.as_ref(),
        )?;
        let opt = self.config.optimizer_for(scheme, seed);
        let (theta, report) = train(
            &self.spec,
            &theta0,
            &self.data,
            t.loss,
            &opt,
            &t.stop,
            checkpoint_at,
        )?;
        Ok(TrainedRun {
            scheme,
            seed,
            theta0,
            theta,
            report,
        })
    }

    pub fn analyze(&self, theta: &ParamVector) -> Result<Analysis> {
        let mut a = analyze(&self.spec, theta, &self.data, &self.config.report_config())?;
        a.report.config_fingerprint = self.fingerprint.clone();
        Ok(a)
    }

    pub fn margin(&self, theta: &ParamVector, analysis: &Analysis) -> Result<MarginEstimate> {
        let search = &self.config.analysis.margin;
        let bounds = BoundsBox::around(&self.data, search.bounds_fraction);
        Ok(estimate_margin(
            &self.spec,
            theta,
            &analysis.decomposition,
            &self.data,
            &bounds,
            search,
            self.config.training.loss.kind,
        )?)
    }

    pub fn spectrum_document(&self, eigenvalues: &[f64], class: Option<usize>) -> SpectrumDocument {
        SpectrumDocument {
            eigenvalues: eigenvalues.to_vec(),
            histogram: histogram(eigenvalues, self.config.analysis.histogram_bins),
            outlier_count: spectrum_outliers(eigenvalues, self.spec.num_classes()),
            class,
            config_fingerprint: self.fingerprint.clone(),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let a = &self.config.analysis;
        Ok(GridSpec::around(
            &self.data,
            a.grid_margin,
            a.grid_resolution,
        )?)
    }

    fn param_document(&self, theta: &ParamVector) -> ParamDocument {
        let mut doc = ParamDocument::new(&self.spec, theta);
        doc.config_fingerprint = Some(self.fingerprint.clone());
        doc
    }

    fn k(&self) -> usize {
        self.config.analysis.k.clamp(1, self.spec.num_params())
    }
}

fn run_stem(scheme: InitScheme, seed: u64) -> String {
    format!("{scheme}-seed{seed}")
}

/// Writes a synthetic dataset CSV and returns its path.
pub fn gen_data(kind: SyntheticKind, n_per_class: usize, seed: u64, out: &Path) -> Result<PathBuf> {
    let data = gen_synthetic_with(kind, n_per_class, seed, &Default::default())?;
    let path = out.join(format!("{}.csv", kind.as_str()));
    io::write_dataset_csv(&path, &data)?;
    Ok(path)
}

/// Trains every configured seed; writes θ*, the training report and any
/// checkpoints. Returns the θ* paths.
pub fn cmd_train(
    exp: &Experiment,
    scheme: InitScheme,
    seeds: &[u64],
    checkpoint_at: &[usize],
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for &seed in seeds {
        let run = exp.train_run(scheme, seed, checkpoint_at)?;
        let stem = run_stem(scheme, seed);
        let theta_path = out.join(format!("theta-{stem}.json"));
        io::write_json(&theta_path, &exp.param_document(&run.theta))?;
        io::write_json(
            out.join(format!("train-report-{stem}.json")),
            &TrainReportDocument::new(&run.report, scheme.as_str(), seed, &exp.fingerprint),
        )?;
        for (epoch, theta) in run
            .report
            .checkpoint_epochs
            .iter()
            .zip(&run.report.checkpoint_params)
        {
            io::write_json(
                out.join(format!("checkpoint-{stem}-epoch{epoch}.json")),
                &exp.param_document(theta),
            )?;
        }
        written.push(theta_path);
    }
    Ok(written)
}

fn load_theta(exp: &Experiment, path: &Path) -> Result<ParamVector> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "parameter file {} does not exist",
            path.display()
        )));
    }
    let (spec, theta) = io::read_params(path)?;
    if spec != exp.spec {
        return Err(Error::Config(format!(
            "{} holds a {:?} network, config describes {:?}",
            path.display(),
            spec.layer_widths(),
            exp.spec.layer_widths()
        )));
    }
    Ok(theta)
}

/// Spectrum, alignment matrix, grid fields (d = 2) and the report for θ;
/// with `matrices`, also the Hessian and gradient covariance as CSV.
pub fn cmd_analyze(
    exp: &Experiment,
    theta_path: &Path,
    per_class: Option<usize>,
    matrices: bool,
    out: &Path,
) -> Result<GeneralizationReport> {
    let theta = load_theta(exp, theta_path)?;
    let a = exp.analyze(&theta)?;
    let kind = exp.config.training.loss.kind;
    io::write_json(
        out.join("spectrum.json"),
        &exp.spectrum_document(a.decomposition.eigenvalues(), None),
    )?;
    io::write_csv(
        out.join("spectrum.csv"),
        &io::spectrum_csv(a.decomposition.eigenvalues()),
    )?;
    if matrices {
        io::write_csv(out.join("hessian.csv"), &io::matrix_csv(&a.hessian))?;
        let cov = curvature::gradient_covariance(&exp.spec, &theta, &exp.data, kind)?;
        io::write_csv(out.join("covariance.csv"), &io::matrix_csv(&cov))?;
    }
    io::write_csv(
        out.join("alignment.csv"),
        &io::alignment_csv(&a.alignments, exp.data.labels(), exp.k()),
    )?;
    io::write_json(out.join("report.json"), &a.report)?;
    let two_d = exp.spec.input_dim() == 2;
    if two_d {
        let field = grid_alignment_field(
            &exp.spec,
            &theta,
            &a.decomposition,
            exp.k(),
            &exp.grid()?,
            kind,
        )?;
        io::write_csv(out.join("grid-field.csv"), &io::grid_field_csv(&field))?;
    }
    if let Some(class) = per_class {
        if class >= exp.spec.num_classes() {
            return Err(Error::Config(format!(
                "class {class} out of range for {} classes",
                exp.spec.num_classes()
            )));
        }
        let cfg = &exp.config.analysis.curvature;
        let h = curvature::per_class_hessian(
            &exp.spec,
            &theta,
            &exp.data,
            class,
            exp.config.training.loss,
            cfg,
        )?;
        let decomp = eigh_symmetric(&h.matrix, cfg.p_max)?;
        io::write_json(
            out.join(format!("spectrum-class{class}.json")),
            &exp.spectrum_document(decomp.eigenvalues(), Some(class)),
        )?;
        if two_d {
            let field =
                grid_alignment_field(&exp.spec, &theta, &decomp, exp.k(), &exp.grid()?, kind)?;
            io::write_csv(
                out.join(format!("grid-field-class{class}.csv")),
                &io::grid_field_csv(&field),
            )?;
        }
    }
    Ok(a.report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginDocument {
    #[serde(flatten)]
    pub estimate: MarginEstimate,
    pub config_fingerprint: String,
}

pub fn cmd_margin(exp: &Experiment, theta_path: &Path, out: &Path) -> Result<MarginEstimate> {
    let theta = load_theta(exp, theta_path)?;
    let a = exp.analyze(&theta)?;
    let estimate = exp.margin(&theta, &a)?;
    io::write_json(
        out.join("margin.json"),
        &MarginDocument {
            estimate: estimate.clone(),
            config_fingerprint: exp.fingerprint.clone(),
        },
    )?;
    Ok(estimate)
}

/// Measures of one trained run, one row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeasures {
    pub scheme: InitScheme,
    pub seed: u64,
    #[serde(rename = "G")]
    pub g: f64,
    pub trace: f64,
    pub lambda_max: f64,
    pub param_norm: f64,
    pub outlier_count: usize,
    pub epsilon: f64,
}

impl RunMeasures {
    pub fn from_report(scheme: InitScheme, seed: u64, r: &GeneralizationReport) -> Self {
        Self {
            scheme,
            seed,
            g: r.g,
            trace: r.trace,
            lambda_max: r.lambda_max,
            param_norm: r.param_norm,
            outlier_count: r.outlier_count,
            epsilon: r.epsilon,
        }
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub const MEASURES: [&str; 4] = ["G", "trace", "lambda_max", "param_norm"];

/// `scheme,runs,{measure}_mean,{measure}_std...`, one row per scheme in the
/// order given.
pub fn comparison_csv(schemes: &[InitScheme], runs: &[RunMeasures]) -> String {
    let mut out = String::from("scheme,runs");
    for m in MEASURES {
        let _ = write!(out, ",{m}_mean,{m}_std");
    }
    out.push('\n');
    for &scheme in schemes {
        let rows: Vec<&RunMeasures> = runs.iter().filter(|r| r.scheme == scheme).collect();
        let _ = write!(out, "{scheme},{}", rows.len());
        let columns: [Vec<f64>; 4] = [
            rows.iter().map(|r| r.g).collect(),
            rows.iter().map(|r| r.trace).collect(),
            rows.iter().map(|r| r.lambda_max).collect(),
            rows.iter().map(|r| r.param_norm).collect(),
        ];
        for col in &columns {
            let (m, s) = mean_std(col);
            let _ = write!(out, ",{},{}", io::fmt_f64(m), io::fmt_f64(s));
        }
        out.push('\n');
    }
    out
}

/// Trains and analyzes every (scheme, seed) pair; writes per-run reports and
/// the comparison table.
pub fn cmd_compare(exp: &Experiment, out: &Path) -> Result<Vec<RunMeasures>> {
    let schemes = &exp.config.analysis.schemes;
    let mut runs = Vec::new();
    for &scheme in schemes {
        for &seed in &exp.config.training.seeds {
            let run = exp.train_run(scheme, seed, &[])?;
            let a = exp.analyze(&run.theta)?;
            io::write_json(
                out.join(format!("report-{}.json", run_stem(scheme, seed))),
                &a.report,
            )?;
            runs.push(RunMeasures::from_report(scheme, seed, &a.report));
        }
    }
    io::write_csv(out.join("comparison.csv"), &comparison_csv(schemes, &runs))?;
    io::write_json(out.join("runs.json"), &runs)?;
    Ok(runs)
}

/// Effect of the α-scale reparameterization on one minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamCheck {
    pub seed: u64,
    pub alpha: f64,
    pub probes: usize,
    pub max_logit_deviation: f64,
    pub trace: f64,
    pub trace_scaled: f64,
    pub delta_trace: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "G_scaled")]
    pub g_scaled: f64,
    #[serde(rename = "delta_G")]
    pub delta_g: f64,
    pub num_params: usize,
}

/// Compares θ with its α-scaled twin: logits on seeded probe inputs drawn
/// uniformly from the padded data box, Hessian trace, and G.
pub fn reparam_check(exp: &Experiment, seed: u64, theta: &ParamVector) -> Result<ReparamCheck> {
    let a = &exp.config.analysis;
    let scaled = alpha_scale(theta, a.reparam_alpha, &exp.spec)?;
    let bounds = BoundsBox::around(&exp.data, a.grid_margin);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0f64;
    let mut x = vec![0.0; exp.spec.input_dim()];
    for _ in 0..a.reparam_probes {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = rng.random_range(bounds.lower[j]..=bounds.upper[j]);
        }
        let l0 = forward(&exp.spec, theta, &x)?;
        let l1 = forward(&exp.spec, &scaled, &x)?;
        for (p, q) in l0.iter().zip(&l1) {
            max_dev = max_dev.max((p - q).abs());
        }
    }
    let base = exp.analyze(theta)?.report;
    let twin = exp.analyze(&scaled)?.report;
    Ok(ReparamCheck {
        seed,
        alpha: a.reparam_alpha,
        probes: a.reparam_probes,
        max_logit_deviation: max_dev,
        trace: base.trace,
        trace_scaled: twin.trace,
        delta_trace: twin.trace - base.trace,
        g: base.g,
        g_scaled: twin.g,
        delta_g: twin.g - base.g,
        num_params: base.num_params,
    })
}

pub fn cmd_reparam(exp: &Experiment, out: &Path) -> Result<Vec<ReparamCheck>> {
    let mut checks = Vec::new();
    for &seed in &exp.config.training.seeds {
        let run = exp.train_run(exp.config.training.scheme, seed, &[])?;
        checks.push(reparam_check(exp, seed, &run.theta)?);
    }
    let mut csv = String::from("seed,alpha,max_logit_deviation,delta_trace,delta_G\n");
    for c in &checks {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            c.seed,
            io::fmt_f64(c.alpha),
            io::fmt_f64(c.max_logit_deviation),
            io::fmt_f64(c.delta_trace),
            io::fmt_f64(c.delta_g)
        );
    }
    io::write_csv(out.join("reparam.csv"), &csv)?;
    io::write_json(out.join("reparam.json"), &checks)?;
    Ok(checks)
}
