use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hessbound::commands::{self, Experiment};
use hessbound::core::dataset::SyntheticKind;
use hessbound::core::training::InitScheme;
use hessbound::error::{Error, EXIT_CONFIG};

#[derive(Parser)]
#[command(
    name = "hessbound",
    version,
    about = "Hessian eigenvector analysis of small classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic 2-D dataset as CSV.
    GenData {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 100)]
        n_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Train from an initialization scheme and write θ* and the report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides training.scheme.
        #[arg(long)]
        scheme: Option<InitScheme>,
        /// Overrides training.seeds.
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        checkpoint_at: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectrum, alignments, grid fields and G for a trained θ.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        /// Also analyze the Hessian restricted to this class.
        #[arg(long)]
        per_class: Option<usize>,
        /// Also write the Hessian and gradient covariance matrices as CSV.
        #[arg(long)]
        matrices: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Margin estimate from the top eigenvector.
    Margin {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean ± std of the measures per scheme over the configured seeds.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Check the α-scale reparameterization instead.
        #[arg(long)]
        reparam_check: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(exp: &Experiment, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| exp.config.output.dir.clone())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenData {
            kind,
            n_per_class,
            seed,
            out,
        } => {
            let kind: SyntheticKind = kind.parse().map_err(|e| Error::Config(format!("{e}")))?;
            let path = commands::gen_data(kind, n_per_class, seed, &out)?;
            println!("{}", path.display());
        }
        Command::Train {
            config,
            scheme,
            seed,
            checkpoint_at,
            out,
        } => {
            let exp = Experiment::load(&config)?;
            let scheme = scheme.unwrap_or(exp.config.training.scheme);
            let seeds = if seed.is_empty() {
                exp.config.training.seeds.clone()
            } else {
                seed
            };
            let checkpoints = if checkpoint_at.is_empty() {
                exp.config.training.checkpoint_at.clone()
            } else {
                checkpoint_at
            };
            let out = out_dir(&exp, out);
            for path in commands::cmd_train(&exp, scheme, &seeds, &checkpoints, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Analyze {
            config,
            theta,
            per_class,
            matrices,
            out,
        } => {
            let exp = Experiment::load(&config)?;
            let out = out_dir(&exp, out);
            let r = commands::cmd_analyze(&exp, &theta, per_class, matrices, &out)?;
            println!(
                "G {:.6} (epsilon {:.6}) trace {:.6e} lambda_max {:.6e} norm {:.4} outliers {}",
                r.g, r.epsilon, r.trace, r.lambda_max, r.param_norm, r.outlier_count
            );
        }
        Command::Margin { config, theta, out } => {
            let exp = Experiment::load(&config)?;
            let out = out_dir(&exp, out);
            let m = commands::cmd_margin(&exp, &theta, &out)?;
            let flag = if m.low_confidence {
                " (low confidence)"
            } else {
                ""
            };
            println!(
                "margin {:.6} alignment {:.4}{flag}",
                m.margin, m.achieved_alignment
            );
        }
        Command::Compare {
            config,
            reparam_check,
            out,
        } => {
            let exp = Experiment::load(&config)?;
            let out = out_dir(&exp, out);
            if reparam_check {
                for c in commands::cmd_reparam(&exp, &out)? {
                    println!(
                        "seed {} max logit deviation {:.3e} delta trace {:.6e} delta G {:.6}",
                        c.seed, c.max_logit_deviation, c.delta_trace, c.delta_g
                    );
                }
            } else {
                commands::cmd_compare(&exp, &out)?;
                print!(
                    "{}",
                    std::fs::read_to_string(Path::new(&out).join("comparison.csv"))
                        .unwrap_or_default()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
