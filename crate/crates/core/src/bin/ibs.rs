use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ibs_core::harness::{
    cmd_attribute, cmd_boundary, cmd_generate, cmd_train, cmd_validate, run_pipeline, test_indices,
    BaselineMode, ExperimentConfig, Outcome, Preset, OUTPUT_ROOT_ENV,
};
use ibs_core::{Dataset, Error, Result, TrainedModel};

#[derive(Parser)]
#[command(name = "ibs", version, about = "Decision-boundary baselines for Integrated Gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[arg(long, default_value = "custom")]
        preset: String,
        #[command(flatten)]
        common: Common,
    },
    /// Train the classifier on a dataset file.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample the decision boundary with the informed baseline search.
    Boundary {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Number of searches.
        #[arg(short, long)]
        n: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        max_steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Integrated Gradients for selected samples.
    Attribute {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        boundary: PathBuf,
        /// Dataset row ids; defaults to the first five held-out rows.
        #[arg(long, value_delimiter = ',')]
        ids: Vec<usize>,
        /// optimal | random-db | zero | noise | custom-point
        #[arg(long, default_value = "optimal")]
        mode: String,
        /// Baseline coordinates for custom-point mode.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        baseline: Option<Vec<f64>>,
        /// Integration steps.
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Check boundary samples against the oracles.
    Validate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        boundary: PathBuf,
        /// Dataset used for training; enables grid bounds and manifold checks.
        #[arg(long)]
        data: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the whole pipeline and write report.json.
    Report {
        #[arg(long, default_value = "custom")]
        preset: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); absent fields come from the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $IBS_OUTPUT_ROOT/<preset>].
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self, preset: Preset) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::preset(preset),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Preset named in a dataset file's header, `custom` when unrecognised.
fn dataset_preset(path: &Path) -> Result<Preset> {
    let file = std::fs::File::open(path)?;
    let mut first = String::new();
    std::io::BufReader::new(file).read_line(&mut first)?;
    let name = first
        .strip_prefix('#')
        .and_then(|h| serde_json::from_str::<serde_json::Value>(h.trim()).ok())
        .and_then(|v| v.get("name").and_then(|n| n.as_str()).map(str::to_string));
    Ok(name.and_then(|n| n.parse().ok()).unwrap_or(Preset::Custom))
}

fn print(outcome: &Outcome) {
    println!("{}", outcome.summary);
    for f in &outcome.files {
        println!("  wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { preset, common } => {
            let cfg = common.resolve(preset.parse()?)?;
            print(&cmd_generate(&cfg, &cfg.output_dir)?);
        }
        Command::Train { data, epochs, learning_rate, common } => {
            let mut cfg = common.resolve(dataset_preset(&data)?)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = lr;
            }
            print(&cmd_train(&data, &cfg, &cfg.output_dir)?.0);
        }
        Command::Boundary { model, data, n, epsilon, gamma, max_steps, common } => {
            let mut cfg = common.resolve(dataset_preset(&data)?)?;
            if let Some(e) = epsilon {
                cfg.search.epsilon = e;
            }
            if let Some(g) = gamma {
                cfg.search.gamma = g;
            }
            if let Some(m) = max_steps {
                cfg.search.max_steps = m;
            }
            let n = n.unwrap_or(cfg.boundary_samples);
            print(&cmd_boundary(&model, &data, n, &cfg, &cfg.output_dir)?.0);
        }
        Command::Attribute { model, data, boundary, ids, mode, baseline, steps, common } => {
            let mut cfg = common.resolve(dataset_preset(&data)?)?;
            if let Some(s) = steps {
                cfg.attribution_steps = s;
            }
            let mode = BaselineMode::parse(&mode, baseline)?;
            let ids = if ids.is_empty() {
                let m = TrainedModel::load(&model)?;
                let ds = Dataset::read_csv(&data)?;
                let mut t = test_indices(&m, &ds, cfg.train.split_fraction);
                t.truncate(5);
                t
            } else {
                ids
            };
            print(&cmd_attribute(&model, &data, &boundary, &ids, &mode, &cfg, &cfg.output_dir)?.0);
        }
        Command::Validate { model, boundary, data, common } => {
            let preset = match &data {
                Some(d) => dataset_preset(d)?,
                None => Preset::Custom,
            };
            let cfg = common.resolve(preset)?;
            let (outcome, report) = cmd_validate(&model, &boundary, data.as_deref(), &cfg, &cfg.output_dir)?;
            for c in &report.checks {
                println!("{:<20} {:<8} {}", c.name, format!("{:?}", c.status).to_lowercase(), c.detail);
            }
            print(&outcome);
            return Ok(report.passed());
        }
        Command::Report { preset, common } => {
            let cfg = common.resolve(preset.parse()?)?;
            let report = run_pipeline(&cfg)?;
            println!(
                "{}: accuracy {:.4}, convergence {:.4}, manifold closeness {:.4}",
                report.preset,
                report.metrics.accuracy,
                report.boundary.convergence_rate,
                report.boundary.manifold_fraction
            );
            for a in &report.attributions {
                println!(
                    "  {} baselines: sign-consistent {:.3}, mixed signs {:.3}, max residual {:.3e}",
                    a.mode, a.sign_consistency_rate, a.mixed_sign_rate, a.max_completeness_residual
                );
            }
            for c in &report.validation.checks {
                println!("  {:<20} {}", c.name, format!("{:?}", c.status).to_lowercase());
            }
            println!("wrote {} files under {}", report.files.len(), cfg.output_dir.display());
            return Ok(report.validation.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Io(_)) {
                eprintln!("(output root can be set with {OUTPUT_ROOT_ENV})");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
