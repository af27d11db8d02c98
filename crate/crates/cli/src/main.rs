use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pvsentry::detect::DetectorKind;
use pvsentry::fusion::FusionMode;
use pvsentry::suite::SuiteConfig;
use pvsentry::workflow;
use pvsentry::{Error, Result};

#[derive(Parser)]
#[command(name = "pvsentry", version, about = "Simulate, attack and monitor rooftop PV on a distribution feeder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a feeder from a scenario JSON.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Inject attacks into a simulated run.
    Attack {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Override the penetration of every attack, in [0, 1].
        #[arg(long)]
        penetration: Option<f64>,
    },
    /// Train a detector suite on the leading days of a normal run.
    Train {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Days used for training; default all but the last.
        #[arg(long)]
        train_days: Option<usize>,
    },
    /// Score a run with a trained suite.
    Detect {
        #[arg(short, long)]
        model: PathBuf,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Grade detections against the labels of the scored run.
    Evaluate {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Time training and scoring of every detector on one run.
    Bench {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train_days: Option<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(short, long, default_value = "pca-ch")]
    detector: DetectorKind,
    #[arg(long)]
    seed: u64,
    /// JSON file with further suite settings; flags override it.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pca_dims: Option<usize>,
    /// Sequence window length in minutes.
    #[arg(long)]
    window_min: Option<f64>,
    #[arg(long)]
    fusion: Option<FusionMode>,
    /// Linear fusion weights `w1,w2,w3`; implies linear fusion.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
}

impl ModelArgs {
    fn suite_config(&self, step: i64) -> Result<SuiteConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => SuiteConfig::default(),
        };
        cfg.detector = self.detector;
        cfg.seed = self.seed;
        if let Some(k) = self.pca_dims {
            cfg.pca_dims = k;
        }
        let minutes = self.window_min.unwrap_or(15.0);
        if !(minutes > 0.0) {
            return Err(Error::Config(format!("window of {minutes} minutes")));
        }
        cfg.window_len = ((minutes * 60.0 / step as f64).round() as usize).max(1);
        if let Some(f) = self.fusion {
            cfg.fusion = f;
        }
        if let Some(w) = &self.weights {
            if w.len() != 3 {
                return Err(Error::Config(format!("--weights takes three values, got {}", w.len())));
            }
            if matches!(self.fusion, Some(FusionMode::MostAnomalous)) {
                return Err(Error::Config("--weights apply to linear fusion only".into()));
            }
            cfg.fusion = FusionMode::Linear { weights: [w[0], w[1], w[2]] };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            workflow::run_simulate(&config, &out)?;
            println!("simulated run written to {}", out.display());
        }
        Command::Attack { input, config, out, penetration } => {
            workflow::run_attack(&input, &config, &out, penetration)?;
            println!("attacked run written to {}", out.display());
        }
        Command::Train { input, out, model, train_days } => {
            let step = workflow::load_run(&input)?.scenario.step;
            let cfg = model.suite_config(step)?;
            workflow::run_train(&input, &cfg, train_days, &out)?;
            println!("{} model written to {}", cfg.detector, out.display());
        }
        Command::Detect { model, input, out } => {
            workflow::run_detect(&model, &input, &out)?;
            println!("scores written to {}", out.display());
        }
        Command::Evaluate { input, out } => {
            let eval = workflow::run_evaluate(&input, &out)?;
            for r in &eval.rows {
                println!(
                    "{:<20} precision {:.4}  recall {:.4}  f1 {:.4}  accuracy {:.4}",
                    r.row.to_string(),
                    r.metrics.precision,
                    r.metrics.recall,
                    r.metrics.f1,
                    r.metrics.accuracy
                );
            }
        }
        Command::Bench { input, out, model, train_days, reps } => {
            let step = workflow::load_run(&input)?.scenario.step;
            let cfg = model.suite_config(step)?;
            for r in workflow::run_bench(&input, &cfg, train_days, reps, &out)? {
                println!("{:<12} train {:>10.2} µs/sample  test {:>10.2} µs/sample", r.detector, r.train_us_per_sample, r.test_us_per_sample);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(workflow::exit_code(&e) as u8)
        }
    }
}
