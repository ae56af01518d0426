//! Command-line front end. All behaviour lives in `deglif::experiment`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deglif::experiment::{self, ExperimentConfig, Overrides};
use deglif::noise::NoiseModel;

#[derive(Parser)]
#[command(name = "deglif", version, about = "Influence-based label denoising for graph node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated SBM dataset to the output directory.
    GenSbm(Common),
    /// Corrupt training labels and write one dataset plus ledger per seed.
    Inject(Common),
    /// Run the denoising pipeline per seed and aggregate test accuracy.
    Run(Common),
    /// Compare influence estimates against leave-one-out retraining.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Run even when the graph exceeds the oracle's size limit.
        #[arg(long)]
        force: bool,
    },
    /// Apply the pipeline repeatedly and track the noise fraction.
    Successive(Common),
    /// Evaluate a threshold grid and select by validation accuracy.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the sum detector with this threshold.
    #[arg(long)]
    mu: Option<f64>,
    /// Use the majority-vote detector with this fraction.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    noise_model: Option<NoiseModel>,
}

impl Common {
    fn load(&self) -> deglif::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            mu: self.mu,
            lambda: self.lambda,
            noise_level: self.noise_level,
            noise_model: self.noise_model,
        })?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> deglif::Result<String> {
    experiment::configure_threads()?;
    let done = |m: experiment::RunManifest| {
        format!("{} artifacts written, config {}", m.artifacts.len(), &m.config_hash[..12])
    };
    match cli.command {
        Command::GenSbm(c) => experiment::cmd_gen_sbm(&c.load()?).map(done),
        Command::Inject(c) => experiment::cmd_inject(&c.load()?).map(done),
        Command::Run(c) => {
            let out = experiment::cmd_run(&c.load()?)?;
            let mut text = String::new();
            for r in &out.aggregate {
                text.push_str(&format!(
                    "{} {}: test accuracy {:.4} ± {:.4} over {} seeds ({} failed)\n",
                    r.method, r.threshold, r.mean_test_acc, r.std_test_acc, r.n_seeds, r.n_failed
                ));
            }
            Ok(text + &done(out.manifest))
        }
        Command::Oracle { common, force } => experiment::cmd_oracle(&common.load()?, force).map(done),
        Command::Successive(c) => {
            let (manifest, series) = experiment::cmd_successive(&c.load()?)?;
            let mut text = String::new();
            for r in &series {
                text.push_str(&format!(
                    "count {}: noise fraction {:.4}, test accuracy {:.4}\n",
                    r.count, r.noise_fraction, r.test_acc
                ));
            }
            Ok(text + &done(manifest))
        }
        Command::Sweep(c) => {
            let (out, sel) = experiment::cmd_sweep(&c.load()?)?;
            Ok(format!("selected {} = {}\n{}", sel.method, sel.selected, done(out.manifest)))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
