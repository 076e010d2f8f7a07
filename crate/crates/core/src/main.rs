use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use zlin::harness::{run, Command, ExperimentConfig, Overrides};
use zlin::Precision;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    /// Load the dataset, fit preprocessing and write a summary plus the whitener.
    PrepareData,
    /// Greedy layer-wise autoencoder pretraining followed by a conjugate-gradient head fit.
    Pretrain,
    /// Supervised SGD training; writes metrics.csv and checkpoints/final.zlin.
    Train,
    /// Loss and accuracy of a checkpoint on both splits.
    Eval,
    /// Sparsity, update density, activation histograms, CLT and spike-mass probes.
    Probe,
    /// Finite-difference gradient check of a fresh f64 network.
    Gradcheck,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::PrepareData => Command::PrepareData,
            Cmd::Pretrain => Command::Pretrain,
            Cmd::Train => Command::Train,
            Cmd::Eval => Command::Eval,
            Cmd::Probe => Command::Probe,
            Cmd::Gradcheck => Command::Gradcheck,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "zlin",
    version,
    about = "Linear bottleneck and zero-bias ReLU networks"
)]
struct Cli {
    command: Cmd,
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Floating-point precision: f32 or f64.
    #[arg(long, value_parser = parse_precision)]
    precision: Option<Precision>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    workers: Option<usize>,
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut cfg = match ExperimentConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    cfg.apply(&Overrides {
        seed: cli.seed,
        out: cli.out,
        precision: cli.precision,
        workers: cli.workers,
    });
    #[cfg(feature = "parallel")]
    if cfg.workers > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let mut log = |line: &str| eprintln!("{line}");
    match run(cli.command.into(), &cfg, &mut log) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
