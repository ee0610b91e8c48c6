use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lifted_bregman::experiments::{self, ExperimentConfig};

/// Regularised inversion of ReLU networks: reproduction experiments.
#[derive(Parser, Debug)]
#[command(name = "invert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Disk phantom through a random ReLU perceptron: Landweber vs TV.
    Circle(Common),
    /// Dense MNIST autoencoder, single-layer TV inversion of its codes.
    MnistPerceptron(Common),
    /// Convolutional MNIST autoencoder, coordinate-descent TV inversion.
    MnistCnn(Common),
    /// PSNR of inversion and decoder over a grid of noise levels.
    NoiseSweep(Common),
    /// Error-bound table for the ReLU convergence-rate example.
    Rate(RateArgs),
    /// Train an autoencoder and save it.
    Train(TrainArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Model directory; loaded if present, else the trained model goes here.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct RateArgs {
    #[command(flatten)]
    common: Common,
    /// Source-condition constant(s): a number, a list or a grid.
    #[arg(long)]
    c: Option<String>,
    /// Noise levels, e.g. `1e-1:1e-4:geometric:7`.
    #[arg(long)]
    deltas: Option<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// `dense` or `conv`.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

fn build_config(name: &str, c: &Common, extra: &[(&str, Option<String>)]) -> lifted_bregman::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.set("experiment", name)?;
    let flags = [
        ("alpha", c.alpha.map(|v| v.to_string())),
        ("noise_std", c.noise_std.map(|v| v.to_string())),
        ("seed", c.seed.map(|v| v.to_string())),
        ("max_iters", c.max_iters.map(|v| v.to_string())),
        ("out_dir", c.out_dir.as_ref().map(|p| p.display().to_string())),
        ("model", c.model.as_ref().map(|p| p.display().to_string())),
    ];
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| lifted_bregman::Error::Parameter(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in flags.iter().chain(extra) {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.command {
        Command::Circle(c) => build_config("circle", c, &[]),
        Command::MnistPerceptron(c) => build_config("mnist-perceptron", c, &[]),
        Command::MnistCnn(c) => build_config("mnist-cnn", c, &[]),
        Command::NoiseSweep(c) => build_config("noise-sweep", c, &[]),
        Command::Rate(r) => build_config("rate", &r.common, &[("c", r.c.clone()), ("deltas", r.deltas.clone())]),
        Command::Train(t) => build_config(
            "train",
            &t.common,
            &[
                ("arch", t.arch.clone()),
                ("epochs", t.epochs.map(|v| v.to_string())),
                ("learning_rate", t.learning_rate.map(|v| v.to_string())),
            ],
        ),
    };
    let outcome = match cfg.and_then(|cfg| experiments::run(&cfg)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for line in &outcome.summary {
        println!("{line}");
    }
    for path in &outcome.artifacts {
        println!("wrote {}", path.display());
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        for f in &outcome.failures {
            eprintln!("FAILED: {f}");
        }
        ExitCode::FAILURE
    }
}
