//! The experiment drivers behind the `invert` command line.

mod circle;
mod config;
mod mnist;

use std::path::{Path, PathBuf};

pub use circle::{circle_layer, cmd_circle, run_circle, CircleParams, CircleResult};
pub use config::{parse_grid, ExperimentConfig, KNOWN_KEYS};
pub use mnist::{
    cmd_mnist_cnn, cmd_mnist_perceptron, cmd_noise_sweep, cmd_train, invert_digits, load_model, noise_sweep,
    save_model, sweep_failures, train_model, Arch, DigitInversion, InversionMethod, InvertParams, Model, SweepParams,
    SweepRow,
};

use crate::error::{Error, Result};
use crate::solvers::{loglog_slope, rate_experiment, rate_problem, write_rate_csv, RateRow};

/// What a command produced and which of its checks failed.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub artifacts: Vec<PathBuf>,
    /// Human-readable summary lines.
    pub summary: Vec<String>,
    /// One entry per failed in-command assertion.
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }
}

/// Runs the experiment named in `cfg`.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    match cfg.experiment() {
        Some("circle") => cmd_circle(cfg),
        Some("mnist-perceptron") => cmd_mnist_perceptron(cfg),
        Some("mnist-cnn") => cmd_mnist_cnn(cfg),
        Some("noise-sweep") => cmd_noise_sweep(cfg),
        Some("rate") => cmd_rate(cfg),
        Some("train") => cmd_train(cfg),
        Some(other) => Err(Error::param(format!("unknown experiment {other:?}"))),
        None => Err(Error::param("no experiment given")),
    }
}

pub(crate) fn prepare_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Convergence-rate table for every `c`; fails if any row exceeds its bound.
pub fn cmd_rate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let out_dir = cfg.out_dir("rate");
    prepare_out_dir(&out_dir)?;
    let seed = cfg.seed()?;
    let cs = cfg.grid_or("c", "1.0")?;
    let deltas = cfg.grid_or("deltas", "1e-1:1e-4:geometric:7")?;
    let problem = rate_problem(cfg.usize_or("rate_m", 8)?, cfg.usize_or("rate_n", 32)?, seed)?;
    let mut outcome = Outcome::default();
    for &c in &cs {
        let rows: Vec<RateRow> = rate_experiment(&problem.layer, &problem.v_dag, c, &deltas, seed)?;
        let path = if cs.len() == 1 { out_dir.join("rate.csv") } else { out_dir.join(format!("rate_c{c}.csv")) };
        write_rate_csv(&rows, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        outcome.artifacts.push(path);
        for r in &rows {
            outcome.check(
                r.satisfied(),
                format!("c={c} delta={:e}: d_sym {:e} exceeds bound {:e}", r.delta, r.d_sym, r.bound),
            );
        }
        let slope = if rows.len() >= 2 { loglog_slope(&rows) } else { f64::NAN };
        outcome.summary.push(format!("c={c}: {} rows, log-log slope {slope:.3}", rows.len()));
    }
    Ok(outcome)
}
