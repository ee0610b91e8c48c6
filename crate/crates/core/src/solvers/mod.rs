//! Inversion algorithms: primal-dual hybrid gradient for a single layer,
//! coordinate descent on the lifted objective, sequential layer-wise
//! inversion, the Landweber baseline and the convergence-rate harness.

mod coordinate;
mod landweber;
mod pdhg;
mod rate;
mod sequential;

use std::io::Write;
use std::path::Path;

pub use coordinate::{coordinate_descent_invert, lifted_objective, CdConfig, CdSolution};
pub use landweber::{landweber_invert, LandweberConfig};
pub use pdhg::{pdhg_invert_perceptron, PdhgSolution};
pub use rate::{loglog_slope, rate_experiment, rate_problem, write_rate_csv, RateProblem, RateRow};
pub use sequential::{sequential_invert, SequentialConfig, SequentialSolution};

use crate::error::{Error, Result};
use crate::network::Layer;
use crate::operator::DEFAULT_POWER_ITERS;
use crate::prox::ProxPenalty;
use crate::tensor::Tensor;
use crate::tv;

pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_STOP_TOL: f64 = 1e-5;

/// The regulariser `R(Kx)` of a single-layer problem.
#[derive(Clone, Debug, PartialEq)]
pub enum Regulariser {
    /// Isotropic total variation, `K` the forward-difference gradient.
    Tv,
    /// `1/2 |x|^2`.
    SquaredL2,
    /// `|x|_1`.
    L1,
    /// A proximable penalty applied directly to `x` (used for the auxiliary
    /// variables of the sequential scheme).
    Penalty(ProxPenalty),
}

impl Regulariser {
    pub fn name(&self) -> &'static str {
        match self {
            Regulariser::Tv => "tv",
            Regulariser::SquaredL2 => "squared-l2",
            Regulariser::L1 => "l1",
            Regulariser::Penalty(_) => "penalty",
        }
    }

    /// Upper bound on `|K|^2`; zero when there is no dual variable.
    pub fn k_norm_sq(&self) -> f64 {
        match self {
            Regulariser::Tv => tv::GRAD_NORM_SQ_BOUND,
            Regulariser::SquaredL2 | Regulariser::L1 => 1.0,
            Regulariser::Penalty(_) => 0.0,
        }
    }

    /// `R(Kx)`.
    pub fn value(&self, x: &Tensor) -> Result<f64> {
        Ok(match self {
            Regulariser::Tv => tv::tv_norm(x)?,
            Regulariser::SquaredL2 => 0.5 * x.norm_sq(),
            Regulariser::L1 => x.data().iter().map(|v| v.abs()).sum(),
            Regulariser::Penalty(p) => p.eval(x),
        })
    }

    /// Length of the dual variable for a primal of the given shape.
    pub fn dual_len(&self, x_shape: &[usize]) -> Result<usize> {
        let n: usize = x_shape.iter().product();
        Ok(match self {
            Regulariser::Tv => {
                let t = Tensor::zeros(x_shape);
                let (h, w) = tv::image_dims(&t)?;
                2 * h * w
            }
            Regulariser::SquaredL2 | Regulariser::L1 => n,
            Regulariser::Penalty(_) => 0,
        })
    }

    pub fn dual_shape(&self, x_shape: &[usize]) -> Result<Vec<usize>> {
        Ok(match self {
            Regulariser::Tv => {
                let (h, w) = tv::image_dims(&Tensor::zeros(x_shape))?;
                vec![h, w, 2]
            }
            Regulariser::SquaredL2 | Regulariser::L1 => x_shape.to_vec(),
            Regulariser::Penalty(_) => vec![1],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdhgConfig {
    pub alpha: f64,
    pub tau_x: f64,
    pub tau_z: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
}

impl PdhgConfig {
    /// Step sizes for `layer` and `reg`: `tau_z = 1/(|K|^2 alpha)` (which is
    /// `1/(8 alpha)` for TV) and `tau_x = 1.99/(L + 2 tau_z alpha^2 |K|^2)`
    /// with `L = |W|^2`. This reduces to `1.99/|W|^2` as `alpha -> 0` and
    /// keeps `1/tau_x - tau_z alpha^2 |K|^2 > L/2`, the convergence condition
    /// for a smooth data term.
    pub fn default_for(layer: &Layer, reg: &Regulariser, alpha: f64) -> Result<Self> {
        let lip = layer.op.operator_norm_sq(DEFAULT_POWER_ITERS)?;
        Self::with_lipschitz(lip, reg, alpha)
    }

    pub fn with_lipschitz(lip: f64, reg: &Regulariser, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be finite and non-negative, got {alpha}")));
        }
        if !(lip > 0.0 && lip.is_finite()) {
            return Err(Error::param(format!("operator norm must be positive, got {lip}")));
        }
        let k2 = reg.k_norm_sq();
        let tau_z = if alpha > 0.0 && k2 > 0.0 { 1.0 / (k2 * alpha) } else { 1.0 };
        let coupling = if k2 > 0.0 { tau_z * alpha * alpha * k2 } else { 0.0 };
        let tau_x = 1.99 / (lip + 2.0 * coupling);
        Ok(Self { alpha, tau_x, tau_z, max_iters: DEFAULT_MAX_ITERS, stop_tol: DEFAULT_STOP_TOL })
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_stop_tol(mut self, stop_tol: f64) -> Self {
        self.stop_tol = stop_tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be finite and non-negative, got {}", self.alpha)));
        }
        if !(self.tau_x > 0.0 && self.tau_x.is_finite() && self.tau_z > 0.0 && self.tau_z.is_finite()) {
            return Err(Error::param("step sizes must be positive and finite"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::param("stop_tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Tolerance,
    MaxIters,
    Discrepancy,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::Tolerance => "tolerance",
            StopReason::MaxIters => "max_iters",
            StopReason::Discrepancy => "discrepancy",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_objective: f64,
    pub residual_history: Vec<f64>,
    pub stop_reason: StopReason,
    pub elapsed_seconds: f64,
}

impl SolveReport {
    /// CSV with header `iteration,residual`, one row per iteration, then a
    /// `#`-prefixed summary line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,residual")?;
        for (k, r) in self.residual_history.iter().enumerate() {
            writeln!(w, "{},{}", k + 1, r)?;
        }
        writeln!(
            w,
            "# iterations={} final_objective={} stop_reason={} elapsed_seconds={:.6}",
            self.iterations,
            self.final_objective,
            self.stop_reason.as_str(),
            self.elapsed_seconds
        )?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// `B_Psi(y, f(x))` for a single layer.
pub fn layer_data_loss(layer: &Layer, y: &Tensor, x: &Tensor) -> Result<f64> {
    let z = layer.op.forward(x)?;
    if z.len() != y.len() {
        return Err(Error::dims(z.shape(), y.shape()));
    }
    Ok(crate::bregman::loss_slices(&layer.penalty, y.data(), z.data()))
}

/// `B_Psi(y, f(x)) + alpha R(Kx)`.
pub fn single_layer_objective(layer: &Layer, y: &Tensor, reg: &Regulariser, alpha: f64, x: &Tensor) -> Result<f64> {
    let data = layer_data_loss(layer, y, x)?;
    if alpha == 0.0 {
        return Ok(data);
    }
    Ok(data + alpha * reg.value(x)?)
}

/// `W^T (sigma(Wx + b) - y)`, the gradient of the Bregman data term.
/// Wall-clock timer for reports. `std::time::Instant` is unavailable on
/// wasm32-unknown-unknown, where elapsed time reads as zero.
pub(crate) struct Stopwatch {
    #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        #[cfg(not(all(target_arch = "wasm32", target_os = "unknown")))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(all(target_arch = "wasm32", target_os = "unknown"))]
        0.0
    }
}

pub(crate) fn data_gradient(layer: &Layer, y: &Tensor, x: &Tensor) -> Result<Tensor> {
    let mut z = layer.op.forward(x)?;
    layer.penalty.prox_in_place(z.data_mut());
    for (zi, yi) in z.data_mut().iter_mut().zip(y.data()) {
        *zi -= yi;
    }
    layer.op.adjoint_apply(&z)
}

fn check_target(layer: &Layer, y: &Tensor) -> Result<()> {
    if y.len() != layer.op.output_len() {
        return Err(Error::dims(&layer.op.output_shape(), y.shape()));
    }
    Ok(())
}
