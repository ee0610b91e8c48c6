use super::{check_target, data_gradient, layer_data_loss, SolveReport, StopReason, Stopwatch};
use crate::error::{Error, Result};
use crate::network::Layer;
use crate::operator::DEFAULT_POWER_ITERS;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct LandweberConfig {
    /// Noise level `delta` of the discrepancy principle.
    pub delta: f64,
    /// Discrepancy factor; iteration stops at `|sigma(Wx + b) - y| <= tau_disc delta`.
    pub tau_disc: f64,
    pub step: f64,
    pub max_iters: usize,
}

impl LandweberConfig {
    /// `step = 1.99/|W|^2`, `tau_disc = 1`.
    pub fn default_for(layer: &Layer, delta: f64) -> Result<Self> {
        let lip = layer.op.operator_norm_sq(DEFAULT_POWER_ITERS)?;
        Ok(Self { delta, tau_disc: 1.0, step: 1.99 / lip, max_iters: super::DEFAULT_MAX_ITERS })
    }
}

/// Gradient descent `x+ = x - step W^T (sigma(Wx + b) - y)` from `x = 0`,
/// stopped by the discrepancy principle. The residual history records
/// `|sigma(Wx + b) - y|` after each step.
pub fn landweber_invert(layer: &Layer, y: &Tensor, cfg: &LandweberConfig) -> Result<(Tensor, SolveReport)> {
    check_target(layer, y)?;
    if !(cfg.delta >= 0.0 && cfg.tau_disc >= 0.0) {
        return Err(Error::param("delta and tau_disc must be non-negative"));
    }
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(Error::param(format!("step must be positive, got {}", cfg.step)));
    }
    let lip = layer.op.operator_norm_sq(DEFAULT_POWER_ITERS)?;
    // Power iteration approaches |W|^2 from below; allow for that.
    if cfg.step * lip > 1.99 * (1.0 + 1e-6) {
        return Err(Error::param(format!("step {} exceeds 1.99/|W|^2 = {}", cfg.step, 1.99 / lip)));
    }
    let start = Stopwatch::start();
    let threshold = cfg.tau_disc * cfg.delta;
    let mut x = Tensor::zeros(&layer.op.input_shape());
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxIters;
    let mut residual = residual_norm(layer, y, &x)?;
    if residual <= threshold {
        stop_reason = StopReason::Discrepancy;
    } else {
        for k in 0..cfg.max_iters {
            let grad = data_gradient(layer, y, &x)?;
            x.axpy(-cfg.step, &grad);
            residual = residual_norm(layer, y, &x)?;
            if !residual.is_finite() || !x.is_finite() {
                return Err(Error::Divergence { iteration: k + 1 });
            }
            history.push(residual);
            if residual <= threshold {
                stop_reason = StopReason::Discrepancy;
                break;
            }
        }
    }
    let report = SolveReport {
        iterations: history.len(),
        final_objective: layer_data_loss(layer, y, &x)?,
        residual_history: history,
        stop_reason,
        elapsed_seconds: start.seconds(),
    };
    Ok((x, report))
}

fn residual_norm(layer: &Layer, y: &Tensor, x: &Tensor) -> Result<f64> {
    let out = layer.forward(x)?;
    Ok(out.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}
