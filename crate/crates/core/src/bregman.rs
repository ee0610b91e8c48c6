//! Lifted Bregman losses and the divergences used in the error estimates.
//!
//! For a penalty `Psi` with activation `sigma = prox_Psi`,
//!
//! ```text
//! B(x, z) = 1/2 |x|^2 + Psi(x) + (1/2 |.|^2 + Psi)^*(z) - <x, z>
//! ```
//!
//! is convex and differentiable in `z` with gradient `sigma(z) - x`, and
//! vanishes exactly when `x = sigma(z)`.

use crate::error::{Error, Result};
use crate::prox::ProxPenalty;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BregmanLoss {
    pub penalty: ProxPenalty,
}

impl BregmanLoss {
    pub fn new(penalty: ProxPenalty) -> Self {
        Self { penalty }
    }

    /// `B(x, z)`; `+inf` exactly when `Psi(x) = +inf`.
    pub fn loss(&self, x: &Tensor, z: &Tensor) -> Result<f64> {
        x.same_shape(z)?;
        Ok(loss_slices(&self.penalty, x.data(), z.data()))
    }

    /// Gradient in the second argument, `sigma(z) - x`.
    pub fn grad_z(&self, x: &Tensor, z: &Tensor) -> Result<Tensor> {
        x.same_shape(z)?;
        Ok(z.zip_map(x, |zi, xi| self.penalty.prox_scalar(zi) - xi))
    }
}

/// Loss evaluated through the algebraically equivalent split
/// `1/2 |x - s|^2 + [Psi(x) - Psi(s) - <x - s, z - s>]` with `s = sigma(z)`.
/// The bracket is the Bregman distance of `Psi` (since `z - s` is a
/// subgradient at `s`), so the lower bound `B >= 1/2 |sigma(z) - x|^2` holds
/// without cancellation error.
pub(crate) fn loss_slices(penalty: &ProxPenalty, x: &[f64], z: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&xi, &zi) in x.iter().zip(z) {
        let psi_x = penalty.eval_scalar(xi);
        if psi_x.is_infinite() {
            return f64::INFINITY;
        }
        let s = penalty.prox_scalar(zi);
        let d = xi - s;
        let bracket = psi_x - penalty.eval_scalar(s) - d * (zi - s);
        total += 0.5 * d * d + bracket.max(0.0);
    }
    total
}

/// Direct transcription of the defining formula; used to cross-check
/// [`loss_slices`].
pub fn loss_direct(penalty: &ProxPenalty, x: &Tensor, z: &Tensor) -> f64 {
    let psi = penalty.eval(x);
    if psi.is_infinite() {
        return psi;
    }
    0.5 * x.norm_sq() + psi + penalty.conjugate_shifted(z) - x.dot(z)
}

/// Burbea-Rao divergence of `Psi`: `1/2 (Psi(x) + Psi(y) - 2 Psi((x + y)/2))`.
pub fn burbea_rao(penalty: &ProxPenalty, x: &Tensor, y: &Tensor) -> Result<f64> {
    x.same_shape(y)?;
    let (px, py) = (penalty.eval(x), penalty.eval(y));
    if px.is_infinite() || py.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mid = x.zip_map(y, |a, b| 0.5 * (a + b));
    let pm = penalty.eval(&mid);
    Ok((0.5 * (px + py - 2.0 * pm)).max(0.0))
}

/// Symmetric Bregman distance `<x - y, q_x - q_y>` given subgradients
/// `q_x in dR(x)` and `q_y in dR(y)`.
pub fn symmetric_bregman(q_x: &Tensor, q_y: &Tensor, x: &Tensor, y: &Tensor) -> Result<f64> {
    x.same_shape(y)?;
    q_x.same_shape(x)?;
    q_y.same_shape(y)?;
    let d: f64 = x
        .data()
        .iter()
        .zip(y.data())
        .zip(q_x.data().iter().zip(q_y.data()))
        .map(|((a, b), (qa, qb))| (a - b) * (qa - qb))
        .sum();
    if d < -1e-10 {
        return Err(Error::SubgradientViolation(d));
    }
    Ok(d.max(0.0))
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::param(format!("c = {c} must lie in (0, 1]")));
    }
    Ok(())
}

/// Right-hand side of the perceptron error estimate:
/// `(1 + c) delta^2 + alpha^2 / c |v|^2 + 2c J(y + alpha/c v, y - alpha/c v)`.
pub fn error_bound_rhs(
    penalty: &ProxPenalty,
    delta: f64,
    alpha: f64,
    c: f64,
    v_dag: &Tensor,
    y_delta: &Tensor,
) -> Result<f64> {
    check_c(c)?;
    if !(alpha > 0.0) {
        return Err(Error::param(format!("alpha = {alpha} must be positive")));
    }
    if !(delta >= 0.0) {
        return Err(Error::param(format!("delta = {delta} must be non-negative")));
    }
    v_dag.same_shape(y_delta)?;
    let s = alpha / c;
    let plus = y_delta.zip_map(v_dag, |y, v| y + s * v);
    let minus = y_delta.zip_map(v_dag, |y, v| y - s * v);
    let j = burbea_rao(penalty, &plus, &minus)?;
    Ok((1.0 + c) * delta * delta + alpha * alpha / c * v_dag.norm_sq() + 2.0 * c * j)
}

/// `alpha(delta) = sqrt(c (1 + c)) delta / |v|`.
pub fn alpha_schedule(delta: f64, c: f64, v_dag_norm: f64) -> Result<f64> {
    check_c(c)?;
    if !(v_dag_norm > 0.0) {
        return Err(Error::param("source element must have positive norm"));
    }
    if !(delta >= 0.0) {
        return Err(Error::param(format!("delta = {delta} must be non-negative")));
    }
    Ok((c * (1.0 + c)).sqrt() * delta / v_dag_norm)
}
