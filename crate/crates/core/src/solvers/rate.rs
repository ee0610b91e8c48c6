use std::io::Write;

use super::{pdhg_invert_perceptron, PdhgConfig, Regulariser};
use crate::bregman::{alpha_schedule, BregmanLoss};
use crate::error::{Error, Result};
use crate::network::Layer;
use crate::operator::LinearOperator;
use crate::prox::ProxPenalty;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// A ReLU perceptron with a source element `v_dag`, so that
/// `x_dag = W^T v_dag` satisfies the source condition for `R = 1/2 |.|^2`.
#[derive(Clone, Debug)]
pub struct RateProblem {
    pub layer: Layer,
    pub v_dag: Tensor,
    pub x_dag: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateRow {
    pub delta: f64,
    pub alpha: f64,
    pub d_sym: f64,
    pub bound: f64,
}

impl RateRow {
    pub fn satisfied(&self) -> bool {
        self.d_sym <= self.bound
    }
}

/// Seeded `m x n` instance: Gaussian `W` with variance `1/n`, Gaussian
/// `v_dag`, and a bias chosen so the clean pre-activation `W x_dag + b` is
/// uniform in `[0.5, 1.5]`.
pub fn rate_problem(m: usize, n: usize, seed: u64) -> Result<RateProblem> {
    if m == 0 || n == 0 {
        return Err(Error::param("rate problem dimensions must be positive"));
    }
    let mut rng = SeededRng::new(seed);
    let weight = Tensor::new(vec![m, n], rng.normal_vec(m * n, 1.0 / (n as f64).sqrt()))?;
    let v_dag = Tensor::new(vec![m], rng.normal_vec(m, 1.0))?;
    let linear = LinearOperator::dense(weight, Tensor::zeros(&[m]))?;
    let x_dag = linear.adjoint_apply(&v_dag)?;
    let wx = linear.apply_linear(&x_dag)?;
    let bias = Tensor::new(vec![m], wx.data().iter().map(|v| rng.uniform_in(0.5, 1.5) - v).collect())?;
    let LinearOperator::DenseAffine { weight, .. } = linear else { unreachable!() };
    let layer = Layer::new(LinearOperator::dense(weight, bias)?, ProxPenalty::NonNegIndicator);
    Ok(RateProblem { layer, v_dag, x_dag })
}

/// For each `delta > 0`: perturbs the clean output along a seeded unit
/// direction so that `B_Psi(y_delta, z_dag) = delta^2`, sets
/// `alpha = sqrt(c (1 + c)) delta / |v_dag|`, solves the squared-norm
/// regularised problem to high accuracy and reports
/// `D_sym = |x_alpha - x_dag|^2` next to `2 sqrt((1 + c)/c) |v_dag| delta`.
///
/// The Burbea-Rao term of the error estimate vanishes only when
/// `alpha |v_i| / c <= y_delta_i` for every `i`; a violation, a negative
/// clean pre-activation or noisy data leaving the non-negative orthant is a
/// construction error. `delta = 0` entries are skipped.
pub fn rate_experiment(layer: &Layer, v_dag: &Tensor, c: f64, deltas: &[f64], seed: u64) -> Result<Vec<RateRow>> {
    if layer.penalty != ProxPenalty::NonNegIndicator {
        return Err(Error::Construction("the rate experiment needs a ReLU layer".into()));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::param(format!("c must lie in (0, 1], got {c}")));
    }
    let x_dag = layer.op.adjoint_apply(v_dag)?;
    let z_dag = layer.op.forward(&x_dag)?;
    if z_dag.min() < 0.0 {
        return Err(Error::Construction("clean pre-activation W x_dag + b has negative entries".into()));
    }
    let v_norm = v_dag.norm();
    let mut rng = SeededRng::new(seed);
    let dir = Tensor::new(z_dag.shape().to_vec(), rng.normal_vec(z_dag.len(), 1.0))?;
    let dir = dir.scale(1.0 / dir.norm());
    let loss = BregmanLoss::new(ProxPenalty::NonNegIndicator);
    let reg = Regulariser::SquaredL2;
    let lip = layer.op.operator_norm_sq(crate::operator::DEFAULT_POWER_ITERS)?;

    let mut rows = Vec::new();
    for &delta in deltas {
        if delta <= 0.0 {
            continue;
        }
        let y_delta = z_dag.map(|v| v.max(0.0)).add(&dir.scale(std::f64::consts::SQRT_2 * delta));
        if y_delta.min() < 0.0 {
            return Err(Error::Construction(format!("noisy data leaves the non-negative orthant at delta = {delta}")));
        }
        let realised = loss.loss(&y_delta, &z_dag)?;
        if realised > delta * delta * (1.0 + 1e-9) {
            return Err(Error::Construction(format!("noise exceeds delta^2 at delta = {delta}: {realised}")));
        }
        let alpha = alpha_schedule(delta, c, v_norm)?;
        let ok = v_dag.data().iter().zip(y_delta.data()).all(|(v, y)| alpha * v.abs() / c <= *y);
        if !ok {
            return Err(Error::Construction(format!("alpha |v_i| / c exceeds y_delta_i at delta = {delta}")));
        }
        let cfg = PdhgConfig::with_lipschitz(lip, &reg, alpha)?.with_max_iters(1_000_000).with_stop_tol(1e-13);
        let x0 = Tensor::zeros(&layer.op.input_shape());
        let sol = pdhg_invert_perceptron(layer, &y_delta, &reg, &cfg, &x0, None)?;
        let d_sym = sol.x.distance(&x_dag).powi(2);
        let bound = 2.0 * ((1.0 + c) / c).sqrt() * v_norm * delta;
        rows.push(RateRow { delta, alpha, d_sym, bound });
    }
    Ok(rows)
}

/// Least-squares slope of `log d_sym` against `log delta`.
pub fn loglog_slope(rows: &[RateRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.delta.ln(), r.d_sym.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

pub fn write_rate_csv<W: Write>(rows: &[RateRow], mut w: W) -> Result<()> {
    writeln!(w, "delta,alpha,d_sym,bound")?;
    for r in rows {
        writeln!(w, "{:e},{:e},{:e},{:e}", r.delta, r.alpha, r.d_sym, r.bound)?;
    }
    Ok(())
}
