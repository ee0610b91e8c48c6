use super::{pdhg_invert_perceptron, PdhgConfig, Regulariser, SolveReport, StopReason, Stopwatch};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::operator::DEFAULT_POWER_ITERS;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SequentialConfig {
    /// `alphas[l]` regularises the input of layer `l` (0-based), so
    /// `alphas[0]` weights `reg_last` at the network input.
    pub alphas: Vec<f64>,
    pub max_iters: usize,
    pub stop_tol: f64,
}

#[derive(Clone, Debug)]
pub struct SequentialSolution {
    pub x0: Tensor,
    /// Estimates of `x_0, ..., x_{L-1}` in forward order.
    pub states: Vec<Tensor>,
    /// One report per stage, in solve order (last layer first).
    pub stage_reports: Vec<SolveReport>,
    pub report: SolveReport,
}

/// Layer-wise inversion from the output backwards: stage `l` solves
/// `min_x B_{Psi_l}(x_l, W_l x + b_l) + alpha_{l-1} Psi_{l-1}(x)` with
/// `x_L = y`, and the input stage uses `reg_last` in place of `Psi_0`.
/// Every stage starts from zero.
pub fn sequential_invert(
    net: &Network,
    y: &Tensor,
    reg_last: &Regulariser,
    cfg: &SequentialConfig,
) -> Result<SequentialSolution> {
    let n_layers = net.len();
    if cfg.alphas.len() != n_layers {
        return Err(Error::param(format!("expected {} alphas, got {}", n_layers, cfg.alphas.len())));
    }
    let start = Stopwatch::start();
    let mut target = y.clone();
    let mut states = Vec::with_capacity(n_layers);
    let mut stage_reports = Vec::with_capacity(n_layers);
    for l in (0..n_layers).rev() {
        let layer = &net.layers()[l];
        let reg = if l == 0 { reg_last.clone() } else { Regulariser::Penalty(net.layers()[l - 1].penalty) };
        let lip = layer.op.operator_norm_sq(DEFAULT_POWER_ITERS)?;
        let pdhg = PdhgConfig::with_lipschitz(lip, &reg, cfg.alphas[l])?
            .with_max_iters(cfg.max_iters)
            .with_stop_tol(cfg.stop_tol);
        let x0 = Tensor::zeros(&layer.op.input_shape());
        let sol = pdhg_invert_perceptron(layer, &target, &reg, &pdhg, &x0, None)?;
        stage_reports.push(sol.report);
        target = sol.x.clone();
        states.push(sol.x);
    }
    states.reverse();
    let last = stage_reports.last().expect("at least one stage");
    let report = SolveReport {
        iterations: stage_reports.iter().map(|r| r.iterations).sum(),
        final_objective: last.final_objective,
        residual_history: stage_reports.iter().flat_map(|r| r.residual_history.iter().copied()).collect(),
        stop_reason: if stage_reports.iter().all(|r| r.stop_reason == StopReason::Tolerance) {
            StopReason::Tolerance
        } else {
            StopReason::MaxIters
        },
        elapsed_seconds: start.seconds(),
    };
    Ok(SequentialSolution { x0: states[0].clone(), states, stage_reports, report })
}
