use super::{check_target, pdhg_invert_perceptron, PdhgConfig, Regulariser, SolveReport, StopReason, Stopwatch};
use crate::bregman::loss_slices;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::operator::DEFAULT_POWER_ITERS;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct CdConfig {
    pub alpha: f64,
    /// Primal and dual steps of the inner solver for `x_0`.
    pub tau_x0: f64,
    pub tau_z: f64,
    /// `tau_aux[l - 1]` is the step for `x_l`, `l = 1..L-1`.
    pub tau_aux: Vec<f64>,
    pub inner_iters: usize,
    pub outer_iters: usize,
    pub stop_tol: f64,
}

impl CdConfig {
    /// Inner steps as in [`PdhgConfig::default_for`] on the first layer and
    /// `tau_{x_l} = 1.99/|W_{l+1}|^2` for the auxiliary variables; 50 inner
    /// iterations.
    pub fn default_for(net: &Network, reg: &Regulariser, alpha: f64, outer_iters: usize) -> Result<Self> {
        let inner = PdhgConfig::default_for(&net.layers()[0], reg, alpha)?;
        let tau_aux = net.layers()[1..]
            .iter()
            .map(|layer| layer.op.operator_norm_sq(DEFAULT_POWER_ITERS).map(|l| 1.99 / l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            alpha,
            tau_x0: inner.tau_x,
            tau_z: inner.tau_z,
            tau_aux,
            inner_iters: 50,
            outer_iters,
            stop_tol: super::DEFAULT_STOP_TOL,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CdSolution {
    pub x0: Tensor,
    /// Auxiliary variables `x_1, ..., x_{L-1}`.
    pub hidden: Vec<Tensor>,
    pub dual: Tensor,
    pub report: SolveReport,
    /// Lifted objective at the start and after every outer sweep.
    pub objective_history: Vec<f64>,
}

/// Lifted objective `sum_l B_{Psi_l}(x_l, f_l(x_{l-1})) + alpha R(K x_0)`
/// with `x_L = y`.
pub fn lifted_objective(
    net: &Network,
    y: &Tensor,
    reg: &Regulariser,
    alpha: f64,
    x0: &Tensor,
    hidden: &[Tensor],
) -> Result<f64> {
    if hidden.len() + 1 != net.len() {
        return Err(Error::param(format!("expected {} auxiliary variables, got {}", net.len() - 1, hidden.len())));
    }
    let mut total = if alpha > 0.0 { alpha * reg.value(x0)? } else { 0.0 };
    for (l, layer) in net.layers().iter().enumerate() {
        let input = if l == 0 { x0 } else { &hidden[l - 1] };
        let target = if l + 1 == net.len() { y } else { &hidden[l] };
        total += block_loss(layer, input, target)?;
    }
    Ok(total)
}

fn block_loss(layer: &crate::network::Layer, input: &Tensor, target: &Tensor) -> Result<f64> {
    let z = layer.op.forward(input)?;
    if z.len() != target.len() {
        return Err(Error::dims(z.shape(), target.shape()));
    }
    Ok(loss_slices(&layer.penalty, target.data(), z.data()))
}

/// Block coordinate descent on the lifted objective. Each sweep updates
/// `x_0` by a capped inner primal-dual run against the target `x_1`, then
/// `x_1, ..., x_{L-1}` in order by one proximal-gradient step each:
///
/// ```text
/// x_l+ = prox_{tau/(1+tau) Psi_l}((x_l - tau (W_{l+1}^T (sigma_{l+1}(f_{l+1}(x_l)) - x_{l+1}) - f_l(x_{l-1}+))) / (1 + tau))
/// ```
///
/// The primal-dual iteration is not monotone on its own, so its `x_0` result
/// is only accepted when the block objective does not increase; the dual
/// variable is kept warm either way.
///
/// The auxiliary variables start at the hidden states of `x_init`.
pub fn coordinate_descent_invert(
    net: &Network,
    y: &Tensor,
    reg: &Regulariser,
    cfg: &CdConfig,
    x_init: &Tensor,
) -> Result<CdSolution> {
    let n_layers = net.len();
    if n_layers < 2 {
        return Err(Error::param("coordinate descent needs at least two layers"));
    }
    if cfg.tau_aux.len() != n_layers - 1 {
        return Err(Error::param(format!("expected {} auxiliary step sizes, got {}", n_layers - 1, cfg.tau_aux.len())));
    }
    check_target(&net.layers()[n_layers - 1], y)?;
    let start = Stopwatch::start();
    let first = &net.layers()[0];
    let mut x0 = x_init.clone().reshape(&first.op.input_shape())?;
    let mut states = net.hidden_states(&x0)?;
    states.pop();
    let mut hidden = states;
    let inner_cfg = PdhgConfig {
        alpha: cfg.alpha,
        tau_x: cfg.tau_x0,
        tau_z: cfg.tau_z,
        max_iters: cfg.inner_iters,
        stop_tol: cfg.stop_tol,
    };
    let mut dual: Option<Tensor> = None;
    let mut objective = lifted_objective(net, y, reg, cfg.alpha, &x0, &hidden)?;
    let mut objective_history = vec![objective];
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxIters;

    for sweep in 0..cfg.outer_iters {
        let mut change_sq = 0.0;

        let block_old = block_loss(first, &x0, &hidden[0])? + reg_term(reg, cfg.alpha, &x0)?;
        let sol = pdhg_invert_perceptron(first, &hidden[0], reg, &inner_cfg, &x0, dual.as_ref())?;
        let block_new = block_loss(first, &sol.x, &hidden[0])? + reg_term(reg, cfg.alpha, &sol.x)?;
        if block_new <= block_old {
            change_sq += sol.x.distance(&x0).powi(2);
            x0 = sol.x;
        }
        dual = Some(sol.dual);

        for l in 1..n_layers {
            let prev_input = if l == 1 { &x0 } else { &hidden[l - 2] };
            let pre = net.layers()[l - 1].op.forward(prev_input)?;
            let next = &net.layers()[l];
            let target = if l + 1 == n_layers { y } else { &hidden[l] };
            let mut out = next.op.forward(&hidden[l - 1])?;
            next.penalty.prox_in_place(out.data_mut());
            for (o, t) in out.data_mut().iter_mut().zip(target.data()) {
                *o -= t;
            }
            let grad = next.op.adjoint_apply(&out)?;
            let tau = cfg.tau_aux[l - 1];
            let penalty = net.layers()[l - 1].penalty;
            let scale = tau / (1.0 + tau);
            let x_l = hidden[l - 1].data_mut();
            for i in 0..x_l.len() {
                let v = (x_l[i] - tau * (grad.data()[i] - pre.data()[i])) / (1.0 + tau);
                let v = penalty.prox_scalar_scaled(v, scale);
                change_sq += (v - x_l[i]) * (v - x_l[i]);
                x_l[i] = v;
            }
        }

        let change = change_sq.sqrt();
        if !change.is_finite() {
            return Err(Error::Divergence { iteration: sweep + 1 });
        }
        objective = lifted_objective(net, y, reg, cfg.alpha, &x0, &hidden)?;
        objective_history.push(objective);
        history.push(change);
        if change < cfg.stop_tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let dual = match dual {
        Some(d) => d,
        None => Tensor::zeros(&reg.dual_shape(&first.op.input_shape())?),
    };
    let report = SolveReport {
        iterations: history.len(),
        final_objective: objective,
        residual_history: history,
        stop_reason,
        elapsed_seconds: start.seconds(),
    };
    Ok(CdSolution { x0, hidden, dual, report, objective_history })
}

fn reg_term(reg: &Regulariser, alpha: f64, x: &Tensor) -> Result<f64> {
    if alpha > 0.0 {
        Ok(alpha * reg.value(x)?)
    } else {
        Ok(0.0)
    }
}
