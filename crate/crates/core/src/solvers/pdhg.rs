use super::{
    check_target, data_gradient, single_layer_objective, PdhgConfig, Regulariser, SolveReport, StopReason, Stopwatch,
};
use crate::error::{Error, Result};
use crate::network::Layer;
use crate::tensor::Tensor;
use crate::tv;

#[derive(Clone, Debug)]
pub struct PdhgSolution {
    pub x: Tensor,
    /// Final dual variable (`[H, W, 2]` for TV); reuse it to warm-start.
    pub dual: Tensor,
    pub report: SolveReport,
}

/// Minimises `B_Psi(y, Wx + b) + alpha R(Kx)` for one layer by the
/// primal-dual iteration
///
/// ```text
/// x+ = x - tau_x (W^T (sigma(Wx + b) - y) + alpha K^T z)
/// z+ = prox_{tau_z alpha R*}(z + tau_z alpha K (2 x+ - x))
/// ```
///
/// [`Regulariser::Penalty`] has no dual variable; its prox is applied to the
/// primal step instead (a proximal-gradient iteration).
///
/// Stops once the Euclidean norm of the joint change `(x+ - x, z+ - z)` drops
/// below `cfg.stop_tol`.
pub fn pdhg_invert_perceptron(
    layer: &Layer,
    y: &Tensor,
    reg: &Regulariser,
    cfg: &PdhgConfig,
    x0: &Tensor,
    z0: Option<&Tensor>,
) -> Result<PdhgSolution> {
    cfg.validate()?;
    check_target(layer, y)?;
    let start = Stopwatch::start();
    let shape = layer.op.input_shape();
    if x0.len() != layer.op.input_len() {
        return Err(Error::dims(&shape, x0.shape()));
    }
    let mut x = x0.clone().reshape(&shape)?;
    let dual_shape = reg.dual_shape(&shape)?;
    let dual_len = reg.dual_len(&shape)?;
    let mut z = match z0 {
        _ if dual_len == 0 => Vec::new(),
        Some(z) if z.len() == dual_len => z.data().to_vec(),
        Some(z) => return Err(Error::dims(&dual_shape, z.shape())),
        None => vec![0.0; dual_len],
    };
    let dims = match reg {
        Regulariser::Tv => Some(tv::image_dims(&x)?),
        _ => None,
    };
    let n = x.len();
    let alpha = cfg.alpha;
    let use_dual = alpha > 0.0 && dual_len > 0;
    let mut kt = vec![0.0; n];
    let mut kx = vec![0.0; dual_len];
    let mut z_prev = vec![0.0; dual_len];
    let mut x_bar = vec![0.0; n];
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxIters;

    for k in 0..cfg.max_iters {
        let grad = data_gradient(layer, y, &x)?;
        if use_dual {
            apply_kt(reg, dims, &z, &mut kt);
        }
        let mut change_sq = 0.0;
        let xs = x.data_mut();
        for i in 0..n {
            let mut step = grad.data()[i];
            if use_dual {
                step += alpha * kt[i];
            }
            let mut v = xs[i] - cfg.tau_x * step;
            if let Regulariser::Penalty(p) = reg {
                if alpha > 0.0 {
                    v = p.prox_scalar_scaled(v, cfg.tau_x * alpha);
                }
            }
            let d = v - xs[i];
            change_sq += d * d;
            x_bar[i] = v + d;
            xs[i] = v;
        }
        if use_dual {
            apply_k(reg, dims, &x_bar, &mut kx);
            let s = cfg.tau_z * alpha;
            z_prev.copy_from_slice(&z);
            for (zi, ki) in z.iter_mut().zip(&kx) {
                *zi += s * ki;
            }
            dual_prox(reg, s, &mut z);
            change_sq += z.iter().zip(&z_prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        let change = change_sq.sqrt();
        if !change.is_finite() {
            return Err(Error::Divergence { iteration: k + 1 });
        }
        history.push(change);
        if change < cfg.stop_tol {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }

    let final_objective = single_layer_objective(layer, y, reg, alpha, &x)?;
    let report = SolveReport {
        iterations: history.len(),
        final_objective,
        residual_history: history,
        stop_reason,
        elapsed_seconds: start.seconds(),
    };
    let dual = Tensor::new(dual_shape, if dual_len == 0 { vec![0.0] } else { z })?;
    Ok(PdhgSolution { x, dual, report })
}

fn apply_k(reg: &Regulariser, dims: Option<(usize, usize)>, x: &[f64], out: &mut [f64]) {
    match reg {
        Regulariser::Tv => {
            let (h, w) = dims.expect("image dims");
            tv::grad_into(x, h, w, out);
        }
        _ => out.copy_from_slice(x),
    }
}

fn apply_kt(reg: &Regulariser, dims: Option<(usize, usize)>, z: &[f64], out: &mut [f64]) {
    match reg {
        Regulariser::Tv => {
            let (h, w) = dims.expect("image dims");
            tv::div_into(z, h, w, out);
            out.iter_mut().for_each(|v| *v = -*v);
        }
        _ => out.copy_from_slice(z),
    }
}

/// `prox_{gamma R*}`: projection for the homogeneous regularisers, shrinkage
/// for the squared norm.
fn dual_prox(reg: &Regulariser, gamma: f64, z: &mut [f64]) {
    match reg {
        Regulariser::Tv => tv::project_in_place(z),
        Regulariser::L1 => z.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0)),
        Regulariser::SquaredL2 => z.iter_mut().for_each(|v| *v /= 1.0 + gamma),
        Regulariser::Penalty(_) => {}
    }
}
