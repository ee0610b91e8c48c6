//! Browser bindings: the circle reconstruction, a Bregman-loss explorer and
//! the convergence-rate table. The plain functions are what the bindings
//! call; they also run natively.

use lifted_bregman::experiments::{run_circle, CircleParams};
use lifted_bregman::solvers::{loglog_slope, rate_experiment, rate_problem};
use lifted_bregman::tv::tv_norm;
use lifted_bregman::{BregmanLoss, ProxPenalty, Tensor};
use wasm_bindgen::prelude::*;

/// Images are row-major `size x size`.
#[wasm_bindgen]
pub struct CircleDemo {
    size: usize,
    truth: Vec<f64>,
    landweber: Vec<f64>,
    tv: Vec<f64>,
    metrics: Vec<f64>,
}

#[wasm_bindgen]
impl CircleDemo {
    #[wasm_bindgen(getter)]
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    pub fn landweber(&self) -> Vec<f64> {
        self.landweber.clone()
    }

    pub fn tv(&self) -> Vec<f64> {
        self.tv.clone()
    }

    /// `[l2, tv]` for truth, Landweber and TV, then `delta^2`, Landweber
    /// iterations and TV iterations.
    pub fn metrics(&self) -> Vec<f64> {
        self.metrics.clone()
    }
}

pub fn circle(
    size: usize,
    rows: usize,
    noise_std: f64,
    alpha: f64,
    max_iters: usize,
    seed: u64,
) -> Result<CircleDemo, String> {
    let params = CircleParams { size, rows, noise_std, alpha, max_iters, seed, ..CircleParams::default() };
    let r = run_circle(&params).map_err(|e| e.to_string())?;
    let mut metrics = Vec::with_capacity(9);
    for img in [&r.truth, &r.landweber, &r.tv] {
        metrics.push(img.norm());
        metrics.push(tv_norm(img).map_err(|e| e.to_string())?);
    }
    metrics.extend([r.delta_sq, r.landweber_report.iterations as f64, r.tv_report.iterations as f64]);
    Ok(CircleDemo {
        size,
        truth: r.truth.into_data(),
        landweber: r.landweber.into_data(),
        tv: r.tv.into_data(),
        metrics,
    })
}

fn penalty(kind: &str, a: f64, b: f64) -> Result<ProxPenalty, String> {
    let p = match kind {
        "zero" => Ok(ProxPenalty::Zero),
        "relu" => Ok(ProxPenalty::NonNegIndicator),
        "box" => ProxPenalty::boxed(a, b),
        "l1" => ProxPenalty::l1(a),
        other => return Err(format!("unknown activation {other:?}")),
    };
    p.map_err(|e| e.to_string())
}

/// For `n` points `z` evenly spaced in `[lo, hi]`, returns the flat
/// sequence `z, sigma(z), B_Psi(x, z), 1/2 (x - sigma(z))^2`.
pub fn bregman_curve(kind: &str, a: f64, b: f64, x: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, String> {
    if n < 2 || !(lo < hi) {
        return Err("need at least two points on a non-empty interval".into());
    }
    let p = penalty(kind, a, b)?;
    if p.eval_scalar(x).is_infinite() {
        return Err(format!("x = {x} lies outside the range of the activation"));
    }
    let loss = BregmanLoss::new(p);
    let xt = Tensor::vector(vec![x]);
    let mut out = Vec::with_capacity(4 * n);
    for i in 0..n {
        let z = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        let s = p.prox_scalar(z);
        let l = loss.loss(&xt, &Tensor::vector(vec![z])).map_err(|e| e.to_string())?;
        out.extend([z, s, l, 0.5 * (x - s) * (x - s)]);
    }
    Ok(out)
}

/// Flat rows `delta, alpha, d_sym, bound` for an `m x n` instance, then the
/// log-log slope as the last entry.
pub fn rate_table(m: usize, n: usize, c: f64, deltas: &[f64], seed: u64) -> Result<Vec<f64>, String> {
    let problem = rate_problem(m, n, seed).map_err(|e| e.to_string())?;
    let rows = rate_experiment(&problem.layer, &problem.v_dag, c, deltas, seed).map_err(|e| e.to_string())?;
    let mut out: Vec<f64> = rows.iter().flat_map(|r| [r.delta, r.alpha, r.d_sym, r.bound]).collect();
    out.push(if rows.len() >= 2 { loglog_slope(&rows) } else { f64::NAN });
    Ok(out)
}

#[wasm_bindgen(js_name = runCircle)]
pub fn run_circle_js(
    size: usize,
    rows: usize,
    noise_std: f64,
    alpha: f64,
    max_iters: usize,
    seed: u32,
) -> Result<CircleDemo, JsError> {
    circle(size, rows, noise_std, alpha, max_iters, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bregmanCurve)]
pub fn bregman_curve_js(kind: &str, a: f64, b: f64, x: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, JsError> {
    bregman_curve(kind, a, b, x, lo, hi, n).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = rateTable)]
pub fn rate_table_js(m: usize, n: usize, c: f64, deltas: Vec<f64>, seed: u32) -> Result<Vec<f64>, JsError> {
    rate_table(m, n, c, &deltas, seed as u64).map_err(|e| JsError::new(&e))
}
