use super::{prepare_out_dir, ExperimentConfig, Outcome};
use crate::data::{add_noise, circle_phantom, fmt_metric, write_csv_records, write_pgm, NoiseSpec};
use crate::error::Result;
use crate::network::Layer;
use crate::operator::LinearOperator;
use crate::prox::ProxPenalty;
use crate::rng::SeededRng;
use crate::solvers::{landweber_invert, pdhg_invert_perceptron, LandweberConfig, PdhgConfig, Regulariser, SolveReport};
use crate::tensor::Tensor;
use crate::tv::tv_norm;

const NOISE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Clone, Debug, PartialEq)]
pub struct CircleParams {
    pub size: usize,
    pub rows: usize,
    pub radius_frac: f64,
    pub noise_std: f64,
    pub alpha: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub tau_disc: f64,
    pub seed: u64,
}

impl Default for CircleParams {
    fn default() -> Self {
        Self {
            size: 64,
            rows: 512,
            radius_frac: 0.25,
            noise_std: 0.005,
            alpha: 1.5e-2,
            max_iters: 10_000,
            stop_tol: 1e-5,
            tau_disc: 1.0,
            seed: 0,
        }
    }
}

impl CircleParams {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            size: cfg.usize_or("size", d.size)?,
            rows: cfg.usize_or("rows", d.rows)?,
            radius_frac: cfg.f64_or("radius_frac", d.radius_frac)?,
            noise_std: cfg.f64_or("noise_std", d.noise_std)?,
            alpha: cfg.f64_or("alpha", d.alpha)?,
            max_iters: cfg.usize_or("max_iters", d.max_iters)?,
            stop_tol: cfg.f64_or("stop_tol", d.stop_tol)?,
            tau_disc: cfg.f64_or("tau_disc", d.tau_disc)?,
            seed: cfg.seed()?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct CircleResult {
    pub truth: Tensor,
    pub landweber: Tensor,
    pub tv: Tensor,
    pub delta_sq: f64,
    pub landweber_report: SolveReport,
    pub tv_report: SolveReport,
}

impl CircleResult {
    /// `(l2 norm, TV seminorm)` of truth, Landweber and TV reconstructions.
    pub fn norms(&self) -> Result<[(f64, f64); 3]> {
        let m = |x: &Tensor| -> Result<(f64, f64)> { Ok((x.norm(), tv_norm(x)?)) };
        Ok([m(&self.truth)?, m(&self.landweber)?, m(&self.tv)?])
    }

    /// The two orderings the experiment is about:
    /// `tv(TV) < tv(truth) < tv(Landweber)` and the TV reconstruction's l2
    /// norm being closer to the truth's than Landweber's.
    pub fn orderings(&self) -> Result<(bool, bool)> {
        let [(l2_t, tv_t), (l2_lw, tv_lw), (l2_tv, tv_tv)] = self.norms()?;
        Ok((tv_tv < tv_t && tv_t < tv_lw, (l2_tv - l2_t).abs() < (l2_lw - l2_t).abs()))
    }
}

/// Random ReLU perceptron of size `rows x size^2` with `W ~ N(0, 1/size^2)`
/// and `b ~ N(0, 0.01^2)`, acting on `size x size` images.
pub fn circle_layer(size: usize, rows: usize, seed: u64) -> Result<Layer> {
    let n = size * size;
    let mut rng = SeededRng::new(seed);
    let w = Tensor::new(vec![rows, n], rng.normal_vec(rows * n, 1.0 / size as f64))?;
    let b = Tensor::new(vec![rows], rng.normal_vec(rows, 0.01))?;
    let op = LinearOperator::dense(w, b)?.with_input_shape(&[size, size])?;
    Ok(Layer::new(op, ProxPenalty::NonNegIndicator))
}

/// Disk phantom through a random ReLU perceptron, clipped Gaussian noise,
/// then Landweber with the discrepancy principle and TV-regularised PDHG.
/// Landweber uses `delta = sqrt(2 delta_sq)` with `delta_sq` the realised
/// Bregman loss of the noisy data.
pub fn run_circle(p: &CircleParams) -> Result<CircleResult> {
    let truth = circle_phantom(p.size, p.size, p.radius_frac, 1.0)?;
    let layer = circle_layer(p.size, p.rows, p.seed)?;
    let pre = layer.op.forward(&truth)?;
    let clean = layer.penalty.prox(&pre);
    let spec = NoiseSpec::new(p.noise_std, p.seed ^ NOISE_SEED_SALT, true)?;
    let (y, delta_sq) = add_noise(&clean, &spec, &layer.penalty, Some(&pre))?;

    let mut lw_cfg = LandweberConfig::default_for(&layer, (2.0 * delta_sq).sqrt())?;
    lw_cfg.tau_disc = p.tau_disc;
    lw_cfg.max_iters = p.max_iters;
    let (landweber, landweber_report) = landweber_invert(&layer, &y, &lw_cfg)?;

    let reg = Regulariser::Tv;
    let cfg = PdhgConfig::default_for(&layer, &reg, p.alpha)?.with_max_iters(p.max_iters).with_stop_tol(p.stop_tol);
    let x0 = Tensor::zeros(&[p.size, p.size]);
    let sol = pdhg_invert_perceptron(&layer, &y, &reg, &cfg, &x0, None)?;
    Ok(CircleResult { truth, landweber, tv: sol.x, delta_sq, landweber_report, tv_report: sol.report })
}

pub fn cmd_circle(cfg: &ExperimentConfig) -> Result<Outcome> {
    let params = CircleParams::from_config(cfg)?;
    let out_dir = cfg.out_dir("circle");
    prepare_out_dir(&out_dir)?;
    let res = run_circle(&params)?;
    let mut outcome = Outcome::default();
    for (name, img) in [("truth", &res.truth), ("landweber", &res.landweber), ("tv", &res.tv)] {
        let path = out_dir.join(format!("{name}.pgm"));
        write_pgm(img, 1.0, &path)?;
        outcome.artifacts.push(path);
    }
    let norms = res.norms()?;
    let iters = [0, res.landweber_report.iterations, res.tv_report.iterations];
    let rows: Vec<Vec<String>> = ["truth", "landweber", "tv"]
        .iter()
        .zip(norms.iter().zip(iters))
        .map(|(name, ((l2, tv), it))| vec![name.to_string(), fmt_metric(*l2), fmt_metric(*tv), it.to_string()])
        .collect();
    let metrics = out_dir.join("metrics.csv");
    write_csv_records(&metrics, &["image", "l2_norm", "tv_seminorm", "iterations"], &rows)?;
    outcome.artifacts.push(metrics);
    for (name, report) in [("landweber", &res.landweber_report), ("tv", &res.tv_report)] {
        let path = out_dir.join(format!("{name}_residuals.csv"));
        report.save_csv(&path)?;
        outcome.artifacts.push(path);
    }
    let rel_err = res.tv.distance(&res.truth) / res.truth.norm();
    outcome.summary.push(format!("delta^2 = {:.4e}", res.delta_sq));
    for ((name, (l2, tv)), it) in ["truth", "landweber", "tv"].iter().zip(norms).zip(iters) {
        outcome.summary.push(format!("{name:>9}: l2 {l2:8.3}  tv {tv:8.3}  iterations {it}"));
    }
    outcome.summary.push(format!("tv reconstruction relative error {rel_err:.4}"));
    let (tv_order, l2_order) = res.orderings()?;
    outcome.check(tv_order, "expected tv(TV recon) < tv(truth) < tv(Landweber)");
    outcome.check(l2_order, "expected the TV reconstruction's l2 norm to be closer to the truth's than Landweber's");
    Ok(outcome)
}
