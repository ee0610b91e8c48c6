use std::path::{Path, PathBuf};

use super::{prepare_out_dir, ExperimentConfig, Outcome};
use crate::data::{
    add_noise, data_dir, fmt_metric, hstack_images, load_mnist, psnr, write_csv, write_csv_records, write_pgm, Dataset,
    NoiseSpec,
};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::solvers::{coordinate_descent_invert, pdhg_invert_perceptron, CdConfig, PdhgConfig, Regulariser};
use crate::tensor::Tensor;
use crate::train::{train_conv_autoencoder, train_dense_autoencoder, training_log_rows, TrainConfig, TrainResult};

const SLACK_DB: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    Dense,
    Conv,
}

impl Arch {
    pub fn name(&self) -> &'static str {
        match self {
            Arch::Dense => "dense",
            Arch::Conv => "conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Arch::Dense),
            "conv" => Ok(Arch::Conv),
            other => Err(Error::param(format!("unknown architecture {other:?} (dense or conv)"))),
        }
    }

    fn input_shape(&self) -> &'static [usize] {
        match self {
            Arch::Dense => &[28, 28],
            Arch::Conv => &[1, 28, 28],
        }
    }

    /// Defaults for `train` when nothing is configured.
    fn default_train(&self) -> TrainConfig {
        match self {
            Arch::Dense => TrainConfig { learning_rate: 5e-3, epochs: 20, batch_size: 10, seed: 0 },
            Arch::Conv => TrainConfig { learning_rate: 1e-3, epochs: 5, batch_size: 10, seed: 0 },
        }
    }
}

/// A trained autoencoder. Both halves work on mean-centred images; the
/// scalar `pixel_mean` is what was subtracted.
#[derive(Clone, Debug)]
pub struct Model {
    pub arch: Arch,
    pub encoder: Network,
    pub decoder: Network,
    pub pixel_mean: f64,
}

impl Model {
    fn centre(&self, image: &Tensor) -> Result<Tensor> {
        let m = self.pixel_mean;
        image.map(|v| v - m).reshape(self.arch.input_shape())
    }

    fn uncentre(&self, x: &Tensor) -> Result<Tensor> {
        let m = self.pixel_mean;
        x.map(|v| v + m).reshape(&[28, 28])
    }
}

/// Writes `encoder.lbnn`, `decoder.lbnn` and `meta.txt` into `dir`.
pub fn save_model(model: &Model, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    model.encoder.save(dir.join("encoder.lbnn"))?;
    model.decoder.save(dir.join("decoder.lbnn"))?;
    std::fs::write(dir.join("meta.txt"), format!("arch={}\npixel_mean={}\n", model.arch.name(), model.pixel_mean))?;
    Ok(())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<Model> {
    let dir = dir.as_ref();
    let meta = std::fs::read_to_string(dir.join("meta.txt"))?;
    let mut arch = None;
    let mut pixel_mean = None;
    for line in meta.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let bad = || Error::Format { format: "model meta", reason: format!("bad line {line:?}") };
        match line.split_once('=').ok_or_else(bad)? {
            ("arch", v) => arch = Some(Arch::parse(v.trim())?),
            ("pixel_mean", v) => pixel_mean = Some(v.trim().parse::<f64>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    let missing = |key: &str| Error::Format { format: "model meta", reason: format!("missing {key}") };
    let arch = arch.ok_or_else(|| missing("arch"))?;
    let mut encoder = Network::load(dir.join("encoder.lbnn"))?;
    // LBNN keeps no input shape for dense layers
    if arch == Arch::Dense {
        let first = &mut encoder.layers_mut()[0];
        first.op = first.op.clone().with_input_shape(arch.input_shape())?;
    }
    let model = Model {
        arch,
        encoder,
        decoder: Network::load(dir.join("decoder.lbnn"))?,
        pixel_mean: pixel_mean.ok_or_else(|| missing("pixel_mean"))?,
    };
    if model.encoder.input_shape() != model.arch.input_shape() {
        return Err(Error::dims(model.arch.input_shape(), &model.encoder.input_shape()));
    }
    Ok(model)
}

/// Trains on the mean-centred images; the targets are the centred images
/// themselves.
pub fn train_model(arch: Arch, data: &Dataset, code_dim: usize, cfg: &TrainConfig) -> Result<(Model, TrainResult)> {
    if data.is_empty() {
        return Err(Error::param("cannot train on an empty data set"));
    }
    let pixel_mean = data.pixel_mean();
    let centred: Vec<Tensor> = data.images.iter().map(|x| x.map(|v| v - pixel_mean)).collect();
    let result = match arch {
        Arch::Dense => train_dense_autoencoder(&centred, code_dim, cfg)?,
        Arch::Conv => train_conv_autoencoder(&centred, cfg)?,
    };
    let model = Model { arch, encoder: result.encoder.clone(), decoder: result.decoder.clone(), pixel_mean };
    Ok((model, result))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InversionMethod {
    /// Single-layer encoders: TV-regularised primal-dual iteration.
    Pdhg,
    /// Multi-layer encoders: coordinate descent on the lifted objective.
    CoordinateDescent,
}

impl InversionMethod {
    pub fn for_encoder(encoder: &Network) -> Self {
        if encoder.len() == 1 {
            InversionMethod::Pdhg
        } else {
            InversionMethod::CoordinateDescent
        }
    }
}

/// Solver settings for [`invert_digits`]. `max_iters` counts PDHG
/// iterations or outer coordinate-descent sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvertParams {
    pub alpha: f64,
    pub noise_std: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub inner_iters: usize,
    pub stop_tol: f64,
}

#[derive(Clone, Debug)]
pub struct DigitInversion {
    pub truth: Tensor,
    pub decoded: Tensor,
    pub inverted: Tensor,
    pub delta_sq: f64,
    pub psnr_inverted: f64,
    pub psnr_decoded: f64,
    pub iterations: usize,
}

/// Encodes `image`, perturbs the code (noise seeded by `noise_seed`, negative
/// entries clipped) and returns `(y_delta, delta_sq)`.
fn noisy_code(model: &Model, xc: &Tensor, std: f64, noise_seed: u64) -> Result<(Tensor, f64)> {
    let states = model.encoder.hidden_states(xc)?;
    let last = model.encoder.layers().last().unwrap();
    let input = if states.len() >= 2 { &states[states.len() - 2] } else { xc };
    let pre = last.op.forward(input)?;
    let code = &states[states.len() - 1];
    add_noise(code, &NoiseSpec::new(std, noise_seed, true)?, &last.penalty, Some(&pre))
}

fn invert_code(model: &Model, y: &Tensor, p: &InvertParams) -> Result<(Tensor, usize)> {
    let reg = Regulariser::Tv;
    let x0 = Tensor::zeros(model.arch.input_shape());
    match InversionMethod::for_encoder(&model.encoder) {
        InversionMethod::Pdhg => {
            let layer = &model.encoder.layers()[0];
            let cfg =
                PdhgConfig::default_for(layer, &reg, p.alpha)?.with_max_iters(p.max_iters).with_stop_tol(p.stop_tol);
            let sol = pdhg_invert_perceptron(layer, y, &reg, &cfg, &x0, None)?;
            Ok((sol.x, sol.report.iterations))
        }
        InversionMethod::CoordinateDescent => {
            let mut cfg = CdConfig::default_for(&model.encoder, &reg, p.alpha, p.max_iters)?;
            cfg.inner_iters = p.inner_iters;
            cfg.stop_tol = p.stop_tol;
            let sol = coordinate_descent_invert(&model.encoder, y, &reg, &cfg, &x0)?;
            Ok((sol.x0, sol.report.iterations))
        }
    }
}

fn invert_one(model: &Model, image: &Tensor, noise_seed: u64, p: &InvertParams) -> Result<DigitInversion> {
    let truth = image.clone().reshape(&[28, 28])?;
    let xc = model.centre(image)?;
    let (y, delta_sq) = noisy_code(model, &xc, p.noise_std, noise_seed)?;
    let decoded = model.uncentre(&model.decoder.net_forward(&y)?)?;
    let (x, iterations) = invert_code(model, &y, p)?;
    let inverted = model.uncentre(&x)?;
    Ok(DigitInversion {
        psnr_inverted: psnr(&inverted, &truth, 1.0)?,
        psnr_decoded: psnr(&decoded, &truth, 1.0)?,
        truth,
        decoded,
        inverted,
        delta_sq,
        iterations,
    })
}

/// Inverts the (noisy) codes of `images`; image `k` gets noise seed
/// `p.seed + k`. PSNR is against the uncentred image with peak 1.
pub fn invert_digits(model: &Model, images: &[Tensor], p: &InvertParams) -> Result<Vec<DigitInversion>> {
    images.iter().enumerate().map(|(k, img)| invert_one(model, img, p.seed.wrapping_add(k as u64), p)).collect()
}

fn load_or_train(cfg: &ExperimentConfig, arch: Arch, out_dir: &Path, outcome: &mut Outcome) -> Result<Model> {
    if let Some(dir) = cfg.model_dir() {
        if dir.join("meta.txt").exists() {
            let model = load_model(&dir)?;
            if model.arch != arch {
                return Err(Error::param(format!(
                    "model in {} is {}, expected {}",
                    dir.display(),
                    model.arch.name(),
                    arch.name()
                )));
            }
            outcome.summary.push(format!("loaded {} model from {}", arch.name(), dir.display()));
            return Ok(model);
        }
    }
    let (model, result) = train_from_config(cfg, arch)?;
    let dir = cfg.model_dir().unwrap_or_else(|| out_dir.join("model"));
    save_model(&model, &dir)?;
    outcome.artifacts.push(dir);
    outcome.summary.push(format!(
        "trained {} model: mse {:.5} -> {:.5}",
        arch.name(),
        result.initial_mse,
        result.final_mse
    ));
    Ok(model)
}

fn train_from_config(cfg: &ExperimentConfig, arch: Arch) -> Result<(Model, TrainResult)> {
    let d = arch.default_train();
    let tc = TrainConfig {
        learning_rate: cfg.f64_or("learning_rate", d.learning_rate)?,
        epochs: cfg.usize_or("epochs", d.epochs)?,
        batch_size: cfg.usize_or("batch_size", d.batch_size)?,
        seed: cfg.seed()?,
    };
    let data = load_mnist(data_dir(), true)?.take(cfg.usize_or("train_images", 1000)?);
    train_model(arch, &data, cfg.usize_or("code_dim", 100)?, &tc)
}

/// Writes one `truth | decoder | inversion` PGM per digit and returns the
/// CSV records.
fn write_triptychs(
    out_dir: &Path,
    split: &str,
    alpha: f64,
    labels: &[u8],
    results: &[DigitInversion],
    artifacts: &mut Vec<PathBuf>,
) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for (k, r) in results.iter().enumerate() {
        let path = out_dir.join(format!("{split}_{k}.pgm"));
        write_pgm(&hstack_images(&[&r.truth, &r.decoded, &r.inverted], 1.0)?, 1.0, &path)?;
        artifacts.push(path);
        rows.push(vec![
            split.to_string(),
            k.to_string(),
            labels[k].to_string(),
            fmt_metric(alpha),
            fmt_metric(r.delta_sq),
            fmt_metric(r.psnr_inverted),
            fmt_metric(r.psnr_decoded),
            r.iterations.to_string(),
        ]);
    }
    Ok(rows)
}

const PSNR_HEADER: [&str; 8] =
    ["split", "index", "label", "alpha", "delta_sq", "psnr_inverted", "psnr_decoded", "iterations"];

fn run_inversions(
    cfg: &ExperimentConfig,
    arch: Arch,
    name: &str,
    alphas: (f64, f64),
    max_iters: usize,
) -> Result<(Outcome, Vec<DigitInversion>)> {
    let out_dir = cfg.out_dir(name);
    prepare_out_dir(&out_dir)?;
    let mut outcome = Outcome::default();
    let model = load_or_train(cfg, arch, &out_dir, &mut outcome)?;
    let samples = cfg.usize_or("samples", 5)?;
    let base = InvertParams {
        alpha: 0.0,
        noise_std: cfg.f64_or("noise_std", 0.0)?,
        seed: cfg.seed()?,
        max_iters: cfg.usize_or("max_iters", max_iters)?,
        inner_iters: cfg.usize_or("inner_iters", 10)?,
        stop_tol: cfg.f64_or("stop_tol", crate::solvers::DEFAULT_STOP_TOL)?,
    };
    let mut rows = Vec::new();
    let mut test_results = Vec::new();
    for (split, train, alpha) in [("train", true, alphas.0), ("test", false, alphas.1)] {
        let data = load_mnist(data_dir(), train)?.take(samples);
        let p = InvertParams { alpha, ..base };
        let results = invert_digits(&model, &data.images, &p)?;
        rows.extend(write_triptychs(&out_dir, split, alpha, &data.labels, &results, &mut outcome.artifacts)?);
        let mean = |f: fn(&DigitInversion) -> f64| results.iter().map(f).sum::<f64>() / results.len().max(1) as f64;
        outcome.summary.push(format!(
            "{split:>5}: alpha {alpha:e}  mean psnr inverted {:.2} dB  decoded {:.2} dB",
            mean(|r| r.psnr_inverted),
            mean(|r| r.psnr_decoded)
        ));
        if !train {
            test_results = results;
        }
    }
    let csv = out_dir.join("psnr.csv");
    write_csv_records(&csv, &PSNR_HEADER, &rows)?;
    outcome.artifacts.push(csv);
    Ok((outcome, test_results))
}

/// Dense autoencoder, single-layer TV inversion; `alpha` on training
/// digits and `val_alpha` on test digits.
pub fn cmd_mnist_perceptron(cfg: &ExperimentConfig) -> Result<Outcome> {
    let alphas = (cfg.f64_or("alpha", 5e-3)?, cfg.f64_or("val_alpha", 5e-2)?);
    let (outcome, _) = run_inversions(cfg, Arch::Dense, "mnist-perceptron", alphas, 10_000)?;
    Ok(outcome)
}

/// Convolutional autoencoder, coordinate-descent TV inversion. At low noise
/// the inversion is expected to beat the decoder on most test digits.
pub fn cmd_mnist_cnn(cfg: &ExperimentConfig) -> Result<Outcome> {
    let alpha = cfg.f64_or("alpha", 9e-3)?;
    let alphas = (alpha, cfg.f64_or("val_alpha", alpha)?);
    let (mut outcome, test) = run_inversions(cfg, Arch::Conv, "mnist-cnn", alphas, 1500)?;
    if cfg.f64_or("noise_std", 0.0)? <= 1e-2 && !test.is_empty() {
        let wins = test.iter().filter(|r| r.psnr_inverted > r.psnr_decoded).count();
        outcome.check(
            5 * wins >= 4 * test.len(),
            format!("inversion beat the decoder on only {wins}/{} test digits", test.len()),
        );
    }
    Ok(outcome)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepParams {
    pub noise_stds: Vec<f64>,
    pub alphas: Vec<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub stop_tol: f64,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            noise_stds: vec![0.33, 0.2, 0.12, 0.07, 0.04, 0.02, 0.01, 0.0],
            alphas: geometric(1e-4, 1e-2, 10),
            outer_iters: 300,
            inner_iters: 10,
            stop_tol: crate::solvers::DEFAULT_STOP_TOL,
            seed: 0,
        }
    }
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// One noise level: the `alpha` from the grid with the best mean inversion
/// PSNR over the digits, and the per-digit values at that `alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub noise_std: f64,
    /// Mean realised `delta^2` over the digits.
    pub delta_sq: f64,
    pub best_alpha: f64,
    pub psnr_inverted: f64,
    pub psnr_decoded: f64,
    pub digit_psnr_inverted: Vec<f64>,
    pub digit_psnr_decoded: Vec<f64>,
}

/// Grid search over noise level x alpha x digit. Digit `k` uses the noise
/// seed `seed + k` at every level, so the levels differ only in scale.
/// Rows come back sorted by increasing `delta^2`.
pub fn noise_sweep(model: &Model, images: &[Tensor], p: &SweepParams) -> Result<Vec<SweepRow>> {
    if images.is_empty() || p.alphas.is_empty() || p.noise_stds.is_empty() {
        return Err(Error::param("noise sweep needs images, noise levels and alphas"));
    }
    let (ns, na, nd) = (p.noise_stds.len(), p.alphas.len(), images.len());
    let run = |t: usize| -> Result<DigitInversion> {
        let (s, rest) = (t / (na * nd), t % (na * nd));
        let (a, d) = (rest / nd, rest % nd);
        let ip = InvertParams {
            alpha: p.alphas[a],
            noise_std: p.noise_stds[s],
            seed: p.seed,
            max_iters: p.outer_iters,
            inner_iters: p.inner_iters,
            stop_tol: p.stop_tol,
        };
        invert_one(model, &images[d], p.seed.wrapping_add(d as u64), &ip)
    };
    #[cfg(feature = "parallel")]
    let results: Vec<DigitInversion> = {
        use rayon::prelude::*;
        (0..ns * na * nd).into_par_iter().map(run).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<DigitInversion> = (0..ns * na * nd).map(run).collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(ns);
    for s in 0..ns {
        let level = &results[s * na * nd..(s + 1) * na * nd];
        let mean_inv = |a: usize| level[a * nd..(a + 1) * nd].iter().map(|r| r.psnr_inverted).sum::<f64>() / nd as f64;
        let best = (0..na).fold(0, |b, a| if mean_inv(a) > mean_inv(b) { a } else { b });
        let chosen = &level[best * nd..(best + 1) * nd];
        let mean = |f: fn(&DigitInversion) -> f64| chosen.iter().map(f).sum::<f64>() / nd as f64;
        rows.push(SweepRow {
            noise_std: p.noise_stds[s],
            delta_sq: mean(|r| r.delta_sq),
            best_alpha: p.alphas[best],
            psnr_inverted: mean(|r| r.psnr_inverted),
            psnr_decoded: mean(|r| r.psnr_decoded),
            digit_psnr_inverted: chosen.iter().map(|r| r.psnr_inverted).collect(),
            digit_psnr_decoded: chosen.iter().map(|r| r.psnr_decoded).collect(),
        });
    }
    rows.sort_by(|a, b| a.delta_sq.total_cmp(&b.delta_sq));
    Ok(rows)
}

/// Failed checks of a sweep: inversion PSNR non-increasing in `delta^2` up
/// to `SLACK_DB`, and inversion beating the decoder on at least 4/5 of the
/// digits at the lowest noise level.
pub fn sweep_failures(rows: &[SweepRow]) -> Vec<String> {
    let mut failures = Vec::new();
    for w in rows.windows(2) {
        if w[1].psnr_inverted > w[0].psnr_inverted + SLACK_DB {
            failures.push(format!(
                "psnr_inverted rises from {:.2} dB at delta^2 {:.4e} to {:.2} dB at delta^2 {:.4e}",
                w[0].psnr_inverted, w[0].delta_sq, w[1].psnr_inverted, w[1].delta_sq
            ));
        }
    }
    if let Some(low) = rows.first() {
        let n = low.digit_psnr_inverted.len();
        let wins = low.digit_psnr_inverted.iter().zip(&low.digit_psnr_decoded).filter(|(i, d)| i > d).count();
        if 5 * wins < 4 * n {
            failures.push(format!("at the lowest noise level inversion beat the decoder on only {wins}/{n} digits"));
        }
    }
    failures
}

pub fn cmd_noise_sweep(cfg: &ExperimentConfig) -> Result<Outcome> {
    let out_dir = cfg.out_dir("noise-sweep");
    prepare_out_dir(&out_dir)?;
    let mut outcome = Outcome::default();
    let model = load_or_train(cfg, Arch::Conv, &out_dir, &mut outcome)?;
    let d = SweepParams::default();
    let default_stds: Vec<String> = d.noise_stds.iter().map(|s| s.to_string()).collect();
    let p = SweepParams {
        noise_stds: cfg.grid_or("noise_levels", &default_stds.join(","))?,
        alphas: cfg.grid_or("alpha_grid", "1e-4:1e-2:geometric:10")?,
        outer_iters: cfg.usize_or("max_iters", d.outer_iters)?,
        inner_iters: cfg.usize_or("inner_iters", d.inner_iters)?,
        stop_tol: cfg.f64_or("stop_tol", d.stop_tol)?,
        seed: cfg.seed()?,
    };
    let images = load_mnist(data_dir(), false)?.take(cfg.usize_or("samples", 5)?).images;
    let rows = noise_sweep(&model, &images, &p)?;
    let csv = out_dir.join("noise_sweep.csv");
    let records: Vec<Vec<f64>> =
        rows.iter().map(|r| vec![r.delta_sq, r.best_alpha, r.psnr_inverted, r.psnr_decoded]).collect();
    write_csv(&csv, &["delta_sq", "best_alpha", "psnr_inverted", "psnr_decoded"], &records)?;
    outcome.artifacts.push(csv);
    for r in &rows {
        outcome.summary.push(format!(
            "std {:<5} delta^2 {:9.4} alpha {:.2e}  inverted {:6.2} dB  decoded {:6.2} dB",
            r.noise_std, r.delta_sq, r.best_alpha, r.psnr_inverted, r.psnr_decoded
        ));
    }
    outcome.failures.extend(sweep_failures(&rows));
    Ok(outcome)
}

/// Trains a model (`arch` = dense or conv) and writes it with a per-epoch
/// log.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Outcome> {
    let arch = Arch::parse(cfg.get("arch").unwrap_or("conv"))?;
    let out_dir = cfg.out_dir("train");
    prepare_out_dir(&out_dir)?;
    let (model, result) = train_from_config(cfg, arch)?;
    let dir = cfg.model_dir().unwrap_or_else(|| out_dir.join("model"));
    save_model(&model, &dir)?;
    let log = out_dir.join("training_log.csv");
    write_csv(&log, &["epoch", "mse"], &training_log_rows(&result))?;
    let mut outcome = Outcome { artifacts: vec![dir, log], ..Outcome::default() };
    outcome.summary.push(format!(
        "{} autoencoder: mse {:.5} -> {:.5}",
        arch.name(),
        result.initial_mse,
        result.final_mse
    ));
    outcome.check(result.final_mse < result.initial_mse, "training did not reduce the reconstruction error");
    Ok(outcome)
}
