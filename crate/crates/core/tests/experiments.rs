use lifted_bregman::experiments::{
    invert_digits, load_model, noise_sweep, run, run_circle, save_model, sweep_failures, Arch, CircleParams,
    ExperimentConfig, InversionMethod, InvertParams, Model, SweepParams, SweepRow,
};
use lifted_bregman::train::{conv_autoencoder, dense_autoencoder};
use lifted_bregman::{SeededRng, Tensor};

fn digit_like(seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    let data = (0..784)
        .map(|i| {
            let (r, c) = (i / 28, i % 28);
            if (8..20).contains(&r) && (10..18).contains(&c) {
                rng.uniform_in(0.6, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    Tensor::new(vec![28, 28], data).unwrap()
}

#[test]
fn noise_free_circle_is_recovered() {
    let p = CircleParams { noise_std: 0.0, alpha: 1e-3, ..CircleParams::default() };
    let r = run_circle(&p).unwrap();
    assert_eq!(r.delta_sq, 0.0);
    let rel = r.tv.distance(&r.truth) / r.truth.norm();
    assert!(rel < 0.05, "relative error {rel}");
}

#[test]
fn model_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (encoder, decoder) = conv_autoencoder(3).unwrap();
    let model = Model { arch: Arch::Conv, encoder, decoder, pixel_mean: 0.130_664_062_5 + 1e-17 };
    save_model(&model, dir.path()).unwrap();
    let back = load_model(dir.path()).unwrap();
    assert_eq!(back.arch, Arch::Conv);
    assert_eq!(back.pixel_mean.to_bits(), model.pixel_mean.to_bits());
    let x = digit_like(1).reshape(&[1, 28, 28]).unwrap();
    assert_eq!(back.encoder.net_forward(&x).unwrap(), model.encoder.net_forward(&x).unwrap());
    assert_eq!(InversionMethod::for_encoder(&back.encoder), InversionMethod::CoordinateDescent);
}

#[test]
fn model_meta_must_be_complete() {
    let dir = tempfile::tempdir().unwrap();
    let (encoder, decoder) = dense_autoencoder(&[28, 28], 10, 0).unwrap();
    save_model(&Model { arch: Arch::Dense, encoder, decoder, pixel_mean: 0.1 }, dir.path()).unwrap();
    std::fs::write(dir.path().join("meta.txt"), "arch=dense\n").unwrap();
    assert!(load_model(dir.path()).is_err());
    std::fs::write(dir.path().join("meta.txt"), "arch=conv\npixel_mean=0.1\n").unwrap();
    assert!(load_model(dir.path()).is_err());
}

#[test]
fn noise_free_dense_inversion_reports_zero_delta() {
    let (encoder, decoder) = dense_autoencoder(&[28, 28], 40, 2).unwrap();
    let model = Model { arch: Arch::Dense, encoder, decoder, pixel_mean: 0.1 };
    let p = InvertParams { alpha: 1e-3, noise_std: 0.0, seed: 0, max_iters: 200, inner_iters: 10, stop_tol: 1e-5 };
    let out = invert_digits(&model, &[digit_like(4), digit_like(5)], &p).unwrap();
    assert_eq!(out.len(), 2);
    for r in &out {
        assert_eq!(r.delta_sq, 0.0);
        assert_eq!(r.inverted.shape(), &[28, 28]);
        assert!(r.psnr_inverted.is_finite() && r.psnr_decoded.is_finite());
    }
}

#[test]
fn sweep_rows_sorted_by_noise() {
    let (encoder, decoder) = conv_autoencoder(1).unwrap();
    let model = Model { arch: Arch::Conv, encoder, decoder, pixel_mean: 0.1 };
    let p = SweepParams {
        noise_stds: vec![0.2, 0.0, 0.05],
        alphas: vec![1e-3, 1e-2],
        outer_iters: 2,
        inner_iters: 2,
        stop_tol: 1e-5,
        seed: 0,
    };
    let rows = noise_sweep(&model, &[digit_like(7)], &p).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0].noise_std, 0.0);
    assert_eq!(rows[0].delta_sq, 0.0);
    assert!(rows.windows(2).all(|w| w[0].delta_sq <= w[1].delta_sq));
    assert!(rows.iter().all(|r| p.alphas.contains(&r.best_alpha) && r.digit_psnr_inverted.len() == 1));
}

fn row(delta_sq: f64, inv: &[f64], dec: &[f64]) -> SweepRow {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    SweepRow {
        noise_std: 0.0,
        delta_sq,
        best_alpha: 1e-3,
        psnr_inverted: mean(inv),
        psnr_decoded: mean(dec),
        digit_psnr_inverted: inv.to_vec(),
        digit_psnr_decoded: dec.to_vec(),
    }
}

#[test]
fn sweep_checks() {
    let dec = [13.0; 5];
    let good =
        vec![row(0.0, &[16.0, 15.0, 14.0, 13.5, 12.0], &dec), row(1.0, &[14.5; 5], &dec), row(5.0, &[11.0; 5], &dec)];
    assert!(sweep_failures(&good).is_empty(), "{:?}", sweep_failures(&good));
    let rising = vec![row(0.0, &[15.0; 5], &dec), row(1.0, &[15.6; 5], &dec)];
    assert_eq!(sweep_failures(&rising).len(), 1);
    let losing = vec![row(0.0, &[16.0, 16.0, 16.0, 12.0, 12.0], &dec)];
    assert!(sweep_failures(&losing)[0].contains("3/5"));
}

#[test]
fn run_dispatches_and_rejects_unknown() {
    assert!(run(&ExperimentConfig::new("nope")).is_err());
    assert!(run(&ExperimentConfig::default()).is_err());
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new("rate");
    cfg.set("out_dir", dir.path().to_str().unwrap()).unwrap();
    cfg.set("c", "0.5,1").unwrap();
    let outcome = run(&cfg).unwrap();
    assert!(outcome.passed(), "{:?}", outcome.failures);
    assert!(dir.path().join("rate_c0.5.csv").exists() && dir.path().join("rate_c1.csv").exists());
}
