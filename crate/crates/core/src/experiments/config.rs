use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Every key an experiment understands, with its description.
pub const KNOWN_KEYS: &[(&str, &str)] = &[
    ("experiment", "circle | mnist-perceptron | mnist-cnn | noise-sweep | rate | train"),
    ("out_dir", "directory for images, CSVs and models"),
    ("seed", "base seed for weights, noise and data order"),
    ("alpha", "regularisation parameter"),
    ("val_alpha", "regularisation parameter for test-set images (mnist-perceptron)"),
    ("noise_std", "standard deviation of the Gaussian data noise"),
    ("max_iters", "iteration cap (PDHG iterations or outer sweeps)"),
    ("inner_iters", "inner PDHG iterations per coordinate-descent sweep"),
    ("stop_tol", "stopping threshold on the joint iterate change"),
    ("tau_disc", "discrepancy factor for Landweber"),
    ("model", "directory holding encoder.lbnn, decoder.lbnn and meta.txt"),
    ("size", "circle image side length"),
    ("rows", "rows of the random circle perceptron"),
    ("radius_frac", "circle radius as a fraction of the side length"),
    ("c", "error-estimate constant(s), comma separated"),
    ("deltas", "noise levels: list or lo:hi:geometric:n"),
    ("rate_m", "rows of the rate-experiment perceptron"),
    ("rate_n", "columns of the rate-experiment perceptron"),
    ("samples", "number of digits to invert"),
    ("train_images", "number of training images"),
    ("epochs", "training epochs"),
    ("learning_rate", "SGD step"),
    ("batch_size", "SGD batch size"),
    ("code_dim", "code dimension of the dense autoencoder"),
    ("arch", "dense | conv (train)"),
    ("noise_levels", "noise std grid for the sweep: list or lo:hi:geometric:n"),
    ("alpha_grid", "alpha grid for the sweep: list or lo:hi:geometric:n"),
];

/// Flat `key=value` configuration. Unknown keys are rejected; later values
/// override earlier ones, so command-line flags applied after a file win.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        let mut values = BTreeMap::new();
        values.insert("experiment".to_string(), experiment.to_string());
        Self { values }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::param(format!("line {}: expected key=value, got {raw:?}", lineno + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KNOWN_KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::param(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn experiment(&self) -> Option<&str> {
        self.get("experiment")
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::param(format!("{key}: not a number: {v:?}"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::param(format!("{key}: not a non-negative integer: {v:?}"))),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        match self.get("seed") {
            None => Ok(0),
            Some(v) => v.parse().map_err(|_| Error::param(format!("seed: not a 64-bit unsigned integer: {v:?}"))),
        }
    }

    pub fn grid_or(&self, key: &str, default: &str) -> Result<Vec<f64>> {
        parse_grid(self.get(key).unwrap_or(default))
    }

    pub fn out_dir(&self, default_name: &str) -> PathBuf {
        match self.get("out_dir") {
            Some(d) => PathBuf::from(d),
            None => PathBuf::from("out").join(default_name),
        }
    }

    pub fn model_dir(&self) -> Option<PathBuf> {
        self.get("model").map(PathBuf::from)
    }

    /// `key=value` lines, sorted by key.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// `a,b,c` or `lo:hi:geometric:n` / `lo:hi:linear:n` (endpoints included).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::param(format!("bad grid {spec:?}"));
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    if parts.len() == 1 {
        return spec.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| bad())).collect();
    }
    if parts.len() != 4 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[3].parse().map_err(|_| bad())?;
    if n == 0 {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let t = |k: usize| k as f64 / (n - 1) as f64;
    match parts[2] {
        "geometric" => {
            if !(lo > 0.0 && hi > 0.0) {
                return Err(Error::param("geometric grid endpoints must be positive"));
            }
            Ok((0..n).map(|k| lo * (hi / lo).powf(t(k))).collect())
        }
        "linear" => Ok((0..n).map(|k| lo + (hi - lo) * t(k)).collect()),
        _ => Err(bad()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_and_overrides() {
        let mut cfg =
            ExperimentConfig::parse("experiment = circle\n# comment\nalpha=0.01 # trailing\n\nseed=4\n").unwrap();
        assert_eq!(cfg.f64_or("alpha", 1.0).unwrap(), 0.01);
        cfg.set("alpha", "0.02").unwrap();
        assert_eq!(cfg.f64_or("alpha", 1.0).unwrap(), 0.02);
        assert_eq!(cfg.seed().unwrap(), 4);
        assert_eq!(cfg.usize_or("size", 64).unwrap(), 64);
        let again = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(ExperimentConfig::parse("alpah=0.1").is_err());
        assert!(ExperimentConfig::parse("alpha 0.1").is_err());
        let cfg = ExperimentConfig::parse("alpha=abc").unwrap();
        assert!(cfg.f64_or("alpha", 0.0).is_err());
    }

    #[test]
    fn grids() {
        let g = parse_grid("1e-1:1e-4:geometric:7").unwrap();
        assert_eq!(g.len(), 7);
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[6] - 1e-4).abs() < 1e-15);
        assert!((g[1] - 10f64.powf(-1.5)).abs() < 1e-15);
        assert_eq!(parse_grid("0.5, 1.0").unwrap(), vec![0.5, 1.0]);
        assert_eq!(parse_grid("0:1:linear:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("0:1:cubic:3").is_err());
        assert!(parse_grid("0:1:geometric:3").is_err());
    }
}
