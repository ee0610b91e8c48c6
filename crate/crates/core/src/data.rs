//! Phantoms, noise, MNIST in IDX format, and image/metric output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::bregman::loss_slices;
use crate::error::{Error, Result};
use crate::prox::ProxPenalty;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const DATA_DIR_ENV: &str = "LB_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist-subset";

/// Binary disk of the given value centred in an `h x w` image, radius
/// `radius_frac * min(h, w)`.
pub fn circle_phantom(h: usize, w: usize, radius_frac: f64, value: f64) -> Result<Tensor> {
    if h == 0 || w == 0 {
        return Err(Error::param("phantom dimensions must be positive"));
    }
    if !(radius_frac > 0.0 && radius_frac < 0.5) {
        return Err(Error::param(format!("radius_frac must lie in (0, 0.5), got {radius_frac}")));
    }
    let (ci, cj) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let r = radius_frac * h.min(w) as f64;
    let mut data = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let (di, dj) = (i as f64 - ci, j as f64 - cj);
            if di * di + dj * dj <= r * r {
                data[i * w + j] = value;
            }
        }
    }
    Tensor::new(vec![h, w], data)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub std: f64,
    pub seed: u64,
    pub clip_nonneg: bool,
}

impl NoiseSpec {
    pub fn new(std: f64, seed: u64, clip_nonneg: bool) -> Result<Self> {
        if !(std >= 0.0 && std.is_finite()) {
            return Err(Error::param(format!("noise std must be finite and non-negative, got {std}")));
        }
        Ok(Self { std, seed, clip_nonneg })
    }
}

/// Adds seeded Gaussian noise to `y`, optionally clipping negative entries.
///
/// The returned `delta_sq` is the realised Bregman loss
/// `B_Psi(y_delta, clean_pre)` when the clean pre-activation is supplied,
/// and `1/2 |y_delta - y|^2` otherwise.
pub fn add_noise(
    y: &Tensor,
    spec: &NoiseSpec,
    penalty: &ProxPenalty,
    clean_pre: Option<&Tensor>,
) -> Result<(Tensor, f64)> {
    if spec.std < 0.0 {
        return Err(Error::param("noise std must be non-negative"));
    }
    let mut rng = SeededRng::new(spec.seed);
    let noise = rng.normal_vec(y.len(), spec.std);
    let mut noisy = y.clone();
    for (v, e) in noisy.data_mut().iter_mut().zip(&noise) {
        *v += e;
        if spec.clip_nonneg && *v < 0.0 {
            *v = 0.0;
        }
    }
    let delta_sq = match clean_pre {
        Some(z) => {
            if z.len() != y.len() {
                return Err(Error::dims(y.shape(), z.shape()));
            }
            loss_slices(penalty, noisy.data(), z.data())
        }
        None => 0.5 * noisy.distance(y).powi(2),
    };
    Ok((noisy, delta_sq))
}

/// Contents of an unsigned-byte IDX file.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxFile {
    pub dims: Vec<usize>,
    pub bytes: Vec<u8>,
}

impl IdxFile {
    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }

    /// Rank-3 files as `[rows, cols]` images scaled to `[0, 1]`.
    pub fn images(&self) -> Result<Vec<Tensor>> {
        if self.dims.len() != 3 {
            return Err(Error::Format {
                format: "IDX",
                reason: format!("expected rank 3 images, got rank {}", self.dims.len()),
            });
        }
        let (rows, cols) = (self.dims[1], self.dims[2]);
        self.bytes
            .chunks_exact(rows * cols)
            .map(|c| Tensor::new(vec![rows, cols], c.iter().map(|&b| b as f64 / 255.0).collect()))
            .collect()
    }

    pub fn labels(&self) -> Result<&[u8]> {
        if self.dims.len() != 1 {
            return Err(Error::Format {
                format: "IDX",
                reason: format!("expected rank 1 labels, got rank {}", self.dims.len()),
            });
        }
        Ok(&self.bytes)
    }
}

pub fn read_idx<R: Read>(mut r: R) -> Result<IdxFile> {
    let mut all = Vec::new();
    r.read_to_end(&mut all)?;
    if all.len() < 4 {
        return Err(Error::Truncated { format: "IDX", expected: 4, actual: all.len() });
    }
    let magic = u32::from_be_bytes(all[..4].try_into().unwrap());
    if magic != IDX_IMAGES_MAGIC && magic != IDX_LABELS_MAGIC {
        return Err(Error::Format { format: "IDX", reason: format!("unsupported magic {magic:#010x}") });
    }
    let rank = (magic & 0xff) as usize;
    let header = 4 + 4 * rank;
    if all.len() < header {
        return Err(Error::Truncated { format: "IDX", expected: header, actual: all.len() });
    }
    let dims: Vec<usize> =
        (0..rank).map(|k| u32::from_be_bytes(all[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize).collect();
    let expected = header + dims.iter().product::<usize>();
    if all.len() < expected {
        return Err(Error::Truncated { format: "IDX", expected, actual: all.len() });
    }
    if all.len() > expected {
        return Err(Error::Format { format: "IDX", reason: format!("{} trailing bytes", all.len() - expected) });
    }
    all.drain(..header);
    Ok(IdxFile { dims, bytes: all })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxFile> {
    read_idx(BufReader::new(File::open(path)?))
}

pub fn write_idx<W: Write>(idx: &IdxFile, mut w: W) -> Result<()> {
    if idx.dims.len() != 1 && idx.dims.len() != 3 {
        return Err(Error::param("only rank 1 and rank 3 IDX files are supported"));
    }
    if idx.dims.iter().product::<usize>() != idx.bytes.len() {
        return Err(Error::param("IDX payload does not match its dimensions"));
    }
    w.write_all(&idx.magic().to_be_bytes())?;
    for &d in &idx.dims {
        w.write_all(&(d as u32).to_be_bytes())?;
    }
    w.write_all(&idx.bytes)?;
    Ok(())
}

/// Images in `[0, 1]` with their digit labels.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Scalar mean over every pixel of every image.
    pub fn pixel_mean(&self) -> f64 {
        let total: f64 = self.images.iter().map(|x| x.sum()).sum();
        let count: usize = self.images.iter().map(|x| x.len()).sum();
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }

    pub fn take(mut self, n: usize) -> Self {
        self.images.truncate(n);
        self.labels.truncate(n);
        self
    }
}

/// Directory holding the MNIST files: `$LB_DATA_DIR`, else
/// `data/mnist-subset` under the workspace.
pub fn data_dir() -> PathBuf {
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(DEFAULT_DATA_DIR),
    }
}

/// Loads `train-*` or `t10k-*` images and labels from `dir`.
pub fn load_mnist(dir: impl AsRef<Path>, train: bool) -> Result<Dataset> {
    let prefix = if train { "train" } else { "t10k" };
    let dir = dir.as_ref();
    let images = load_idx(dir.join(format!("{prefix}-images-idx3-ubyte")))?.images()?;
    let labels = load_idx(dir.join(format!("{prefix}-labels-idx1-ubyte")))?.labels()?.to_vec();
    if images.len() != labels.len() {
        return Err(Error::Format {
            format: "IDX",
            reason: format!("{} images but {} labels", images.len(), labels.len()),
        });
    }
    Ok(Dataset { images, labels })
}

/// `10 log10(peak^2 / mse)`; `+inf` for identical images.
pub fn psnr(x: &Tensor, reference: &Tensor, peak: f64) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(Error::dims(reference.shape(), x.shape()));
    }
    let mse = x.distance(reference).powi(2) / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Binary PGM (P5); `[0, peak]` maps linearly onto `[0, 255]`, values
/// outside are clamped.
pub fn write_pgm_to<W: Write>(x: &Tensor, peak: f64, mut w: W) -> Result<()> {
    let (h, wd) = crate::tv::image_dims(x)?;
    if !(peak > 0.0) {
        return Err(Error::param("pgm peak must be positive"));
    }
    write!(w, "P5\n{wd} {h}\n255\n")?;
    let bytes: Vec<u8> = x.data().iter().map(|&v| ((v / peak).clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    w.write_all(&bytes)?;
    Ok(())
}

pub fn write_pgm(x: &Tensor, peak: f64, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm_to(x, peak, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Side-by-side montage with a one-pixel gap of value `gap`.
pub fn hstack_images(images: &[&Tensor], gap: f64) -> Result<Tensor> {
    let dims = images.iter().map(|x| crate::tv::image_dims(x)).collect::<Result<Vec<_>>>()?;
    let h = dims.first().ok_or_else(|| Error::param("no images to stack"))?.0;
    if dims.iter().any(|d| d.0 != h) {
        return Err(Error::param("images to stack must share a height"));
    }
    let total_w: usize = dims.iter().map(|d| d.1).sum::<usize>() + images.len() - 1;
    let mut data = vec![gap; h * total_w];
    let mut offset = 0;
    for (img, &(_, w)) in images.iter().zip(&dims) {
        for i in 0..h {
            data[i * total_w + offset..i * total_w + offset + w].copy_from_slice(&img.data()[i * w..(i + 1) * w]);
        }
        offset += w + 1;
    }
    Tensor::new(vec![h, total_w], data)
}

/// Formats a metric for CSV output; infinities become `inf` / `-inf`.
pub fn fmt_metric(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// CSV with a header row; numeric cells go through [`fmt_metric`].
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_csv_rows(&mut w, header, rows)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv_to<W: Write>(out: W, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    write_csv_rows(&mut w, header, rows)?;
    w.flush()?;
    Ok(())
}

/// CSV with a header row and pre-formatted cells.
pub fn write_csv_records(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::param(format!("csv row has {} cells, header has {}", row.len(), header.len())));
        }
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_csv_rows<W: Write>(w: &mut csv::Writer<W>, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    w.write_record(header)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(Error::param(format!("csv row has {} cells, header has {}", row.len(), header.len())));
        }
        w.write_record(row.iter().map(|&v| fmt_metric(v)))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_norm_and_symmetry() {
        let x = circle_phantom(64, 64, 0.25, 1.0).unwrap();
        assert!((x.norm() - 28.07).abs() / 28.07 < 0.15, "{}", x.norm());
        for i in 0..64 {
            for j in 0..64 {
                let v = x.data()[i * 64 + j];
                assert_eq!(v, x.data()[i * 64 + 63 - j]);
                assert_eq!(v, x.data()[(63 - i) * 64 + j]);
            }
        }
        let tv = crate::tv::tv_norm(&x).unwrap();
        assert!(tv > 50.0 && tv < 300.0, "tv {tv}");
    }

    #[test]
    fn tiny_radius_is_empty() {
        let x = circle_phantom(64, 64, 1e-3, 1.0).unwrap();
        assert_eq!(x.sum(), 0.0);
        assert!(circle_phantom(8, 8, 0.5, 1.0).is_err());
        assert!(circle_phantom(0, 8, 0.2, 1.0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let y = Tensor::vector(vec![0.5, 1.0, 2.0]);
        let (n, d) =
            add_noise(&y, &NoiseSpec::new(0.0, 3, true).unwrap(), &ProxPenalty::NonNegIndicator, None).unwrap();
        assert_eq!(n, y);
        assert_eq!(d, 0.0);
        let (n, d) =
            add_noise(&y, &NoiseSpec::new(0.0, 3, true).unwrap(), &ProxPenalty::NonNegIndicator, Some(&y)).unwrap();
        assert_eq!(n, y);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn noise_clipping_and_determinism() {
        let y = Tensor::zeros(&[1000]);
        let spec = NoiseSpec::new(0.5, 7, true).unwrap();
        let (a, _) = add_noise(&y, &spec, &ProxPenalty::NonNegIndicator, None).unwrap();
        let (b, _) = add_noise(&y, &spec, &ProxPenalty::NonNegIndicator, None).unwrap();
        assert_eq!(a, b);
        assert!(a.min() >= 0.0);
    }

    #[test]
    fn noise_seeds_decorrelate() {
        let y = Tensor::zeros(&[10_000]);
        let (a, _) = add_noise(&y, &NoiseSpec::new(1.0, 1, false).unwrap(), &ProxPenalty::Zero, None).unwrap();
        let (b, _) = add_noise(&y, &NoiseSpec::new(1.0, 2, false).unwrap(), &ProxPenalty::Zero, None).unwrap();
        let corr = a.dot(&b) / (a.norm() * b.norm());
        assert!(corr.abs() < 0.1, "{corr}");
    }

    #[test]
    fn delta_sq_matches_half_norm_for_linear_penalty() {
        let y = Tensor::vector(vec![0.1, -0.3, 0.7, 1.2]);
        let spec = NoiseSpec::new(0.2, 4, false).unwrap();
        let (n, d_plain) = add_noise(&y, &spec, &ProxPenalty::Zero, None).unwrap();
        let (_, d_breg) = add_noise(&y, &spec, &ProxPenalty::Zero, Some(&y)).unwrap();
        assert!((d_plain - 0.5 * n.distance(&y).powi(2)).abs() < 1e-15);
        assert!((d_plain - d_breg).abs() < 1e-12);
    }

    #[test]
    fn idx_round_trip_and_labels() {
        let img = IdxFile { dims: vec![2, 3, 2], bytes: (0..12).map(|v| v * 20).collect() };
        let mut buf = Vec::new();
        write_idx(&img, &mut buf).unwrap();
        assert_eq!(&buf[..4], &[0, 0, 8, 3]);
        let back = read_idx(&buf[..]).unwrap();
        assert_eq!(back, img);
        let ims = back.images().unwrap();
        assert_eq!(ims.len(), 2);
        assert_eq!(ims[0].shape(), &[3, 2]);
        assert_eq!(ims[1].data()[0], 120.0 / 255.0);

        let mut labels = vec![0, 0, 8, 1, 0, 0, 0, 10];
        labels.extend(0..10u8);
        let l = read_idx(&labels[..]).unwrap();
        assert_eq!(l.labels().unwrap().len(), 10);
    }

    #[test]
    fn idx_truncation_and_magic() {
        let mut buf = vec![0, 0, 8, 1, 0, 0, 0, 10];
        buf.extend(0..7u8);
        match read_idx(&buf[..]) {
            Err(Error::Truncated { expected, actual, .. }) => assert_eq!((expected, actual), (18, 15)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_idx(&[0u8, 0, 9, 1, 0, 0, 0, 0][..]), Err(Error::Format { .. })));
        assert!(matches!(read_idx(&[0u8, 0][..]), Err(Error::Truncated { .. })));
    }

    #[test]
    fn psnr_examples() {
        let a = Tensor::new(vec![2, 2], vec![0.0, 0.5, 1.0, 0.25]).unwrap();
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&b, &a, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let c = a.map(|v| v + 1.0);
        assert!(psnr(&c, &a, 1.0).unwrap().abs() < 1e-12);
        assert_eq!(psnr(&b, &a, 1.0).unwrap(), psnr(&a, &b, 1.0).unwrap());
        let shifted = psnr(&b.map(|v| v + 3.0), &a.map(|v| v + 3.0), 1.0).unwrap();
        assert!((shifted - 20.0).abs() < 1e-9);
        assert!(psnr(&a, &Tensor::zeros(&[3]), 1.0).is_err());
    }

    #[test]
    fn pgm_layout() {
        let x = Tensor::new(vec![2, 3], vec![0.0, 0.5, 1.0, 2.0, -1.0, 0.25]).unwrap();
        let mut buf = Vec::new();
        write_pgm_to(&x, 1.0, &mut buf).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(&buf[header.len()..], &[0, 128, 255, 255, 0, 64]);
    }

    #[test]
    fn csv_inf_sentinel() {
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &["a", "b"], &[vec![1.5, f64::INFINITY]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1.5,inf\n");
        assert!(write_csv_to(Vec::new(), &["a"], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn montage_shape() {
        let a = Tensor::full(&[2, 2], 1.0);
        let m = hstack_images(&[&a, &a, &a], 0.0).unwrap();
        assert_eq!(m.shape(), &[2, 8]);
        assert_eq!(m.data()[2], 0.0);
        assert_eq!(m.sum(), 12.0);
    }
}
