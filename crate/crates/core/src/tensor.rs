//! Dense row-major tensors and the `LBTF` binary format.
//!
//! `LBTF` layout (all little-endian): magic `LBTF`, `u32` rank, `rank` x `u64`
//! dims, then the row-major `f64` payload.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const LBTF_MAGIC: &[u8; 4] = b"LBTF";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that the shape matches the payload and that
    /// every entry is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::param(format!("shape {shape:?} has a zero dimension")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dims(&shape, &[data.len()]));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("tensor contains non-finite entries"));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    /// A 1-D tensor. Panics on an empty vector.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(!data.is_empty(), "empty vector");
        Self { shape: vec![data.len()], data }
    }

    /// A 2-D tensor from rows of equal length. Panics on ragged input.
    pub fn matrix(rows: &[Vec<f64>]) -> Self {
        let cols = rows[0].len();
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flatten().copied().collect();
        Self { shape: vec![rows.len(), cols], data }
    }

    /// Unchecked constructor for internal hot paths where the shape is known
    /// to match.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dims(shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dims(&self.shape, &other.shape));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        debug_assert_eq!(self.len(), other.len());
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Tensor::from_parts(self.shape.clone(), data)
    }

    pub fn add(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| s * v)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &Tensor) {
        debug_assert_eq!(self.len(), x.len());
        for (s, v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
    }

    pub fn distance(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    pub fn write_lbtf<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(LBTF_MAGIC)?;
        w.write_all(&(self.shape.len() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_lbtf<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact_or(&mut r, &mut magic, 4)?;
        if &magic != LBTF_MAGIC {
            return Err(Error::Format { format: "LBTF", reason: format!("bad magic {magic:?}") });
        }
        let mut u32buf = [0u8; 4];
        read_exact_or(&mut r, &mut u32buf, 4)?;
        let rank = u32::from_le_bytes(u32buf) as usize;
        if rank == 0 || rank > 16 {
            return Err(Error::Format { format: "LBTF", reason: format!("unsupported rank {rank}") });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut u64buf = [0u8; 8];
            read_exact_or(&mut r, &mut u64buf, 8)?;
            shape.push(u64::from_le_bytes(u64buf) as usize);
        }
        let n: usize = shape.iter().product();
        let mut payload = vec![0u8; n * 8];
        read_exact_or(&mut r, &mut payload, n * 8)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::new(shape, data)
    }
}

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], expected: usize) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => {
                return Err(Error::Truncated { format: "LBTF", expected, actual: filled });
            }
            n => filled += n,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
    }

    #[test]
    fn lbtf_header_layout() {
        let t = Tensor::new(vec![1, 2], vec![1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        t.write_lbtf(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"LBTF");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[16..24].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), -2.5);
        assert_eq!(buf.len(), 40);
    }

    #[test]
    fn lbtf_truncated() {
        let t = Tensor::zeros(&[3, 3]);
        let mut buf = Vec::new();
        t.write_lbtf(&mut buf).unwrap();
        buf.truncate(buf.len() - 5);
        match Tensor::read_lbtf(&buf[..]) {
            Err(Error::Truncated { expected, actual, .. }) => {
                assert_eq!(expected, 72);
                assert_eq!(actual, 67);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn lbtf_round_trip_is_bit_exact(
            shape in proptest::collection::vec(1usize..5, 1..4),
            seed in any::<u64>(),
        ) {
            let n: usize = shape.iter().product();
            let data = crate::rng::SeededRng::new(seed).normal_vec(n, 1e3);
            let t = Tensor::new(shape, data).unwrap();
            let mut buf = Vec::new();
            t.write_lbtf(&mut buf).unwrap();
            let back = Tensor::read_lbtf(&buf[..]).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            let same = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
        }
    }
}
