//! Discrete isotropic total variation.
//!
//! Forward differences with a zero row/column at the far boundary:
//! `(grad x)[i,j,0] = x[i+1,j] - x[i,j]` for `i < H-1` and
//! `(grad x)[i,j,1] = x[i,j+1] - x[i,j]` for `j < W-1`. The divergence is
//! defined as `-grad^T`, so `<grad x, z> = -<x, div z>` exactly.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Bound on `|grad|^2` for this stencil.
pub const GRAD_NORM_SQ_BOUND: f64 = 8.0;

/// Per-pixel 2-vectors stored as an `H x W x 2` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct DualField(Tensor);

impl DualField {
    pub fn zeros(h: usize, w: usize) -> Self {
        DualField(Tensor::zeros(&[h, w, 2]))
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        if t.rank() != 3 || t.shape()[2] != 2 {
            return Err(Error::param(format!("dual field must be HxWx2, got {:?}", t.shape())));
        }
        Ok(DualField(t))
    }

    pub fn height(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Largest per-pixel Euclidean norm.
    pub fn max_pixel_norm(&self) -> f64 {
        self.0.data().chunks_exact(2).map(|p| p[0].hypot(p[1])).fold(0.0, f64::max)
    }
}

/// Spatial dimensions of an image tensor: `H x W` or `1 x H x W`.
pub fn image_dims(x: &Tensor) -> Result<(usize, usize)> {
    match x.shape() {
        [h, w] => Ok((*h, *w)),
        [1, h, w] => Ok((*h, *w)),
        s => Err(Error::param(format!("expected a 2-D image, got shape {s:?}"))),
    }
}

pub(crate) fn grad_into(x: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let v = x[k];
            out[2 * k] = if i + 1 < h { x[k + w] - v } else { 0.0 };
            out[2 * k + 1] = if j + 1 < w { x[k + 1] - v } else { 0.0 };
        }
    }
}

pub(crate) fn div_into(z: &[f64], h: usize, w: usize, out: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let mut d = 0.0;
            if i + 1 < h {
                d += z[2 * k];
            }
            if i > 0 {
                d -= z[2 * (k - w)];
            }
            if j + 1 < w {
                d += z[2 * k + 1];
            }
            if j > 0 {
                d -= z[2 * (k - 1) + 1];
            }
            out[k] = d;
        }
    }
}

pub(crate) fn tv_slice(x: &[f64], h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let gv = if i + 1 < h { x[k + w] - x[k] } else { 0.0 };
            let gh = if j + 1 < w { x[k + 1] - x[k] } else { 0.0 };
            total += gv.hypot(gh);
        }
    }
    total
}

pub(crate) fn project_in_place(z: &mut [f64]) {
    for p in z.chunks_exact_mut(2) {
        let n = p[0].hypot(p[1]);
        if n > 1.0 {
            p[0] /= n;
            p[1] /= n;
        }
    }
}

pub fn grad_image(x: &Tensor) -> Result<DualField> {
    let (h, w) = image_dims(x)?;
    let mut out = vec![0.0; h * w * 2];
    grad_into(x.data(), h, w, &mut out);
    Ok(DualField(Tensor::from_parts(vec![h, w, 2], out)))
}

/// `div = -grad^T`, returned as an `H x W` tensor.
pub fn div_field(z: &DualField) -> Tensor {
    let (h, w) = (z.height(), z.width());
    let mut out = vec![0.0; h * w];
    div_into(z.0.data(), h, w, &mut out);
    Tensor::from_parts(vec![h, w], out)
}

/// Isotropic TV seminorm `sum_ij |(grad x)_ij|_2`.
pub fn tv_norm(x: &Tensor) -> Result<f64> {
    let (h, w) = image_dims(x)?;
    Ok(tv_slice(x.data(), h, w))
}

/// Per-pixel projection onto the unit Euclidean ball, `w / max(1, |w|)`.
pub fn project_dual_ball(z: &DualField) -> DualField {
    let mut t = z.0.clone();
    project_in_place(t.data_mut());
    DualField(t)
}
