//! Affine maps `x -> A x + b` with their adjoints.
//!
//! Dense layers operate on any tensor with the right number of entries, so an
//! image-shaped input can be fed to a dense layer without reshaping. The
//! adjoint always returns a tensor in the operator's `input_shape`.
//!
//! Convolution kernels follow the usual layouts: `[out, in, kh, kw]` for
//! `Conv2d` and `[in, out, kh, kw]` for `ConvTranspose2d`. A transposed
//! convolution is exactly the adjoint of the `Conv2d` sharing its kernel.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

pub const DEFAULT_POWER_ITERS: usize = 100;
pub const DEFAULT_POWER_SEED: u64 = 0;

#[derive(Clone, Debug, PartialEq)]
pub enum LinearOperator {
    DenseAffine { weight: Tensor, bias: Tensor, input_shape: Vec<usize> },
    Conv2d(ConvSpec),
    ConvTranspose2d(ConvSpec),
}

/// Geometry and parameters shared by both convolution kinds.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub kernel: Tensor,
    pub bias: Tensor,
    pub stride: usize,
    pub padding: usize,
    /// `[channels, height, width]` of the operator input.
    pub input_shape: [usize; 3],
}

/// Low-level geometry of a `Conv2d` (the transposed kind reuses it with
/// input/output swapped).
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    out_c: usize,
    in_c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

/// Output length of a strided, zero-padded convolution.
pub fn conv_output_len(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output length of the transposed convolution.
pub fn conv_transpose_output_len(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || n == 0 {
        return None;
    }
    ((n - 1) * stride + k).checked_sub(2 * pad).filter(|&v| v > 0)
}

impl LinearOperator {
    pub fn dense(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 {
            return Err(Error::param("dense weight must be 2-D"));
        }
        let (m, n) = (weight.shape()[0], weight.shape()[1]);
        if bias.shape() != [m] {
            return Err(Error::dims(&[m], bias.shape()));
        }
        Ok(LinearOperator::DenseAffine { weight, bias, input_shape: vec![n] })
    }

    /// Reinterprets the dense input as `shape` (same number of entries).
    pub fn with_input_shape(self, shape: &[usize]) -> Result<Self> {
        match self {
            LinearOperator::DenseAffine { weight, bias, .. } => {
                let n = weight.shape()[1];
                if shape.iter().product::<usize>() != n {
                    return Err(Error::dims(&[n], shape));
                }
                Ok(LinearOperator::DenseAffine { weight, bias, input_shape: shape.to_vec() })
            }
            _ => Err(Error::param("only dense operators can be reshaped")),
        }
    }

    pub fn conv2d(
        kernel: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
        input_hw: (usize, usize),
    ) -> Result<Self> {
        let spec = ConvSpec::checked(kernel, bias, stride, padding, input_hw, false)?;
        Ok(LinearOperator::Conv2d(spec))
    }

    pub fn conv_transpose2d(
        kernel: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
        input_hw: (usize, usize),
    ) -> Result<Self> {
        let spec = ConvSpec::checked(kernel, bias, stride, padding, input_hw, true)?;
        Ok(LinearOperator::ConvTranspose2d(spec))
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            LinearOperator::DenseAffine { input_shape, .. } => input_shape.clone(),
            LinearOperator::Conv2d(s) | LinearOperator::ConvTranspose2d(s) => s.input_shape.to_vec(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            LinearOperator::DenseAffine { weight, .. } => vec![weight.shape()[0]],
            LinearOperator::Conv2d(s) => {
                let g = s.geom(false);
                vec![g.out_c, g.out_h, g.out_w]
            }
            LinearOperator::ConvTranspose2d(s) => {
                let g = s.geom(true);
                vec![g.in_c, g.in_h, g.in_w]
            }
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }

    pub fn output_len(&self) -> usize {
        self.output_shape().iter().product()
    }

    pub fn weight(&self) -> &Tensor {
        match self {
            LinearOperator::DenseAffine { weight, .. } => weight,
            LinearOperator::Conv2d(s) | LinearOperator::ConvTranspose2d(s) => &s.kernel,
        }
    }

    pub fn bias(&self) -> &Tensor {
        match self {
            LinearOperator::DenseAffine { bias, .. } => bias,
            LinearOperator::Conv2d(s) | LinearOperator::ConvTranspose2d(s) => &s.bias,
        }
    }

    pub fn params_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        match self {
            LinearOperator::DenseAffine { weight, bias, .. } => (weight, bias),
            LinearOperator::Conv2d(s) | LinearOperator::ConvTranspose2d(s) => (&mut s.kernel, &mut s.bias),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.input_len() {
            return Err(Error::dims(&self.input_shape(), x.shape()));
        }
        Ok(())
    }

    fn check_output(&self, u: &Tensor) -> Result<()> {
        if u.len() != self.output_len() {
            return Err(Error::dims(&self.output_shape(), u.shape()));
        }
        Ok(())
    }

    /// `A x + b`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = self.apply_linear(x)?;
        self.add_bias(&mut out);
        Ok(out)
    }

    /// `A x`, the bias-free part.
    pub fn apply_linear(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let out = match self {
            LinearOperator::DenseAffine { weight, .. } => {
                let (m, n) = (weight.shape()[0], weight.shape()[1]);
                let w = weight.data();
                let xs = x.data();
                let data = (0..m).map(|i| dot(&w[i * n..(i + 1) * n], xs)).collect();
                Tensor::from_parts(vec![m], data)
            }
            LinearOperator::Conv2d(s) => {
                let g = s.geom(false);
                let data = conv_forward(&g, s.kernel.data(), x.data());
                Tensor::from_parts(vec![g.out_c, g.out_h, g.out_w], data)
            }
            LinearOperator::ConvTranspose2d(s) => {
                let g = s.geom(true);
                let data = conv_adjoint(&g, s.kernel.data(), x.data());
                Tensor::from_parts(vec![g.in_c, g.in_h, g.in_w], data)
            }
        };
        Ok(out)
    }

    /// `A^T u` (bias ignored), returned in `input_shape`.
    pub fn adjoint_apply(&self, u: &Tensor) -> Result<Tensor> {
        self.check_output(u)?;
        let out = match self {
            LinearOperator::DenseAffine { weight, input_shape, .. } => {
                let (m, n) = (weight.shape()[0], weight.shape()[1]);
                let w = weight.data();
                let mut acc = vec![0.0; n];
                for (i, &ui) in u.data().iter().enumerate().take(m) {
                    if ui != 0.0 {
                        axpy(&mut acc, ui, &w[i * n..(i + 1) * n]);
                    }
                }
                Tensor::from_parts(input_shape.clone(), acc)
            }
            LinearOperator::Conv2d(s) => {
                let g = s.geom(false);
                let data = conv_adjoint(&g, s.kernel.data(), u.data());
                Tensor::from_parts(s.input_shape.to_vec(), data)
            }
            LinearOperator::ConvTranspose2d(s) => {
                let g = s.geom(true);
                let data = conv_forward(&g, s.kernel.data(), u.data());
                Tensor::from_parts(s.input_shape.to_vec(), data)
            }
        };
        Ok(out)
    }

    fn add_bias(&self, out: &mut Tensor) {
        match self {
            LinearOperator::DenseAffine { bias, .. } => {
                for (o, b) in out.data_mut().iter_mut().zip(bias.data()) {
                    *o += b;
                }
            }
            LinearOperator::Conv2d(_) | LinearOperator::ConvTranspose2d(_) => {
                let shape = self.output_shape();
                let plane = shape[1] * shape[2];
                let bias = self.bias().data();
                for (c, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += bias[c]);
                }
            }
        }
    }

    /// Gradient of `<u, forward(x)>` with respect to the weights and bias.
    pub fn param_grad(&self, x: &Tensor, u: &Tensor) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        self.check_output(u)?;
        match self {
            LinearOperator::DenseAffine { weight, bias, .. } => {
                let (m, n) = (weight.shape()[0], weight.shape()[1]);
                let mut dw = vec![0.0; m * n];
                for (i, &ui) in u.data().iter().enumerate() {
                    if ui != 0.0 {
                        axpy(&mut dw[i * n..(i + 1) * n], ui, x.data());
                    }
                }
                Ok((Tensor::from_parts(vec![m, n], dw), Tensor::from_parts(bias.shape().to_vec(), u.data().to_vec())))
            }
            LinearOperator::Conv2d(s) => {
                let g = s.geom(false);
                let dk = conv_kernel_grad(&g, x.data(), u.data());
                let db = channel_sums(u.data(), g.out_c);
                Ok((Tensor::from_parts(s.kernel.shape().to_vec(), dk), Tensor::from_parts(vec![g.out_c], db)))
            }
            LinearOperator::ConvTranspose2d(s) => {
                // <u, C^T x> = <C u, x>: the roles of input and output swap.
                let g = s.geom(true);
                let dk = conv_kernel_grad(&g, u.data(), x.data());
                let db = channel_sums(u.data(), g.in_c);
                Ok((Tensor::from_parts(s.kernel.shape().to_vec(), dk), Tensor::from_parts(vec![g.in_c], db)))
            }
        }
    }

    /// Power-iteration estimate of the squared spectral norm of the linear
    /// part, from a fixed-seed random start.
    pub fn operator_norm_sq(&self, iters: usize) -> Result<f64> {
        self.operator_norm_sq_seeded(iters, DEFAULT_POWER_SEED)
    }

    pub fn operator_norm_sq_seeded(&self, iters: usize, seed: u64) -> Result<f64> {
        if iters == 0 {
            return Err(Error::param("power iteration needs at least one iteration"));
        }
        let mut rng = SeededRng::new(seed);
        let shape = self.input_shape();
        let mut v = Tensor::from_parts(shape.clone(), rng.normal_vec(self.input_len(), 1.0));
        let nv = v.norm();
        v = v.scale(1.0 / nv);
        let mut best: f64 = 0.0;
        for _ in 0..iters {
            let av = self.apply_linear(&v)?;
            best = best.max(av.norm_sq());
            let w = self.adjoint_apply(&av)?;
            let nw = w.norm();
            if nw == 0.0 {
                break;
            }
            v = w.scale(1.0 / nw);
        }
        Ok(best)
    }
}

impl ConvSpec {
    fn checked(
        kernel: Tensor,
        bias: Tensor,
        stride: usize,
        padding: usize,
        input_hw: (usize, usize),
        transposed: bool,
    ) -> Result<Self> {
        if kernel.rank() != 4 {
            return Err(Error::param("convolution kernel must be 4-D"));
        }
        if stride == 0 {
            return Err(Error::param("stride must be positive"));
        }
        let ks = kernel.shape();
        // Conv2d: [out, in, kh, kw]; ConvTranspose2d: [in, out, kh, kw].
        let (in_c, out_c) = if transposed { (ks[0], ks[1]) } else { (ks[1], ks[0]) };
        if bias.shape() != [out_c] {
            return Err(Error::dims(&[out_c], bias.shape()));
        }
        let (h, w) = input_hw;
        let ok = if transposed {
            conv_transpose_output_len(h, ks[2], stride, padding).is_some()
                && conv_transpose_output_len(w, ks[3], stride, padding).is_some()
        } else {
            conv_output_len(h, ks[2], stride, padding).is_some() && conv_output_len(w, ks[3], stride, padding).is_some()
        };
        if !ok || h == 0 || w == 0 {
            return Err(Error::param(format!(
                "kernel {ks:?} with stride {stride}, padding {padding} does not fit a {h}x{w} input"
            )));
        }
        Ok(ConvSpec { kernel, bias, stride, padding, input_shape: [in_c, h, w] })
    }

    /// Geometry of the underlying `Conv2d`. For the transposed kind, that
    /// conv maps the transposed output back to the transposed input.
    fn geom(&self, transposed: bool) -> ConvGeom {
        let ks = self.kernel.shape();
        let (kh, kw) = (ks[2], ks[3]);
        let [c, h, w] = self.input_shape;
        if transposed {
            let oh = conv_transpose_output_len(h, kh, self.stride, self.padding).unwrap();
            let ow = conv_transpose_output_len(w, kw, self.stride, self.padding).unwrap();
            ConvGeom {
                out_c: c,
                in_c: ks[1],
                kh,
                kw,
                stride: self.stride,
                pad: self.padding,
                in_h: oh,
                in_w: ow,
                out_h: h,
                out_w: w,
            }
        } else {
            ConvGeom {
                out_c: ks[0],
                in_c: c,
                kh,
                kw,
                stride: self.stride,
                pad: self.padding,
                in_h: h,
                in_w: w,
                out_h: conv_output_len(h, kh, self.stride, self.padding).unwrap(),
                out_w: conv_output_len(w, kw, self.stride, self.padding).unwrap(),
            }
        }
    }
}

/// Input coordinate hit by output position `o` and kernel tap `k`, if inside.
#[inline]
fn src_index(o: usize, k: usize, stride: usize, pad: usize, n: usize) -> Option<usize> {
    (o * stride + k).checked_sub(pad).filter(|&i| i < n)
}

fn conv_forward(g: &ConvGeom, kernel: &[f64], input: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.out_c * g.out_h * g.out_w];
    for o in 0..g.out_c {
        for c in 0..g.in_c {
            let kbase = (o * g.in_c + c) * g.kh * g.kw;
            let ibase = c * g.in_h * g.in_w;
            for y in 0..g.out_h {
                for x in 0..g.out_w {
                    let mut acc = 0.0;
                    for ky in 0..g.kh {
                        let Some(iy) = src_index(y, ky, g.stride, g.pad, g.in_h) else { continue };
                        for kx in 0..g.kw {
                            let Some(ix) = src_index(x, kx, g.stride, g.pad, g.in_w) else { continue };
                            acc += kernel[kbase + ky * g.kw + kx] * input[ibase + iy * g.in_w + ix];
                        }
                    }
                    out[(o * g.out_h + y) * g.out_w + x] += acc;
                }
            }
        }
    }
    out
}

fn conv_adjoint(g: &ConvGeom, kernel: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; g.in_c * g.in_h * g.in_w];
    for o in 0..g.out_c {
        for c in 0..g.in_c {
            let kbase = (o * g.in_c + c) * g.kh * g.kw;
            let ibase = c * g.in_h * g.in_w;
            for y in 0..g.out_h {
                for x in 0..g.out_w {
                    let u = grad_out[(o * g.out_h + y) * g.out_w + x];
                    if u == 0.0 {
                        continue;
                    }
                    for ky in 0..g.kh {
                        let Some(iy) = src_index(y, ky, g.stride, g.pad, g.in_h) else { continue };
                        for kx in 0..g.kw {
                            let Some(ix) = src_index(x, kx, g.stride, g.pad, g.in_w) else { continue };
                            out[ibase + iy * g.in_w + ix] += kernel[kbase + ky * g.kw + kx] * u;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_kernel_grad(g: &ConvGeom, input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let mut dk = vec![0.0; g.out_c * g.in_c * g.kh * g.kw];
    for o in 0..g.out_c {
        for c in 0..g.in_c {
            let kbase = (o * g.in_c + c) * g.kh * g.kw;
            let ibase = c * g.in_h * g.in_w;
            for y in 0..g.out_h {
                for x in 0..g.out_w {
                    let u = grad_out[(o * g.out_h + y) * g.out_w + x];
                    if u == 0.0 {
                        continue;
                    }
                    for ky in 0..g.kh {
                        let Some(iy) = src_index(y, ky, g.stride, g.pad, g.in_h) else { continue };
                        for kx in 0..g.kw {
                            let Some(ix) = src_index(x, kx, g.stride, g.pad, g.in_w) else { continue };
                            dk[kbase + ky * g.kw + kx] += u * input[ibase + iy * g.in_w + ix];
                        }
                    }
                }
            }
        }
    }
    dk
}

fn channel_sums(data: &[f64], channels: usize) -> Vec<f64> {
    let plane = data.len() / channels;
    data.chunks(plane).map(|c| c.iter().sum()).collect()
}

/// Dot product with independent partial sums so the loop vectorises.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let (ac, bc) = (&a[i * 8..i * 8 + 8], &b[i * 8..i * 8 + 8]);
        for k in 0..8 {
            acc[k] += ac[k] * bc[k];
        }
    }
    let mut s: f64 = acc.iter().sum();
    for i in chunks * 8..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), SeededRng::new(seed).normal_vec(n, 1.0)).unwrap()
    }

    /// Dense matrix of a zero-padded strided conv, built straight from the
    /// index formula `out[o,y,x] = sum K[o,c,ky,kx] in[c, y*s+ky-p, x*s+kx-p]`.
    fn conv_matrix(k: &Tensor, stride: usize, pad: usize, h: usize, w: usize) -> (Vec<Vec<f64>>, usize, usize) {
        let ks = k.shape();
        let (co, ci, kh, kw) = (ks[0], ks[1], ks[2], ks[3]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut m = vec![vec![0.0; ci * h * w]; co * oh * ow];
        for o in 0..co {
            for y in 0..oh {
                for x in 0..ow {
                    let row = &mut m[o * oh * ow + y * ow + x];
                    for c in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (x * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    row[c * h * w + iy as usize * w + ix as usize] +=
                                        k.data()[((o * ci + c) * kh + ky) * kw + kx];
                                }
                            }
                        }
                    }
                }
            }
        }
        (m, oh, ow)
    }

    #[test]
    fn dense_identity_forward() {
        let op =
            LinearOperator::dense(Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]), Tensor::vector(vec![0.0, 0.0]))
                .unwrap();
        let y = op.forward(&Tensor::vector(vec![3.0, 4.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn dense_hand_arithmetic() {
        let op = LinearOperator::dense(Tensor::matrix(&[vec![1.0, 2.0]]), Tensor::vector(vec![1.0])).unwrap();
        assert_eq!(op.forward(&Tensor::vector(vec![1.0, 1.0])).unwrap().data(), &[4.0]);
        assert_eq!(op.adjoint_apply(&Tensor::vector(vec![1.0])).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn dense_shape_mismatch() {
        let op = LinearOperator::dense(Tensor::matrix(&[vec![1.0, 2.0]]), Tensor::vector(vec![1.0])).unwrap();
        assert!(matches!(op.forward(&Tensor::vector(vec![1.0; 3])), Err(Error::Dimension { .. })));
        assert!(matches!(op.adjoint_apply(&Tensor::vector(vec![1.0; 2])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn dense_adjoint_identity_random() {
        let op = LinearOperator::dense(rand_tensor(&[5, 7], 1), rand_tensor(&[5], 2)).unwrap();
        let x = rand_tensor(&[7], 3);
        let u = rand_tensor(&[5], 4);
        let lhs = op.apply_linear(&x).unwrap().dot(&u);
        let rhs = x.dot(&op.adjoint_apply(&u).unwrap());
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn conv_stride2_matches_dense_materialisation() {
        let k = rand_tensor(&[2, 1, 3, 3], 5);
        let op = LinearOperator::conv2d(k.clone(), Tensor::vector(vec![0.5, -0.25]), 2, 0, (4, 4)).unwrap();
        assert_eq!(op.output_shape(), vec![2, 1, 1]);
        let (m, _, _) = conv_matrix(&k, 2, 0, 4, 4);
        let x = rand_tensor(&[1, 4, 4], 6);
        let y = op.forward(&x).unwrap();
        for (r, row) in m.iter().enumerate() {
            let expect: f64 = row.iter().zip(x.data()).map(|(a, b)| a * b).sum::<f64>() + [0.5, -0.25][r];
            assert!((y.data()[r] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_padded_forward_and_adjoint_match_dense() {
        let k = rand_tensor(&[3, 2, 4, 4], 7);
        let op = LinearOperator::conv2d(k.clone(), Tensor::zeros(&[3]), 2, 1, (6, 6)).unwrap();
        let (m, oh, ow) = conv_matrix(&k, 2, 1, 6, 6);
        assert_eq!(op.output_shape(), vec![3, oh, ow]);
        let u = rand_tensor(&[3, oh, ow], 8);
        let at_u = op.adjoint_apply(&u).unwrap();
        for j in 0..2 * 36 {
            let expect: f64 = m.iter().zip(u.data()).map(|(row, ui)| row[j] * ui).sum();
            assert!((at_u.data()[j] - expect).abs() < 1e-12);
        }
        let x = rand_tensor(&[2, 6, 6], 9);
        let y = op.forward(&x).unwrap();
        for (r, row) in m.iter().enumerate() {
            let expect: f64 = row.iter().zip(x.data()).map(|(a, b)| a * b).sum();
            assert!((y.data()[r] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_adjoint_4x4_matches_dense_transpose() {
        let k = rand_tensor(&[1, 1, 3, 3], 10);
        let op = LinearOperator::conv2d(k.clone(), Tensor::zeros(&[1]), 1, 0, (4, 4)).unwrap();
        let (m, oh, ow) = conv_matrix(&k, 1, 0, 4, 4);
        let u = rand_tensor(&[1, oh, ow], 11);
        let at_u = op.adjoint_apply(&u).unwrap();
        for j in 0..16 {
            let expect: f64 = m.iter().zip(u.data()).map(|(row, ui)| row[j] * ui).sum();
            assert!((at_u.data()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn mnist_shape_chain() {
        let c1 = LinearOperator::conv2d(Tensor::zeros(&[8, 1, 4, 4]), Tensor::zeros(&[8]), 2, 1, (28, 28)).unwrap();
        assert_eq!(c1.output_shape(), vec![8, 14, 14]);
        let c2 = LinearOperator::conv2d(Tensor::zeros(&[16, 8, 4, 4]), Tensor::zeros(&[16]), 2, 1, (14, 14)).unwrap();
        assert_eq!(c2.output_shape(), vec![16, 7, 7]);
        let t1 =
            LinearOperator::conv_transpose2d(Tensor::zeros(&[16, 8, 4, 4]), Tensor::zeros(&[8]), 2, 1, (7, 7)).unwrap();
        assert_eq!(t1.output_shape(), vec![8, 14, 14]);
        let t2 = LinearOperator::conv_transpose2d(Tensor::zeros(&[8, 1, 4, 4]), Tensor::zeros(&[1]), 2, 1, (14, 14))
            .unwrap();
        assert_eq!(t2.output_shape(), vec![1, 28, 28]);
    }

    #[test]
    fn shape_round_trip_formulas() {
        for n in 1..40 {
            for k in 1..6 {
                for s in 1..4 {
                    for p in 0..3 {
                        if let Some(o) = conv_output_len(n, k, s, p) {
                            // The transpose recovers n up to the stride remainder
                            // (nothing is left when n is below the stride).
                            match conv_transpose_output_len(o, k, s, p) {
                                Some(back) => assert!(back <= n && n - back < s, "n={n} k={k} s={s} p={p}"),
                                None => assert!(n < s),
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn power_iteration_diag() {
        let op = LinearOperator::dense(Tensor::matrix(&[vec![3.0, 0.0], vec![0.0, 1.0]]), Tensor::zeros(&[2])).unwrap();
        let est = op.operator_norm_sq(100).unwrap();
        assert!((est - 9.0).abs() <= 0.09);
        let id = LinearOperator::dense(Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]), Tensor::zeros(&[2])).unwrap();
        assert!((id.operator_norm_sq(10).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_zero_operator() {
        let op = LinearOperator::dense(Tensor::zeros(&[3, 4]), Tensor::zeros(&[3])).unwrap();
        assert_eq!(op.operator_norm_sq(20).unwrap(), 0.0);
        assert!(op.operator_norm_sq(0).is_err());
    }

    #[test]
    fn power_iteration_monotone_in_iters() {
        let op = LinearOperator::dense(rand_tensor(&[12, 9], 12), Tensor::zeros(&[12])).unwrap();
        let mut prev = 0.0;
        for iters in 1..40 {
            let est = op.operator_norm_sq(iters).unwrap();
            assert!(est >= prev);
            prev = est;
        }
    }
}
