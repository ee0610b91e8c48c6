//! Plain SGD training of the autoencoders whose encoders get inverted.
//!
//! The loss is `L = (1/n) sum_i |D(E(x_i)) - t_i|^2` over a batch of `n`
//! samples; reported MSE values are per pixel, `L / d`.

use crate::error::{Error, Result};
use crate::network::{Layer, Network};
use crate::operator::LinearOperator;
use crate::prox::ProxPenalty;
use crate::rng::SeededRng;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub encoder: Network,
    pub decoder: Network,
    pub initial_mse: f64,
    pub final_mse: f64,
    /// Mean per-pixel error over each epoch's batches, measured before each
    /// batch update.
    pub epoch_mse: Vec<f64>,
}

/// Per-layer `(dW, db)` in order: encoder layers, then decoder layers.
pub type Gradients = Vec<(Tensor, Tensor)>;

/// Loss and exact gradients of `L` for one batch by reverse accumulation.
/// The activation derivative at a kink is taken as zero.
pub fn backprop_mse(
    encoder: &Network,
    decoder: &Network,
    inputs: &[Tensor],
    targets: &[Tensor],
) -> Result<(f64, Gradients)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::param("batch needs matching, non-empty inputs and targets"));
    }
    let layers: Vec<&Layer> = encoder.layers().iter().chain(decoder.layers()).collect();
    if encoder.layers().last().unwrap().op.output_len() != decoder.layers()[0].op.input_len() {
        return Err(Error::dims(&decoder.input_shape(), &encoder.output_shape()));
    }
    let mut grads: Gradients =
        layers.iter().map(|l| (Tensor::zeros(l.op.weight().shape()), Tensor::zeros(l.op.bias().shape()))).collect();
    let n = inputs.len() as f64;
    let mut loss = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let mut acts = Vec::with_capacity(layers.len() + 1);
        let mut pres = Vec::with_capacity(layers.len());
        acts.push(x.clone());
        for layer in &layers {
            let z = layer.op.forward(acts.last().unwrap())?;
            let a = layer.penalty.prox(&z);
            pres.push(z);
            acts.push(a);
        }
        let out = acts.last().unwrap();
        if out.len() != t.len() {
            return Err(Error::dims(out.shape(), t.shape()));
        }
        let mut delta =
            Tensor::new(out.shape().to_vec(), out.data().iter().zip(t.data()).map(|(o, t)| o - t).collect())?;
        loss += delta.norm_sq() / n;
        delta = delta.scale(2.0 / n);
        for l in (0..layers.len()).rev() {
            let dz = delta.zip_map(&layers[l].penalty.prox_derivative(&pres[l]), |d, s| d * s);
            let (dw, db) = layers[l].op.param_grad(&acts[l], &dz)?;
            grads[l].0.axpy(1.0, &dw);
            grads[l].1.axpy(1.0, &db);
            if l > 0 {
                delta = layers[l].op.adjoint_apply(&dz)?;
            }
        }
    }
    Ok((loss, grads))
}

/// Mean per-pixel reconstruction error over a data set.
pub fn reconstruction_mse(encoder: &Network, decoder: &Network, inputs: &[Tensor], targets: &[Tensor]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, t) in inputs.iter().zip(targets) {
        let out = decoder.net_forward(&encoder.net_forward(x)?)?;
        total += out.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += t.len();
    }
    if count == 0 {
        return Err(Error::param("empty data set"));
    }
    Ok(total / count as f64)
}

/// Mini-batch SGD on `(encoder, decoder)`, reconstructing `data` itself.
pub fn train_autoencoder(
    encoder: Network,
    decoder: Network,
    data: &[Tensor],
    cfg: &TrainConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::param("cannot train on an empty data set"));
    }
    let (mut encoder, mut decoder) = (encoder, decoder);
    let initial_mse = reconstruction_mse(&encoder, &decoder, data, data)?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let pixels = data[0].len() as f64;
    let mut epoch_mse = Vec::with_capacity(cfg.epochs);
    let n_enc = encoder.len();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Tensor> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grads) = backprop_mse(&encoder, &decoder, &batch, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { iteration: epoch_mse.len() + 1 });
            }
            sum += loss / pixels;
            batches += 1;
            if cfg.learning_rate > 0.0 {
                for (k, (dw, db)) in grads.iter().enumerate() {
                    let layer =
                        if k < n_enc { &mut encoder.layers_mut()[k] } else { &mut decoder.layers_mut()[k - n_enc] };
                    let (w, b) = layer.op.params_mut();
                    w.axpy(-cfg.learning_rate, dw);
                    b.axpy(-cfg.learning_rate, db);
                }
            }
        }
        epoch_mse.push(sum / batches as f64);
    }
    let final_mse = reconstruction_mse(&encoder, &decoder, data, data)?;
    Ok(TrainResult { encoder, decoder, initial_mse, final_mse, epoch_mse })
}

fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut SeededRng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), rng.uniform_vec(n, -bound, bound))
}

fn dense_init(m: usize, n: usize, rng: &mut SeededRng) -> Result<LinearOperator> {
    let bound = 1.0 / (n as f64).sqrt();
    LinearOperator::dense(uniform_tensor(&[m, n], bound, rng), uniform_tensor(&[m], bound, rng))
}

/// `x -> ReLU(W1 x + b1)` with `W1` of size `code_dim x d`, and
/// `c -> W2 c + b2`; uniform `+-1/sqrt(fan_in)` initialisation.
pub fn dense_autoencoder(input_shape: &[usize], code_dim: usize, seed: u64) -> Result<(Network, Network)> {
    if code_dim == 0 {
        return Err(Error::param("code dimension must be positive"));
    }
    let d: usize = input_shape.iter().product();
    let mut rng = SeededRng::new(seed);
    let enc = dense_init(code_dim, d, &mut rng)?.with_input_shape(input_shape)?;
    let dec = dense_init(d, code_dim, &mut rng)?;
    Ok((
        Network::new(vec![Layer::new(enc, ProxPenalty::NonNegIndicator)])?,
        Network::new(vec![Layer::new(dec, ProxPenalty::Zero)])?,
    ))
}

/// Encoder `1x28x28 -> 8x14x14 -> 16x7x7 -> 300` (two 4x4 stride-2
/// convolutions and a dense layer, all ReLU); decoder `300 -> 784 ->
/// 8x14x14 -> 1x28x28` (dense, then two 4x4 stride-2 transposed
/// convolutions). The last decoder layer is linear since the targets are
/// mean-centred.
pub fn conv_autoencoder(seed: u64) -> Result<(Network, Network)> {
    let mut rng = SeededRng::new(seed);
    let mut conv = |in_c: usize, out_c: usize, hw: usize, transpose: bool| -> Result<LinearOperator> {
        let fan_in = if transpose { in_c * 4 } else { in_c * 16 };
        let bound = 1.0 / (fan_in as f64).sqrt();
        if transpose {
            LinearOperator::conv_transpose2d(
                uniform_tensor(&[in_c, out_c, 4, 4], bound, &mut rng),
                uniform_tensor(&[out_c], bound, &mut rng),
                2,
                1,
                (hw, hw),
            )
        } else {
            LinearOperator::conv2d(
                uniform_tensor(&[out_c, in_c, 4, 4], bound, &mut rng),
                uniform_tensor(&[out_c], bound, &mut rng),
                2,
                1,
                (hw, hw),
            )
        }
    };
    let c1 = conv(1, 8, 28, false)?;
    let c2 = conv(8, 16, 14, false)?;
    let t1 = conv(16, 8, 7, true)?;
    let t2 = conv(8, 1, 14, true)?;
    let mut rng2 = SeededRng::new(seed ^ 0x5eed);
    let w3 = dense_init(300, 784, &mut rng2)?;
    let w4 = dense_init(784, 300, &mut rng2)?;
    let relu = ProxPenalty::NonNegIndicator;
    let encoder = Network::new(vec![Layer::new(c1, relu), Layer::new(c2, relu), Layer::new(w3, relu)])?;
    let decoder = Network::new(vec![Layer::new(w4, relu), Layer::new(t1, relu), Layer::new(t2, ProxPenalty::Zero)])?;
    Ok((encoder, decoder))
}

pub fn train_dense_autoencoder(data: &[Tensor], code_dim: usize, cfg: &TrainConfig) -> Result<TrainResult> {
    let first = data.first().ok_or_else(|| Error::param("cannot train on an empty data set"))?;
    let (enc, dec) = dense_autoencoder(first.shape(), code_dim, cfg.seed)?;
    train_autoencoder(enc, dec, data, cfg)
}

/// Trains [`conv_autoencoder`] on `28 x 28` images (`[28, 28]` or
/// `[1, 28, 28]`).
pub fn train_conv_autoencoder(data: &[Tensor], cfg: &TrainConfig) -> Result<TrainResult> {
    if data.is_empty() {
        return Err(Error::param("cannot train on an empty data set"));
    }
    let images = data.iter().map(|x| x.clone().reshape(&[1, 28, 28])).collect::<Result<Vec<_>>>()?;
    let (enc, dec) = conv_autoencoder(cfg.seed)?;
    train_autoencoder(enc, dec, &images, cfg)
}

/// Per-epoch log as CSV rows `epoch,mse`.
pub fn training_log_rows(result: &TrainResult) -> Vec<Vec<f64>> {
    result.epoch_mse.iter().enumerate().map(|(e, m)| vec![(e + 1) as f64, *m]).collect()
}
