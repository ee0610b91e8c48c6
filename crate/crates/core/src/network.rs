//! Feed-forward networks `sigma_L(f_L(... sigma_1(f_1(x))))` and the `LBNN`
//! model archive.
//!
//! `LBNN` layout: magic `LBNN`, `u32` layer count, then per layer a `u8`
//! operator tag (0 dense, 1 conv, 2 transposed conv), a `u8` activation tag,
//! the activation parameters as `f64` (box: lo, hi; l1: lambda; none
//! otherwise), for conv kinds `u32` stride, padding, input height and input
//! width, and finally the weight and bias tensors as embedded `LBTF` blocks.
//! Integers and floats are little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::prox::ProxPenalty;
use crate::tensor::Tensor;

const LBNN_MAGIC: &[u8; 4] = b"LBNN";

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub op: LinearOperator,
    pub penalty: ProxPenalty,
}

impl Layer {
    pub fn new(op: LinearOperator, penalty: ProxPenalty) -> Self {
        Self { op, penalty }
    }

    /// `sigma(f(x))`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut z = self.op.forward(x)?;
        self.penalty.prox_in_place(z.data_mut());
        Ok(z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Builds a network, checking that consecutive layers chain (as flat
    /// vectors: a dense layer may follow a convolution).
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("a network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            let (prev, next) = (&pair[0].op, &pair[1].op);
            if prev.output_len() != next.input_len() {
                return Err(Error::dims(&next.input_shape(), &prev.output_shape()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.layers[0].op.input_shape()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers[self.layers.len() - 1].op.output_shape()
    }

    /// Concatenation `self` then `other`.
    pub fn then(&self, other: &Network) -> Result<Network> {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        Network::new(layers)
    }

    pub fn net_forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = self.layers[0].forward(x)?;
        for layer in &self.layers[1..] {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    /// Post-activation states `x_1, ..., x_L`; the last equals `net_forward`.
    pub fn hidden_states(&self, x: &Tensor) -> Result<Vec<Tensor>> {
        let mut states: Vec<Tensor> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input = if l == 0 { x } else { &states[l - 1] };
            states.push(layer.forward(input)?);
        }
        Ok(states)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_lbnn(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Network::read_lbnn(BufReader::new(File::open(path)?))
    }

    pub fn write_lbnn<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(LBNN_MAGIC)?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            let op_tag: u8 = match layer.op {
                LinearOperator::DenseAffine { .. } => 0,
                LinearOperator::Conv2d(_) => 1,
                LinearOperator::ConvTranspose2d(_) => 2,
            };
            w.write_all(&[op_tag, layer.penalty.tag()])?;
            match layer.penalty {
                ProxPenalty::BoxIndicator { lo, hi } => {
                    w.write_all(&lo.to_le_bytes())?;
                    w.write_all(&hi.to_le_bytes())?;
                }
                ProxPenalty::L1 { lambda } => w.write_all(&lambda.to_le_bytes())?,
                ProxPenalty::Zero | ProxPenalty::NonNegIndicator => {}
            }
            if let LinearOperator::Conv2d(s) | LinearOperator::ConvTranspose2d(s) = &layer.op {
                for v in [s.stride, s.padding, s.input_shape[1], s.input_shape[2]] {
                    w.write_all(&(v as u32).to_le_bytes())?;
                }
            }
            layer.op.weight().write_lbtf(&mut w)?;
            layer.op.bias().write_lbtf(&mut w)?;
        }
        Ok(())
    }

    pub fn read_lbnn<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_bytes(&mut r, &mut magic)?;
        if &magic != LBNN_MAGIC {
            return Err(Error::Format { format: "LBNN", reason: format!("bad magic {magic:?}") });
        }
        let count = read_u32(&mut r)? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let mut tags = [0u8; 2];
            read_bytes(&mut r, &mut tags)?;
            let penalty = match tags[1] {
                0 => ProxPenalty::Zero,
                1 => ProxPenalty::NonNegIndicator,
                2 => {
                    let lo = read_f64(&mut r)?;
                    let hi = read_f64(&mut r)?;
                    ProxPenalty::boxed(lo, hi)?
                }
                3 => ProxPenalty::l1(read_f64(&mut r)?)?,
                t => return Err(Error::Format { format: "LBNN", reason: format!("unknown activation tag {t}") }),
            };
            let conv = if tags[0] == 1 || tags[0] == 2 {
                let mut v = [0usize; 4];
                for slot in &mut v {
                    *slot = read_u32(&mut r)? as usize;
                }
                Some(v)
            } else {
                None
            };
            let weight = Tensor::read_lbtf(&mut r)?;
            let bias = Tensor::read_lbtf(&mut r)?;
            let op = match (tags[0], conv) {
                (0, _) => LinearOperator::dense(weight, bias)?,
                (1, Some([s, p, h, w])) => LinearOperator::conv2d(weight, bias, s, p, (h, w))?,
                (2, Some([s, p, h, w])) => LinearOperator::conv_transpose2d(weight, bias, s, p, (h, w))?,
                (t, _) => return Err(Error::Format { format: "LBNN", reason: format!("unknown operator tag {t}") }),
            };
            layers.push(Layer::new(op, penalty));
        }
        Network::new(layers)
    }
}

fn read_bytes<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format { format: "LBNN", reason: "unexpected end of data".into() },
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_bytes(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_bytes(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn rand_t(shape: &[usize], seed: u64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), SeededRng::new(seed).normal_vec(n, 0.5)).unwrap()
    }

    fn dense(m: usize, n: usize, seed: u64, p: ProxPenalty) -> Layer {
        Layer::new(LinearOperator::dense(rand_t(&[m, n], seed), rand_t(&[m], seed + 1)).unwrap(), p)
    }

    #[test]
    fn identity_single_layer() {
        let id = Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let net =
            Network::new(vec![Layer::new(LinearOperator::dense(id, Tensor::zeros(&[2])).unwrap(), ProxPenalty::Zero)])
                .unwrap();
        let x = Tensor::vector(vec![-1.5, 2.0]);
        assert_eq!(net.net_forward(&x).unwrap(), x);
    }

    #[test]
    fn relu_perceptron() {
        let layer = dense(4, 3, 1, ProxPenalty::NonNegIndicator);
        let net = Network::new(vec![layer.clone()]).unwrap();
        let x = rand_t(&[3], 9);
        let expect = layer.op.forward(&x).unwrap().map(|v| v.max(0.0));
        assert_eq!(net.net_forward(&x).unwrap(), expect);
    }

    #[test]
    fn two_layers_compose() {
        let (a, b) = (dense(5, 3, 1, ProxPenalty::NonNegIndicator), dense(2, 5, 3, ProxPenalty::l1(0.1).unwrap()));
        let net = Network::new(vec![a.clone(), b.clone()]).unwrap();
        let x = rand_t(&[3], 5);
        let manual = b.forward(&a.forward(&x).unwrap()).unwrap();
        assert_eq!(net.net_forward(&x).unwrap(), manual);
        let hs = net.hidden_states(&x).unwrap();
        assert_eq!(hs.len(), 2);
        assert_eq!(hs[0], a.forward(&x).unwrap());
        assert_eq!(hs[1], net.net_forward(&x).unwrap());
    }

    #[test]
    fn rejects_broken_chain() {
        assert!(Network::new(vec![dense(5, 3, 1, ProxPenalty::Zero), dense(2, 4, 2, ProxPenalty::Zero)]).is_err());
        assert!(Network::new(vec![]).is_err());
    }

    #[test]
    fn linear_when_all_zero_penalties_and_biases() {
        let layers = vec![
            Layer::new(LinearOperator::dense(rand_t(&[4, 3], 1), Tensor::zeros(&[4])).unwrap(), ProxPenalty::Zero),
            Layer::new(LinearOperator::dense(rand_t(&[2, 4], 2), Tensor::zeros(&[2])).unwrap(), ProxPenalty::Zero),
        ];
        let net = Network::new(layers).unwrap();
        let (x, y) = (rand_t(&[3], 3), rand_t(&[3], 4));
        let lhs = net.net_forward(&x.add(&y)).unwrap();
        let rhs = net.net_forward(&x).unwrap().add(&net.net_forward(&y).unwrap());
        assert!(lhs.distance(&rhs) < 1e-12);
    }

    #[test]
    fn lbnn_round_trip_mixed_layers() {
        let layers = vec![
            Layer::new(
                LinearOperator::conv2d(rand_t(&[2, 1, 4, 4], 1), rand_t(&[2], 2), 2, 1, (8, 8)).unwrap(),
                ProxPenalty::NonNegIndicator,
            ),
            Layer::new(
                LinearOperator::dense(rand_t(&[6, 32], 3), rand_t(&[6], 4)).unwrap(),
                ProxPenalty::l1(0.25).unwrap(),
            ),
            Layer::new(
                LinearOperator::dense(rand_t(&[8, 6], 5), rand_t(&[8], 6)).unwrap(),
                ProxPenalty::boxed(-1.0, 2.0).unwrap(),
            ),
            Layer::new(
                LinearOperator::conv_transpose2d(rand_t(&[2, 1, 4, 4], 7), rand_t(&[1], 8), 2, 1, (2, 2)).unwrap(),
                ProxPenalty::Zero,
            ),
        ];
        let net = Network::new(layers).unwrap();
        let mut buf = Vec::new();
        net.write_lbnn(&mut buf).unwrap();
        let back = Network::read_lbnn(&buf[..]).unwrap();
        assert_eq!(back, net);
        let mut again = Vec::new();
        back.write_lbnn(&mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn lbnn_rejects_bad_magic_and_tags() {
        assert!(matches!(Network::read_lbnn(&b"LBNX\x00\x00\x00\x00"[..]), Err(Error::Format { .. })));
        let net = Network::new(vec![dense(2, 2, 1, ProxPenalty::Zero)]).unwrap();
        let mut buf = Vec::new();
        net.write_lbnn(&mut buf).unwrap();
        buf[9] = 9;
        assert!(Network::read_lbnn(&buf[..]).is_err());
        buf.truncate(12);
        assert!(Network::read_lbnn(&buf[..]).is_err());
    }
}
