//! Convex penalties whose proximal maps are the network activations.
//!
//! | penalty            | activation      |
//! |--------------------|-----------------|
//! | `Zero`             | identity        |
//! | `NonNegIndicator`  | ReLU            |
//! | `BoxIndicator`     | clipping        |
//! | `L1`               | soft threshold  |
//!
//! Each kind supplies three mutually consistent pieces: `eval` (the penalty
//! itself, `+inf` outside an indicator's set), `prox`, and
//! `conjugate_shifted`, the Fenchel conjugate of `1/2 |.|^2 + penalty`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProxPenalty {
    Zero,
    NonNegIndicator,
    BoxIndicator { lo: f64, hi: f64 },
    L1 { lambda: f64 },
}

impl ProxPenalty {
    pub fn relu() -> Self {
        ProxPenalty::NonNegIndicator
    }

    pub fn boxed(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::param(format!("box bounds [{lo}, {hi}] are invalid")));
        }
        Ok(ProxPenalty::BoxIndicator { lo, hi })
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::param(format!("l1 weight {lambda} must be finite and non-negative")));
        }
        Ok(ProxPenalty::L1 { lambda })
    }

    /// Tag byte used in the model archive.
    pub fn tag(&self) -> u8 {
        match self {
            ProxPenalty::Zero => 0,
            ProxPenalty::NonNegIndicator => 1,
            ProxPenalty::BoxIndicator { .. } => 2,
            ProxPenalty::L1 { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProxPenalty::Zero => "identity",
            ProxPenalty::NonNegIndicator => "relu",
            ProxPenalty::BoxIndicator { .. } => "clip",
            ProxPenalty::L1 { .. } => "soft-threshold",
        }
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, ProxPenalty::NonNegIndicator | ProxPenalty::BoxIndicator { .. })
    }

    /// Scalar penalty value.
    #[inline]
    pub fn eval_scalar(&self, x: f64) -> f64 {
        match *self {
            ProxPenalty::Zero => 0.0,
            ProxPenalty::NonNegIndicator => {
                if x >= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxPenalty::BoxIndicator { lo, hi } => {
                if (lo..=hi).contains(&x) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            ProxPenalty::L1 { lambda } => lambda * x.abs(),
        }
    }

    /// Proximal map of `scale * penalty` at a scalar.
    #[inline]
    pub fn prox_scalar_scaled(&self, z: f64, scale: f64) -> f64 {
        match *self {
            ProxPenalty::Zero => z,
            ProxPenalty::NonNegIndicator => z.max(0.0),
            ProxPenalty::BoxIndicator { lo, hi } => z.clamp(lo, hi),
            ProxPenalty::L1 { lambda } => {
                let t = scale * lambda;
                if z > t {
                    z - t
                } else if z < -t {
                    z + t
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub fn prox_scalar(&self, z: f64) -> f64 {
        self.prox_scalar_scaled(z, 1.0)
    }

    /// Derivative of the activation (almost everywhere); 0 at kinks.
    #[inline]
    pub fn prox_derivative_scalar(&self, z: f64) -> f64 {
        match *self {
            ProxPenalty::Zero => 1.0,
            ProxPenalty::NonNegIndicator => (z > 0.0) as u8 as f64,
            ProxPenalty::BoxIndicator { lo, hi } => (z > lo && z < hi) as u8 as f64,
            ProxPenalty::L1 { lambda } => (z.abs() > lambda) as u8 as f64,
        }
    }

    /// `Psi(x)`, possibly `+inf`.
    pub fn eval(&self, x: &Tensor) -> f64 {
        let mut total = 0.0;
        for &v in x.data() {
            let p = self.eval_scalar(v);
            if p.is_infinite() {
                return f64::INFINITY;
            }
            total += p;
        }
        total
    }

    /// The activation `sigma(z) = argmin_y 1/2 |y - z|^2 + Psi(y)`.
    pub fn prox(&self, z: &Tensor) -> Tensor {
        z.map(|v| self.prox_scalar(v))
    }

    /// `prox_{scale * Psi}`. Indicators ignore the scale.
    pub fn prox_scaled(&self, z: &Tensor, scale: f64) -> Tensor {
        z.map(|v| self.prox_scalar_scaled(v, scale))
    }

    pub fn prox_in_place(&self, z: &mut [f64]) {
        z.iter_mut().for_each(|v| *v = self.prox_scalar(*v));
    }

    pub fn prox_derivative(&self, z: &Tensor) -> Tensor {
        z.map(|v| self.prox_derivative_scalar(v))
    }

    /// `(1/2 |.|^2 + Psi)^*(z)`. The supremum is attained at `sigma(z)`.
    pub fn conjugate_shifted(&self, z: &Tensor) -> f64 {
        self.conjugate_shifted_slice(z.data())
    }

    pub(crate) fn conjugate_shifted_slice(&self, z: &[f64]) -> f64 {
        z.iter()
            .map(|&v| {
                let p = self.prox_scalar(v);
                let psi = match *self {
                    ProxPenalty::L1 { lambda } => lambda * p.abs(),
                    _ => 0.0,
                };
                v * p - 0.5 * p * p - psi
            })
            .sum()
    }

    /// `(1/2 |.|^2 + Psi)(x)`, possibly `+inf`.
    pub fn shifted_eval(&self, x: &Tensor) -> f64 {
        let psi = self.eval(x);
        if psi.is_infinite() {
            return psi;
        }
        0.5 * x.norm_sq() + psi
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn all_kinds() -> Vec<ProxPenalty> {
        vec![
            ProxPenalty::Zero,
            ProxPenalty::NonNegIndicator,
            ProxPenalty::boxed(-0.5, 1.0).unwrap(),
            ProxPenalty::l1(0.3).unwrap(),
        ]
    }

    /// argmin over a grid of 1/2 (y - z)^2 + Psi(y).
    fn grid_prox(p: &ProxPenalty, z: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        let mut y = -3.0;
        while y <= 3.0 + 1e-12 {
            let f = 0.5 * (y - z) * (y - z) + p.eval_scalar(y);
            if f < best.0 {
                best = (f, y);
            }
            y += 1e-4;
        }
        best.1
    }

    /// sup over a 2-D grid of <z, y> - 1/2 |y|^2 - Psi(y).
    fn grid_conjugate_2d(p: &ProxPenalty, z: [f64; 2], lo: f64, hi: f64, step: f64) -> f64 {
        let n = ((hi - lo) / step).round() as usize;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            let y0 = lo + i as f64 * step;
            let psi0 = p.eval_scalar(y0);
            if psi0.is_infinite() {
                continue;
            }
            for j in 0..=n {
                let y1 = lo + j as f64 * step;
                let psi1 = p.eval_scalar(y1);
                if psi1.is_infinite() {
                    continue;
                }
                let v = z[0] * y0 + z[1] * y1 - 0.5 * (y0 * y0 + y1 * y1) - psi0 - psi1;
                best = best.max(v);
            }
        }
        best
    }

    #[test]
    fn relu_and_identity() {
        let z = Tensor::vector(vec![-1.0, 2.0]);
        assert_eq!(ProxPenalty::NonNegIndicator.prox(&z).data(), &[0.0, 2.0]);
        let z = Tensor::vector(vec![5.0, -3.0]);
        assert_eq!(ProxPenalty::Zero.prox(&z).data(), &[5.0, -3.0]);
    }

    #[test]
    fn soft_threshold_matches_grid_search() {
        let p = ProxPenalty::l1(0.5).unwrap();
        let got = p.prox(&Tensor::vector(vec![1.0, -0.2]));
        for (g, z) in got.data().iter().zip([1.0, -0.2]) {
            assert!((g - grid_prox(&p, z)).abs() < 2e-4, "{g} vs grid at z={z}");
        }
        assert!((got.data()[0] - 0.5).abs() < 1e-15);
        assert_eq!(got.data()[1], 0.0);
    }

    #[test]
    fn every_kind_matches_grid_prox() {
        for p in all_kinds() {
            for z in [-2.2, -0.4, 0.0, 0.15, 0.9, 2.7] {
                let got = p.prox_scalar(z);
                assert!((got - grid_prox(&p, z)).abs() < 2e-4, "{p:?} z={z}");
            }
        }
    }

    #[test]
    fn conjugate_relu_grid() {
        let p = ProxPenalty::NonNegIndicator;
        let got = p.conjugate_shifted(&Tensor::vector(vec![3.0, -2.0]));
        let grid = grid_conjugate_2d(&p, [3.0, -2.0], 0.0, 10.0, 1e-3);
        assert!((got - 4.5).abs() < 1e-12);
        assert!((got - grid).abs() < 1e-5);
    }

    #[test]
    fn conjugate_zero_penalty_grid() {
        let p = ProxPenalty::Zero;
        let got = p.conjugate_shifted(&Tensor::vector(vec![1.0, 2.0]));
        let grid = grid_conjugate_2d(&p, [1.0, 2.0], -1.0, 4.0, 1e-3);
        assert!((got - 2.5).abs() < 1e-12);
        assert!((got - grid).abs() < 1e-5);
    }

    #[test]
    fn conjugate_at_origin_vanishes() {
        for p in all_kinds() {
            assert_eq!(p.conjugate_shifted(&Tensor::zeros(&[3])), 0.0, "{p:?}");
        }
    }

    #[test]
    fn conjugate_box_and_l1_grid() {
        for p in [ProxPenalty::boxed(-0.5, 1.0).unwrap(), ProxPenalty::l1(0.3).unwrap()] {
            let z = [1.7, -0.9];
            let got = p.conjugate_shifted(&Tensor::vector(z.to_vec()));
            let grid = grid_conjugate_2d(&p, z, -3.0, 3.0, 1e-3);
            assert!((got - grid).abs() < 1e-5, "{p:?}: {got} vs {grid}");
        }
    }

    #[test]
    fn eval_examples() {
        let relu = ProxPenalty::NonNegIndicator;
        assert_eq!(relu.eval(&Tensor::vector(vec![0.0, 1.0])), 0.0);
        assert_eq!(relu.eval(&Tensor::vector(vec![-0.1, 1.0])), f64::INFINITY);
        let l1 = ProxPenalty::l1(2.0).unwrap();
        assert_eq!(l1.eval(&Tensor::vector(vec![1.0, -1.0])), 4.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(ProxPenalty::boxed(1.0, 0.0).is_err());
        assert!(ProxPenalty::l1(-1.0).is_err());
        assert!(ProxPenalty::l1(f64::NAN).is_err());
    }

    #[test]
    fn conjugate_gradient_is_prox() {
        let h = 1e-5;
        let mut rng = SeededRng::new(42);
        for p in all_kinds() {
            let mut checked = 0;
            while checked < 50 {
                let z = rng.uniform_in(-2.0, 2.0);
                // Skip points within 10h of a kink.
                let kinks: &[f64] = match p {
                    ProxPenalty::Zero => &[],
                    ProxPenalty::NonNegIndicator => &[0.0],
                    ProxPenalty::BoxIndicator { .. } => &[-0.5, 1.0],
                    ProxPenalty::L1 { .. } => &[-0.3, 0.3],
                };
                if kinks.iter().any(|k| (z - k).abs() < 10.0 * h) {
                    continue;
                }
                let f = |v: f64| p.conjugate_shifted(&Tensor::vector(vec![v]));
                let fd = (f(z + h) - f(z - h)) / (2.0 * h);
                assert!((fd - p.prox_scalar(z)).abs() < 1e-4, "{p:?} z={z}");
                checked += 1;
            }
        }
    }

    proptest! {
        #[test]
        fn prox_is_non_expansive(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, d in -5.0f64..5.0) {
            for p in all_kinds() {
                let z1 = Tensor::vector(vec![a, b]);
                let z2 = Tensor::vector(vec![c, d]);
                let lhs = p.prox(&z1).distance(&p.prox(&z2));
                prop_assert!(lhs <= z1.distance(&z2) + 1e-12);
            }
        }

        #[test]
        fn prox_is_optimal(z in -5.0f64..5.0, y in -5.0f64..5.0) {
            for p in all_kinds() {
                let s = p.prox_scalar(z);
                let psi_y = p.eval_scalar(y);
                if psi_y.is_infinite() {
                    continue;
                }
                let at_prox = p.eval_scalar(s) + 0.5 * (s - z).powi(2);
                prop_assert!(at_prox <= psi_y + 0.5 * (y - z).powi(2) + 1e-12);
            }
        }
    }
}
