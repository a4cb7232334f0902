//! Probability models for the quantized latents, in plain `f64`.
//!
//! The same formulas are built on the tape in `network.rs` for training;
//! tests check the two evaluations agree.

use super::config::{PROB_FLOOR, SCALE_FLOOR};
use super::latent::{HyperLatent, QuantizedLatent};
use crate::error::{Error, Result};
use crate::numerics::kernels::{normal_interval, sigmoid, sigmoid_interval, softplus};
use crate::params::ParamStore;

/// Per-element Gaussian mixture over a latent of `len` elements.
/// Component `k` of element `i` lives at index `k·len + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixtureParams {
    pub mixtures: usize,
    pub shape: Vec<usize>,
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl GaussianMixtureParams {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let k = self.mixtures;
        if self.weights.len() != k * n || self.means.len() != k * n || self.scales.len() != k * n {
            return Err(Error::Format("mixture parameter lengths disagree with shape".into()));
        }
        for i in 0..n {
            let total: f64 = (0..k).map(|j| self.weights[j * n + i]).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Format(format!("mixture weights of element {i} sum to {total}")));
            }
        }
        if let Some(s) = self.scales.iter().find(|&&s| !(s >= SCALE_FLOOR)) {
            return Err(Error::Format(format!("mixture scale {s} below floor")));
        }
        Ok(())
    }

    /// Probability mass of the unit bin centred on `y` for element `i`.
    pub fn bin_probability(&self, i: usize, y: f64) -> f64 {
        let n = self.len();
        (0..self.mixtures)
            .map(|k| {
                let idx = k * n + i;
                let (mu, sigma) = (self.means[idx], self.scales[idx]);
                self.weights[idx] * normal_interval((y + 0.5 - mu) / sigma, (y - 0.5 - mu) / sigma)
            })
            .sum()
    }

    /// Mixture CDF of element `i` at `x`.
    pub fn cdf(&self, i: usize, x: f64) -> f64 {
        let n = self.len();
        (0..self.mixtures)
            .map(|k| {
                let idx = k * n + i;
                let z = (x - self.means[idx]) / self.scales[idx];
                self.weights[idx] * crate::numerics::kernels::normal_cdf(z)
            })
            .sum()
    }
}

/// Bits of `−log₂ max(p, 2⁻³²)`.
pub fn floored_bits(p: f64) -> f64 {
    -p.max(PROB_FLOOR).log2()
}

/// Estimated code length of a quantized latent under its mixture model.
pub fn latent_rate(q: &QuantizedLatent, gmm: &GaussianMixtureParams) -> Result<f64> {
    if q.values.len() != gmm.len() {
        return Err(Error::Compatibility(format!(
            "latent has {} elements, mixture model {}",
            q.values.len(),
            gmm.len()
        )));
    }
    Ok(q.values.data().iter().enumerate().map(|(i, &y)| floored_bits(gmm.bin_probability(i, y))).sum())
}

/// Per-channel monotone CDF: `sigmoid(Σⱼ s2ⱼ·g(s1ⱼ·x + b1ⱼ) + b2)` with
/// `g(h) = h + tanh(aⱼ)·tanh(h)`, all slopes positive (softplus).
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedDensity {
    pub channels: usize,
    pub width: usize,
    slope1: Vec<f64>,
    bias1: Vec<f64>,
    gate1: Vec<f64>,
    slope2: Vec<f64>,
    bias2: Vec<f64>,
}

pub(crate) const DENSITY_NAMES: [&str; 5] = ["density.m1", "density.b1", "density.a1", "density.m2", "density.b2"];

impl FactorizedDensity {
    /// Reads the `density.*` parameters (raw, pre-softplus/tanh values).
    pub fn from_params(params: &ParamStore, channels: usize, width: usize) -> Result<Self> {
        let get = |name: &str, len: usize| -> Result<Vec<f64>> {
            let t = params.get(name)?;
            if t.len() != len {
                return Err(Error::Format(format!("{name} has {} values, expected {len}", t.len())));
            }
            Ok(t.data().to_vec())
        };
        let cr = channels * width;
        Ok(FactorizedDensity {
            channels,
            width,
            slope1: get(DENSITY_NAMES[0], cr)?.into_iter().map(softplus).collect(),
            bias1: get(DENSITY_NAMES[1], cr)?,
            gate1: get(DENSITY_NAMES[2], cr)?.into_iter().map(f64::tanh).collect(),
            slope2: get(DENSITY_NAMES[3], cr)?.into_iter().map(softplus).collect(),
            bias2: get(DENSITY_NAMES[4], channels)?,
        })
    }

    pub fn logit(&self, channel: usize, x: f64) -> f64 {
        let mut out = self.bias2[channel];
        for j in 0..self.width {
            let idx = j * self.channels + channel;
            let h = self.slope1[idx] * x + self.bias1[idx];
            let h = h + self.gate1[idx] * h.tanh();
            out += self.slope2[idx] * h;
        }
        out
    }

    pub fn cdf(&self, channel: usize, x: f64) -> f64 {
        sigmoid(self.logit(channel, x))
    }

    pub fn bin_probability(&self, channel: usize, z: f64) -> f64 {
        sigmoid_interval(self.logit(channel, z + 0.5), self.logit(channel, z - 0.5))
    }
}

/// Estimated code length of a hyper-latent (planar `[c, h, w]`).
pub fn hyper_rate(z: &HyperLatent, density: &FactorizedDensity) -> Result<f64> {
    let shape = z.values.shape();
    if shape.len() != 3 || shape[0] != density.channels {
        return Err(Error::Compatibility(format!(
            "hyper-latent shape {shape:?} does not match a {}-channel density",
            density.channels
        )));
    }
    let plane = shape[1] * shape[2];
    Ok(z.values.data().iter().enumerate().map(|(i, &v)| floored_bits(density.bin_probability(i / plane, v))).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::latent::QuantMode;
    use crate::numerics::Tensor;

    fn single(mu: f64, sigma: f64) -> GaussianMixtureParams {
        GaussianMixtureParams { mixtures: 1, shape: vec![1], weights: vec![1.0], means: vec![mu], scales: vec![sigma] }
    }

    fn erf_oracle(x: f64) -> f64 {
        // Φ via erf from libm; independent of the tail-selection logic
        0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
    }

    #[test]
    fn unit_gaussian_at_zero() {
        let q = QuantizedLatent { values: Tensor::from_vec(vec![0.0]), mode: QuantMode::Inference };
        let bits = latent_rate(&q, &single(0.0, 1.0)).unwrap();
        let expected = -(erf_oracle(0.5) - erf_oracle(-0.5)).log2();
        assert!((bits - expected).abs() < 1e-12);
        assert!((bits - 1.385).abs() < 5e-4, "{bits}");
    }

    #[test]
    fn far_symbol_hits_floor() {
        let q = QuantizedLatent { values: Tensor::from_vec(vec![1000.0]), mode: QuantMode::Inference };
        assert_eq!(latent_rate(&q, &single(0.0, 1.0)).unwrap(), 32.0);
    }

    #[test]
    fn rates_add_over_elements() {
        let gmm = GaussianMixtureParams {
            mixtures: 2,
            shape: vec![2],
            weights: vec![0.3, 0.6, 0.7, 0.4],
            means: vec![0.0, 1.0, -1.0, 2.0],
            scales: vec![1.0, 0.5, 2.0, 0.7],
        };
        gmm.validate().unwrap();
        let both = QuantizedLatent { values: Tensor::from_vec(vec![1.0, -2.0]), mode: QuantMode::Inference };
        let total = latent_rate(&both, &gmm).unwrap();
        let a = floored_bits(gmm.bin_probability(0, 1.0));
        let b = floored_bits(gmm.bin_probability(1, -2.0));
        assert!((total - (a + b)).abs() < 1e-12);
    }

    #[test]
    fn mixture_mass_sums_to_at_most_one() {
        let gmm = GaussianMixtureParams {
            mixtures: 3,
            shape: vec![1],
            weights: vec![0.2, 0.5, 0.3],
            means: vec![-3.2, 0.4, 7.9],
            scales: vec![0.3, 2.0, 5.0],
        };
        let total: f64 = (-50..=50).map(|y| gmm.bin_probability(0, y as f64)).sum();
        assert!(total <= 1.0 + 1e-6 && total > 0.99, "{total}");
        for y in -50..=50 {
            assert!(floored_bits(gmm.bin_probability(0, y as f64)) >= 0.0);
        }
    }

    #[test]
    fn validation_catches_bad_params() {
        let mut g = single(0.0, 1.0);
        g.weights[0] = 0.9;
        assert!(g.validate().is_err());
        let mut g = single(0.0, 1e-9);
        g.weights[0] = 1.0;
        assert!(g.validate().is_err());
    }

    fn density(channels: usize, width: usize, seed: f64) -> FactorizedDensity {
        let mut p = ParamStore::new();
        let cr = channels * width;
        let vals = |off: f64, n: usize| Tensor::from_vec((0..n).map(|i| ((i as f64 + off) * 1.7 + seed).sin()).collect());
        p.insert(DENSITY_NAMES[0], vals(0.0, cr));
        p.insert(DENSITY_NAMES[1], vals(1.0, cr));
        p.insert(DENSITY_NAMES[2], vals(2.0, cr));
        p.insert(DENSITY_NAMES[3], vals(3.0, cr));
        p.insert(DENSITY_NAMES[4], Tensor::zeros(&[channels]));
        FactorizedDensity::from_params(&p, channels, width).unwrap()
    }

    #[test]
    fn factorized_cdf_is_monotone_with_proper_limits() {
        let d = density(3, 3, 0.2);
        for c in 0..3 {
            let mut prev = 0.0;
            for i in -400..=400 {
                let v = d.cdf(c, i as f64 * 0.25);
                assert!(v >= prev);
                prev = v;
            }
            assert!(d.cdf(c, -1e4) < 1e-9 && d.cdf(c, 1e4) > 1.0 - 1e-9);
            assert!((-20..20).all(|z| d.bin_probability(c, z as f64) >= 0.0));
        }
    }

    #[test]
    fn hyper_rate_definition_and_additivity() {
        let d = density(2, 3, 1.0);
        let z = HyperLatent { values: Tensor::new(vec![2, 1, 2], vec![0.0, 1.0, -1.0, 3.0]).unwrap(), mode: QuantMode::Inference };
        let r = hyper_rate(&z, &d).unwrap();
        let manual: f64 = [(0, 0.0), (0, 1.0), (1, -1.0), (1, 3.0)]
            .iter()
            .map(|&(c, v)| -(d.cdf(c, v + 0.5) - d.cdf(c, v - 0.5)).log2())
            .sum();
        assert!((r - manual).abs() < 1e-9);
    }
}
