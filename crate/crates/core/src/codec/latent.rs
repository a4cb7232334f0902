use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{kernels::round_half_away, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// additive `U(−½, ½)` noise
    Training,
    /// rounding half away from zero
    Inference,
}

/// Continuous encoder output for one image, planar `[c, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentTensor(pub Tensor);

/// Quantized (or noise-relaxed) latent, planar `[c, h, w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLatent {
    pub values: Tensor,
    pub mode: QuantMode,
}

/// Side-information latent, planar `[c_hyp, h', w']`, already quantized.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperLatent {
    pub values: Tensor,
    pub mode: QuantMode,
}

impl LatentTensor {
    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }
}

/// Draws the `U(−½, ½)` perturbation used in training mode.
pub fn uniform_noise(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random::<f64>() - 0.5).collect()
}

/// Relaxed (training) or hard (inference) quantization of a latent.
pub fn quantize(latent: &LatentTensor, mode: QuantMode, rng: &mut impl Rng) -> QuantizedLatent {
    QuantizedLatent { values: quantize_tensor(&latent.0, mode, rng), mode }
}

pub(crate) fn quantize_tensor(t: &Tensor, mode: QuantMode, rng: &mut impl Rng) -> Tensor {
    let data: Vec<f64> = match mode {
        QuantMode::Inference => t.data().iter().map(|&v| round_half_away(v)).collect(),
        QuantMode::Training => {
            let noise = uniform_noise(t.len(), rng);
            t.data().iter().zip(noise).map(|(v, u)| v + u).collect()
        }
    };
    Tensor::new(t.shape().to_vec(), data).expect("shape preserved")
}

impl QuantizedLatent {
    /// Integer symbols of an inference-mode latent.
    pub fn symbols(&self) -> Result<Vec<i32>> {
        to_symbols(&self.values, self.mode)
    }

    pub fn from_symbols(shape: &[usize], symbols: &[i32]) -> Result<Self> {
        Ok(QuantizedLatent { values: from_symbols(shape, symbols)?, mode: QuantMode::Inference })
    }
}

impl HyperLatent {
    pub fn symbols(&self) -> Result<Vec<i32>> {
        to_symbols(&self.values, self.mode)
    }

    pub fn from_symbols(shape: &[usize], symbols: &[i32]) -> Result<Self> {
        Ok(HyperLatent { values: from_symbols(shape, symbols)?, mode: QuantMode::Inference })
    }
}

fn to_symbols(t: &Tensor, mode: QuantMode) -> Result<Vec<i32>> {
    if mode != QuantMode::Inference {
        return Err(Error::Config("only inference-mode (rounded) latents have integer symbols".into()));
    }
    t.data()
        .iter()
        .map(|&v| {
            if v.is_finite() && v.abs() <= i32::MAX as f64 {
                Ok(v as i32)
            } else {
                Err(Error::NonFinite(format!("symbol conversion of {v}")))
            }
        })
        .collect()
}

fn from_symbols(shape: &[usize], symbols: &[i32]) -> Result<Tensor> {
    Ok(Tensor::new(shape.to_vec(), symbols.iter().map(|&s| s as f64).collect())?)
}
