use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashHeadConfig {
    /// code length q
    pub code_bits: usize,
    pub hidden: usize,
    pub classes: usize,
    /// channels of the latent the head reads
    pub latent_channels: usize,
    /// relaxation constant of the hard-pair term
    pub alpha: f64,
    /// weight of the soft-pair term
    pub gamma: f64,
}

impl HashHeadConfig {
    /// Defaults for a given code length: α = 5/q, γ = 0.1/q.
    pub fn with_bits(code_bits: usize) -> Self {
        HashHeadConfig {
            code_bits,
            hidden: 128,
            classes: 8,
            latent_channels: 16,
            alpha: 5.0 / code_bits as f64,
            gamma: 0.1 / code_bits as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.code_bits == 0 || self.hidden == 0 || self.classes == 0 || self.latent_channels == 0 {
            return Err(Error::Config(format!("hash head sizes must be positive: {self:?}")));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("alpha {} / gamma {} out of range", self.alpha, self.gamma)));
        }
        Ok(())
    }
}

impl Default for HashHeadConfig {
    fn default() -> Self {
        Self::with_bits(64)
    }
}
