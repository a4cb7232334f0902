use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiplier turning a dimensionless rate–distortion setting into the λ
/// applied to MSE: `setting · LAMBDA_SCALE · (H·W·C)`.
pub const LAMBDA_SCALE: f64 = 100.0;

/// Default dimensionless settings swept to trace a rate–distortion curve.
pub const DEFAULT_LAMBDA_SWEEP: [f64; 6] = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0];

pub const SCALE_FLOOR: f64 = 1e-6;
/// `2⁻³²`: smallest probability charged to any symbol.
pub const PROB_FLOOR: f64 = 1.0 / 4_294_967_296.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub image_channels: usize,
    /// widths of the stride-2 encoder stages; the downsampling factor is `2^len`
    pub encoder_widths: Vec<usize>,
    pub latent_channels: usize,
    pub hyper_width: usize,
    pub hyper_channels: usize,
    pub mixtures: usize,
    /// hidden width of each channel's monotone CDF network
    pub density_width: usize,
    /// rate–distortion weight on MSE
    pub lambda: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            image_channels: 3,
            encoder_widths: vec![32, 64],
            latent_channels: 16,
            hyper_width: 32,
            hyper_channels: 8,
            mixtures: 3,
            density_width: 3,
            lambda: lambda_for(0.1, 32 * 32 * 3),
        }
    }
}

/// λ for a dimensionless sweep setting on images with `values` samples.
pub fn lambda_for(setting: f64, values: usize) -> f64 {
    setting * LAMBDA_SCALE * values as f64
}

impl CodecConfig {
    pub fn downsampling(&self) -> usize {
        1 << self.encoder_widths.len()
    }

    /// Image sides must be multiples of this: the latent grid is halved
    /// once more by the hyper-encoder.
    pub fn padding_multiple(&self) -> usize {
        2 * self.downsampling()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("λ must be > 0, got {}", self.lambda)));
        }
        if self.mixtures == 0 {
            return Err(Error::Config("mixture count K must be ≥ 1".into()));
        }
        let widths = [self.image_channels, self.latent_channels, self.hyper_width, self.hyper_channels, self.density_width];
        if widths.contains(&0) || self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return Err(Error::Config("all layer widths must be positive and at least one encoder stage is required".into()));
        }
        Ok(())
    }
}
