//! Learned compression: analysis/synthesis transforms, quantization,
//! hyper-prior, entropy models and the rate–distortion loss.

mod config;
mod density;
mod image;
mod latent;
mod metrics;
mod model;
pub(crate) mod network;

pub use config::{lambda_for, CodecConfig, DEFAULT_LAMBDA_SWEEP, LAMBDA_SCALE, PROB_FLOOR, SCALE_FLOOR};
pub use density::{floored_bits, hyper_rate, latent_rate, FactorizedDensity, GaussianMixtureParams};
pub use image::{batch_tensor, RasterImage};
pub use latent::{quantize, uniform_noise, HyperLatent, LatentTensor, QuantMode, QuantizedLatent};
pub use metrics::{distortion, psnr, psnr_from_mse};
pub use model::{CodecModel, CompressionLoss};
pub use network::CompressionGraph;

#[cfg(test)]
pub(crate) mod tests;
