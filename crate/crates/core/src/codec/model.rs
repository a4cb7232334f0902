use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::CodecConfig;
use super::density::{FactorizedDensity, GaussianMixtureParams};
use super::image::{batch_tensor, RasterImage};
use super::latent::{quantize_tensor, HyperLatent, LatentTensor, QuantMode, QuantizedLatent};
use super::network::{self, compression_graph};
use crate::error::{Error, Result};
use crate::numerics::{finite_difference_check, NumericsError, Tape, Tensor, Var};
use crate::params::ParamStore;

/// The learned codec: transforms, hyper-prior and entropy-model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CodecModel {
    pub config: CodecConfig,
    pub params: ParamStore,
}

/// Scalar outcome of [`CodecModel::compression_loss`] for one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionLoss {
    pub loss: f64,
    pub rate_bits: f64,
    pub distortion: f64,
}

fn slice_item(t: &Tensor, index: usize) -> Tensor {
    let per = t.len() / t.shape()[0];
    Tensor::new(t.shape()[1..].to_vec(), t.data()[index * per..(index + 1) * per].to_vec()).expect("consistent")
}

fn stack(items: &[&Tensor]) -> Result<Tensor> {
    let first = items.first().ok_or_else(|| Error::Config("empty batch".into()))?;
    let mut shape = vec![items.len()];
    shape.extend_from_slice(first.shape());
    let mut data = Vec::with_capacity(items.len() * first.len());
    for t in items {
        if t.shape() != first.shape() {
            return Err(Error::Compatibility(format!("cannot stack {:?} with {:?}", first.shape(), t.shape())));
        }
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::new(shape, data)?)
}

impl CodecModel {
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = network::init_params(&config, &mut rng);
        Ok(CodecModel { config, params })
    }

    pub fn from_parts(config: CodecConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let reference = network::init_params(&config, &mut ChaCha8Rng::seed_from_u64(0));
        for (name, t) in reference.iter() {
            let got = params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Compatibility(format!(
                    "parameter {name} has shape {:?}, config implies {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(CodecModel { config, params })
    }

    fn check_dims(&self, img: &RasterImage) -> Result<()> {
        let f = self.config.padding_multiple();
        if img.channels() != self.config.image_channels {
            return Err(Error::Compatibility(format!(
                "model expects {} channels, image has {}",
                self.config.image_channels,
                img.channels()
            )));
        }
        if img.height() % f != 0 || img.width() % f != 0 {
            return Err(Error::Config(format!(
                "{}x{} is not divisible by {f}; reflect-pad first",
                img.height(),
                img.width()
            )));
        }
        Ok(())
    }

    pub fn encode(&self, image: &RasterImage) -> Result<LatentTensor> {
        Ok(self.encode_batch(&[image])?.remove(0))
    }

    pub fn encode_batch(&self, images: &[&RasterImage]) -> Result<Vec<LatentTensor>> {
        for img in images {
            self.check_dims(img)?;
        }
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(batch_tensor(images)?);
        let y = network::encoder(&mut tape, &b, &self.config, x)?;
        let out = tape.value(y);
        Ok((0..images.len()).map(|i| LatentTensor(slice_item(out, i))).collect())
    }

    fn latent_shape_ok(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 3 || shape[0] != self.config.latent_channels {
            return Err(Error::Compatibility(format!(
                "latent shape {shape:?} does not have {} channels",
                self.config.latent_channels
            )));
        }
        Ok(())
    }

    /// Reconstruction clamped to `[0, 1]`, of size `f·h × f·w`.
    pub fn decode(&self, q: &QuantizedLatent) -> Result<RasterImage> {
        Ok(self.decode_batch(&[q])?.remove(0))
    }

    pub fn decode_batch(&self, qs: &[&QuantizedLatent]) -> Result<Vec<RasterImage>> {
        for q in qs {
            self.latent_shape_ok(q.values.shape())?;
        }
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let stacked = stack(&qs.iter().map(|q| &q.values).collect::<Vec<_>>())?;
        let qv = tape.constant(stacked);
        let xh = network::decoder(&mut tape, &b, &self.config, qv)?;
        let out = tape.value(xh);
        let (c, h, w) = (out.shape()[1], out.shape()[2], out.shape()[3]);
        (0..qs.len()).map(|i| RasterImage::from_planar(h, w, c, slice_item(out, i).data())).collect()
    }

    pub fn hyper_encode(&self, latent: &LatentTensor, mode: QuantMode, rng: &mut impl Rng) -> Result<HyperLatent> {
        self.latent_shape_ok(latent.shape())?;
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let y = tape.constant(stack(&[&latent.0])?);
        let z = network::hyper_encoder(&mut tape, &b, y)?;
        let values = quantize_tensor(&slice_item(tape.value(z), 0), mode, rng);
        Ok(HyperLatent { values, mode })
    }

    pub fn hyper_decode(&self, z: &HyperLatent) -> Result<GaussianMixtureParams> {
        if z.values.rank() != 3 || z.values.shape()[0] != self.config.hyper_channels {
            return Err(Error::Compatibility(format!("hyper-latent shape {:?}", z.values.shape())));
        }
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let zv = tape.constant(stack(&[&z.values])?);
        let m = network::hyper_decoder(&mut tape, &b, &self.config, zv)?;
        let (k, cl) = (self.config.mixtures, self.config.latent_channels);
        let (h, w) = (2 * z.values.shape()[1], 2 * z.values.shape()[2]);
        // tape layout is [1, K·c, h, w], i.e. component-major, which is the
        // GaussianMixtureParams layout already
        let take = |v| tape.data(v).to_vec();
        Ok(GaussianMixtureParams {
            mixtures: k,
            shape: vec![cl, h, w],
            weights: take(m.weights),
            means: take(m.means),
            scales: take(m.scales),
        })
    }

    pub fn density(&self) -> Result<FactorizedDensity> {
        FactorizedDensity::from_params(&self.params, self.config.hyper_channels, self.config.density_width)
    }

    /// `L_C = rate + λ·MSE` for one image, plus its two components.
    pub fn compression_loss(&self, image: &RasterImage, mode: QuantMode, rng: &mut impl Rng) -> Result<CompressionLoss> {
        self.check_dims(image)?;
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(batch_tensor(&[image])?);
        let g = compression_graph(&mut tape, &b, &self.config, x, mode, rng)?;
        Ok(CompressionLoss {
            loss: tape.value(g.loss).item()?,
            rate_bits: tape.value(g.rate_bits).item()?,
            distortion: tape.value(g.mse).item()?,
        })
    }

    /// Worst relative error between the analytic gradient of the batch
    /// `L_C` with respect to parameter `name` and central differences.
    /// `seed` fixes the training-mode noise so both evaluations see the same draw.
    pub fn loss_gradient_error(&self, images: &[&RasterImage], name: &str, mode: QuantMode, seed: u64, step: f64) -> Result<f64> {
        for img in images {
            self.check_dims(img)?;
        }
        let batch = batch_tensor(images)?;
        let at = self.params.get(name)?;
        let f = |tape: &mut Tape, v: Var| -> std::result::Result<Var, NumericsError> {
            let mut b = self.params.bind(tape, false);
            b.replace(name, v);
            let x = tape.constant(batch.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = compression_graph(tape, &b, &self.config, x, mode, &mut rng).map_err(Error::into_numerics)?;
            Ok(g.loss)
        };
        Ok(finite_difference_check(f, at, step)?)
    }
}
