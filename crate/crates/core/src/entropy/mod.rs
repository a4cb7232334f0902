//! Static-model range coding of quantized latents and hyper-latents.

mod range_coder;
mod stream;
mod symbol_model;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use range_coder::{RangeDecoder, RangeEncoder};
pub use stream::{decode_symbols, encode_symbols, Bitstream, StreamKind, STREAM_HEADER_LEN, STREAM_MAGIC, STREAM_VERSION};
pub use symbol_model::{factorized_model, mixture_model, SymbolModel, DEFAULT_PRECISION, WINDOW_HI, WINDOW_LO};

use crate::codec::{CodecModel, HyperLatent, LatentTensor, QuantMode, QuantizedLatent};
use crate::numerics::Tensor;
use crate::{Error, Result};

/// Width of the raw value that follows an escape slot.
pub const ESCAPE_RAW_BITS: u32 = 32;

/// Side information first, then the latent it conditions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedLatents {
    pub hyper: Bitstream,
    pub latent: Bitstream,
}

impl EncodedLatents {
    /// Range-coder payload of both streams, headers excluded.
    pub fn payload_bits(&self) -> u64 {
        self.hyper.payload_bits() + self.latent.payload_bits()
    }
}

fn planar_shape(t: &Tensor) -> Result<[u32; 4]> {
    match t.shape() {
        [c, h, w] => Ok([1, *c as u32, *h as u32, *w as u32]),
        s => Err(Error::Compatibility(format!("expected a [c, h, w] tensor, got {s:?}"))),
    }
}

fn hyper_models(model: &CodecModel, shape: [u32; 4], lo: i32, hi: i32) -> Result<Vec<SymbolModel>> {
    let density = model.density()?;
    let [_, c, h, w] = shape.map(|d| d as usize);
    if c != density.channels {
        return Err(Error::Compatibility(format!("hyper stream has {c} channels, model {}", density.channels)));
    }
    let per_channel: Vec<SymbolModel> =
        (0..c).map(|ch| factorized_model(&density, ch, lo, hi, DEFAULT_PRECISION)).collect::<Result<_>>()?;
    Ok(per_channel.iter().flat_map(|m| std::iter::repeat_n(m.clone(), h * w)).collect())
}

fn latent_models(model: &CodecModel, z: &HyperLatent, lo: i32, hi: i32) -> Result<(Vec<usize>, Vec<SymbolModel>)> {
    let gmm = model.hyper_decode(z)?;
    let models = (0..gmm.len()).map(|i| mixture_model(&gmm, i, lo, hi, DEFAULT_PRECISION)).collect::<Result<_>>()?;
    Ok((gmm.shape.clone(), models))
}

/// Entropy-codes a latent: hyper-latent under the factorized density, then
/// the rounded latent under mixtures decoded from that hyper-latent.
pub fn encode_latent(model: &CodecModel, latent: &LatentTensor) -> Result<EncodedLatents> {
    // inference quantization never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z = model.hyper_encode(latent, QuantMode::Inference, &mut rng)?;
    let q = crate::codec::quantize(latent, QuantMode::Inference, &mut rng);
    let (lo, hi) = (WINDOW_LO, WINDOW_HI);

    let z_shape = planar_shape(&z.values)?;
    let z_models = hyper_models(model, z_shape, lo, hi)?;
    let hyper = Bitstream {
        kind: StreamKind::Hyper,
        shape: z_shape,
        lo: lo as i16,
        hi: hi as i16,
        payload: encode_symbols(&z.symbols()?, &z_models)?,
    };

    let (_, y_models) = latent_models(model, &z, lo, hi)?;
    let latent = Bitstream {
        kind: StreamKind::Latent,
        shape: planar_shape(&q.values)?,
        lo: lo as i16,
        hi: hi as i16,
        payload: encode_symbols(&q.symbols()?, &y_models)?,
    };
    Ok(EncodedLatents { hyper, latent })
}

/// Decodes the hyper stream, rebuilds the mixture models, then decodes the
/// latent. Nothing in the streams detects a mismatched model.
pub fn decode_latent(model: &CodecModel, enc: &EncodedLatents) -> Result<QuantizedLatent> {
    if enc.hyper.kind != StreamKind::Hyper || enc.latent.kind != StreamKind::Latent {
        return Err(Error::Format("stream kinds out of order".into()));
    }
    let (lo, hi) = (enc.hyper.lo as i32, enc.hyper.hi as i32);
    let z_models = hyper_models(model, enc.hyper.shape, lo, hi)?;
    let z_shape: Vec<usize> = enc.hyper.shape[1..].iter().map(|&d| d as usize).collect();
    let z = HyperLatent::from_symbols(&z_shape, &decode_symbols(&enc.hyper.payload, &z_models))?;

    let (y_shape, y_models) = latent_models(model, &z, enc.latent.lo as i32, enc.latent.hi as i32)?;
    let declared: Vec<usize> = enc.latent.shape[1..].iter().map(|&d| d as usize).collect();
    if declared != y_shape || enc.latent.shape[0] != 1 {
        return Err(Error::Compatibility(format!(
            "latent stream shape {:?} does not match the decoded model shape {y_shape:?}",
            enc.latent.shape
        )));
    }
    QuantizedLatent::from_symbols(&y_shape, &decode_symbols(&enc.latent.payload, &y_models))
}
