use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::archive::{Archive, ArchiveEntry};
use crate::codec::{hyper_rate, latent_rate, quantize, CodecModel, LatentTensor, QuantMode, QuantizedLatent, RasterImage};
use crate::dataset::Sample;
use crate::entropy::encode_latent;
use crate::hash_head::{HashCode, HashHead};
use crate::{Error, Result};

/// Images pushed through the encoder at once.
pub const ENCODE_BATCH: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionStats {
    pub images: usize,
    pub pixels: u64,
    pub payload_bits: u64,
    /// model code length `−log₂ P` of the same symbols
    pub estimated_bits: f64,
}

impl CompressionStats {
    pub fn bpp(&self) -> f64 {
        self.payload_bits as f64 / self.pixels.max(1) as f64
    }

    pub fn estimated_bpp(&self) -> f64 {
        self.estimated_bits / self.pixels.max(1) as f64
    }
}

pub(crate) fn check_pair(codec: &CodecModel, head: &HashHead) -> Result<()> {
    if codec.config.latent_channels != head.config.latent_channels {
        return Err(Error::Compatibility(format!(
            "codec latent has {} channels, hash head reads {}",
            codec.config.latent_channels, head.config.latent_channels
        )));
    }
    Ok(())
}

pub(crate) fn rounded(latent: &LatentTensor) -> QuantizedLatent {
    // inference quantization draws nothing
    quantize(latent, QuantMode::Inference, &mut ChaCha8Rng::seed_from_u64(0))
}

/// Rounded latents of a set of images, batched through the encoder.
pub fn encode_images(codec: &CodecModel, images: &[&RasterImage]) -> Result<Vec<LatentTensor>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(ENCODE_BATCH) {
        out.extend(codec.encode_batch(chunk)?);
    }
    Ok(out)
}

/// Hash codes of rounded latents, batched through the head.
pub fn hash_latents(head: &HashHead, latents: &[QuantizedLatent]) -> Result<Vec<HashCode>> {
    let mut out = Vec::with_capacity(latents.len());
    for chunk in latents.chunks(ENCODE_BATCH) {
        let refs: Vec<&QuantizedLatent> = chunk.iter().collect();
        out.extend(head.forward(&refs)?.into_iter().map(|o| o.code));
    }
    Ok(out)
}

/// Encoder, then hash head on the rounded latent.
pub fn hash_images(codec: &CodecModel, head: &HashHead, images: &[&RasterImage]) -> Result<Vec<HashCode>> {
    check_pair(codec, head)?;
    let latents: Vec<QuantizedLatent> = encode_images(codec, images)?.iter().map(rounded).collect();
    hash_latents(head, &latents)
}

/// Model code length of the rounded latent and its hyper-latent.
pub fn estimated_bits(codec: &CodecModel, latent: &LatentTensor) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let z = codec.hyper_encode(latent, QuantMode::Inference, &mut rng)?;
    let gmm = codec.hyper_decode(&z)?;
    Ok(latent_rate(&rounded(latent), &gmm)? + hyper_rate(&z, &codec.density()?)?)
}

/// Encodes every sample once: both bitstreams plus the hash code of the
/// rounded latent, which is what the decoder side would see.
pub fn compress(codec: &CodecModel, head: &HashHead, samples: &[Sample]) -> Result<(Archive, CompressionStats)> {
    check_pair(codec, head)?;
    let mut archive = Archive::new(head.config.code_bits)?;
    let mut stats = CompressionStats { images: 0, pixels: 0, payload_bits: 0, estimated_bits: 0.0 };
    for chunk in samples.chunks(ENCODE_BATCH) {
        let images: Vec<&RasterImage> = chunk.iter().map(|s| &s.image).collect();
        let latents = codec.encode_batch(&images)?;
        let q: Vec<QuantizedLatent> = latents.iter().map(rounded).collect();
        let codes = hash_latents(head, &q)?;
        for ((s, lat), code) in chunk.iter().zip(&latents).zip(codes) {
            let streams = encode_latent(codec, lat)?;
            stats.images += 1;
            stats.pixels += s.image.pixel_count() as u64;
            stats.payload_bits += streams.payload_bits();
            stats.estimated_bits += estimated_bits(codec, lat)?;
            archive.push(ArchiveEntry { id: s.id, code, streams })?;
        }
    }
    Ok((archive, stats))
}
