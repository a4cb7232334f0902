//! Hashing head on top of the codec latent: attention gate, hashing
//! network, classification and hash layers, and the losses that train it.

mod code;
mod config;
mod labels;
pub(crate) mod network;
#[cfg(test)]
mod tests;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use code::HashCode;
pub use config::HashHeadConfig;
pub use labels::{label_similarity, LabelVector};
pub use network::{HashGraph, HashLosses, PairBatch, PARAM_PREFIX};

use crate::codec::QuantizedLatent;
use crate::numerics::{finite_difference_check, NumericsError, Tape, Tensor, Var};
use crate::params::ParamStore;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct HashHead {
    pub config: HashHeadConfig,
    pub params: ParamStore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashOutput {
    pub logits: Vec<f64>,
    pub code: HashCode,
    /// per-class probabilities
    pub labels: Vec<f64>,
}

/// One of the hashing losses, for gradient checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HashLossTerm {
    Pairwise,
    Balance,
    Classification,
    Total,
}

/// Scalar values of the hashing losses over one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HashLossValues {
    pub pairwise: f64,
    pub balance: f64,
    pub classification: f64,
    pub total: f64,
}

impl HashHead {
    pub fn new(config: HashHeadConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = network::init_params(&config, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(HashHead { config, params })
    }

    pub fn from_parts(config: HashHeadConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let reference = network::init_params(&config, &mut ChaCha8Rng::seed_from_u64(0));
        for (name, t) in reference.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::Compatibility(format!("parameter {name} does not match the hash head config")));
            }
        }
        Ok(HashHead { config, params })
    }

    fn stacked(&self, latents: &[&QuantizedLatent]) -> Result<Tensor> {
        let first = latents.first().ok_or_else(|| Error::Config("empty batch".into()))?;
        let shape = first.values.shape().to_vec();
        if shape.len() != 3 || shape[0] != self.config.latent_channels {
            return Err(Error::Compatibility(format!(
                "hash head reads {}-channel latents, got {shape:?}",
                self.config.latent_channels
            )));
        }
        let mut data = Vec::with_capacity(latents.len() * first.values.len());
        for l in latents {
            if l.values.shape() != shape.as_slice() {
                return Err(Error::Compatibility("latents in a batch differ in shape".into()));
            }
            data.extend_from_slice(l.values.data());
        }
        let mut full = vec![latents.len()];
        full.extend(shape);
        Ok(Tensor::new(full, data)?)
    }

    pub fn forward(&self, latents: &[&QuantizedLatent]) -> Result<Vec<HashOutput>> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(self.stacked(latents)?);
        let g = network::hash_graph(&mut tape, &b, x)?;
        let (q, c) = (self.config.code_bits, self.config.classes);
        let logits = tape.data(g.logits);
        let labels = tape.data(g.labels);
        Ok((0..latents.len())
            .map(|i| {
                let l = logits[i * q..(i + 1) * q].to_vec();
                HashOutput { code: HashCode::from_logits(&l), logits: l, labels: labels[i * c..(i + 1) * c].to_vec() }
            })
            .collect())
    }

    pub fn code(&self, latent: &QuantizedLatent) -> Result<HashCode> {
        Ok(self.forward(&[latent])?.remove(0).code)
    }

    pub fn losses(&self, latents: &[&QuantizedLatent], truth: &[LabelVector]) -> Result<HashLossValues> {
        let mut tape = Tape::new();
        let b = self.params.bind(&mut tape, false);
        let x = tape.constant(self.stacked(latents)?);
        let g = network::hash_graph(&mut tape, &b, x)?;
        let pairs = PairBatch::from_labels(truth);
        let l = network::hash_losses(&mut tape, &self.config, g.codes, g.labels, &pairs, truth)?;
        Ok(HashLossValues {
            pairwise: tape.value(l.pairwise).item()?,
            balance: tape.value(l.balance).item()?,
            classification: tape.value(l.classification).item()?,
            total: tape.value(l.total).item()?,
        })
    }

    /// Worst relative error of the analytic `L_H` gradient with respect to
    /// head parameter `name` against central differences, on a batch of
    /// latents `[n, c, h, w]`. Codes are the relaxed logits here since the
    /// sign has no finite-difference derivative.
    pub fn parameter_gradient_error(&self, latents: &Tensor, labels: &[LabelVector], name: &str, step: f64) -> Result<f64> {
        let pairs = PairBatch::from_labels(labels);
        let f = |tape: &mut Tape, v: Var| -> std::result::Result<Var, NumericsError> {
            let mut b = self.params.bind(tape, false);
            b.replace(name, v);
            let x = tape.constant(latents.clone());
            let g = network::hash_graph(tape, &b, x).map_err(Error::into_numerics)?;
            let l = network::hash_losses(tape, &self.config, g.logits, g.labels, &pairs, labels).map_err(Error::into_numerics)?;
            Ok(l.total)
        };
        Ok(finite_difference_check(f, self.params.get(name)?, step)?)
    }
}

/// Worst relative error of one hashing loss's analytic gradient against
/// central differences, given continuous codes `[n, q]` and class
/// probabilities `[n, C]`. The classification term is probed through the
/// probabilities, every other term through the codes.
pub fn loss_gradient_error(
    config: &HashHeadConfig,
    labels: &[LabelVector],
    codes: &Tensor,
    probs: &Tensor,
    term: HashLossTerm,
    step: f64,
) -> Result<f64> {
    let pairs = PairBatch::from_labels(labels);
    let on_probs = matches!(term, HashLossTerm::Classification);
    let f = |tape: &mut Tape, v: Var| -> std::result::Result<Var, NumericsError> {
        let (c, p) = if on_probs { (tape.constant(codes.clone()), v) } else { (v, tape.constant(probs.clone())) };
        let l = network::hash_losses(tape, config, c, p, &pairs, labels).map_err(Error::into_numerics)?;
        Ok(match term {
            HashLossTerm::Pairwise => l.pairwise,
            HashLossTerm::Balance => l.balance,
            HashLossTerm::Classification => l.classification,
            HashLossTerm::Total => l.total,
        })
    };
    Ok(finite_difference_check(f, if on_probs { probs } else { codes }, step)?)
}
