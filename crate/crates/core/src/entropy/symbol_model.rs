use crate::codec::{FactorizedDensity, GaussianMixtureParams};
use crate::numerics::kernels::{normal_cdf, sigmoid};
use crate::{Error, Result};

pub const DEFAULT_PRECISION: u32 = 16;
pub const WINDOW_LO: i32 = -127;
pub const WINDOW_HI: i32 = 127;

/// Static integer frequency table over `[lo, hi]`, plus an optional escape
/// slot after `hi` for out-of-window values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolModel {
    lo: i32,
    hi: i32,
    escape: bool,
    precision: u32,
    // cum[s]..cum[s + 1] is the slot of symbol index s; cum.last() == 2^precision
    cum: Vec<u32>,
}

impl SymbolModel {
    /// Quantizes probabilities of `lo..=hi` (and, with `escape`, one extra
    /// entry for the escape slot) to frequencies summing to `2^precision`.
    /// Every slot gets at least one count; rounding slack goes to the most
    /// probable slot.
    pub fn from_probabilities(lo: i32, hi: i32, probs: &[f64], escape: bool, precision: u32) -> Result<Self> {
        if hi < lo {
            return Err(Error::Config(format!("empty support [{lo}, {hi}]")));
        }
        let slots = (hi - lo) as usize + 1 + usize::from(escape);
        if probs.len() != slots {
            return Err(Error::Config(format!("{} probabilities for {slots} slots", probs.len())));
        }
        if !(1..=16).contains(&precision) || slots > 1 << precision {
            return Err(Error::Config(format!("{slots} slots do not fit precision {precision}")));
        }
        let total = 1u64 << precision;
        let mass: f64 = probs.iter().map(|p| if p.is_finite() { p.max(0.0) } else { 0.0 }).sum();
        let mut freq: Vec<u64> = probs
            .iter()
            .map(|&p| {
                let p = if p.is_finite() && mass > 0.0 { p.max(0.0) / mass } else { 1.0 / slots as f64 };
                ((p * total as f64).round() as u64).max(1)
            })
            .collect();
        let sum: u64 = freq.iter().sum();
        if sum < total {
            let j = argmax(&freq);
            freq[j] += total - sum;
        } else {
            let mut excess = sum - total;
            while excess > 0 {
                let j = argmax(&freq);
                let take = excess.min(freq[j] - 1);
                freq[j] -= take;
                excess -= take;
            }
        }
        let mut cum = Vec::with_capacity(slots + 1);
        let mut acc = 0u32;
        cum.push(0);
        for f in freq {
            acc += f as u32;
            cum.push(acc);
        }
        Ok(SymbolModel { lo, hi, escape, precision, cum })
    }

    pub fn uniform(lo: i32, hi: i32, escape: bool, precision: u32) -> Result<Self> {
        let slots = (hi - lo).max(0) as usize + 1 + usize::from(escape);
        Self::from_probabilities(lo, hi, &vec![1.0; slots], escape, precision)
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.hi
    }

    pub fn has_escape(&self) -> bool {
        self.escape
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn slots(&self) -> usize {
        self.cum.len() - 1
    }

    pub fn frequency(&self, slot: usize) -> u32 {
        self.cum[slot + 1] - self.cum[slot]
    }

    pub fn frequencies(&self) -> Vec<u32> {
        self.cum.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub(crate) fn start(&self, slot: usize) -> u32 {
        self.cum[slot]
    }

    pub fn escape_slot(&self) -> Option<usize> {
        self.escape.then(|| self.slots() - 1)
    }

    /// Slot of an in-window value.
    pub fn slot_of(&self, value: i32) -> Option<usize> {
        (self.lo..=self.hi).contains(&value).then(|| (value - self.lo) as usize)
    }

    /// Slot whose interval contains `target < 2^precision`.
    pub(crate) fn find(&self, target: u32) -> usize {
        self.cum.partition_point(|&c| c <= target) - 1
    }

    /// Code length in bits of `value` under the quantized table, including
    /// the raw escape payload.
    pub fn cost_bits(&self, value: i32) -> Option<f64> {
        let slot = match self.slot_of(value) {
            Some(s) => s,
            None => self.escape_slot()?,
        };
        let raw = if Some(slot) == self.escape_slot() { super::ESCAPE_RAW_BITS as f64 } else { 0.0 };
        Some(self.precision as f64 - (self.frequency(slot) as f64).log2() + raw)
    }
}

fn argmax(freq: &[u64]) -> usize {
    // first maximum, so ties resolve the same way everywhere
    let mut best = 0;
    for (j, &f) in freq.iter().enumerate() {
        if f > freq[best] {
            best = j;
        }
    }
    best
}

/// Interval masses of `cdf` over unit bins centred on `lo..=hi`, with the
/// remaining mass as a final escape entry.
fn binned(lo: i32, hi: i32, cdf: impl Fn(f64) -> f64) -> Vec<f64> {
    let edges: Vec<f64> = (lo..=hi + 1).map(|y| cdf(y as f64 - 0.5)).collect();
    let mut probs: Vec<f64> = edges.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    let inside = edges[edges.len() - 1] - edges[0];
    probs.push((1.0 - inside).max(0.0));
    probs
}

/// Frequency table for latent element `i` under its mixture model.
pub fn mixture_model(gmm: &GaussianMixtureParams, i: usize, lo: i32, hi: i32, precision: u32) -> Result<SymbolModel> {
    let n = gmm.len();
    let comps: Vec<(f64, f64, f64)> = (0..gmm.mixtures)
        .map(|k| {
            let idx = k * n + i;
            (gmm.weights[idx], gmm.means[idx], gmm.scales[idx])
        })
        .collect();
    let probs = binned(lo, hi, |x| {
        comps
            .iter()
            .map(|&(w, mu, sigma)| {
                let z = (x - mu) / sigma;
                // the tails are exactly flat at this precision
                if z < -40.0 {
                    0.0
                } else if z > 40.0 {
                    w
                } else {
                    w * normal_cdf(z)
                }
            })
            .sum()
    });
    SymbolModel::from_probabilities(lo, hi, &probs, true, precision)
}

/// Frequency table for hyper-latent channel `channel`.
pub fn factorized_model(density: &FactorizedDensity, channel: usize, lo: i32, hi: i32, precision: u32) -> Result<SymbolModel> {
    let probs = binned(lo, hi, |x| sigmoid(density.logit(channel, x)));
    SymbolModel::from_probabilities(lo, hi, &probs, true, precision)
}
