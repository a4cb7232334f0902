use crate::{Error, Result};

/// A `q`-bit code over {−1, +1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HashCode(Vec<i8>);

impl HashCode {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b != 1 && b != -1) {
            return Err(Error::Format(format!("hash code component {b} is not ±1")));
        }
        Ok(HashCode(bits))
    }

    /// `sign` with `sign(0) = +1`.
    pub fn from_logits(logits: &[f64]) -> Self {
        HashCode(logits.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
    }

    pub fn bits(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `⟨b_i, b_j⟩ = q − 2·hamming`.
    pub fn inner(&self, other: &HashCode) -> i64 {
        self.0.iter().zip(&other.0).map(|(&a, &b)| (a * b) as i64).sum()
    }

    pub fn balance(&self) -> i64 {
        self.0.iter().map(|&b| b as i64).sum()
    }

    /// Bit `k` of the packed form is set when component `k` is +1; bytes
    /// fill least significant bit first.
    pub fn pack(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.0.len().div_ceil(8)];
        for (k, &b) in self.0.iter().enumerate() {
            if b > 0 {
                out[k / 8] |= 1 << (k % 8);
            }
        }
        out
    }

    pub fn unpack(bytes: &[u8], bits: usize) -> Result<Self> {
        if bytes.len() != bits.div_ceil(8) {
            return Err(Error::Format(format!("{} bytes cannot hold exactly {bits} code bits", bytes.len())));
        }
        if bits % 8 != 0 && bytes[bits / 8] >> (bits % 8) != 0 {
            return Err(Error::Format("padding bits of packed code are set".into()));
        }
        Ok(HashCode((0..bits).map(|k| if bytes[k / 8] >> (k % 8) & 1 == 1 { 1 } else { -1 }).collect()))
    }
}
