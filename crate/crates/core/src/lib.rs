//! Joint learned image compression and hash-based indexing.
//!
//! One encoder feeds two heads: an entropy-coded quantized latent for
//! storage and a `q`-bit hash code for retrieval without decoding.

pub mod codec;
pub mod dataset;
pub mod entropy;
mod error;
pub mod hash_head;
pub mod numerics;
pub mod params;
pub mod pipeline;
pub mod retrieval;
pub mod trainer;

pub use error::{Error, Result};
