use std::io::{Read, Write};

use super::range_coder::{RangeDecoder, RangeEncoder};
use super::{SymbolModel, ESCAPE_RAW_BITS};
use crate::{Error, Result};

pub const STREAM_MAGIC: &[u8; 4] = b"JCIF";
pub const STREAM_VERSION: u8 = 1;
/// Fixed header bytes before the payload.
pub const STREAM_HEADER_LEN: usize = 4 + 1 + 1 + 16 + 4 + 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamKind {
    Latent,
    Hyper,
}

impl StreamKind {
    fn code(self) -> u8 {
        match self {
            StreamKind::Latent => 0,
            StreamKind::Hyper => 1,
        }
    }
}

/// One entropy-coded tensor: header fields plus the range-coder bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitstream {
    pub kind: StreamKind,
    pub shape: [u32; 4],
    pub lo: i16,
    pub hi: i16,
    pub payload: Vec<u8>,
}

impl Bitstream {
    pub fn payload_bits(&self) -> u64 {
        8 * self.payload.len() as u64
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().map(|&d| d as usize).product()
    }

    pub fn encoded_len(&self) -> usize {
        STREAM_HEADER_LEN + self.payload.len()
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(STREAM_MAGIC)?;
        out.write_all(&[STREAM_VERSION, self.kind.code()])?;
        for d in self.shape {
            out.write_all(&d.to_le_bytes())?;
        }
        out.write_all(&self.lo.to_le_bytes())?;
        out.write_all(&self.hi.to_le_bytes())?;
        out.write_all(&self.payload_bits().to_le_bytes())?;
        out.write_all(&self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads one stream; the payload length comes from the header, so
    /// streams can be concatenated.
    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; STREAM_HEADER_LEN];
        read_exact(input, &mut head)?;
        if &head[0..4] != STREAM_MAGIC {
            return Err(Error::Format("bad bitstream magic".into()));
        }
        if head[4] != STREAM_VERSION {
            return Err(Error::Compatibility(format!("unsupported bitstream version {}", head[4])));
        }
        let kind = match head[5] {
            0 => StreamKind::Latent,
            1 => StreamKind::Hyper,
            k => return Err(Error::Format(format!("unknown stream kind {k}"))),
        };
        let mut shape = [0u32; 4];
        for (i, d) in shape.iter_mut().enumerate() {
            *d = u32::from_le_bytes(head[6 + 4 * i..10 + 4 * i].try_into().unwrap());
        }
        let lo = i16::from_le_bytes([head[22], head[23]]);
        let hi = i16::from_le_bytes([head[24], head[25]]);
        let bits = u64::from_le_bytes(head[26..34].try_into().unwrap());
        if bits % 8 != 0 || lo > hi {
            return Err(Error::Format(format!("inconsistent header (bits {bits}, window [{lo}, {hi}])")));
        }
        let len = usize::try_from(bits / 8).map_err(|_| Error::Format("payload too large".into()))?;
        let mut payload = Vec::new();
        input.take(len as u64).read_to_end(&mut payload).map_err(|e| Error::Format(e.to_string()))?;
        if payload.len() != len {
            return Err(Error::Format(format!("payload truncated: {} of {len} bytes", payload.len())));
        }
        Ok(Bitstream { kind, shape, lo, hi, payload })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let s = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after bitstream", cursor.len())));
        }
        Ok(s)
    }
}

fn read_exact(input: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("bitstream header truncated".into()),
        _ => Error::Format(e.to_string()),
    })
}

/// Range-codes `symbols[i]` under `models[i]`.
pub fn encode_symbols(symbols: &[i32], models: &[SymbolModel]) -> Result<Vec<u8>> {
    if symbols.len() != models.len() {
        return Err(Error::Config(format!("{} symbols for {} models", symbols.len(), models.len())));
    }
    let mut enc = RangeEncoder::new();
    for (&s, m) in symbols.iter().zip(models) {
        match (m.slot_of(s), m.escape_slot()) {
            (Some(slot), _) => enc.encode_slot(m, slot),
            (None, Some(esc)) => {
                enc.encode_slot(m, esc);
                let raw = s as u32;
                enc.encode_raw(raw >> 16, ESCAPE_RAW_BITS / 2);
                enc.encode_raw(raw & 0xFFFF, ESCAPE_RAW_BITS / 2);
            }
            (None, None) => {
                return Err(Error::Config(format!("symbol {s} outside [{}, {}] and no escape", m.lo(), m.hi())))
            }
        }
    }
    Ok(enc.finish())
}

/// Inverse of [`encode_symbols`]. A wrong model or damaged payload yields
/// wrong symbols, never a panic.
pub fn decode_symbols(payload: &[u8], models: &[SymbolModel]) -> Vec<i32> {
    let mut dec = RangeDecoder::new(payload);
    models
        .iter()
        .map(|m| {
            let slot = dec.decode_slot(m);
            if Some(slot) == m.escape_slot() {
                let hi = dec.decode_raw(ESCAPE_RAW_BITS / 2);
                let lo = dec.decode_raw(ESCAPE_RAW_BITS / 2);
                ((hi << 16) | lo) as i32
            } else {
                m.lo() + slot as i32
            }
        })
        .collect()
}
