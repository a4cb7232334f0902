use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use crate::hash_head::HashCode;
use crate::{Error, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"JCIX";
pub const INDEX_VERSION: u8 = 1;
/// Largest Hamming radius probed bucket-by-bucket before scanning everything.
pub const PROBE_RADIUS: u32 = 2;

/// Packs a code whose length is a multiple of 8: +1 → 1, −1 → 0, bit 0 of
/// byte 0 is component 0.
pub fn pack_code(code: &HashCode) -> Result<Vec<u8>> {
    if code.len() % 8 != 0 || code.is_empty() {
        return Err(Error::Config(format!("code length {} is not a positive multiple of 8", code.len())));
    }
    Ok(code.pack())
}

pub fn unpack_code(bytes: &[u8], bits: usize) -> Result<HashCode> {
    if bits % 8 != 0 || bits == 0 {
        return Err(Error::Config(format!("code length {bits} is not a positive multiple of 8")));
    }
    HashCode::unpack(bytes, bits)
}

/// Population count of `a XOR b`.
pub fn hamming(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    let mut d: u32 = ca
        .by_ref()
        .zip(cb.by_ref())
        .map(|(x, y)| (u64::from_le_bytes(x.try_into().unwrap()) ^ u64::from_le_bytes(y.try_into().unwrap())).count_ones())
        .sum();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        d += (x ^ y).count_ones();
    }
    d
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    pub ids: Vec<u64>,
    pub distances: Vec<u32>,
    pub seconds: f64,
}

/// Buckets of image ids keyed by packed code; ids ascend within a bucket.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct HashTable {
    bits: usize,
    buckets: BTreeMap<Vec<u8>, Vec<u64>>,
}

impl HashTable {
    pub fn new(bits: usize) -> Result<Self> {
        if bits % 8 != 0 || bits == 0 || bits > u16::MAX as usize {
            return Err(Error::Config(format!("code length {bits} is not a positive multiple of 8")));
        }
        Ok(HashTable { bits, buckets: BTreeMap::new() })
    }

    pub fn build<'a>(bits: usize, codes: impl IntoIterator<Item = (u64, &'a HashCode)>) -> Result<Self> {
        let mut t = Self::new(bits)?;
        let mut seen = std::collections::HashSet::new();
        for (id, code) in codes {
            if !seen.insert(id) {
                return Err(Error::Config(format!("duplicate image id {id}")));
            }
            if code.len() != bits {
                return Err(Error::Compatibility(format!("code of image {id} has {} bits, table {bits}", code.len())));
            }
            t.buckets.entry(pack_code(code)?).or_default().push(id);
        }
        for ids in t.buckets.values_mut() {
            ids.sort_unstable();
        }
        Ok(t)
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn bucket_count(&self) -> usize {
        self.buckets.len()
    }

    pub fn len(&self) -> usize {
        self.buckets.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn bucket(&self, key: &[u8]) -> Option<&[u64]> {
        self.buckets.get(key).map(Vec::as_slice)
    }

    pub fn buckets(&self) -> impl Iterator<Item = (&[u8], &[u64])> {
        self.buckets.iter().map(|(k, v)| (k.as_slice(), v.as_slice()))
    }

    /// Top-`k` ids by Hamming distance, ties by ascending id. Buckets within
    /// radius 0..=[`PROBE_RADIUS`] are looked up directly; if that does not
    /// produce `k` ids, every bucket is scanned.
    pub fn query(&self, code: &HashCode, top_k: usize) -> Result<RetrievalResult> {
        let start = Instant::now();
        if code.len() != self.bits {
            return Err(Error::Compatibility(format!("query code has {} bits, table {}", code.len(), self.bits)));
        }
        if top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        let key = pack_code(code)?;
        let mut hits: Vec<(u32, u64)> = Vec::new();
        let mut complete = false;
        for r in 0..=PROBE_RADIUS.min(self.bits as u32) {
            // probing costs C(q, r) lookups; past the bucket count a scan is cheaper
            if probe_count(self.bits, r) > self.buckets.len() as u64 {
                break;
            }
            self.probe(&key, r, &mut hits);
            if hits.len() >= top_k {
                complete = true;
                break;
            }
        }
        if !complete {
            hits.clear();
            for (k, ids) in &self.buckets {
                let d = hamming(&key, k);
                hits.extend(ids.iter().map(|&id| (d, id)));
            }
        }
        // every id at distance ≤ the k-th distance is present, so sorting
        // the collected hits gives the exact ranking
        hits.sort_unstable();
        hits.truncate(top_k);
        Ok(RetrievalResult {
            ids: hits.iter().map(|h| h.1).collect(),
            distances: hits.iter().map(|h| h.0).collect(),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn probe(&self, key: &[u8], radius: u32, hits: &mut Vec<(u32, u64)>) {
        let mut push = |k: &[u8]| {
            if let Some(ids) = self.buckets.get(k) {
                hits.extend(ids.iter().map(|&id| (radius, id)));
            }
        };
        let mut k = key.to_vec();
        let flip = |k: &mut [u8], bit: usize| k[bit / 8] ^= 1 << (bit % 8);
        match radius {
            0 => push(&k),
            1 => {
                for a in 0..self.bits {
                    flip(&mut k, a);
                    push(&k);
                    flip(&mut k, a);
                }
            }
            2 => {
                for a in 0..self.bits {
                    flip(&mut k, a);
                    for b in a + 1..self.bits {
                        flip(&mut k, b);
                        push(&k);
                        flip(&mut k, b);
                    }
                    flip(&mut k, a);
                }
            }
            _ => unreachable!("probe radius capped at {PROBE_RADIUS}"),
        }
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        out.write_all(INDEX_MAGIC)?;
        out.write_all(&[INDEX_VERSION])?;
        out.write_all(&(self.bits as u16).to_le_bytes())?;
        out.write_all(&(self.buckets.len() as u64).to_le_bytes())?;
        for (key, ids) in &self.buckets {
            out.write_all(key)?;
            out.write_all(&(ids.len() as u32).to_le_bytes())?;
            for id in ids {
                out.write_all(&id.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 15];
        read_all(input, &mut head)?;
        if &head[..4] != INDEX_MAGIC {
            return Err(Error::Format("bad index magic".into()));
        }
        if head[4] != INDEX_VERSION {
            return Err(Error::Compatibility(format!("unsupported index version {}", head[4])));
        }
        let bits = u16::from_le_bytes([head[5], head[6]]) as usize;
        let count = u64::from_le_bytes(head[7..15].try_into().unwrap());
        let mut t = Self::new(bits).map_err(|_| Error::Format(format!("index code length {bits}")))?;
        let mut seen = std::collections::HashSet::new();
        for _ in 0..count {
            let mut key = vec![0u8; bits / 8];
            read_all(input, &mut key)?;
            let mut n = [0u8; 4];
            read_all(input, &mut n)?;
            let n = u32::from_le_bytes(n) as usize;
            let mut ids = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let mut id = [0u8; 8];
                read_all(input, &mut id)?;
                let id = u64::from_le_bytes(id);
                if !seen.insert(id) {
                    return Err(Error::Format(format!("image id {id} appears twice in the index")));
                }
                ids.push(id);
            }
            if ids.is_empty() || ids.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Format("index bucket is empty or unsorted".into()));
            }
            if t.buckets.insert(key, ids).is_some() {
                return Err(Error::Format("duplicate bucket key in index".into()));
            }
        }
        Ok(t)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let t = Self::read_from(&mut cur)?;
        if !cur.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after index", cur.len())));
        }
        Ok(t)
    }
}

fn read_all(input: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| Error::Format(format!("index truncated: {e}")))
}

fn probe_count(bits: usize, r: u32) -> u64 {
    let q = bits as u64;
    match r {
        0 => 1,
        1 => q,
        _ => q * (q - 1) / 2,
    }
}
