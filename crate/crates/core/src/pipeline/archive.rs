use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::codec::{CodecModel, QuantizedLatent, RasterImage};
use crate::entropy::{decode_latent, Bitstream, EncodedLatents};
use crate::hash_head::HashCode;
use crate::retrieval::{pack_code, unpack_code, HashTable};
use crate::{Error, Result};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"JCAR";
pub const ARCHIVE_VERSION: u8 = 1;

/// One stored image: its hash code and the two entropy-coded streams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchiveEntry {
    pub id: u64,
    pub code: HashCode,
    pub streams: EncodedLatents,
}

/// Every compressed image of a collection, in insertion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Archive {
    code_bits: usize,
    entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub fn new(code_bits: usize) -> Result<Self> {
        if code_bits == 0 || code_bits % 8 != 0 || code_bits > u16::MAX as usize {
            return Err(Error::Config(format!("archive code length {code_bits} must be a positive multiple of 8")));
        }
        Ok(Archive { code_bits, entries: Vec::new() })
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push(&mut self, entry: ArchiveEntry) -> Result<()> {
        if entry.code.len() != self.code_bits {
            return Err(Error::Compatibility(format!("{}-bit code in a {}-bit archive", entry.code.len(), self.code_bits)));
        }
        if self.entries.iter().any(|e| e.id == entry.id) {
            return Err(Error::Config(format!("image id {} is already archived", entry.id)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, id: u64) -> Result<&ArchiveEntry> {
        self.entries.iter().find(|e| e.id == id).ok_or_else(|| Error::NotFound(format!("image id {id} is not in the archive")))
    }

    /// Range-coder payload over all images, headers excluded.
    pub fn payload_bits(&self) -> u64 {
        self.entries.iter().map(|e| e.streams.payload_bits()).sum()
    }

    /// Hash table over the stored codes; reads no bitstream.
    pub fn index(&self) -> Result<HashTable> {
        HashTable::build(self.code_bits, self.entries.iter().map(|e| (e.id, &e.code)))
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::Format(format!("writing archive: {e}"));
        out.write_all(ARCHIVE_MAGIC).map_err(io)?;
        out.write_all(&[ARCHIVE_VERSION]).map_err(io)?;
        out.write_all(&(self.code_bits as u16).to_le_bytes()).map_err(io)?;
        out.write_all(&(self.entries.len() as u64).to_le_bytes()).map_err(io)?;
        for e in &self.entries {
            let packed = pack_code(&e.code)?;
            out.write_all(&e.id.to_le_bytes()).map_err(io)?;
            out.write_all(&(packed.len() as u32).to_le_bytes()).map_err(io)?;
            out.write_all(&packed).map_err(io)?;
            e.streams.hyper.write_to(out).map_err(io)?;
            e.streams.latent.write_to(out).map_err(io)?;
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
        if &head[..4] != ARCHIVE_MAGIC {
            return Err(Error::Format("bad archive magic".into()));
        }
        if head[4] != ARCHIVE_VERSION {
            return Err(Error::Compatibility(format!("unsupported archive version {}", head[4])));
        }
        let bits = u16::from_le_bytes([head[5], head[6]]) as usize;
        let count = u64::from_le_bytes(head[7..15].try_into().unwrap());
        let mut archive = Self::new(bits).map_err(|_| Error::Format(format!("archive code length {bits}")))?;
        for _ in 0..count {
            let mut fixed = [0u8; 12];
            read_all(input, &mut fixed)?;
            let id = u64::from_le_bytes(fixed[..8].try_into().unwrap());
            let len = u32::from_le_bytes(fixed[8..].try_into().unwrap()) as usize;
            if len != bits / 8 {
                return Err(Error::Format(format!("image {id}: {len}-byte code in a {bits}-bit archive")));
            }
            let mut packed = vec![0u8; len];
            read_all(input, &mut packed)?;
            let code = unpack_code(&packed, bits)?;
            let hyper = Bitstream::read_from(input)?;
            let latent = Bitstream::read_from(input)?;
            archive.push(ArchiveEntry { id, code, streams: EncodedLatents { hyper, latent } }).map_err(|e| match e {
                Error::Config(m) => Error::Format(m),
                other => other,
            })?;
        }
        Ok(archive)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let a = Self::read_from(&mut cur)?;
        if !cur.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after archive", cur.len())));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut input = BufReader::new(file);
        let a = Self::read_from(&mut input)?;
        let mut rest = [0u8; 1];
        if input.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::Format(format!("{}: trailing bytes after archive", path.display())));
        }
        Ok(a)
    }
}

fn read_all(input: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| Error::Format(format!("archive truncated: {e}")))
}

/// Entropy decoding with a count of how many bitstream pairs were read.
pub struct Decoder<'a> {
    model: &'a CodecModel,
    decodes: u64,
}

impl<'a> Decoder<'a> {
    pub fn new(model: &'a CodecModel) -> Self {
        Decoder { model, decodes: 0 }
    }

    pub fn decodes(&self) -> u64 {
        self.decodes
    }

    pub fn latent(&mut self, entry: &ArchiveEntry) -> Result<QuantizedLatent> {
        self.decodes += 1;
        decode_latent(self.model, &entry.streams)
    }

    pub fn image(&mut self, entry: &ArchiveEntry) -> Result<RasterImage> {
        let q = self.latent(entry)?;
        self.model.decode(&q)
    }
}
