use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainSchedule;
use crate::codec::{CodecConfig, CodecModel};
use crate::hash_head::{HashHead, HashHeadConfig, PARAM_PREFIX};
use crate::params::ParamStore;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"JCCK";
pub const CHECKPOINT_VERSION: u8 = 1;

/// Trained weights plus the configuration and schedule that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub stage: u8,
    pub schedule: TrainSchedule,
    pub codec: CodecModel,
    pub hash_head: Option<HashHead>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    stage: u8,
    codec: CodecConfig,
    hash_head: Option<HashHeadConfig>,
    schedule: TrainSchedule,
}

impl Checkpoint {
    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let header = Header {
            stage: self.stage,
            codec: self.codec.config.clone(),
            hash_head: self.hash_head.as_ref().map(|h| h.config.clone()),
            schedule: self.schedule.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
        let mut params = self.codec.params.clone();
        if let Some(h) = &self.hash_head {
            params.merge(h.params.clone());
        }
        let io = |e| Error::Format(format!("writing checkpoint: {e}"));
        out.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        out.write_all(&[CHECKPOINT_VERSION]).map_err(io)?;
        out.write_all(&(json.len() as u32).to_le_bytes()).map_err(io)?;
        out.write_all(&json).map_err(io)?;
        params.write_to(out).map_err(io)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut head = [0u8; 9];
        input.read_exact(&mut head).map_err(|_| Error::Format("checkpoint header truncated".into()))?;
        if &head[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad checkpoint magic".into()));
        }
        if head[4] != CHECKPOINT_VERSION {
            return Err(Error::Compatibility(format!("unsupported checkpoint version {}", head[4])));
        }
        let len = u32::from_le_bytes(head[5..9].try_into().unwrap()) as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json).map_err(|_| Error::Format("checkpoint header truncated".into()))?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
        let params = ParamStore::read_from(input)?;
        let head_params = params.with_prefix(PARAM_PREFIX);
        let mut codec_params = ParamStore::new();
        for (k, v) in params.iter().filter(|(k, _)| !k.starts_with(PARAM_PREFIX)) {
            codec_params.insert(k.clone(), v.clone());
        }
        let codec = CodecModel::from_parts(header.codec, codec_params)?;
        let hash_head = match header.hash_head {
            Some(cfg) => Some(HashHead::from_parts(cfg, head_params)?),
            None if !head_params.is_empty() => {
                return Err(Error::Format("hash head tensors without a hash head config".into()))
            }
            None => None,
        };
        Ok(Checkpoint { stage: header.stage, schedule: header.schedule, codec, hash_head })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut cur = bytes.as_slice();
        let ck = Self::read_from(&mut cur)?;
        if !cur.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", cur.len())));
        }
        Ok(ck)
    }
}
