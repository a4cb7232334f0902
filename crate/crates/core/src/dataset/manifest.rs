use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synthetic::{generate_scene, splitmix64, SyntheticSceneConfig};
use super::tensor_file::{read_tensor, write_tensor};
use crate::codec::RasterImage;
use crate::error::{Error, Result};
use crate::hash_head::LabelVector;

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.52, val: 0.24, test: 0.24 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(*r >= 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios {parts:?} must be non-negative and sum to 1")));
        }
        Ok(())
    }

    /// Image counts per split; each is within one image of `ratio · n`.
    pub fn counts(&self, n: usize) -> (usize, usize, usize) {
        let train = (self.train * n as f64).round() as usize;
        let val = ((self.val * n as f64).round() as usize).min(n - train.min(n));
        let train = train.min(n);
        (train, val, n - train - val)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub id: u64,
    /// relative to the manifest's directory
    pub path: PathBuf,
    pub split: Split,
    pub labels: LabelVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub classes: usize,
    pub entries: Vec<ManifestEntry>,
}

/// One loaded image with its metadata.
#[derive(Clone, Debug)]
pub struct Sample {
    pub id: u64,
    pub image: RasterImage,
    pub labels: LabelVector,
}

/// Assigns splits from a seeded ordering of ids: the split of an id depends
/// only on `(id, seed)` and the dataset size.
pub fn assign_splits(ids: &[u64], seed: u64, ratios: &SplitRatios) -> Vec<Split> {
    let (train, val, _) = ratios.counts(ids.len());
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by_key(|&i| (splitmix64(ids[i] ^ splitmix64(seed ^ 0x5EED)), ids[i]));
    let mut out = vec![Split::Test; ids.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Generates `n` scenes under `root`, writing one tensor file per image and
/// the manifest.
pub fn build_dataset(config: &SyntheticSceneConfig, n: usize, ratios: &SplitRatios, root: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    ratios.validate()?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let ids: Vec<u64> = (0..n as u64).collect();
    let splits = assign_splits(&ids, config.seed, ratios);
    let mut entries = Vec::with_capacity(n);
    if n > 0 {
        let dir = root.join("images");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for (&id, &split) in ids.iter().zip(&splits) {
        let (image, labels) = generate_scene(config, &mut config.image_rng(id))?;
        let rel = PathBuf::from("images").join(format!("{id:06}.jctf"));
        write_tensor(&root.join(&rel), &format!("image:{id}"), &image.to_tensor())?;
        entries.push(ManifestEntry { id, path: rel, split, labels });
    }
    let manifest = DatasetManifest { classes: config.classes, entries };
    manifest.save(&root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{},{},{},{}\n", e.id, e.path.display(), e.split, e.labels.to_bit_string()));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut classes = None;
        let mut seen = std::collections::HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = |what: &str| Error::Format(format!("manifest line {}: {what}", lineno + 1));
            if fields.len() != 4 {
                return Err(bad("expected 4 comma-separated fields"));
            }
            let id: u64 = fields[0].parse().map_err(|_| bad("id is not an integer"))?;
            if !seen.insert(id) {
                return Err(bad("duplicate id"));
            }
            let labels = LabelVector::parse(fields[3])?;
            match classes {
                None => classes = Some(labels.classes()),
                Some(c) if c != labels.classes() => return Err(bad("label width differs from earlier lines")),
                _ => {}
            }
            entries.push(ManifestEntry { id, path: PathBuf::from(fields[1]), split: fields[2].parse()?, labels });
        }
        Ok(DatasetManifest { classes: classes.unwrap_or(0), entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn split_count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    /// Loads every image of one split, in manifest order.
    pub fn load_split(&self, root: &Path, split: Split) -> Result<Vec<Sample>> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| {
                let (_, t) = read_tensor(&root.join(&e.path))?;
                Ok(Sample { id: e.id, image: RasterImage::from_tensor(&t)?, labels: e.labels.clone() })
            })
            .collect()
    }
}

/// Directory holding a manifest path (the root for relative image paths).
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    manifest_path.parent().map(Path::to_path_buf).unwrap_or_default()
}
