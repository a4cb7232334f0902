use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::archive::{Archive, Decoder};
use super::compress::{check_pair, hash_images};
use crate::codec::{CodecModel, RasterImage};
use crate::dataset::Sample;
use crate::hash_head::{HashCode, HashHead, LabelVector};
use crate::retrieval::{evaluate_queries, HashTable, MetricsReport, QueryMetrics, Relevance};
use crate::Result;

/// Outcome of one retrieval path over the whole query set.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOutcome {
    pub name: &'static str,
    pub queries: Vec<QueryMetrics>,
    pub report: MetricsReport,
    /// bitstream pairs entropy-decoded by this path
    pub decodes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub joint: PathOutcome,
    pub standard: PathOutcome,
}

fn query_set(codec: &CodecModel, head: &HashHead, queries: &[Sample]) -> Result<Vec<(u64, HashCode, LabelVector)>> {
    let images: Vec<&RasterImage> = queries.iter().map(|s| &s.image).collect();
    let codes = hash_images(codec, head, &images)?;
    Ok(queries.iter().zip(codes).map(|(s, c)| (s.id, c, s.labels.clone())).collect())
}

/// Retrieval from the codes stored next to the bitstreams. No bitstream is
/// decoded.
pub fn joint_path(
    codec: &CodecModel,
    head: &HashHead,
    archive: &Archive,
    queries: &[Sample],
    gallery_labels: &BTreeMap<u64, LabelVector>,
    relevance: Relevance,
    k: usize,
) -> Result<PathOutcome> {
    check_pair(codec, head)?;
    let start = Instant::now();
    let decoder = Decoder::new(codec);
    let q = query_set(codec, head, queries)?;
    let table = archive.index()?;
    let rows = evaluate_queries(&table, &q, gallery_labels, relevance, k)?;
    let total = start.elapsed().as_secs_f64();
    Ok(PathOutcome { name: "joint", report: MetricsReport::from_queries(&rows, k, total), queries: rows, decodes: decoder.decodes() })
}

/// The decode-then-hash route: every archived image is entropy decoded,
/// reconstructed, re-encoded and hashed before the table is built.
pub fn standard_path(
    codec: &CodecModel,
    head: &HashHead,
    archive: &Archive,
    queries: &[Sample],
    gallery_labels: &BTreeMap<u64, LabelVector>,
    relevance: Relevance,
    k: usize,
) -> Result<PathOutcome> {
    check_pair(codec, head)?;
    let start = Instant::now();
    let mut decoder = Decoder::new(codec);
    let mut ids = Vec::with_capacity(archive.len());
    let mut images = Vec::with_capacity(archive.len());
    for e in archive.entries() {
        ids.push(e.id);
        images.push(decoder.image(e)?);
    }
    let refs: Vec<&RasterImage> = images.iter().collect();
    let codes = hash_images(codec, head, &refs)?;
    let table = HashTable::build(archive.code_bits(), ids.iter().copied().zip(codes.iter()))?;
    let q = query_set(codec, head, queries)?;
    let rows = evaluate_queries(&table, &q, gallery_labels, relevance, k)?;
    let total = start.elapsed().as_secs_f64();
    Ok(PathOutcome { name: "standard", report: MetricsReport::from_queries(&rows, k, total), queries: rows, decodes: decoder.decodes() })
}

/// Both paths with the same weights, joint first.
pub fn evaluate(
    codec: &CodecModel,
    head: &HashHead,
    archive: &Archive,
    queries: &[Sample],
    gallery_labels: &BTreeMap<u64, LabelVector>,
    relevance: Relevance,
    k: usize,
) -> Result<Evaluation> {
    Ok(Evaluation {
        joint: joint_path(codec, head, archive, queries, gallery_labels, relevance, k)?,
        standard: standard_path(codec, head, archive, queries, gallery_labels, relevance, k)?,
    })
}

/// Retrieval with independent uniformly random codes for every image: the
/// chance level a learned code has to beat.
pub fn random_code_outcome(
    queries: &[Sample],
    gallery_labels: &BTreeMap<u64, LabelVector>,
    bits: usize,
    seed: u64,
    relevance: Relevance,
    k: usize,
) -> Result<PathOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || HashCode::new((0..bits).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect());
    let gallery: Vec<(u64, HashCode)> = gallery_labels.keys().map(|&id| Ok((id, draw()?))).collect::<Result<_>>()?;
    let table = HashTable::build(bits, gallery.iter().map(|(id, c)| (*id, c)))?;
    let q: Vec<(u64, HashCode, LabelVector)> =
        queries.iter().map(|s| Ok((s.id, draw()?, s.labels.clone()))).collect::<Result<_>>()?;
    let rows = evaluate_queries(&table, &q, gallery_labels, relevance, k)?;
    Ok(PathOutcome { name: "random", report: MetricsReport::from_queries(&rows, k, 0.0), queries: rows, decodes: 0 })
}

pub const SUMMARY_HEADER: &str = "path,k,P@k,R@k,mAP,queries,seconds,decodes";

/// One row per path; `seconds` is the wall clock of the whole path.
pub fn write_summary_csv(out: &mut impl Write, rows: &[&PathOutcome]) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for p in rows {
        let r = &p.report;
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{},{:.6},{}",
            p.name, r.k, r.precision, r.recall, r.map.map, r.queries, r.total_seconds, p.decodes
        )?;
    }
    Ok(())
}
