use std::io::Write;

use crate::hash_head::{label_similarity, LabelVector};

pub const DEFAULT_K: usize = 10;

/// When a gallery image counts as relevant to a query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Relevance {
    /// at least one label in common
    ShareLabel,
    /// label cosine at or above the threshold
    CosineAtLeast(f64),
}

impl Relevance {
    pub fn relevant(&self, a: &LabelVector, b: &LabelVector) -> bool {
        match *self {
            Relevance::ShareLabel => a.shares_label(b),
            Relevance::CosineAtLeast(t) => label_similarity(a, b) >= t,
        }
    }
}

/// `(P@k, R@k)` of one ranking given its relevance flags and the number of
/// relevant gallery items; `R = 1` when nothing is relevant.
pub fn precision_recall_at_k(relevant: &[bool], total_relevant: usize, k: usize) -> (f64, f64) {
    let hits = relevant.iter().take(k).filter(|&&r| r).count();
    let p = if k == 0 { 0.0 } else { hits as f64 / k as f64 };
    let r = if total_relevant == 0 { 1.0 } else { hits as f64 / total_relevant as f64 };
    (p, r)
}

/// Mean of precision at each relevant rank; `None` without relevant items.
pub fn average_precision(relevant: &[bool]) -> Option<f64> {
    let mut hits = 0usize;
    let mut acc = 0.0;
    for (r, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            acc += hits as f64 / (r + 1) as f64;
        }
    }
    (hits > 0).then(|| acc / hits as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapSummary {
    pub map: f64,
    /// queries that entered the mean
    pub evaluated: usize,
    /// queries without any relevant item
    pub excluded: usize,
}

pub fn mean_average_precision(aps: &[Option<f64>]) -> MapSummary {
    let got: Vec<f64> = aps.iter().flatten().copied().collect();
    let map = if got.is_empty() { 0.0 } else { got.iter().sum::<f64>() / got.len() as f64 };
    MapSummary { map, evaluated: got.len(), excluded: aps.len() - got.len() }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryMetrics {
    pub query_id: u64,
    pub precision: f64,
    pub recall: f64,
    pub average_precision: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub map: MapSummary,
    pub mean_query_seconds: f64,
    /// wall clock of the whole path, including any gallery preparation
    pub total_seconds: f64,
    pub queries: usize,
}

impl MetricsReport {
    pub fn from_queries(rows: &[QueryMetrics], k: usize, total_seconds: f64) -> Self {
        let n = rows.len().max(1) as f64;
        MetricsReport {
            k,
            precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
            recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
            map: mean_average_precision(&rows.iter().map(|r| r.average_precision).collect::<Vec<_>>()),
            mean_query_seconds: rows.iter().map(|r| r.seconds).sum::<f64>() / n,
            total_seconds,
            queries: rows.len(),
        }
    }
}

pub const METRICS_HEADER: &str = "query_id,P@k,R@k,AP,seconds";

/// Per-query CSV; queries without relevant items leave AP empty.
pub fn write_metrics_csv(out: &mut impl Write, rows: &[QueryMetrics]) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        let ap = r.average_precision.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{},{:.6},{:.6},{},{:.9}", r.query_id, r.precision, r.recall, ap, r.seconds)?;
    }
    Ok(())
}
