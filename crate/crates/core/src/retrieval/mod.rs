//! Hash-table indexing of binary codes, decode-free queries, and retrieval
//! metrics.

mod metrics;
mod table;

pub use metrics::{
    average_precision, mean_average_precision, precision_recall_at_k, write_metrics_csv, MapSummary, MetricsReport,
    QueryMetrics, Relevance, DEFAULT_K, METRICS_HEADER,
};
pub use table::{hamming, pack_code, unpack_code, HashTable, RetrievalResult, INDEX_MAGIC, INDEX_VERSION, PROBE_RADIUS};

use crate::hash_head::{HashCode, LabelVector};
use crate::Result;

/// Ranks the whole gallery for every query and scores the rankings.
/// `gallery_labels` is looked up by id.
pub fn evaluate_queries(
    table: &HashTable,
    queries: &[(u64, HashCode, LabelVector)],
    gallery_labels: &std::collections::BTreeMap<u64, LabelVector>,
    relevance: Relevance,
    k: usize,
) -> Result<Vec<QueryMetrics>> {
    let depth = table.len().max(1);
    queries
        .iter()
        .map(|(qid, code, labels)| {
            let res = table.query(code, depth)?;
            let rel: Vec<bool> = res
                .ids
                .iter()
                .map(|id| gallery_labels.get(id).is_some_and(|l| relevance.relevant(labels, l)))
                .collect();
            let total = gallery_labels.values().filter(|l| relevance.relevant(labels, l)).count();
            let (precision, recall) = precision_recall_at_k(&rel, total, k);
            Ok(QueryMetrics { query_id: *qid, precision, recall, average_precision: average_precision(&rel), seconds: res.seconds })
        })
        .collect()
}
