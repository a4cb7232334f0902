//! End-to-end operations over a dataset: compressing into an archive,
//! decode-free and decode-then-hash retrieval, and rate–distortion points.

mod archive;
mod compress;
mod evaluate;
mod rd;

pub use archive::{Archive, ArchiveEntry, Decoder, ARCHIVE_MAGIC, ARCHIVE_VERSION};
pub use compress::{compress, encode_images, estimated_bits, hash_images, hash_latents, CompressionStats, ENCODE_BATCH};
pub use evaluate::{evaluate, joint_path, random_code_outcome, standard_path, write_summary_csv, Evaluation, PathOutcome, SUMMARY_HEADER};
pub use rd::{
    baseline_curve, baseline_psnr_at, identity_baseline, is_monotone, measure, sort_by_rate, write_rd_csv, RatePoint, RdRow,
    RD_HEADER,
};
