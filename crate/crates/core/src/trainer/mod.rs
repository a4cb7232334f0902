//! Two-stage training: the codec alone under MGDA, then codec and hashing
//! head together under PCGrad.

mod adam;
mod checkpoint;
mod schedule;
mod stages;
mod surgery;
#[cfg(test)]
pub(crate) mod tests;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use schedule::{TaskSet, TrainSchedule};
pub use stages::{train_stage1, train_stage2, write_log_csv, LogRow, StageReport, LOG_HEADER, SHARED_PREFIX};
pub use surgery::{mgda_combine, pcgrad};
