use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which losses PCGrad deconflicts in stage 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskSet {
    /// `L_p`, `L_b`, `L_c` and `L_C`
    Four,
    /// only the three hashing losses; `L_C` is added afterwards
    HashingOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub stage1_steps: usize,
    pub stage2_steps: usize,
    pub learning_rate: f64,
    /// multiplier on the compression module's rate in stage 2
    pub compression_lr_factor: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// stage 1 stops once the mean `L_C` of the last window improves on the
    /// window before it by less than `early_stop_tolerance` (relative)
    pub early_stop_window: usize,
    pub early_stop_tolerance: f64,
    pub tasks: TaskSet,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            stage1_steps: 2000,
            stage2_steps: 1500,
            learning_rate: 1e-3,
            compression_lr_factor: 0.1,
            batch_size: 8,
            seed: 0,
            early_stop_window: 500,
            early_stop_tolerance: 1e-3,
            tasks: TaskSet::Four,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        // 0 is allowed: it freezes the compression module
        if !(0.0..=1.0).contains(&self.compression_lr_factor) {
            return Err(Error::Config(format!("compression lr factor {} outside [0, 1]", self.compression_lr_factor)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.early_stop_window == 0 || !(self.early_stop_tolerance >= 0.0) {
            return Err(Error::Config("early-stop window must be positive and tolerance non-negative".into()));
        }
        Ok(())
    }
}
