//! The two finetuning regimes and their shared optimizer.

mod adam;
mod cosine;
mod naive;
mod siamese;

pub use adam::{Adam, AdamHyper};
pub use cosine::{cosine_similarity, cosine_similarity_grad, siamese_loss};
pub use naive::{
    naive_accuracy, naive_example_gradient, train_naive, train_naive_with, HeadParams,
};
pub use siamese::{siamese_pair_gradient, train_siamese, train_siamese_with};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_NAIVE_HIDDEN: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiameseConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub target_same: f64,
    pub target_diff: f64,
    pub epsilon_norm: f64,
    pub seed: u64,
}

impl Default for SiameseConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            target_same: 1.0,
            target_diff: 0.0,
            epsilon_norm: 1e-12,
            seed: 0,
        }
    }
}

impl SiameseConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.batch_size, self.learning_rate)?;
        let in_range = |t: f64| (-1.0..=1.0).contains(&t);
        if !(self.target_same > self.target_diff
            && in_range(self.target_same)
            && in_range(self.target_diff))
        {
            return Err(Error::Config(format!(
                "targets must satisfy -1 <= target_diff ({}) < target_same ({}) <= 1",
                self.target_diff, self.target_same
            )));
        }
        if !(self.epsilon_norm > 0.0 && self.epsilon_norm.is_finite()) {
            return Err(Error::Config(
                "epsilon_norm must be a small positive number".into(),
            ));
        }
        Ok(())
    }

    pub fn target(&self, same: bool) -> f64 {
        if same {
            self.target_same
        } else {
            self.target_diff
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl Default for NaiveConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            hidden_dim: DEFAULT_NAIVE_HIDDEN,
            seed: 0,
        }
    }
}

impl NaiveConfig {
    pub fn validate(&self) -> Result<()> {
        validate_common(self.batch_size, self.learning_rate)?;
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        Ok(())
    }
}

fn validate_common(batch_size: usize, learning_rate: f64) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::Config(format!(
            "learning_rate {learning_rate} must be positive"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingReport {
    /// Mean per-item loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    /// Pairs (Siamese) or examples (naive) seen per epoch.
    pub items_per_epoch: usize,
    pub epoch_times: Vec<Duration>,
}

/// Progress record handed to training observers after every epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochSummary {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub elapsed: Duration,
}
