use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::optim::OptimizerConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Ideal,
    Pcm,
}

fn default_batch() -> usize {
    32
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    /// Truncation length for sequence tasks in steps; 0 unrolls the whole
    /// sequence. Classification always unrolls one presentation.
    #[serde(default)]
    pub bptt_window: usize,
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendKind,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    /// Write measured wall-clock seconds to the run record. Off by default
    /// so that seeded runs produce byte-identical records.
    #[serde(default)]
    pub record_timing: bool,
}

impl TrainConfig {
    pub fn new(optimizer: OptimizerConfig, epochs: usize) -> Self {
        TrainConfig {
            optimizer,
            batch_size: default_batch(),
            epochs,
            bptt_window: 0,
            grad_clip: None,
            seed: 0,
            backend: BackendKind::Ideal,
            shuffle: true,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("grad_clip must be positive, got {c}")));
            }
        }
        Ok(())
    }
}
