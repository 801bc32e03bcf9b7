//! BPTT training, optimizers, metrics, run records and checkpoints.

pub mod backend;
pub mod checkpoint;
pub mod classify;
pub mod config;
pub mod gradcheck;
pub mod optim;
pub mod record;
pub mod sequence;
pub mod trainer;

pub use backend::{IdealBackend, WeightBackend};
pub use checkpoint::{checkpoint_load, checkpoint_save, CheckpointMeta};
pub use classify::{evaluate_classification, ClassifyReport, ClassifyTask};
pub use config::{BackendKind, TrainConfig};
pub use gradcheck::{gradcheck, GradReport, ToyProblem};
pub use optim::{Optimizer, OptimizerConfig};
pub use record::{EpochRow, RunRecord};
pub use sequence::{evaluate_sequence, perplexity, SequenceTask};
pub use trainer::{bptt_train, bptt_train_with, derive_seed, Evaluation, Task, Trainer};
