//! Losses, optimiser, schedules, checkpoints and the training loop.

pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod optim;
pub mod trainer;

pub use checkpoint::{Checkpoint, CheckpointTag};
pub use config::{preset, TrainConfig, ValidateEvery, PRESETS};
pub use loss::LossKind;
pub use optim::{early_stop, Adam, EarlyStopping, PlateauScheduler, SchedulerConfig, StopDecision};
pub use trainer::{curves_csv, forward_eval, train, train_with_progress, CurveRow, TrainOutcome, ValidationPoint};
