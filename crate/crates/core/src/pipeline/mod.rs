//! Run configuration, training driver, checkpoints and the end-to-end
//! operations behind the command line.

mod checkpoint;
mod config;
mod ops;
mod train;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use config::{DataConfig, ModelConfig, NoiseSource, PrivacyConfig, RunConfig, TrainingConfig};
pub use ops::{
    calibrate_for, diagnose, evaluate, generate, load_training_data, parse_label_source, prepare_eval_tables,
    DiagnoseReport, EvalTables, Families,
};
pub use train::{
    limit_rows, resolve_dp, sampling_rate, steps_per_epoch, ClipAudit, DpSetup, EpochLog, StopReason, TrainState,
    Trainer,
};
