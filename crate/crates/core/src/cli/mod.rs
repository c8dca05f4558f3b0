//! Experiment configs and the commands behind the `jointspeech` binary.

mod commands;
mod config;

pub use commands::{
    eval, gen_corpus, grad_check_cmd, phase_checkpoint_stem, train, CorpusSummary, EvalReport, GradCheckRequest,
    TrainOutcome, CHECKPOINT_DIR, CONFIG_ECHO, FINAL_CHECKPOINT, HISTORY_FILE,
};
pub use config::{DataSource, ExperimentConfig, ExperimentData, ModelSpec, Preset, ScheduleSpec};

use crate::error::Error;

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) => 2,
        Error::InvalidInput(_) | Error::Format { .. } | Error::Json(_) => 3,
        Error::Io { .. } => 4,
        Error::Numeric(_) | Error::InfeasibleAlignment { .. } => 5,
        Error::Internal(_) => 70,
    }
}
