//! Experiment specs, run orchestration and result tables.

mod run;
mod spec;
pub mod synthetic;

pub use run::{
    prepare_split, run_cipher, run_learning_curve, run_shot, run_transfer, summary_table, target_stream_digest, CurveOutcome, ExpError,
    ResultRow, ShotRow, Skipped, RESULTS_HEADER,
};
pub use spec::{DataSource, ExperimentKind, ExperimentSpec, Seeds, SpecBuilder, SpecError, KEYS};
