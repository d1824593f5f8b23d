//! End-to-end experiments: dataset builds, the model × transform results
//! grid, the data-efficiency sweep and the equivariance audit.
//!
//! All specs share one test set per transform class (drawn from the
//! `transforms` substream of the base seed), while run `k` of a spec
//! initialises its weights from `base_seed + k`.

mod audit;
mod data;
mod runner;
mod spec;
mod summary;

pub use audit::{audit_equivariance, AuditReport, AUDIT_SCHEMA, DEFAULT_AUDIT_TOL, DEFAULT_AUDIT_TRANSFORMS};
pub use data::{
    build_augmented_train_set, build_test_set, build_test_set_sized, build_train_set, class_stream_index,
    from_dataset_file, to_dataset_file, transformed_set, TEST_PER_CLASS,
};
pub use runner::{
    expected_invariant, run_efficiency_sweep, run_one, run_table1, CellResult, Progress, ResultsDir, RunFailure,
    RunOutcome, SweepConfig, SweepPoint, SweepResult, Table1Config, Table1Result, CELL_SCHEMA,
    DEFAULT_SWEEP_COPIES, RUN_SCHEMA, SWEEP_SCHEMA, TABLE1_SCHEMA,
};
pub use spec::{row_label, table1_band, table1_rows, Band, ExperimentSpec, DEFAULT_SEEDS};
pub use summary::{curves_csv, mean, slope, std_dev, summarize, CurvePoint, ResultSummary, Spread, CURVES_CSV_HEADER};
