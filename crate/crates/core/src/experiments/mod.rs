//! Dataset generation, estimator comparisons and result tables.

pub mod dataset;
pub mod metrics;
pub mod suite;
pub mod training;

pub use dataset::{generate_dataset, simulate_truth, transmit, Dataset, DatasetSpec, Record, Split, PILOT_COUNTS};
pub use metrics::{bootstrap_ci, evaluate_ber, evaluate_mse, paired_difference_ci};
pub use suite::{
    estimate_csi, run_suite, score_config, ExperimentConfig, FrameScores, Method, Model, ModelSet, ResultRow,
    ResultTable, CSV_HEADER,
};
pub use training::{train_csrnet, train_mlp, transfer_csrnet};
