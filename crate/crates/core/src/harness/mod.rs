//! Error metrics, goodness-of-fit checks, experiment grids and result files.

mod chisq;
mod desk;
mod matrix;
mod metrics;
mod records;

pub use chisq::{chi_square_uniformity, critical_value, ChiSquareTest, MIN_TOTAL, SIGNIFICANCE};
pub use desk::DeskBenchmark;
pub use matrix::{run_matrix, CellFailure, Experiment, MatrixOutcome};
pub use metrics::{category_avg_error, instance_avg_error, DomainMetrics, EpisodeResult};
pub use records::{append_records, read_records, summarize, summary_csv, summary_table, RunRecord, SummaryRow};
