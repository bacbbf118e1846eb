//! Benchmark ingestion, stratified subsets, evaluation, trace logs and
//! replay.

pub mod dataset;
pub mod eval;
pub mod replay;
pub mod subset;
pub mod trace;

pub use dataset::{load_dataset, parse_dataset, DatasetError, DurationClass, QARecord};
pub use eval::{evaluate, Accuracy, EvalError, EvalOptions, EvalOutcome, EvalReport, ItemResult, ItemStatus};
pub use replay::{replay, ReplayError, ReplayOutcome};
pub use subset::{largest_remainder, stratified_subset, CellAllocation, SubsetError, SubsetPlan};
pub use trace::{TraceError, TraceLog, TraceRecord};
