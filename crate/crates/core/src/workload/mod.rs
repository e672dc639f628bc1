//! Synthetic datasets, exploration traces, trace replay and the oracle
//! adapter used to check replayed answers.

pub mod dataset;
pub mod oracle;
pub mod replay;
pub mod trace;

pub use dataset::{gen_dataset, DatasetSpec, Distribution};
pub use oracle::{oracle, oracle_batch};
pub use replay::{replay, run_trace, QueryCost, ReplayConfig, ReplayMode, ReplayReport, ReplayRow};
pub use trace::{gen_trace, ExplorationTrace, TraceParams, TraceQuery};
