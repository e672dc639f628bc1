//! Adaptive tile indexing over raw CSV files with exact and
//! bounded-error approximate window aggregates.
//!
//! The pipeline is: [`ingest::scan_init`] reads the file once,
//! [`index::TileIndex::initialize`] builds a coarse grid with per-tile
//! metadata, and queries go through [`exact::evaluate_exact`] or
//! [`approx::evaluate_approx`], both of which refine the index as a side
//! effect. [`workload`] generates datasets and exploration traces and
//! replays them.

pub mod approx;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod index;
pub mod ingest;
pub mod query;
pub mod stats;
pub mod workload;

pub use approx::{estimate, evaluate_approx, ApproxAnswer, ConfidenceInterval, ScoreParams};
pub use error::{Error, Result};
pub use exact::{evaluate_exact, ExactAnswer};
pub use geometry::Rect;
pub use index::{IndexConfig, TileId, TileIndex, TilePartition};
pub use ingest::{scan_init, BadRowPolicy, DatasetDescriptor, ObjectEntry, RowReader, ScanOptions};
pub use query::{AggregateFunction, AggregateRequest, Telemetry};
