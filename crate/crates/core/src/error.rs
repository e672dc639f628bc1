use std::path::PathBuf;

use thiserror::Error;

use crate::query::AggregateFunction;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: malformed row ({reason})")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}, column {column}: value is not a finite number")]
    NonNumeric { line: u64, column: usize },
    /// A row admitted by the initialization scan no longer parses.
    #[error("row at byte offset {offset} is inconsistent with the initialization scan: {reason}")]
    InconsistentRow { offset: u64, reason: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),
    #[error("tile {0} is already at the maximum depth")]
    MaxDepthReached(u32),
    #[error("tile {0} is internal and cannot be split")]
    SplitOnInternal(u32),
    #[error("tile {0} holds no objects")]
    EmptyTile(u32),
    #[error("column {0} is not a tracked attribute")]
    UntrackedAttribute(usize),
    #[error("{0} requires an attribute")]
    MissingAttribute(AggregateFunction),
    #[error("tile {tile} has no metadata for column {column}")]
    MissingStats { tile: u32, column: usize },
    #[error("target count {target} exceeds the dataset size {rows}")]
    TargetUnreachable { target: u64, rows: u64 },
    #[error("oracle scan failed: {0}")]
    Oracle(#[from] tileprobe_oracle::OracleError),
    #[error("report serialization failed: {0}")]
    Report(String),
}

pub type Result<T> = std::result::Result<T, Error>;
