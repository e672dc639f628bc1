use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::TileIndex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateFunction {
    Count,
    Sum,
    Mean,
    Min,
    Max,
}

impl AggregateFunction {
    pub const ALL: [AggregateFunction; 5] = [
        AggregateFunction::Count,
        AggregateFunction::Sum,
        AggregateFunction::Mean,
        AggregateFunction::Min,
        AggregateFunction::Max,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregateFunction::Count => "count",
            AggregateFunction::Sum => "sum",
            AggregateFunction::Mean => "mean",
            AggregateFunction::Min => "min",
            AggregateFunction::Max => "max",
        }
    }
}

impl fmt::Display for AggregateFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AggregateFunction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "count" => Ok(Self::Count),
            "sum" => Ok(Self::Sum),
            "mean" | "avg" => Ok(Self::Mean),
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            other => Err(format!("unknown aggregate function {other:?}")),
        }
    }
}

/// One aggregate over one column. `attribute` is a column index of the raw
/// file and must be tracked; `Count` may leave it empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregateRequest {
    pub function: AggregateFunction,
    pub attribute: Option<usize>,
}

impl AggregateRequest {
    pub fn new(function: AggregateFunction, attribute: usize) -> Self {
        Self {
            function,
            attribute: Some(attribute),
        }
    }

    pub fn count() -> Self {
        Self {
            function: AggregateFunction::Count,
            attribute: None,
        }
    }

    /// Label such as `sum(c3)` or `count`.
    pub fn label(&self) -> String {
        match self.attribute {
            Some(a) if self.function != AggregateFunction::Count => {
                format!("{}(c{a})", self.function)
            }
            _ => self.function.to_string(),
        }
    }
}

impl std::str::FromStr for AggregateRequest {
    type Err = String;

    /// Parses `count`, `sum:3` or `sum(3)`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        let (f, a) = match s.find([':', '(']) {
            Some(i) => (&s[..i], Some(s[i + 1..].trim_end_matches(')'))),
            None => (s, None),
        };
        let function: AggregateFunction = f.parse()?;
        let attribute = a
            .map(|a| a.trim_start_matches('c').parse::<usize>())
            .transpose()
            .map_err(|e| format!("bad attribute in {s:?}: {e}"))?;
        if attribute.is_none() && function != AggregateFunction::Count {
            return Err(format!("{function} requires an attribute"));
        }
        Ok(Self {
            function,
            attribute,
        })
    }
}

/// A request bound to a tracked-attribute slot of a specific index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ResolvedRequest {
    pub function: AggregateFunction,
    pub slot: Option<usize>,
}

pub(crate) fn resolve(
    index: &TileIndex,
    requests: &[AggregateRequest],
) -> Result<Vec<ResolvedRequest>> {
    requests
        .iter()
        .map(|r| {
            let slot = match r.attribute {
                Some(a) => Some(
                    index
                        .descriptor()
                        .tracked_slot(a)
                        .ok_or(Error::UntrackedAttribute(a))?,
                ),
                None if r.function == AggregateFunction::Count => None,
                None => return Err(Error::MissingAttribute(r.function)),
            };
            Ok(ResolvedRequest {
                function: r.function,
                slot,
            })
        })
        .collect()
}

/// I/O and adaptation cost of one evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Telemetry {
    pub rows_read: u64,
    pub tiles_split: u64,
    #[serde(serialize_with = "ser_micros")]
    pub elapsed: Duration,
}

fn ser_micros<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_micros() as u64)
}
