//! Exact window aggregates with full adaptation of every partially covered
//! tile.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::geometry::Rect;
use crate::index::{TileId, TileIndex};
use crate::ingest::RowReader;
use crate::query::{resolve, AggregateFunction, AggregateRequest, ResolvedRequest, Telemetry};
use crate::stats::{merge_into, push_value, AggStats};

/// Exact aggregate state of a set of objects, for every tracked attribute.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct WindowAggregate {
    pub count: u64,
    pub slots: Vec<Option<AggStats>>,
}

impl WindowAggregate {
    pub fn new(n_slots: usize) -> Self {
        Self {
            count: 0,
            slots: vec![None; n_slots],
        }
    }

    pub fn add_stats(&mut self, count: u64, stats: &[Option<AggStats>]) {
        self.count += count;
        for (slot, s) in self.slots.iter_mut().zip(stats) {
            merge_into(slot, s.as_ref());
        }
    }

    pub fn add_row(&mut self, values: &[f64]) {
        self.count += 1;
        for (slot, &v) in self.slots.iter_mut().zip(values) {
            push_value(slot, v);
        }
    }

    pub fn merge(&mut self, other: &WindowAggregate) {
        self.add_stats(other.count, &other.slots);
    }

    pub fn value(&self, request: ResolvedRequest) -> Option<f64> {
        let stats = request.slot.and_then(|s| self.slots[s].as_ref());
        match request.function {
            AggregateFunction::Count => Some(self.count as f64),
            AggregateFunction::Sum => Some(stats.map_or(0.0, AggStats::sum)),
            AggregateFunction::Mean => stats.map(|s| s.sum() / self.count as f64),
            AggregateFunction::Min => stats.map(|s| s.min),
            AggregateFunction::Max => stats.map(|s| s.max),
        }
    }
}

/// Exact in-window contribution of one processed partial tile.
#[derive(Debug, Clone)]
pub(crate) struct Processed {
    pub aggregate: WindowAggregate,
    pub split: bool,
}

/// Processes a partially covered leaf: splits it when eligible, otherwise
/// reads only its objects inside `q`. Either way the returned aggregate is
/// the exact contribution of the leaf's in-window objects.
pub(crate) fn process_partial(
    index: &mut TileIndex,
    reader: &RowReader,
    id: TileId,
    q: &Rect,
) -> Result<Processed> {
    let n_slots = index.descriptor().tracked_attributes.len();
    let mut aggregate = WindowAggregate::new(n_slots);
    if index.split_eligible(id) {
        let out = index.split_tile(id, reader)?;
        for (e, values) in out.entries.iter().zip(&out.values) {
            if q.contains(e.x, e.y) {
                aggregate.add_row(values);
            }
        }
        return Ok(Processed {
            aggregate,
            split: true,
        });
    }
    let offsets: Vec<u64> = index
        .tile(id)
        .entries()
        .iter()
        .filter(|e| q.contains(e.x, e.y))
        .map(|e| e.offset)
        .collect();
    let rows = reader.read_rows(&offsets, &index.descriptor().tracked_attributes)?;
    for values in &rows {
        aggregate.add_row(values);
    }
    Ok(Processed {
        aggregate,
        split: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactAnswer {
    /// One value per request; `None` for mean/min/max over an empty window.
    pub values: Vec<Option<f64>>,
    pub telemetry: Telemetry,
}

/// Exact answer for `requests` over `q`. Fully covered tiles contribute
/// their metadata; every partial tile is processed.
pub fn evaluate_exact(
    index: &mut TileIndex,
    reader: &RowReader,
    q: &Rect,
    requests: &[AggregateRequest],
) -> Result<ExactAnswer> {
    let start = Instant::now();
    q.validate()?;
    let resolved = resolve(index, requests)?;
    let rows_before = reader.rows_read();

    let partition = index.classify(q);
    let mut total = WindowAggregate::new(index.descriptor().tracked_attributes.len());
    for &id in &partition.fully {
        let t = index.tile(id);
        total.add_stats(t.count, &t.stats);
    }
    let mut tiles_split = 0;
    for &(id, _) in &partition.partial {
        let p = process_partial(index, reader, id, q)?;
        tiles_split += p.split as u64;
        total.merge(&p.aggregate);
    }

    Ok(ExactAnswer {
        values: resolved.iter().map(|&r| total.value(r)).collect(),
        telemetry: Telemetry {
            rows_read: reader.rows_read() - rows_before,
            tiles_split,
            elapsed: start.elapsed(),
        },
    })
}
