//! Approximate window aggregates with deterministic error bounds.
//!
//! For a query window, fully covered tiles contribute their metadata
//! exactly. For each partially covered tile the in-window object count is
//! known from memory, and the tile's min/max metadata bound the values of
//! those objects. Together these give an interval guaranteed to contain the
//! true aggregate, a point estimate inside it (partial tiles contribute
//! their min/max midpoint), and a relative upper error bound.
//!
//! [`evaluate_approx`] processes partial tiles in descending score order,
//! replacing their interval contribution with the exact one, until every
//! requested aggregate's bound is at most `phi`.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{process_partial, WindowAggregate};
use crate::geometry::Rect;
use crate::index::{Tile, TileId, TileIndex, TilePartition};
use crate::ingest::RowReader;
use crate::query::{resolve, AggregateFunction, AggregateRequest, ResolvedRequest, Telemetry};
use crate::stats::{AggStats, WideSum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ConfidenceInterval {
    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// How the two score terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreForm {
    /// `alpha * w + (1 - alpha) / c`, with `c` clamped below by epsilon.
    #[default]
    Literal,
    /// `alpha * w + (1 - alpha) * (1 - c)`, bounded in `[0, 1]`.
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreParams {
    pub alpha: f64,
    pub epsilon: f64,
    pub form: ScoreForm,
}

impl Default for ScoreParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            epsilon: 1e-12,
            form: ScoreForm::Literal,
        }
    }
}

impl ScoreParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TileScore {
    pub tile: TileId,
    pub depth: u32,
    pub score: f64,
    /// Tile interval width normalized by the widest partial tile.
    pub width: f64,
    /// In-window count normalized by the largest partial tile count.
    pub count_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RequestEstimate {
    /// `None` for mean/min/max over an empty window.
    pub value: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    pub reported_bound: f64,
}

/// State after one refinement step (the first entry is the state before any
/// processing).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementStep {
    pub tile: Option<TileId>,
    pub rows_read: u64,
    /// Interval width per request. For sum and mean this is the total width
    /// contributed by the still-unprocessed tiles.
    pub widths: Vec<f64>,
    pub bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxAnswer {
    pub estimates: Vec<RequestEstimate>,
    /// Processed partial tiles in processing order.
    pub processed: Vec<TileScore>,
    pub trace: Vec<RefinementStep>,
    pub telemetry: Telemetry,
}

impl ApproxAnswer {
    pub fn max_bound(&self) -> f64 {
        self.estimates
            .iter()
            .map(|e| e.reported_bound)
            .fold(0.0, f64::max)
    }
}

fn midpoint(s: &AggStats) -> f64 {
    s.min + (s.max - s.min) / 2.0
}

fn stats_for(tile: &Tile, slot: usize, column: usize) -> Result<&AggStats> {
    tile.stats(slot).ok_or(Error::MissingStats {
        tile: tile.id.0,
        column,
    })
}

/// Interval for `function` over the `n` in-window objects of a partial
/// tile, from the tile's metadata only.
pub fn tile_ci(
    index: &TileIndex,
    tile: TileId,
    n: u64,
    request: &AggregateRequest,
) -> Result<ConfidenceInterval> {
    let r = resolve(index, std::slice::from_ref(request))?[0];
    let tile = index.tile(tile);
    match r.slot {
        None => Ok(ConfidenceInterval::point(n as f64)),
        Some(slot) => {
            let s = stats_for(tile, slot, index.descriptor().tracked_attributes[slot])?;
            Ok(tile_interval(s, n, r.function))
        }
    }
}

fn tile_interval(s: &AggStats, n: u64, function: AggregateFunction) -> ConfidenceInterval {
    match function {
        AggregateFunction::Count => ConfidenceInterval::point(n as f64),
        AggregateFunction::Sum => ConfidenceInterval {
            lo: n as f64 * s.min,
            hi: n as f64 * s.max,
        },
        AggregateFunction::Mean | AggregateFunction::Min | AggregateFunction::Max => {
            ConfidenceInterval {
                lo: s.min,
                hi: s.max,
            }
        }
    }
}

/// `max(value - lo, hi - value) / max(|value|, epsilon)`.
pub fn error_bound(value: f64, ci: &ConfidenceInterval, epsilon: f64) -> f64 {
    let spread = (value - ci.lo).max(ci.hi - value);
    if spread <= 0.0 {
        return 0.0;
    }
    spread / value.abs().max(epsilon)
}

/// Score of a partial tile given its raw interval width and in-window
/// count, normalized by the maxima over the evaluation's partial tiles.
pub fn tile_score(
    tile: TileId,
    depth: u32,
    raw_width: f64,
    n: u64,
    w_max: f64,
    n_max: u64,
    params: &ScoreParams,
) -> TileScore {
    let width = if w_max > 0.0 { raw_width / w_max } else { 0.0 };
    let count_fraction = if n_max > 0 {
        n as f64 / n_max as f64
    } else {
        0.0
    };
    let alpha = params.alpha;
    let score = match params.form {
        ScoreForm::Literal => {
            let cost_term = if alpha < 1.0 {
                (1.0 - alpha) / count_fraction.max(params.epsilon)
            } else {
                0.0
            };
            alpha * width + cost_term
        }
        ScoreForm::Bounded => alpha * width + (1.0 - alpha) * (1.0 - count_fraction),
    };
    TileScore {
        tile,
        depth,
        score,
        width,
        count_fraction,
    }
}

struct PendingTile {
    id: TileId,
    depth: u32,
    n: u64,
    stats: Vec<Option<AggStats>>,
    done: bool,
}

/// Exact part (fully covered + processed tiles) and interval part
/// (unprocessed partial tiles) of one query.
struct Refinement {
    exact: WindowAggregate,
    pending: Vec<PendingTile>,
    columns: Vec<usize>,
    epsilon: f64,
}

impl Refinement {
    fn new(index: &TileIndex, partition: &TilePartition, epsilon: f64) -> Self {
        let mut exact = WindowAggregate::new(index.descriptor().tracked_attributes.len());
        for &id in &partition.fully {
            let t = index.tile(id);
            exact.add_stats(t.count, &t.stats);
        }
        let pending = partition
            .partial
            .iter()
            .map(|&(id, n)| {
                let t = index.tile(id);
                PendingTile {
                    id,
                    depth: t.depth,
                    n,
                    stats: t.stats.clone(),
                    done: false,
                }
            })
            .collect();
        Self {
            exact,
            pending,
            columns: index.descriptor().tracked_attributes.clone(),
            epsilon,
        }
    }

    fn total_count(&self) -> u64 {
        self.exact.count + self.open().map(|p| p.n).sum::<u64>()
    }

    fn open(&self) -> impl Iterator<Item = &PendingTile> {
        self.pending.iter().filter(|p| !p.done)
    }

    fn open_stats(&self, slot: usize) -> Result<Vec<(u64, &AggStats)>> {
        self.open()
            .map(|p| {
                p.stats[slot]
                    .as_ref()
                    .map(|s| (p.n, s))
                    .ok_or(Error::MissingStats {
                        tile: p.id.0,
                        column: self.columns[slot],
                    })
            })
            .collect()
    }

    /// Sum interval and midpoint estimate, accumulated without intermediate
    /// rounding.
    fn sum_parts(&self, slot: usize) -> Result<(f64, f64, f64)> {
        let base = self.exact.slots[slot]
            .as_ref()
            .map_or(WideSum::default(), |s| *s.wide_sum());
        let (mut lo, mut hi, mut mid) = (base, base, base);
        for (n, s) in self.open_stats(slot)? {
            let n = n as f64;
            lo.add_product(n, s.min);
            hi.add_product(n, s.max);
            mid.add_product(n, midpoint(s));
        }
        let (lo, hi) = (lo.value(), hi.value());
        Ok((lo, hi, mid.value().clamp(lo, hi)))
    }

    fn estimate(&self, r: ResolvedRequest) -> Result<RequestEstimate> {
        let n_total = self.total_count();
        let (value, ci) = match (r.function, r.slot) {
            (AggregateFunction::Count, _) | (_, None) => {
                let v = n_total as f64;
                (Some(v), Some(ConfidenceInterval::point(v)))
            }
            (AggregateFunction::Sum, Some(slot)) => {
                let (lo, hi, v) = self.sum_parts(slot)?;
                (Some(v), Some(ConfidenceInterval { lo, hi }))
            }
            (_, Some(_)) if n_total == 0 => (None, None),
            (AggregateFunction::Mean, Some(slot)) => {
                let (lo, hi, v) = self.sum_parts(slot)?;
                let n = n_total as f64;
                let ci = ConfidenceInterval {
                    lo: lo / n,
                    hi: hi / n,
                };
                (Some((v / n).clamp(ci.lo, ci.hi)), Some(ci))
            }
            (AggregateFunction::Min, Some(slot)) => {
                let known = self.exact.slots[slot].as_ref().map(|s| s.min);
                let mut lo = known.unwrap_or(f64::INFINITY);
                let (mut hi, mut v) = (lo, lo);
                for (_, s) in self.open_stats(slot)? {
                    lo = lo.min(s.min);
                    hi = hi.min(s.max);
                    v = v.min(midpoint(s));
                }
                (Some(v), Some(ConfidenceInterval { lo, hi }))
            }
            (AggregateFunction::Max, Some(slot)) => {
                let known = self.exact.slots[slot].as_ref().map(|s| s.max);
                let mut hi = known.unwrap_or(f64::NEG_INFINITY);
                let (mut lo, mut v) = (hi, hi);
                for (_, s) in self.open_stats(slot)? {
                    hi = hi.max(s.max);
                    lo = lo.max(s.min);
                    v = v.max(midpoint(s));
                }
                (Some(v), Some(ConfidenceInterval { lo, hi }))
            }
        };
        let reported_bound = match (value, ci) {
            (Some(v), Some(ci)) => error_bound(v, &ci, self.epsilon),
            _ => 0.0,
        };
        Ok(RequestEstimate {
            value,
            ci,
            reported_bound,
        })
    }

    /// Interval width contributed by unprocessed tiles. Computed as a sum of
    /// non-negative terms so that it can only shrink as tiles are processed.
    fn width(&self, r: ResolvedRequest, estimate: &RequestEstimate) -> Result<f64> {
        Ok(match (r.function, r.slot) {
            (AggregateFunction::Count, _) | (_, None) => 0.0,
            (AggregateFunction::Sum, Some(slot)) => self
                .open_stats(slot)?
                .iter()
                .map(|(n, s)| *n as f64 * (s.max - s.min))
                .sum(),
            (AggregateFunction::Mean, Some(slot)) => {
                let n = self.total_count();
                if n == 0 {
                    0.0
                } else {
                    self.open_stats(slot)?
                        .iter()
                        .map(|(n, s)| *n as f64 * (s.max - s.min))
                        .sum::<f64>()
                        / n as f64
                }
            }
            _ => estimate.ci.map_or(0.0, |c| c.width()),
        })
    }

    fn estimates(&self, resolved: &[ResolvedRequest]) -> Result<Vec<RequestEstimate>> {
        resolved.iter().map(|&r| self.estimate(r)).collect()
    }

    fn step(
        &self,
        resolved: &[ResolvedRequest],
        estimates: &[RequestEstimate],
        tile: Option<TileId>,
        rows_read: u64,
    ) -> Result<RefinementStep> {
        Ok(RefinementStep {
            tile,
            rows_read,
            widths: resolved
                .iter()
                .zip(estimates)
                .map(|(&r, e)| self.width(r, e))
                .collect::<Result<_>>()?,
            bounds: estimates.iter().map(|e| e.reported_bound).collect(),
        })
    }

    /// Scores of all unprocessed tiles for one request, best first.
    fn ranked(&self, r: ResolvedRequest, params: &ScoreParams) -> Vec<(usize, TileScore)> {
        let raw: Vec<(usize, f64)> = self
            .pending
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.done)
            .map(|(i, p)| {
                let w = match r.slot.and_then(|s| p.stats[s].as_ref()) {
                    Some(s) => tile_interval(s, p.n, r.function).width(),
                    None => 0.0,
                };
                (i, w)
            })
            .collect();
        let w_max = raw.iter().map(|&(_, w)| w).fold(0.0, f64::max);
        let n_max = self.open().map(|p| p.n).max().unwrap_or(0);
        let mut scored: Vec<(usize, TileScore)> = raw
            .into_iter()
            .map(|(i, w)| {
                let p = &self.pending[i];
                (i, tile_score(p.id, p.depth, w, p.n, w_max, n_max, params))
            })
            .collect();
        scored.sort_by(|(_, a), (_, b)| {
            b.score
                .total_cmp(&a.score)
                .then(a.depth.cmp(&b.depth))
                .then(a.tile.cmp(&b.tile))
        });
        scored
    }
}

fn check_phi(phi: f64) -> Result<()> {
    if phi.is_nan() || phi < 0.0 {
        return Err(Error::InvalidConfig(format!("phi must be >= 0, got {phi}")));
    }
    Ok(())
}

/// Query interval for one request, from metadata only.
pub fn query_ci(
    index: &TileIndex,
    partition: &TilePartition,
    request: &AggregateRequest,
) -> Result<Option<ConfidenceInterval>> {
    let r = resolve(index, std::slice::from_ref(request))?[0];
    Ok(
        Refinement::new(index, partition, ScoreParams::default().epsilon)
            .estimate(r)?
            .ci,
    )
}

/// Point estimate for one request, from metadata only.
pub fn approximate_value(
    index: &TileIndex,
    partition: &TilePartition,
    request: &AggregateRequest,
) -> Result<Option<f64>> {
    let r = resolve(index, std::slice::from_ref(request))?[0];
    Ok(
        Refinement::new(index, partition, ScoreParams::default().epsilon)
            .estimate(r)?
            .value,
    )
}

/// Metadata-only estimate: no file access and no adaptation.
pub fn estimate(
    index: &TileIndex,
    q: &Rect,
    requests: &[AggregateRequest],
    params: &ScoreParams,
) -> Result<ApproxAnswer> {
    let start = Instant::now();
    q.validate()?;
    params.validate()?;
    let resolved = resolve(index, requests)?;
    let state = Refinement::new(index, &index.classify(q), params.epsilon);
    let estimates = state.estimates(&resolved)?;
    let trace = vec![state.step(&resolved, &estimates, None, 0)?];
    Ok(ApproxAnswer {
        estimates,
        processed: Vec::new(),
        trace,
        telemetry: Telemetry {
            elapsed: start.elapsed(),
            ..Telemetry::default()
        },
    })
}

/// Approximate answer whose reported bound is at most `phi` for every
/// request, processing as few partial tiles as the score order allows.
pub fn evaluate_approx(
    index: &mut TileIndex,
    reader: &RowReader,
    q: &Rect,
    requests: &[AggregateRequest],
    phi: f64,
    params: &ScoreParams,
) -> Result<ApproxAnswer> {
    let start = Instant::now();
    q.validate()?;
    check_phi(phi)?;
    params.validate()?;
    let resolved = resolve(index, requests)?;
    let rows_before = reader.rows_read();

    let mut state = Refinement::new(index, &index.classify(q), params.epsilon);
    let mut estimates = state.estimates(&resolved)?;
    let mut trace = vec![state.step(&resolved, &estimates, None, 0)?];
    let mut processed = Vec::new();
    let mut tiles_split = 0;

    let violated = |est: &[RequestEstimate]| est.iter().position(|e| e.reported_bound > phi);
    if let Some(first) = violated(&estimates) {
        let order = state.ranked(resolved[first], params);
        for (i, score) in order {
            if violated(&estimates).is_none() {
                break;
            }
            let id = state.pending[i].id;
            let before = reader.rows_read();
            let p = process_partial(index, reader, id, q)?;
            debug_assert_eq!(p.aggregate.count, state.pending[i].n);
            tiles_split += p.split as u64;
            state.exact.merge(&p.aggregate);
            state.pending[i].done = true;
            processed.push(score);

            estimates = state.estimates(&resolved)?;
            trace.push(state.step(&resolved, &estimates, Some(id), reader.rows_read() - before)?);
        }
    }

    Ok(ApproxAnswer {
        estimates,
        processed,
        trace,
        telemetry: Telemetry {
            rows_read: reader.rows_read() - rows_before,
            tiles_split,
            elapsed: start.elapsed(),
        },
    })
}
