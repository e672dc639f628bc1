use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::approx::{evaluate_approx, ScoreParams};
use crate::error::{Error, Result};
use crate::exact::evaluate_exact;
use crate::index::{AuditReport, IndexConfig, TileIndex};
use crate::ingest::{scan_init, RowReader, ScanOptions};
use crate::workload::oracle::oracle_batch;
use crate::workload::trace::ExplorationTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ReplayMode {
    Exact,
    Approx { phi: f64 },
}

impl ReplayMode {
    pub fn name(&self) -> &'static str {
        match self {
            ReplayMode::Exact => "exact",
            ReplayMode::Approx { .. } => "approx",
        }
    }

    pub fn phi(&self) -> Option<f64> {
        match self {
            ReplayMode::Exact => None,
            ReplayMode::Approx { phi } => Some(*phi),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub scan: ScanOptions,
    pub index: IndexConfig,
    pub score: ScoreParams,
    /// Compute oracle values and actual errors after the replay.
    pub with_oracle: bool,
}

impl ReplayConfig {
    pub fn new(scan: ScanOptions) -> Self {
        Self {
            scan,
            index: IndexConfig::default(),
            score: ScoreParams::default(),
            with_oracle: true,
        }
    }
}

/// One report line: one aggregate of one query.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayRow {
    pub query_idx: usize,
    pub mode: &'static str,
    pub phi: Option<f64>,
    pub elapsed_us: u64,
    pub rows_read: u64,
    pub tiles_split: u64,
    pub agg: String,
    pub value: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub reported_bound: f64,
    pub oracle: Option<f64>,
    pub actual_error: Option<f64>,
}

/// Per-query cost, independent of the number of aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QueryCost {
    pub query_idx: usize,
    pub rows_read: u64,
    pub tiles_split: u64,
    pub elapsed_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayTotals {
    pub queries: usize,
    pub rows_read: u64,
    pub tiles_split: u64,
    pub elapsed_us: u64,
    pub max_reported_bound: f64,
    pub max_actual_error: Option<f64>,
    /// Rows where the actual error exceeds the reported bound.
    pub bound_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub mode: ReplayMode,
    pub rows: Vec<ReplayRow>,
    pub costs: Vec<QueryCost>,
    pub totals: ReplayTotals,
    pub audit: AuditReport,
}

pub const REPORT_COLUMNS: [&str; 13] = [
    "query_idx",
    "mode",
    "phi",
    "elapsed_us",
    "rows_read",
    "tiles_split",
    "agg",
    "value",
    "ci_lo",
    "ci_hi",
    "reported_bound",
    "oracle",
    "actual_error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `|value - oracle| / max(|value|, epsilon)`; absent on both sides is zero
/// error, absent on one side is infinite.
pub fn actual_error(value: Option<f64>, oracle: Option<f64>, epsilon: f64) -> f64 {
    match (value, oracle) {
        (Some(v), Some(o)) => {
            let d = (v - o).abs();
            if d == 0.0 {
                0.0
            } else {
                d / v.abs().max(epsilon)
            }
        }
        (None, None) => 0.0,
        _ => f64::INFINITY,
    }
}

impl ReplayReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Report(e.to_string());
        w.write_record(REPORT_COLUMNS).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.query_idx.to_string(),
                r.mode.to_string(),
                opt(r.phi),
                r.elapsed_us.to_string(),
                r.rows_read.to_string(),
                r.tiles_split.to_string(),
                r.agg.clone(),
                opt(r.value),
                opt(r.ci_lo),
                opt(r.ci_hi),
                r.reported_bound.to_string(),
                opt(r.oracle),
                opt(r.actual_error),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// JSON summary: mode, totals, per-query costs and the index audit.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            mode: &'a ReplayMode,
            totals: &'a ReplayTotals,
            costs: &'a [QueryCost],
            audit: &'a AuditReport,
        }
        serde_json::to_string_pretty(&Summary {
            mode: &self.mode,
            totals: &self.totals,
            costs: &self.costs,
            audit: &self.audit,
        })
        .map_err(|e| Error::Report(e.to_string()))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.summary_json()?.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

/// Runs `trace` in order against an already built index. Returns the report
/// rows (without oracle columns) and per-query costs.
pub fn run_trace(
    index: &mut TileIndex,
    reader: &RowReader,
    trace: &ExplorationTrace,
    mode: ReplayMode,
    score: &ScoreParams,
) -> Result<(Vec<ReplayRow>, Vec<QueryCost>)> {
    let mut rows = Vec::new();
    let mut costs = Vec::with_capacity(trace.queries.len());
    for (query_idx, q) in trace.queries.iter().enumerate() {
        let (telemetry, results) = match mode {
            ReplayMode::Exact => {
                let a = evaluate_exact(index, reader, &q.rect, &q.requests)?;
                let results: Vec<_> = a.values.iter().map(|&v| (v, v, v, 0.0)).collect();
                (a.telemetry, results)
            }
            ReplayMode::Approx { phi } => {
                let a = evaluate_approx(index, reader, &q.rect, &q.requests, phi, score)?;
                let results: Vec<_> = a
                    .estimates
                    .iter()
                    .map(|e| {
                        (
                            e.value,
                            e.ci.map(|c| c.lo),
                            e.ci.map(|c| c.hi),
                            e.reported_bound,
                        )
                    })
                    .collect();
                (a.telemetry, results)
            }
        };
        let elapsed_us = telemetry.elapsed.as_micros() as u64;
        costs.push(QueryCost {
            query_idx,
            rows_read: telemetry.rows_read,
            tiles_split: telemetry.tiles_split,
            elapsed_us,
        });
        for (req, (value, ci_lo, ci_hi, reported_bound)) in q.requests.iter().zip(results) {
            rows.push(ReplayRow {
                query_idx,
                mode: mode.name(),
                phi: mode.phi(),
                elapsed_us,
                rows_read: telemetry.rows_read,
                tiles_split: telemetry.tiles_split,
                agg: req.label(),
                value,
                ci_lo,
                ci_hi,
                reported_bound,
                oracle: None,
                actual_error: None,
            });
        }
    }
    Ok((rows, costs))
}

/// Builds a fresh index over `path`, replays `trace` through the selected
/// engine, then (optionally) computes oracle values in a separate scan.
pub fn replay(
    path: impl AsRef<Path>,
    config: &ReplayConfig,
    trace: &ExplorationTrace,
    mode: ReplayMode,
) -> Result<ReplayReport> {
    let scan = scan_init(path, &config.scan)?;
    let reader = RowReader::new(&scan.descriptor);
    let mut index = TileIndex::initialize(scan, config.index)?;
    let (mut rows, costs) = run_trace(&mut index, &reader, trace, mode, &config.score)?;

    if config.with_oracle {
        let queries: Vec<_> = trace
            .queries
            .iter()
            .map(|q| (q.rect, q.requests.clone()))
            .collect();
        let truth = oracle_batch(index.descriptor(), &queries)?;
        let mut it = rows.iter_mut();
        for values in truth {
            for oracle in values {
                let row = it.next().expect("one row per request");
                row.oracle = oracle;
                row.actual_error = Some(actual_error(row.value, oracle, config.score.epsilon));
            }
        }
    }

    let totals = ReplayTotals {
        queries: costs.len(),
        rows_read: costs.iter().map(|c| c.rows_read).sum(),
        tiles_split: costs.iter().map(|c| c.tiles_split).sum(),
        elapsed_us: costs.iter().map(|c| c.elapsed_us).sum(),
        max_reported_bound: rows.iter().map(|r| r.reported_bound).fold(0.0, f64::max),
        max_actual_error: rows.iter().filter_map(|r| r.actual_error).reduce(f64::max),
        bound_violations: rows
            .iter()
            .filter(|r| r.actual_error.is_some_and(|e| e > r.reported_bound))
            .count(),
    };
    Ok(ReplayReport {
        mode,
        rows,
        costs,
        totals,
        audit: index.audit(),
    })
}

/// Whitespace-separated columns for gnuplot: query index, then rows read
/// and elapsed milliseconds for each series.
pub fn gnuplot_columns(series: &[(&str, &[QueryCost])]) -> String {
    let mut out = String::from("# query_idx");
    for (name, _) in series {
        out.push_str(&format!(" {name}_rows_read {name}_elapsed_ms"));
    }
    out.push('\n');
    let n = series.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..n {
        out.push_str(&i.to_string());
        for (_, costs) in series {
            match costs.get(i) {
                Some(c) => out.push_str(&format!(
                    " {} {:.3}",
                    c.rows_read,
                    c.elapsed_us as f64 / 1000.0
                )),
                None => out.push_str(" NaN NaN"),
            }
        }
        out.push('\n');
    }
    out
}
