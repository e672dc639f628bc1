//! Adapter from engine types to the standalone full-scan oracle. The scan
//! itself lives in `tileprobe-oracle`, which shares no code with the index
//! or the engines.

use tileprobe_oracle::{Function, Window};

use crate::error::Result;
use crate::geometry::Rect;
use crate::ingest::{BadRowPolicy, DatasetDescriptor};
use crate::query::{AggregateFunction, AggregateRequest};

fn function(f: AggregateFunction) -> Function {
    match f {
        AggregateFunction::Count => Function::Count,
        AggregateFunction::Sum => Function::Sum,
        AggregateFunction::Mean => Function::Mean,
        AggregateFunction::Min => Function::Min,
        AggregateFunction::Max => Function::Max,
    }
}

fn window(r: &Rect) -> Window {
    Window {
        x_min: r.x_min,
        x_max: r.x_max,
        y_min: r.y_min,
        y_max: r.y_max,
    }
}

fn options(d: &DatasetDescriptor) -> tileprobe_oracle::ScanOptions {
    tileprobe_oracle::ScanOptions {
        axis_x: d.axis_x,
        axis_y: d.axis_y,
        delimiter: d.delimiter,
        has_header: d.has_header,
        skip_bad_rows: d.on_bad_row == BadRowPolicy::Skip,
    }
}

/// Exact answers for several `(window, requests)` pairs in one sequential
/// scan of the descriptor's file.
pub fn oracle_batch(
    descriptor: &DatasetDescriptor,
    queries: &[(Rect, Vec<AggregateRequest>)],
) -> Result<Vec<Vec<Option<f64>>>> {
    let mut columns: Vec<usize> = queries
        .iter()
        .flat_map(|(_, reqs)| reqs.iter().filter_map(|r| r.attribute))
        .collect();
    columns.sort_unstable();
    columns.dedup();
    let windows: Vec<Window> = queries.iter().map(|(r, _)| window(r)).collect();
    let aggs = tileprobe_oracle::scan_windows(
        &descriptor.file_path,
        &options(descriptor),
        &windows,
        &columns,
    )?;
    Ok(queries
        .iter()
        .zip(aggs)
        .map(|((_, reqs), agg)| {
            reqs.iter()
                .map(|r| agg.value(function(r.function), r.attribute))
                .collect()
        })
        .collect())
}

/// Exact answers for one window.
pub fn oracle(
    descriptor: &DatasetDescriptor,
    q: &Rect,
    requests: &[AggregateRequest],
) -> Result<Vec<Option<f64>>> {
    Ok(oracle_batch(descriptor, &[(*q, requests.to_vec())])?.remove(0))
}
