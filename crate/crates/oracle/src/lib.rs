//! Ground-truth window aggregates computed by a plain sequential scan of a
//! CSV file.
//!
//! Nothing here knows about tiles, offsets or metadata. Every window is
//! answered by looking at every row, which makes this crate suitable as an
//! oracle for index-based evaluators. Several windows can be answered in the
//! same pass with [`scan_windows`].

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: expected at least {needed} fields, found {found}")]
    ShortRow {
        row: u64,
        needed: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: not a finite number: {text:?}")]
    NonNumeric {
        row: u64,
        column: usize,
        text: String,
    },
}

pub type Result<T> = std::result::Result<T, OracleError>;

/// Closed axis-aligned window: a point is inside iff
/// `x_min <= x <= x_max && y_min <= y <= y_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x_min <= x && x <= self.x_max && self.y_min <= y && y <= self.y_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Function {
    Count,
    Sum,
    Mean,
    Min,
    Max,
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub axis_x: usize,
    pub axis_y: usize,
    pub delimiter: u8,
    pub has_header: bool,
    /// Skip rows whose axis or requested columns do not parse instead of
    /// failing.
    pub skip_bad_rows: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            axis_x: 0,
            axis_y: 1,
            delimiter: b',',
            has_header: true,
            skip_bad_rows: false,
        }
    }
}

/// Double-word accumulator (TwoSum based) so that long sums come out
/// correctly rounded in practice.
#[derive(Debug, Clone, Copy, Default)]
struct WideSum {
    hi: f64,
    lo: f64,
}

impl WideSum {
    fn add(&mut self, x: f64) {
        let s = self.hi + x;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (x - bp);
        let lo = self.lo + err;
        self.hi = s + lo;
        self.lo = lo - (self.hi - s);
    }

    fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

#[derive(Debug, Clone, Copy)]
struct ColumnAcc {
    sum: WideSum,
    min: f64,
    max: f64,
}

/// Aggregates of one window for every requested column.
#[derive(Debug, Clone)]
pub struct WindowAggregates {
    pub count: u64,
    columns: Vec<usize>,
    accs: Vec<Option<ColumnAcc>>,
}

impl WindowAggregates {
    fn new(columns: &[usize]) -> Self {
        Self {
            count: 0,
            columns: columns.to_vec(),
            accs: vec![None; columns.len()],
        }
    }

    /// Value of `function` over `column`. `Count` ignores the column; an
    /// empty window yields `Some(0.0)` for count and sum and `None` for the
    /// rest.
    pub fn value(&self, function: Function, column: Option<usize>) -> Option<f64> {
        if function == Function::Count {
            return Some(self.count as f64);
        }
        let slot = self.columns.iter().position(|c| Some(*c) == column)?;
        match (function, self.accs[slot]) {
            (Function::Sum, None) => Some(0.0),
            (_, None) => None,
            (Function::Sum, Some(acc)) => Some(acc.sum.value()),
            (Function::Mean, Some(acc)) => Some(acc.sum.value() / self.count as f64),
            (Function::Min, Some(acc)) => Some(acc.min),
            (Function::Max, Some(acc)) => Some(acc.max),
            (Function::Count, _) => unreachable!(),
        }
    }
}

fn parse_field(record: &csv::ByteRecord, row: u64, column: usize) -> Result<f64> {
    let raw = record.get(column).ok_or(OracleError::ShortRow {
        row,
        needed: column + 1,
        found: record.len(),
    })?;
    let text = String::from_utf8_lossy(raw);
    match text.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(OracleError::NonNumeric {
            row,
            column,
            text: text.into_owned(),
        }),
    }
}

/// Answers every window in one sequential scan of `path`, accumulating
/// count, sum, min and max of each column in `columns` for rows whose axis
/// values fall inside the window.
pub fn scan_windows(
    path: impl AsRef<Path>,
    options: &ScanOptions,
    windows: &[Window],
    columns: &[usize],
) -> Result<Vec<WindowAggregates>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| OracleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(options.has_header)
        .flexible(true)
        .from_reader(std::io::BufReader::with_capacity(1 << 20, file));

    let mut out: Vec<WindowAggregates> = windows
        .iter()
        .map(|_| WindowAggregates::new(columns))
        .collect();
    let mut record = csv::ByteRecord::new();
    let mut values = vec![0.0; columns.len()];
    let mut row = 0u64;
    'rows: while reader.read_byte_record(&mut record)? {
        row += 1;
        if record.len() == 1 && record.get(0).is_some_and(|f| f.is_empty()) {
            continue;
        }
        let parsed = (|| -> Result<(f64, f64)> {
            let x = parse_field(&record, row, options.axis_x)?;
            let y = parse_field(&record, row, options.axis_y)?;
            for (v, &c) in values.iter_mut().zip(columns) {
                *v = parse_field(&record, row, c)?;
            }
            Ok((x, y))
        })();
        let (x, y) = match parsed {
            Ok(xy) => xy,
            Err(_) if options.skip_bad_rows => continue 'rows,
            Err(e) => return Err(e),
        };
        for (window, agg) in windows.iter().zip(out.iter_mut()) {
            if !window.contains(x, y) {
                continue;
            }
            agg.count += 1;
            for (acc, &v) in agg.accs.iter_mut().zip(&values) {
                match acc {
                    Some(a) => {
                        a.sum.add(v);
                        a.min = a.min.min(v);
                        a.max = a.max.max(v);
                    }
                    None => {
                        let mut sum = WideSum::default();
                        sum.add(v);
                        *acc = Some(ColumnAcc {
                            sum,
                            min: v,
                            max: v,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Single-window convenience wrapper around [`scan_windows`].
pub fn oracle(
    path: impl AsRef<Path>,
    options: &ScanOptions,
    window: Window,
    columns: &[usize],
) -> Result<WindowAggregates> {
    Ok(scan_windows(path, options, &[window], columns)?.remove(0))
}
