//! Raw CSV access: the initialization scan and random-access row reads.
//!
//! This is the only module that opens the data file. Rows are addressed by
//! the byte offset of their first character; a read re-parses the full row.
//! Every row fetched through [`RowReader::read_rows`] is counted, and that
//! counter is the I/O cost measure used by the engines.

use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use crate::error::{Error, Result};

/// What to do with rows that have the wrong field count or whose axis or
/// tracked fields do not parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BadRowPolicy {
    #[default]
    Fail,
    Skip,
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub axis_x: usize,
    pub axis_y: usize,
    pub tracked_attributes: Vec<usize>,
    pub delimiter: u8,
    pub has_header: bool,
    pub on_bad_row: BadRowPolicy,
}

impl ScanOptions {
    pub fn new(axis_x: usize, axis_y: usize, tracked_attributes: Vec<usize>) -> Self {
        Self {
            axis_x,
            axis_y,
            tracked_attributes,
            delimiter: b',',
            has_header: true,
            on_bad_row: BadRowPolicy::Fail,
        }
    }

    fn validate(&self, column_count: Option<usize>) -> Result<()> {
        if self.axis_x == self.axis_y {
            return Err(Error::InvalidConfig("axis columns must differ".into()));
        }
        let mut seen = Vec::with_capacity(self.tracked_attributes.len());
        for &a in &self.tracked_attributes {
            if a == self.axis_x || a == self.axis_y {
                return Err(Error::InvalidConfig(format!(
                    "tracked attribute {a} is an axis column"
                )));
            }
            if seen.contains(&a) {
                return Err(Error::InvalidConfig(format!(
                    "tracked attribute {a} listed twice"
                )));
            }
            seen.push(a);
        }
        if let Some(n) = column_count {
            let max = self
                .tracked_attributes
                .iter()
                .chain([&self.axis_x, &self.axis_y])
                .max()
                .copied()
                .unwrap_or(0);
            if max >= n {
                return Err(Error::InvalidConfig(format!(
                    "column {max} out of range for {n} columns"
                )));
            }
        }
        if self.delimiter == b'"' || self.delimiter == b'\n' || self.delimiter == b'\r' {
            return Err(Error::InvalidConfig("unsupported delimiter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetDescriptor {
    pub file_path: PathBuf,
    pub column_names: Vec<String>,
    pub column_count: usize,
    pub axis_x: usize,
    pub axis_y: usize,
    pub tracked_attributes: Vec<usize>,
    pub row_count: u64,
    #[serde(serialize_with = "ser_delimiter")]
    pub delimiter: u8,
    pub has_header: bool,
    pub on_bad_row: BadRowPolicy,
    pub skipped_rows: u64,
}

fn ser_delimiter<S: serde::Serializer>(d: &u8, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&(*d as char).to_string())
}

impl DatasetDescriptor {
    /// Position of `column` within `tracked_attributes`.
    pub fn tracked_slot(&self, column: usize) -> Option<usize> {
        self.tracked_attributes.iter().position(|&c| c == column)
    }

    pub fn column_name(&self, column: usize) -> Option<&str> {
        self.column_names.get(column).map(String::as_str)
    }

    pub fn column_by_name(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }
}

/// Axis values and file position of one data row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectEntry {
    pub x: f64,
    pub y: f64,
    pub offset: u64,
}

/// Everything the initialization pass saw: one entry per admitted row and,
/// row-major, the values of the tracked attributes in descriptor order.
#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub descriptor: DatasetDescriptor,
    pub entries: Vec<ObjectEntry>,
    pub tracked_values: Vec<f64>,
}

impl ScanOutput {
    pub fn tracked_row(&self, row: usize) -> &[f64] {
        let n = self.descriptor.tracked_attributes.len();
        &self.tracked_values[row * n..(row + 1) * n]
    }
}

enum RowError {
    Malformed(String),
    NonNumeric(usize),
}

fn trim_line(buf: &[u8]) -> &[u8] {
    let mut end = buf.len();
    if end > 0 && buf[end - 1] == b'\n' {
        end -= 1;
        if end > 0 && buf[end - 1] == b'\r' {
            end -= 1;
        }
    }
    &buf[..end]
}

fn split_fields(
    line: &[u8],
    delimiter: u8,
    fields: &mut Vec<(usize, usize)>,
) -> std::result::Result<(), RowError> {
    fields.clear();
    if line.contains(&b'"') {
        return Err(RowError::Malformed(
            "quoted fields are not supported".into(),
        ));
    }
    let mut start = 0;
    for (i, &b) in line.iter().enumerate() {
        if b == delimiter {
            fields.push((start, i));
            start = i + 1;
        }
    }
    fields.push((start, line.len()));
    Ok(())
}

pub(crate) fn parse_number(raw: &[u8]) -> Option<f64> {
    let text = std::str::from_utf8(raw).ok()?.trim();
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

struct RowParser {
    delimiter: u8,
    column_count: usize,
    fields: Vec<(usize, usize)>,
}

impl RowParser {
    fn parse_into(
        &mut self,
        line: &[u8],
        columns: &[usize],
        out: &mut Vec<f64>,
    ) -> std::result::Result<(), RowError> {
        split_fields(line, self.delimiter, &mut self.fields)?;
        if self.fields.len() != self.column_count {
            return Err(RowError::Malformed(format!(
                "expected {} fields, found {}",
                self.column_count,
                self.fields.len()
            )));
        }
        for &c in columns {
            let (s, e) = self.fields[c];
            out.push(parse_number(&line[s..e]).ok_or(RowError::NonNumeric(c))?);
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Single sequential pass over `path`. Returns the descriptor together with
/// the axis values, offset and tracked values of every admitted row.
pub fn scan_init(path: impl AsRef<Path>, options: &ScanOptions) -> Result<ScanOutput> {
    let path = path.as_ref();
    options.validate(None)?;
    let mut reader = BufReader::with_capacity(1 << 20, open(path)?);
    let mut buf = Vec::with_capacity(256);
    let mut offset = 0u64;
    let mut line_no = 0u64;

    let mut column_names: Option<Vec<String>> = None;
    let mut parser: Option<RowParser> = None;
    let mut entries = Vec::new();
    let mut tracked_values = Vec::new();
    let mut skipped_rows = 0u64;

    let mut columns = vec![options.axis_x, options.axis_y];
    columns.extend(&options.tracked_attributes);
    let mut parsed = Vec::with_capacity(columns.len());

    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        let row_start = offset;
        offset += n as u64;
        line_no += 1;
        let line = trim_line(&buf);
        if line.is_empty() {
            continue;
        }

        if parser.is_none() {
            let mut fields = Vec::new();
            let names = match split_fields(line, options.delimiter, &mut fields) {
                Ok(()) => fields
                    .iter()
                    .enumerate()
                    .map(|(i, &(s, e))| {
                        if options.has_header {
                            String::from_utf8_lossy(&line[s..e]).trim().to_string()
                        } else {
                            format!("c{i}")
                        }
                    })
                    .collect::<Vec<_>>(),
                Err(RowError::Malformed(reason)) => {
                    return Err(Error::MalformedRow {
                        line: line_no,
                        reason,
                    })
                }
                Err(RowError::NonNumeric(_)) => unreachable!(),
            };
            options.validate(Some(names.len()))?;
            parser = Some(RowParser {
                delimiter: options.delimiter,
                column_count: names.len(),
                fields,
            });
            column_names = Some(names);
            if options.has_header {
                continue;
            }
        }

        let p = parser.as_mut().expect("parser initialized above");
        parsed.clear();
        match p.parse_into(line, &columns, &mut parsed) {
            Ok(()) => {
                entries.push(ObjectEntry {
                    x: parsed[0],
                    y: parsed[1],
                    offset: row_start,
                });
                tracked_values.extend_from_slice(&parsed[2..]);
            }
            Err(_) if options.on_bad_row == BadRowPolicy::Skip => skipped_rows += 1,
            Err(RowError::Malformed(reason)) => {
                return Err(Error::MalformedRow {
                    line: line_no,
                    reason,
                })
            }
            Err(RowError::NonNumeric(column)) => {
                return Err(Error::NonNumeric {
                    line: line_no,
                    column,
                })
            }
        }
    }

    let column_names = column_names.unwrap_or_default();
    let descriptor = DatasetDescriptor {
        file_path: path.to_path_buf(),
        column_count: column_names.len(),
        column_names,
        axis_x: options.axis_x,
        axis_y: options.axis_y,
        tracked_attributes: options.tracked_attributes.clone(),
        row_count: entries.len() as u64,
        delimiter: options.delimiter,
        has_header: options.has_header,
        on_bad_row: options.on_bad_row,
        skipped_rows,
    };
    Ok(ScanOutput {
        descriptor,
        entries,
        tracked_values,
    })
}

/// Random-access reader over the rows of a scanned file.
///
/// Each call opens its own handle, so concurrent callers do not share file
/// position. The rows-read counter is shared and atomic.
#[derive(Debug)]
pub struct RowReader {
    path: PathBuf,
    delimiter: u8,
    column_count: usize,
    rows_read: AtomicU64,
}

impl Clone for RowReader {
    fn clone(&self) -> Self {
        Self {
            path: self.path.clone(),
            delimiter: self.delimiter,
            column_count: self.column_count,
            rows_read: AtomicU64::new(self.rows_read()),
        }
    }
}

const NEAR_SEEK: u64 = 256 * 1024;

impl RowReader {
    pub fn new(descriptor: &DatasetDescriptor) -> Self {
        Self {
            path: descriptor.file_path.clone(),
            delimiter: descriptor.delimiter,
            column_count: descriptor.column_count,
            rows_read: AtomicU64::new(0),
        }
    }

    /// Total number of rows fetched so far.
    pub fn rows_read(&self) -> u64 {
        self.rows_read.load(Ordering::Relaxed)
    }

    /// Reads the given rows and returns, in input order, the values of
    /// `attributes` for each one.
    pub fn read_rows(&self, offsets: &[u64], attributes: &[usize]) -> Result<Vec<Vec<f64>>> {
        if offsets.is_empty() {
            return Ok(Vec::new());
        }
        self.rows_read
            .fetch_add(offsets.len() as u64, Ordering::Relaxed);

        if let Some(&bad) = attributes.iter().find(|&&a| a >= self.column_count) {
            return Err(Error::InvalidConfig(format!("column {bad} out of range")));
        }

        let mut order: Vec<usize> = (0..offsets.len()).collect();
        order.sort_by_key(|&i| offsets[i]);

        let mut reader = BufReader::with_capacity(64 * 1024, open(&self.path)?);
        let mut pos = 0u64;
        let mut buf = Vec::with_capacity(256);
        let mut parser = RowParser {
            delimiter: self.delimiter,
            column_count: self.column_count,
            fields: Vec::new(),
        };
        let mut out = vec![Vec::new(); offsets.len()];

        for i in order {
            let offset = offsets[i];
            if offset >= pos && offset - pos <= NEAR_SEEK {
                reader.seek_relative((offset - pos) as i64)?;
            } else {
                reader.seek(SeekFrom::Start(offset))?;
            }
            buf.clear();
            let n = reader.read_until(b'\n', &mut buf)?;
            pos = offset + n as u64;

            let mut values = Vec::with_capacity(attributes.len());
            if let Err(e) = parser.parse_into(trim_line(&buf), attributes, &mut values) {
                let reason = match e {
                    RowError::Malformed(r) => r,
                    RowError::NonNumeric(c) => format!("column {c} is not a finite number"),
                };
                return Err(Error::InconsistentRow { offset, reason });
            }
            out[i] = values;
        }
        Ok(out)
    }
}
