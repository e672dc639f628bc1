#![allow(dead_code)]

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tileprobe::{IndexConfig, Rect, RowReader, ScanOptions, TileIndex};

/// In-memory copy of a generated CSV: `(x, y, values...)` per row.
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub file: tempfile::NamedTempFile,
}

impl Dataset {
    pub fn write(rows: Vec<Vec<f64>>) -> Self {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        let cols = rows.first().map_or(3, Vec::len);
        let header: Vec<String> = (0..cols).map(|i| format!("c{i}")).collect();
        writeln!(file, "{}", header.join(",")).unwrap();
        for r in &rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            writeln!(file, "{}", line.join(",")).unwrap();
        }
        file.flush().unwrap();
        Self { rows, file }
    }

    /// `n` rows with uniform axes in [0, 100) and `extra` value columns.
    pub fn random(seed: u64, n: usize, extra: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let mut r = vec![
                    (rng.random_range(0.0..100.0f64) * 100.0).round() / 100.0,
                    (rng.random_range(0.0..100.0f64) * 100.0).round() / 100.0,
                ];
                for c in 0..extra {
                    let v: f64 = rng.random_range(-50.0..150.0) + c as f64;
                    r.push((v * 1000.0).round() / 1000.0);
                }
                r
            })
            .collect();
        Self::write(rows)
    }

    pub fn tracked(&self) -> Vec<usize> {
        (2..self.rows.first().map_or(3, Vec::len)).collect()
    }

    pub fn index(&self, config: IndexConfig) -> (TileIndex, RowReader) {
        let scan = tileprobe::scan_init(self.file.path(), &ScanOptions::new(0, 1, self.tracked()))
            .unwrap();
        let reader = RowReader::new(&scan.descriptor);
        (TileIndex::initialize(scan, config).unwrap(), reader)
    }

    /// Brute-force values of column `col` for rows inside `q`.
    pub fn in_window(&self, q: &Rect, col: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| q.contains(r[0], r[1]))
            .map(|r| r[col])
            .collect()
    }
}

pub fn random_rect(rng: &mut ChaCha8Rng, domain: &Rect) -> Rect {
    let w = domain.width() * rng.random_range(0.02..0.6);
    let h = domain.height() * rng.random_range(0.02..0.6);
    let x = domain.x_min - 0.1 * domain.width() + rng.random_range(0.0..1.1) * domain.width();
    let y = domain.y_min - 0.1 * domain.height() + rng.random_range(0.0..1.1) * domain.height();
    Rect::new(x, x + w, y, y + h).unwrap()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// The layout of the adaptation walkthrough: a 3x3 grid over [0,3]^2 whose
/// centre-left tile t4 is split 2x2, and a window Q = [0.6,1.5]^2 that
/// touches t1, t2, t3 and t4a..t4d. Column 2 carries the aggregated value.
pub struct Walkthrough {
    pub data: Dataset,
    pub query: Rect,
}

impl Walkthrough {
    pub fn new() -> Self {
        let rows = vec![
            // t1 = [0,1)x[0,1): one object outside Q, two inside
            vec![0.0, 0.0, 10.0],
            vec![0.7, 0.7, 10.2],
            vec![0.8, 0.9, 10.1],
            // t2 = [1,2)x[0,1): nothing inside Q
            vec![1.5, 0.2, 50.0],
            vec![1.8, 0.8, 50.0],
            // t3 = [0,1)x[1,2): one inside, one outside, wide value range
            vec![0.2, 1.8, 0.0],
            vec![0.9, 1.2, 100.0],
            // t4 = [1,2)x[1,2): t4a holds two objects fully inside Q
            vec![1.2, 1.2, 30.0],
            vec![1.3, 1.1, 40.0],
            vec![1.7, 1.2, 20.0],
            vec![1.2, 1.8, 20.0],
            vec![1.8, 1.8, 20.0],
            // pins the domain to [0,3]^2
            vec![3.0, 3.0, 5.0],
        ];
        Self {
            data: Dataset::write(rows),
            query: Rect::new(0.6, 1.5, 0.6, 1.5).unwrap(),
        }
    }

    pub fn config() -> IndexConfig {
        IndexConfig {
            initial_grid: 3,
            split_factor: 2,
            max_depth: 4,
            min_split_count: 1,
        }
    }

    /// Index with t4 already split, and the reader's counter reset.
    pub fn prepared(&self) -> (TileIndex, RowReader) {
        let (mut index, reader) = self.data.index(Self::config());
        let t4 = index.roots()[4];
        index.split_tile(t4, &reader).unwrap();
        let reader = RowReader::new(index.descriptor());
        (index, reader)
    }
}
