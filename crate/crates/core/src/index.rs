//! Hierarchical tile index over the two axis attributes.
//!
//! The index starts as a regular `g × g` grid of leaf tiles covering the
//! bounding box of the data. Leaves keep the axis values and file offsets of
//! their objects; every tile keeps count/sum/min/max of each tracked
//! attribute for its whole subtree. Splitting a leaf turns it into a `k × k`
//! grid of equally sized children whose metadata is computed from the rows
//! read back from the file.
//!
//! Tiles live in an arena and are addressed by [`TileId`]. Ids are assigned
//! in creation order, which makes the structure deterministic for a given
//! file, configuration and query sequence.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{cut_points, locate, Rect};
use crate::ingest::{DatasetDescriptor, ObjectEntry, RowReader, ScanOutput};
use crate::stats::{merge_into, push_value, AggStats, StatsView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IndexConfig {
    pub initial_grid: usize,
    pub split_factor: usize,
    pub max_depth: u32,
    /// Leaves with at most this many objects are never split.
    pub min_split_count: u64,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            initial_grid: 32,
            split_factor: 2,
            max_depth: 8,
            min_split_count: 256,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_grid < 1 {
            return Err(Error::InvalidConfig("initial_grid must be >= 1".into()));
        }
        if self.split_factor < 2 {
            return Err(Error::InvalidConfig("split_factor must be >= 2".into()));
        }
        if self.min_split_count < 1 {
            return Err(Error::InvalidConfig("min_split_count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TileId(pub u32);

impl std::fmt::Display for TileId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub enum TileNode {
    Leaf(Vec<ObjectEntry>),
    /// Children in row-major order (y outer, x inner).
    Internal(Vec<TileId>),
}

#[derive(Debug, Clone)]
pub struct Tile {
    pub id: TileId,
    pub bounds: Rect,
    /// Whether the maximum x edge belongs to the tile (domain edge).
    pub closed_x: bool,
    pub closed_y: bool,
    pub depth: u32,
    pub count: u64,
    /// One entry per tracked attribute, `None` when the tile is empty.
    pub stats: Vec<Option<AggStats>>,
    pub node: TileNode,
}

impl Tile {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let b = &self.bounds;
        b.x_min <= x
            && (x < b.x_max || (self.closed_x && x == b.x_max))
            && b.y_min <= y
            && (y < b.y_max || (self.closed_y && y == b.y_max))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.node, TileNode::Leaf(_))
    }

    pub fn entries(&self) -> &[ObjectEntry] {
        match &self.node {
            TileNode::Leaf(e) => e,
            TileNode::Internal(_) => &[],
        }
    }

    pub fn children(&self) -> &[TileId] {
        match &self.node {
            TileNode::Internal(c) => c,
            TileNode::Leaf(_) => &[],
        }
    }

    pub fn stats(&self, slot: usize) -> Option<&AggStats> {
        self.stats.get(slot).and_then(Option::as_ref)
    }
}

/// Leaves overlapping a query window, split by containment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TilePartition {
    /// Non-empty leaves entirely inside the window.
    pub fully: Vec<TileId>,
    /// Leaves crossing the window edge, with the number of their objects
    /// inside the window (always > 0).
    pub partial: Vec<(TileId, u64)>,
}

impl TilePartition {
    pub fn is_empty(&self) -> bool {
        self.fully.is_empty() && self.partial.is_empty()
    }
}

/// Rows read while splitting a leaf, in the leaf's original entry order.
#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub children: Vec<TileId>,
    pub entries: Vec<ObjectEntry>,
    /// Tracked attribute values, one vector per entry.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TileIndex {
    tiles: Vec<Tile>,
    roots: Vec<TileId>,
    domain: Rect,
    descriptor: Arc<DatasetDescriptor>,
    config: IndexConfig,
}

/// Cell bounds with its closed-x and closed-y flags.
type Cell = (Rect, bool, bool);

/// Builds the `k × k` children geometry of `bounds`, row-major.
fn grid_cells(
    bounds: &Rect,
    closed_x: bool,
    closed_y: bool,
    k: usize,
) -> (Vec<f64>, Vec<f64>, Vec<Cell>) {
    let xs = cut_points(bounds.x_min, bounds.x_max, k);
    let ys = cut_points(bounds.y_min, bounds.y_max, k);
    let mut cells = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            cells.push((
                Rect {
                    x_min: xs[i],
                    x_max: xs[i + 1],
                    y_min: ys[j],
                    y_max: ys[j + 1],
                },
                closed_x && i == k - 1,
                closed_y && j == k - 1,
            ));
        }
    }
    (xs, ys, cells)
}

impl TileIndex {
    /// Builds the initial grid from the initialization scan, computing the
    /// metadata of every root tile in the same pass over the scanned values.
    pub fn initialize(scan: ScanOutput, config: IndexConfig) -> Result<Self> {
        config.validate()?;
        let ScanOutput {
            descriptor,
            entries,
            tracked_values,
        } = scan;
        let n_tracked = descriptor.tracked_attributes.len();

        let domain = if entries.is_empty() {
            Rect {
                x_min: 0.0,
                x_max: 0.0,
                y_min: 0.0,
                y_max: 0.0,
            }
        } else {
            entries.iter().fold(
                Rect {
                    x_min: f64::INFINITY,
                    x_max: f64::NEG_INFINITY,
                    y_min: f64::INFINITY,
                    y_max: f64::NEG_INFINITY,
                },
                |r, e| Rect {
                    x_min: r.x_min.min(e.x),
                    x_max: r.x_max.max(e.x),
                    y_min: r.y_min.min(e.y),
                    y_max: r.y_max.max(e.y),
                },
            )
        };

        let g = config.initial_grid;
        let (xs, ys, cells) = grid_cells(&domain, true, true, g);
        let mut tiles: Vec<Tile> = cells
            .into_iter()
            .enumerate()
            .map(|(i, (bounds, closed_x, closed_y))| Tile {
                id: TileId(i as u32),
                bounds,
                closed_x,
                closed_y,
                depth: 0,
                count: 0,
                stats: vec![None; n_tracked],
                node: TileNode::Leaf(Vec::new()),
            })
            .collect();

        for (row, entry) in entries.into_iter().enumerate() {
            let cell = locate(&ys, entry.y) * g + locate(&xs, entry.x);
            let tile = &mut tiles[cell];
            tile.count += 1;
            let values = &tracked_values[row * n_tracked..(row + 1) * n_tracked];
            for (slot, &v) in tile.stats.iter_mut().zip(values) {
                push_value(slot, v);
            }
            if let TileNode::Leaf(e) = &mut tile.node {
                e.push(entry);
            }
        }

        let roots = tiles.iter().map(|t| t.id).collect();
        Ok(Self {
            tiles,
            roots,
            domain,
            descriptor: Arc::new(descriptor),
            config,
        })
    }

    pub fn descriptor(&self) -> &DatasetDescriptor {
        &self.descriptor
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn roots(&self) -> &[TileId] {
        &self.roots
    }

    pub fn tile(&self, id: TileId) -> &Tile {
        &self.tiles[id.0 as usize]
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn object_count(&self) -> u64 {
        self.roots.iter().map(|&r| self.tile(r).count).sum()
    }

    pub fn leaf_count(&self) -> usize {
        self.tiles.iter().filter(|t| t.is_leaf()).count()
    }

    fn tile_intersects(&self, tile: &Tile, q: &Rect) -> bool {
        tile.bounds.intersects(q)
    }

    /// Classifies the leaves overlapping `q` without touching the file.
    pub fn classify(&self, q: &Rect) -> TilePartition {
        let mut out = TilePartition::default();
        let mut stack: Vec<TileId> = self.roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            let tile = self.tile(id);
            if tile.count == 0 || !self.tile_intersects(tile, q) {
                continue;
            }
            match &tile.node {
                TileNode::Internal(children) => stack.extend(children.iter().rev()),
                TileNode::Leaf(_) => {
                    if q.covers(&tile.bounds) {
                        out.fully.push(id);
                    } else {
                        let n = self.count_in_window(id, q);
                        if n > 0 {
                            out.partial.push((id, n));
                        }
                    }
                }
            }
        }
        out
    }

    /// Number of the leaf's objects inside `q`, from in-memory axis values.
    pub fn count_in_window(&self, id: TileId, q: &Rect) -> u64 {
        let tile = self.tile(id);
        if !self.tile_intersects(tile, q) {
            return 0;
        }
        if q.covers(&tile.bounds) {
            return tile.count;
        }
        tile.entries()
            .iter()
            .filter(|e| q.contains(e.x, e.y))
            .count() as u64
    }

    /// Total number of objects inside `q` (fully covered tiles plus the
    /// in-window part of partial ones).
    pub fn window_count(&self, q: &Rect) -> u64 {
        let p = self.classify(q);
        p.fully.iter().map(|&id| self.tile(id).count).sum::<u64>()
            + p.partial.iter().map(|&(_, n)| n).sum::<u64>()
    }

    pub fn split_eligible(&self, id: TileId) -> bool {
        let t = self.tile(id);
        t.is_leaf() && t.count > self.config.min_split_count && t.depth < self.config.max_depth
    }

    /// Splits a leaf into `k × k` equal children, reading all of its rows to
    /// compute the children's metadata. The parent's own metadata is left
    /// as is.
    pub fn split_tile(&mut self, id: TileId, reader: &RowReader) -> Result<SplitOutcome> {
        let k = self.config.split_factor;
        let tile = self.tile(id);
        let entries = match &tile.node {
            TileNode::Internal(_) => return Err(Error::SplitOnInternal(id.0)),
            TileNode::Leaf(e) => e,
        };
        if tile.depth >= self.config.max_depth {
            return Err(Error::MaxDepthReached(id.0));
        }
        if entries.is_empty() {
            return Err(Error::EmptyTile(id.0));
        }

        let offsets: Vec<u64> = entries.iter().map(|e| e.offset).collect();
        let values = reader.read_rows(&offsets, &self.descriptor.tracked_attributes)?;

        let n_tracked = self.descriptor.tracked_attributes.len();
        let depth = tile.depth + 1;
        let (xs, ys, cells) = grid_cells(&tile.bounds, tile.closed_x, tile.closed_y, k);
        let first = self.tiles.len() as u32;
        let mut children: Vec<Tile> = cells
            .into_iter()
            .enumerate()
            .map(|(i, (bounds, closed_x, closed_y))| Tile {
                id: TileId(first + i as u32),
                bounds,
                closed_x,
                closed_y,
                depth,
                count: 0,
                stats: vec![None; n_tracked],
                node: TileNode::Leaf(Vec::new()),
            })
            .collect();

        for (entry, row) in entries.iter().zip(&values) {
            let child = &mut children[locate(&ys, entry.y) * k + locate(&xs, entry.x)];
            child.count += 1;
            for (slot, &v) in child.stats.iter_mut().zip(row) {
                push_value(slot, v);
            }
            if let TileNode::Leaf(e) = &mut child.node {
                e.push(*entry);
            }
        }

        let child_ids: Vec<TileId> = children.iter().map(|c| c.id).collect();
        self.tiles.extend(children);
        let parent = &mut self.tiles[id.0 as usize];
        let entries =
            match std::mem::replace(&mut parent.node, TileNode::Internal(child_ids.clone())) {
                TileNode::Leaf(e) => e,
                TileNode::Internal(_) => unreachable!(),
            };
        log::debug!("split {id} at depth {} into {} children", depth - 1, k * k);

        Ok(SplitOutcome {
            children: child_ids,
            entries,
            values,
        })
    }

    /// The leaf containing `(x, y)`, if the point lies in the domain.
    pub fn locate_leaf(&self, x: f64, y: f64) -> Option<TileId> {
        let mut current = self
            .roots
            .iter()
            .copied()
            .find(|&r| self.tile(r).contains(x, y))?;
        loop {
            let tile = self.tile(current);
            match &tile.node {
                TileNode::Leaf(_) => return Some(current),
                TileNode::Internal(children) => {
                    current = children
                        .iter()
                        .copied()
                        .find(|&c| self.tile(c).contains(x, y))?;
                }
            }
        }
    }

    /// Up to `limit` object positions inside `q`, from memory only.
    pub fn points_in(&self, q: &Rect, limit: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut stack: Vec<TileId> = self.roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            if out.len() >= limit {
                break;
            }
            let tile = self.tile(id);
            if tile.count == 0 || !self.tile_intersects(tile, q) {
                continue;
            }
            match &tile.node {
                TileNode::Internal(children) => stack.extend(children.iter().rev()),
                TileNode::Leaf(entries) => out.extend(
                    entries
                        .iter()
                        .filter(|e| q.contains(e.x, e.y))
                        .take(limit - out.len())
                        .map(|e| (e.x, e.y)),
                ),
            }
        }
        out
    }

    pub fn snapshot(&self, max_depth: Option<u32>) -> IndexSnapshot {
        IndexSnapshot {
            domain: self.domain,
            initial_grid: self.config.initial_grid,
            split_factor: self.config.split_factor,
            tiles: self
                .roots
                .iter()
                .map(|&r| self.snapshot_tile(r, max_depth))
                .collect(),
        }
    }

    fn snapshot_tile(&self, id: TileId, max_depth: Option<u32>) -> TileSnapshot {
        let t = self.tile(id);
        let stats = self
            .descriptor
            .tracked_attributes
            .iter()
            .zip(&t.stats)
            .filter_map(|(c, s)| s.as_ref().map(|s| (c.to_string(), StatsView::from(s))))
            .collect();
        let children = if max_depth.is_some_and(|d| t.depth >= d) {
            Vec::new()
        } else {
            t.children()
                .iter()
                .map(|&c| self.snapshot_tile(c, max_depth))
                .collect()
        };
        TileSnapshot {
            id: t.id.0,
            bounds: t.bounds,
            depth: t.depth,
            count: t.count,
            leaf: t.is_leaf(),
            stats,
            children,
        }
    }

    /// Checks every structural and metadata invariant of the index.
    pub fn audit(&self) -> AuditReport {
        let mut report = AuditReport::default();
        let mut offsets = HashSet::with_capacity(self.descriptor.row_count as usize);

        let g = self.config.initial_grid;
        let (_, _, cells) = grid_cells(&self.domain, true, true, g);
        if cells.len() != self.roots.len() {
            report.violation(format!(
                "root grid has {} tiles, expected {}",
                self.roots.len(),
                cells.len()
            ));
        }
        for (&r, (bounds, cx, cy)) in self.roots.iter().zip(&cells) {
            let t = self.tile(r);
            if t.bounds != *bounds || t.closed_x != *cx || t.closed_y != *cy || t.depth != 0 {
                report.violation(format!("root {r} geometry mismatch"));
            }
        }

        let mut stack: Vec<TileId> = self.roots.clone();
        while let Some(id) = stack.pop() {
            let t = self.tile(id);
            report.max_depth = report.max_depth.max(t.depth);
            for (slot, s) in t.stats.iter().enumerate() {
                match s {
                    None if t.count > 0 => {
                        report.violation(format!("{id} slot {slot}: missing stats"))
                    }
                    Some(s) if s.count != t.count => report.violation(format!(
                        "{id} slot {slot}: stats count {} != tile count {}",
                        s.count, t.count
                    )),
                    Some(s)
                        if {
                            let slack = 1e-12 * s.min.abs().max(s.max.abs());
                            s.mean() < s.min - slack || s.mean() > s.max + slack
                        } =>
                    {
                        report.violation(format!("{id} slot {slot}: mean outside [min, max]"))
                    }
                    _ => {}
                }
            }
            match &t.node {
                TileNode::Leaf(entries) => {
                    report.leaves += 1;
                    if entries.len() as u64 != t.count {
                        report.violation(format!(
                            "{id}: {} entries but count {}",
                            entries.len(),
                            t.count
                        ));
                    }
                    for e in entries {
                        if !t.contains(e.x, e.y) {
                            report.violation(format!(
                                "{id}: entry at offset {} outside bounds",
                                e.offset
                            ));
                        }
                        if !offsets.insert(e.offset) {
                            report.violation(format!("offset {} stored twice", e.offset));
                        }
                    }
                    report.objects += entries.len() as u64;
                }
                TileNode::Internal(children) => {
                    report.internal += 1;
                    let k = self.config.split_factor;
                    let (_, _, cells) = grid_cells(&t.bounds, t.closed_x, t.closed_y, k);
                    if children.len() != cells.len() {
                        report.violation(format!(
                            "{id}: {} children, expected {}",
                            children.len(),
                            cells.len()
                        ));
                    }
                    for (&c, (bounds, cx, cy)) in children.iter().zip(&cells) {
                        let ct = self.tile(c);
                        if ct.bounds != *bounds
                            || ct.closed_x != *cx
                            || ct.closed_y != *cy
                            || ct.depth != t.depth + 1
                        {
                            report.violation(format!("{c}: does not tile parent {id}"));
                        }
                    }
                    let child_count: u64 = children.iter().map(|&c| self.tile(c).count).sum();
                    if child_count != t.count {
                        report.violation(format!(
                            "{id}: children count {child_count} != {}",
                            t.count
                        ));
                    }
                    for slot in 0..t.stats.len() {
                        let mut merged: Option<AggStats> = None;
                        for &c in children {
                            merge_into(&mut merged, self.tile(c).stats(slot));
                        }
                        match (t.stats(slot), merged) {
                            (None, None) => {}
                            (Some(p), Some(m)) => {
                                if p.min != m.min || p.max != m.max {
                                    report
                                        .violation(format!("{id} slot {slot}: min/max not nested"));
                                }
                                let tol =
                                    1e-9 * p.sum().abs().max(m.sum().abs()).max(f64::MIN_POSITIVE);
                                if (p.sum() - m.sum()).abs() > tol {
                                    report.violation(format!(
                                        "{id} slot {slot}: children sum {} != {}",
                                        m.sum(),
                                        p.sum()
                                    ));
                                }
                            }
                            _ => report
                                .violation(format!("{id} slot {slot}: stats presence mismatch")),
                        }
                    }
                    stack.extend(children);
                }
            }
        }

        if report.objects != self.descriptor.row_count {
            report.violation(format!(
                "leaves hold {} objects, dataset has {}",
                report.objects, self.descriptor.row_count
            ));
        }
        report
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub leaves: usize,
    pub internal: usize,
    pub max_depth: u32,
    pub objects: u64,
    pub violations: Vec<String>,
}

impl AuditReport {
    fn violation(&mut self, msg: String) {
        self.violations.push(msg);
    }

    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IndexSnapshot {
    pub domain: Rect,
    pub initial_grid: usize,
    pub split_factor: usize,
    pub tiles: Vec<TileSnapshot>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TileSnapshot {
    pub id: u32,
    pub bounds: Rect,
    pub depth: u32,
    pub count: u64,
    pub leaf: bool,
    /// Keyed by column index.
    pub stats: BTreeMap<String, StatsView>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TileSnapshot>,
}
