use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle in axis units.
///
/// Used with two containment rules. As a query window it is closed on every
/// side ([`Rect::contains`]). As tile bounds it is half-open on the maximum
/// edges unless the tile sits on the domain's maximum edge; see
/// [`crate::index::Tile::contains`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let r = Self {
            x_min,
            x_max,
            y_min,
            y_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.x_min, self.x_max, self.y_min, self.y_max];
        if all.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidRect("NaN coordinate".into()));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(Error::InvalidRect(format!("min exceeds max in {self:?}")));
        }
        Ok(())
    }

    /// Closed containment.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x_min <= x && x <= self.x_max && self.y_min <= y && y <= self.y_max
    }

    /// Closed-closed overlap test.
    #[inline]
    pub fn intersects(&self, other: &Rect) -> bool {
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }

    /// True when `other` lies entirely inside `self`.
    #[inline]
    pub fn covers(&self, other: &Rect) -> bool {
        self.x_min <= other.x_min
            && other.x_max <= self.x_max
            && self.y_min <= other.y_min
            && other.y_max <= self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let r = Rect {
            x_min: self.x_min.max(other.x_min),
            x_max: self.x_max.min(other.x_max),
            y_min: self.y_min.max(other.y_min),
            y_max: self.y_max.min(other.y_max),
        };
        (r.x_min <= r.x_max && r.y_min <= r.y_max).then_some(r)
    }
}

/// `k + 1` monotone cut points splitting `[lo, hi]` into `k` equal parts,
/// with both ends pinned exactly.
pub(crate) fn cut_points(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    let span = hi - lo;
    let mut cuts: Vec<f64> = (0..=k)
        .map(|i| (lo + span * (i as f64 / k as f64)).min(hi))
        .collect();
    cuts[0] = lo;
    cuts[k] = hi;
    cuts
}

/// Cell of `v` among the cells delimited by `cuts`: the number of interior
/// cut points at or below `v`. Cells are half-open, the last one is closed.
#[inline]
pub(crate) fn locate(cuts: &[f64], v: f64) -> usize {
    let k = cuts.len() - 1;
    cuts[1..k].partition_point(|&c| c <= v)
}
