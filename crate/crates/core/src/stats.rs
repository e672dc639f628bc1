//! Per-tile aggregate metadata.

use serde::Serialize;

/// Double-word accumulator built on TwoSum/TwoProduct.
///
/// Sums stay accurate to roughly 2^-106 relative, so combining per-tile sums
/// in any order rounds to the same double as a direct scan of the rows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WideSum {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bp = s - a;
    (s, (a - (s - bp)) + (b - bp))
}

impl WideSum {
    pub fn from_value(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        let lo = self.lo + e;
        self.hi = s + lo;
        self.lo = lo - (self.hi - s);
    }

    /// Adds `a * b` without rounding the product first.
    #[inline]
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        self.add(e);
    }

    pub fn merge(&mut self, other: &WideSum) {
        self.add(other.hi);
        self.add(other.lo);
    }

    pub fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// count/sum/min/max of one tracked attribute over a set of objects.
/// An empty set is represented by the absence of an `AggStats`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggStats {
    pub count: u64,
    sum: WideSum,
    pub min: f64,
    pub max: f64,
}

impl AggStats {
    pub fn from_value(v: f64) -> Self {
        Self {
            count: 1,
            sum: WideSum::from_value(v),
            min: v,
            max: v,
        }
    }

    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum.add(v);
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    pub fn merge(&mut self, other: &AggStats) {
        self.count += other.count;
        self.sum.merge(&other.sum);
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn sum(&self) -> f64 {
        self.sum.value()
    }

    pub fn wide_sum(&self) -> &WideSum {
        &self.sum
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.count as f64
    }
}

pub(crate) fn push_value(slot: &mut Option<AggStats>, v: f64) {
    match slot {
        Some(s) => s.push(v),
        None => *slot = Some(AggStats::from_value(v)),
    }
}

pub(crate) fn merge_into(slot: &mut Option<AggStats>, other: Option<&AggStats>) {
    match (slot.as_mut(), other) {
        (_, None) => {}
        (Some(s), Some(o)) => s.merge(o),
        (None, Some(o)) => *slot = Some(*o),
    }
}

/// Serializable view of [`AggStats`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatsView {
    pub count: u64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
}

impl From<&AggStats> for StatsView {
    fn from(s: &AggStats) -> Self {
        Self {
            count: s.count,
            sum: s.sum(),
            min: s.min,
            max: s.max,
        }
    }
}
