use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::index::TileIndex;
use crate::query::AggregateRequest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceParams {
    pub n_queries: usize,
    pub shift_min_frac: f64,
    pub shift_max_frac: f64,
    /// Desired number of objects in the first window (matched within ±20%
    /// when the data allows it).
    pub target_count: u64,
    pub requests: Vec<AggregateRequest>,
}

impl TraceParams {
    fn validate(&self) -> Result<()> {
        if self.n_queries == 0 {
            return Err(Error::InvalidConfig("n_queries must be >= 1".into()));
        }
        if !(0.0 <= self.shift_min_frac
            && self.shift_min_frac <= self.shift_max_frac
            && self.shift_max_frac < 1.0)
        {
            return Err(Error::InvalidConfig(format!(
                "shift fractions must satisfy 0 <= min <= max < 1, got [{}, {}]",
                self.shift_min_frac, self.shift_max_frac
            )));
        }
        if self.target_count == 0 {
            return Err(Error::InvalidConfig("target_count must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceQuery {
    pub rect: Rect,
    pub requests: Vec<AggregateRequest>,
}

/// A map-style exploration path: one window, then repeated translations of
/// it by 10–20% (by default) of its size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplorationTrace {
    pub queries: Vec<TraceQuery>,
    pub seed: u64,
    pub params: TraceParams,
}

const DIRECTIONS: [(f64, f64); 8] = [
    (-1.0, 0.0),
    (1.0, 0.0),
    (0.0, -1.0),
    (0.0, 1.0),
    (-1.0, -1.0),
    (-1.0, 1.0),
    (1.0, -1.0),
    (1.0, 1.0),
];

fn centered(domain: &Rect, cx: f64, cy: f64, scale: f64) -> Rect {
    let hw = domain.width() * scale / 2.0;
    let hh = domain.height() * scale / 2.0;
    Rect {
        x_min: (cx - hw).max(domain.x_min),
        x_max: (cx + hw).min(domain.x_max),
        y_min: (cy - hh).max(domain.y_min),
        y_max: (cy + hh).min(domain.y_max),
    }
}

/// Moves `r` back inside `domain` without resizing it (up to rounding).
fn clamp_into(r: Rect, domain: &Rect) -> Rect {
    let fit = |lo: f64, hi: f64, dlo: f64, dhi: f64| {
        let len = hi - lo;
        if lo < dlo {
            (dlo, (dlo + len).min(dhi))
        } else if hi > dhi {
            ((dhi - len).max(dlo), dhi)
        } else {
            (lo, hi)
        }
    };
    let (x_min, x_max) = fit(r.x_min, r.x_max, domain.x_min, domain.x_max);
    let (y_min, y_max) = fit(r.y_min, r.y_max, domain.y_min, domain.y_max);
    Rect {
        x_min,
        x_max,
        y_min,
        y_max,
    }
}

/// Generates an exploration trace over the index's domain. Window sizing
/// uses in-memory counts only.
pub fn gen_trace(index: &TileIndex, seed: u64, params: &TraceParams) -> Result<ExplorationTrace> {
    params.validate()?;
    let rows = index.object_count();
    if params.target_count > rows {
        return Err(Error::TargetUnreachable {
            target: params.target_count,
            rows,
        });
    }
    let domain = index.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cx = domain.x_min + domain.width() * rng.random_range(0.0..1.0);
    let cy = domain.y_min + domain.height() * rng.random_range(0.0..1.0);

    // count is monotone in the scale for a fixed center
    let target = params.target_count as f64;
    let (mut lo, mut hi) = (0.0f64, 2.0f64);
    let mut best = (f64::INFINITY, centered(&domain, cx, cy, hi));
    for _ in 0..48 {
        let mid = (lo + hi) / 2.0;
        let rect = centered(&domain, cx, cy, mid);
        let count = index.window_count(&rect) as f64;
        let miss = (count - target).abs();
        if miss < best.0 {
            best = (miss, rect);
        }
        if count < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut rect = best.1;

    let mut queries = Vec::with_capacity(params.n_queries);
    queries.push(TraceQuery {
        rect,
        requests: params.requests.clone(),
    });
    for _ in 1..params.n_queries {
        let (dx, dy) = DIRECTIONS[rng.random_range(0..DIRECTIONS.len())];
        let fx = rng.random_range(params.shift_min_frac..=params.shift_max_frac);
        let fy = rng.random_range(params.shift_min_frac..=params.shift_max_frac);
        let (w, h) = (rect.width(), rect.height());
        rect = clamp_into(
            Rect {
                x_min: rect.x_min + dx * fx * w,
                x_max: rect.x_max + dx * fx * w,
                y_min: rect.y_min + dy * fy * h,
                y_max: rect.y_max + dy * fy * h,
            },
            &domain,
        );
        queries.push(TraceQuery {
            rect,
            requests: params.requests.clone(),
        });
    }
    Ok(ExplorationTrace {
        queries,
        seed,
        params: params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_keeps_size() {
        let domain = Rect::new(0.0, 10.0, 0.0, 10.0).unwrap();
        let r = clamp_into(Rect::new(-2.0, 3.0, 8.0, 12.0).unwrap(), &domain);
        assert_eq!(r, Rect::new(0.0, 5.0, 6.0, 10.0).unwrap());
    }
}
