use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Zipf};
use serde::Serialize;

use crate::error::{Error, Result};

/// Distribution of the non-axis columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    #[default]
    Uniform,
    Gaussian,
    /// Values concentrate around a few cluster centers whose popularity
    /// follows a Zipf law.
    ZipfClustered,
}

impl std::str::FromStr for Distribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "gaussian" | "normal" => Ok(Self::Gaussian),
            "zipf" | "zipf-clustered" => Ok(Self::ZipfClustered),
            other => Err(format!("unknown distribution {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSpec {
    pub seed: u64,
    pub rows: u64,
    /// Total columns; the first two are the axes.
    pub numeric_cols: usize,
    pub distribution: Distribution,
    /// Axis values are uniform over `[axis_min, axis_max)` on both axes.
    pub axis_min: f64,
    pub axis_max: f64,
    /// Center and spread of the value columns (uniform uses
    /// `[mean - 3 sd, mean + 3 sd)`).
    pub value_mean: f64,
    pub value_sd: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            rows: 10_000,
            numeric_cols: 6,
            distribution: Distribution::Uniform,
            axis_min: 0.0,
            axis_max: 1000.0,
            value_mean: 100.0,
            value_sd: 15.0,
        }
    }
}

const CLUSTERS: usize = 8;

enum ValueSampler {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Gaussian(Normal<f64>),
    Clustered {
        rank: Zipf<f64>,
        centers: Vec<f64>,
        noise: Normal<f64>,
    },
}

impl ValueSampler {
    fn new(spec: &DatasetSpec) -> Result<Self> {
        let bad = |e: rand_distr::NormalError| Error::InvalidConfig(e.to_string());
        Ok(match spec.distribution {
            Distribution::Uniform => Self::Uniform {
                lo: spec.value_mean - 3.0 * spec.value_sd,
                hi: spec.value_mean + 3.0 * spec.value_sd,
            },
            Distribution::Gaussian => {
                Self::Gaussian(Normal::new(spec.value_mean, spec.value_sd).map_err(bad)?)
            }
            Distribution::ZipfClustered => Self::Clustered {
                rank: Zipf::new(CLUSTERS as f64, 1.2)
                    .map_err(|e| Error::InvalidConfig(e.to_string()))?,
                centers: (0..CLUSTERS)
                    .map(|i| spec.value_mean + spec.value_sd * (i as f64 - 3.5))
                    .collect(),
                noise: Normal::new(0.0, spec.value_sd / 10.0).map_err(bad)?,
            },
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Self::Uniform { lo, hi } => rng.random_range(*lo..*hi),
            Self::Gaussian(n) => n.sample(rng),
            Self::Clustered {
                rank,
                centers,
                noise,
            } => {
                let r = rank.sample(rng) as usize - 1;
                centers[r.min(CLUSTERS - 1)] + noise.sample(rng)
            }
        }
    }
}

/// Writes a deterministic synthetic CSV with header `c0,c1,...`.
pub fn gen_dataset(spec: &DatasetSpec, path: impl AsRef<Path>) -> Result<()> {
    if spec.numeric_cols < 3 {
        return Err(Error::InvalidConfig(
            "need at least 3 columns (two axes + one value)".into(),
        ));
    }
    if !spec.axis_min.is_finite() || !spec.axis_max.is_finite() || spec.axis_min >= spec.axis_max {
        return Err(Error::InvalidConfig(
            "axis_min must be below axis_max".into(),
        ));
    }
    let sampler = ValueSampler::new(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = BufWriter::with_capacity(1 << 20, File::create(path)?);

    let header: Vec<String> = (0..spec.numeric_cols).map(|i| format!("c{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for _ in 0..spec.rows {
        let x = rng.random_range(spec.axis_min..spec.axis_max);
        let y = rng.random_range(spec.axis_min..spec.axis_max);
        write!(out, "{x:.4},{y:.4}")?;
        for _ in 2..spec.numeric_cols {
            write!(out, ",{:.3}", sampler.sample(&mut rng))?;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
