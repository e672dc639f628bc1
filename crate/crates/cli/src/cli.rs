use std::io::BufRead;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tileprobe::workload::replay::gnuplot_columns;
use tileprobe::workload::{
    gen_dataset, gen_trace, replay, DatasetSpec, Distribution, QueryCost, ReplayConfig, ReplayMode,
    TraceParams,
};
use tileprobe::{
    scan_init, AggregateFunction, AggregateRequest, BadRowPolicy, IndexConfig, ScanOptions,
    ScoreParams, TileIndex,
};

use crate::service::{router, AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(
    name = "tileprobe",
    version,
    about = "Adaptive tile index with approximate window aggregates over CSV files"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic CSV dataset.
    GenData(GenDataArgs),
    /// Replay a shifted-window exploration trace and write reports.
    Replay(ReplayArgs),
    /// Serve the HTTP/JSON API (and a static UI bundle) over one dataset.
    Serve(ServeArgs),
    /// Print gnuplot columns (rows read, elapsed ms per query) from report CSVs.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 100_000)]
    pub rows: u64,
    /// Total numeric columns, including the two axes.
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// uniform, gaussian or zipf
    #[arg(long, default_value = "uniform")]
    pub dist: Distribution,
    #[arg(long)]
    pub out: PathBuf,
}

/// Dataset and index options shared by `replay` and `serve`.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub file: PathBuf,
    /// Axis columns as `x,y`.
    #[arg(long, default_value = "0,1", value_parser = parse_axes)]
    pub axes: (usize, usize),
    /// Tracked columns, comma-separated (default: every non-axis column).
    #[arg(long, value_delimiter = ',')]
    pub tracked: Option<Vec<usize>>,
    #[arg(long, default_value_t = ',')]
    pub delimiter: char,
    /// The file has no header line.
    #[arg(long)]
    pub no_header: bool,
    /// Skip malformed rows instead of failing.
    #[arg(long)]
    pub skip_bad_rows: bool,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long, default_value_t = 2)]
    pub split_factor: usize,
    #[arg(long, default_value_t = 8)]
    pub max_depth: u32,
    #[arg(long, default_value_t = 256)]
    pub min_split: u64,
    /// Score weight of interval width against object count.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Exact,
    Approx,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "exact")]
    pub mode: ModeArg,
    /// Accuracy constraint for approx mode.
    #[arg(long, default_value_t = 0.05, allow_negative_numbers = true, value_parser = parse_phi)]
    pub phi: f64,
    #[arg(long, default_value_t = 50)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Objects in the first window (default: min(10000, rows / 10)).
    #[arg(long)]
    pub target: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    pub shift_min: f64,
    #[arg(long, default_value_t = 0.2)]
    pub shift_max: f64,
    /// Aggregates, e.g. `sum:2,mean:3,count` (default: sum of the first tracked column).
    #[arg(long, value_delimiter = ',')]
    pub agg: Option<Vec<AggregateRequest>>,
    /// Output prefix; writes `<prefix>.csv` and `<prefix>.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Compare every answer with a full scan and fail on bound violations.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, env = "TILEPROBE_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Answer 409 to a mutating query while another one runs, instead of queueing it.
    #[arg(long)]
    pub no_queue: bool,
    /// Directory with the built UI bundle, served at `/`.
    #[arg(long, default_value = "ui/dist")]
    pub static_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Report CSVs written by `replay`; series are named after the file stem.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

fn parse_axes(s: &str) -> std::result::Result<(usize, usize), String> {
    match s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
    {
        Ok(v) if v.len() == 2 => Ok((v[0], v[1])),
        Ok(_) => Err("expected two column indexes, e.g. 0,1".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_phi(s: &str) -> std::result::Result<f64, String> {
    let phi: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if phi.is_nan() || phi < 0.0 {
        return Err(format!("phi must be a non-negative number, got {s}"));
    }
    Ok(phi)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Replay(a) => run_replay(a),
        Command::Serve(a) => serve(a),
        Command::Plot(a) => plot(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let spec = DatasetSpec {
        seed: a.seed,
        rows: a.rows,
        numeric_cols: a.cols,
        distribution: a.dist,
        ..DatasetSpec::default()
    };
    gen_dataset(&spec, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    log::info!(
        "wrote {} rows x {} columns to {}",
        a.rows,
        a.cols,
        a.out.display()
    );
    Ok(())
}

fn delimiter(d: &DataArgs) -> Result<u8> {
    if !d.delimiter.is_ascii() {
        bail!("delimiter must be a single ASCII character");
    }
    Ok(d.delimiter as u8)
}

/// Number of fields on the first non-empty line.
fn column_count(path: &Path, delimiter: u8) -> Result<usize> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    for line in std::io::BufReader::new(f).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            return Ok(line.split(delimiter as char).count());
        }
    }
    Ok(0)
}

impl DataArgs {
    pub fn scan_options(&self) -> Result<ScanOptions> {
        let delim = delimiter(self)?;
        let tracked = match &self.tracked {
            Some(t) => t.clone(),
            None => (0..column_count(&self.file, delim)?)
                .filter(|&c| c != self.axes.0 && c != self.axes.1)
                .collect(),
        };
        let mut opts = ScanOptions::new(self.axes.0, self.axes.1, tracked);
        opts.delimiter = delim;
        opts.has_header = !self.no_header;
        if self.skip_bad_rows {
            opts.on_bad_row = BadRowPolicy::Skip;
        }
        Ok(opts)
    }

    pub fn index_config(&self) -> IndexConfig {
        IndexConfig {
            initial_grid: self.grid,
            split_factor: self.split_factor,
            max_depth: self.max_depth,
            min_split_count: self.min_split,
        }
    }

    pub fn score(&self) -> ScoreParams {
        ScoreParams {
            alpha: self.alpha,
            ..ScoreParams::default()
        }
    }

    pub fn build_index(&self) -> Result<TileIndex> {
        let scan = scan_init(&self.file, &self.scan_options()?)?;
        Ok(TileIndex::initialize(scan, self.index_config())?)
    }
}

fn run_replay(a: ReplayArgs) -> Result<()> {
    let index = a.data.build_index()?;
    let rows = index.object_count();
    let requests = match a.agg.clone() {
        Some(r) => r,
        None => {
            let first = *index
                .descriptor()
                .tracked_attributes
                .first()
                .context("no tracked attributes")?;
            vec![AggregateRequest::new(AggregateFunction::Sum, first)]
        }
    };
    let target = a.target.unwrap_or_else(|| (rows / 10).clamp(1, 10_000));
    let params = TraceParams {
        n_queries: a.queries,
        shift_min_frac: a.shift_min,
        shift_max_frac: a.shift_max,
        target_count: target,
        requests,
    };
    let trace = gen_trace(&index, a.seed, &params)?;
    drop(index);

    let mut config = ReplayConfig::new(a.data.scan_options()?);
    config.index = a.data.index_config();
    config.score = a.data.score();
    config.with_oracle = a.verify;
    let mode = match a.mode {
        ModeArg::Exact => ReplayMode::Exact,
        ModeArg::Approx => ReplayMode::Approx { phi: a.phi },
    };
    let report = replay(&a.data.file, &config, &trace, mode)?;

    if let Some(prefix) = &a.report {
        let csv = prefix.with_extension("csv");
        let json = prefix.with_extension("json");
        report.write_csv(&csv)?;
        report.write_json(&json)?;
        log::info!("wrote {} and {}", csv.display(), json.display());
    }
    let t = &report.totals;
    println!(
        "mode={} queries={} rows_read={} tiles_split={} elapsed_ms={:.1} max_reported_bound={}{}",
        mode.name(),
        t.queries,
        t.rows_read,
        t.tiles_split,
        t.elapsed_us as f64 / 1000.0,
        t.max_reported_bound,
        match t.max_actual_error {
            Some(e) => format!(
                " max_actual_error={e} bound_violations={}",
                t.bound_violations
            ),
            None => String::new(),
        }
    );
    if !report.audit.is_ok() {
        bail!("index audit failed: {:?}", report.audit.violations);
    }
    if a.verify && t.bound_violations > 0 {
        bail!("{} answers exceed their reported bound", t.bound_violations);
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let index = a.data.build_index()?;
    let static_dir = a.static_dir.is_dir().then(|| a.static_dir.clone());
    if static_dir.is_none() {
        log::warn!(
            "static directory {} not found; serving the API only",
            a.static_dir.display()
        );
    }
    let state = AppState::new(
        index,
        ServiceConfig {
            queue_mutations: !a.no_queue,
            static_dir,
            score: a.data.score(),
        },
    );
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

/// Per-query costs from a report CSV (first line of each query).
pub fn read_costs(path: &Path) -> Result<Vec<QueryCost>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("{} has no {name} column", path.display()))
    };
    let (qi, rr, ts, el) = (
        col("query_idx")?,
        col("rows_read")?,
        col("tiles_split")?,
        col("elapsed_us")?,
    );
    let mut costs: Vec<QueryCost> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let query_idx: usize = rec[qi].parse()?;
        if costs.last().is_some_and(|c| c.query_idx == query_idx) {
            continue;
        }
        costs.push(QueryCost {
            query_idx,
            rows_read: rec[rr].parse()?,
            tiles_split: rec[ts].parse()?,
            elapsed_us: rec[el].parse()?,
        });
    }
    Ok(costs)
}

fn plot(a: PlotArgs) -> Result<()> {
    let mut series = Vec::new();
    for p in &a.reports {
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().replace(char::is_whitespace, "_"))
            .unwrap_or_else(|| "series".into());
        series.push((name, read_costs(p)?));
    }
    let refs: Vec<(&str, &[QueryCost])> = series
        .iter()
        .map(|(n, c)| (n.as_str(), c.as_slice()))
        .collect();
    print!("{}", gnuplot_columns(&refs));
    Ok(())
}
