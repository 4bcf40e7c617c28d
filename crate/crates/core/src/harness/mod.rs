//! Run configuration, method dispatch, CSV output and experiments.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod plot;
pub mod validate;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::drift::{DriftKind, DriftSpec};
use crate::error::{Error, Result};
use crate::estimate::{DensityEstimate, EstimateFlag, Method};
use crate::flow::{self, FlowConfig};
use crate::mc_exit::{self, PathConfig};
use crate::oracle;
use crate::pde::{self, RotatedGrid};
use crate::series::{self, SeriesConfig};

/// Column order of every density CSV.
pub const CSV_HEADER: [&str; 11] = [
    "method",
    "drift",
    "t",
    "x",
    "estimate",
    "stat_error",
    "det_bound",
    "flag",
    "seed",
    "config_digest",
    "runtime_ms",
];

/// First 16 hex digits of SHA-256 over the sorted `key=value` lines.
pub fn digest_pairs(pairs: &[(&str, String)]) -> String {
    let mut lines: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    lines.sort();
    let hash = Sha256::digest(lines.join("\n").as_bytes());
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Everything that determines a density run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub drift: String,
    pub t: f64,
    pub x: f64,
    pub seed: u64,
    /// Series truncation tolerance.
    pub tol: f64,
    pub nmax: usize,
    /// Series Monte Carlo samples per term.
    pub samples: u64,
    pub h: f64,
    pub umax: Option<f64>,
    pub vpad: Option<f64>,
    pub delta: Option<f64>,
    pub paths: u64,
    pub dt: f64,
    pub richardson: bool,
    pub bridge: bool,
    pub half_width: f64,
    pub spacing: f64,
    pub runs: u64,
    pub bins: usize,
    pub window: Option<(f64, f64)>,
}

/// Keys read by [`RunConfig::from_map`].
pub const RUN_KEYS: [&str; 21] = [
    "method", "drift", "t", "x", "seed", "tol", "nmax", "samples", "h", "umax", "vpad", "delta", "paths", "dt",
    "richardson", "bridge", "U", "spacing", "runs", "bins", "window",
];

/// Keys that steer output or experiments but not a single density run.
pub const OTHER_KEYS: [&str; 13] = [
    "output", "workers", "timing", "dump-field", "export-points", "methods", "plot", "mode", "n-list", "n-pass",
    "gaps", "u", "v",
];

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'"))))
        .transpose()
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("window must be lo:hi, got '{s}'")))?;
    let lo: f64 = a.trim().parse().map_err(|_| Error::Config(format!("bad window '{s}'")))?;
    let hi: f64 = b.trim().parse().map_err(|_| Error::Config(format!("bad window '{s}'")))?;
    Ok((lo, hi))
}

impl RunConfig {
    pub fn new(method: Method, drift: &str, t: f64, x: f64) -> Self {
        Self {
            method,
            drift: drift.to_string(),
            t,
            x,
            seed: 0,
            tol: 1e-6,
            nmax: 4,
            samples: 1_000_000,
            h: 0.02,
            umax: None,
            vpad: None,
            delta: None,
            paths: 100_000,
            dt: 1e-3,
            richardson: false,
            bridge: true,
            half_width: 30.0,
            spacing: 0.01,
            runs: 200,
            bins: 1,
            window: None,
        }
    }

    /// Builds a config from `key=value` pairs; `method`, `drift` and `t` are required.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !RUN_KEYS.contains(&k.as_str()) && !OTHER_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key '{k}'")));
        }
        let method: Method = get(map, "method")?.ok_or_else(|| Error::Config("missing 'method'".into()))?;
        let drift = map.get("drift").ok_or_else(|| Error::Config("missing 'drift'".into()))?;
        let t: f64 = get(map, "t")?.ok_or_else(|| Error::Config("missing 't'".into()))?;
        let mut c = Self::new(method, drift, t, get(map, "x")?.unwrap_or(0.0));
        macro_rules! set {
            ($field:ident, $key:expr) => {
                if let Some(v) = get(map, $key)? {
                    c.$field = v;
                }
            };
        }
        set!(seed, "seed");
        set!(tol, "tol");
        set!(nmax, "nmax");
        set!(samples, "samples");
        set!(h, "h");
        set!(paths, "paths");
        set!(dt, "dt");
        set!(richardson, "richardson");
        set!(bridge, "bridge");
        set!(half_width, "U");
        set!(spacing, "spacing");
        set!(runs, "runs");
        set!(bins, "bins");
        c.umax = get(map, "umax")?;
        c.vpad = get(map, "vpad")?;
        c.delta = get(map, "delta")?;
        c.window = map.get("window").map(|w| parse_window(w)).transpose()?;
        Ok(c)
    }

    /// Canonical map; `from_map(to_map())` reproduces the config.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("method", self.method.to_string());
        put("drift", self.drift.clone());
        put("t", self.t.to_string());
        put("x", self.x.to_string());
        put("seed", self.seed.to_string());
        put("tol", self.tol.to_string());
        put("nmax", self.nmax.to_string());
        put("samples", self.samples.to_string());
        put("h", self.h.to_string());
        put("paths", self.paths.to_string());
        put("dt", self.dt.to_string());
        put("richardson", self.richardson.to_string());
        put("bridge", self.bridge.to_string());
        put("U", self.half_width.to_string());
        put("spacing", self.spacing.to_string());
        put("runs", self.runs.to_string());
        put("bins", self.bins.to_string());
        if let Some(v) = self.umax {
            put("umax", v.to_string());
        }
        if let Some(v) = self.vpad {
            put("vpad", v.to_string());
        }
        if let Some(v) = self.delta {
            put("delta", v.to_string());
        }
        if let Some((a, b)) = self.window {
            put("window", format!("{a}:{b}"));
        }
        m
    }

    pub fn to_config_string(&self) -> String {
        config::render(&self.to_map())
    }

    pub fn digest(&self) -> String {
        let map = self.to_map();
        let pairs: Vec<(&str, String)> = map.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        digest_pairs(&pairs)
    }

    pub fn drift_spec(&self) -> Result<DriftSpec> {
        self.drift.parse()
    }

    pub fn series_config(&self) -> SeriesConfig {
        SeriesConfig { n_max: self.nmax, samples: self.samples, seed: self.seed, ..SeriesConfig::default() }
    }

    pub fn path_config(&self) -> PathConfig {
        PathConfig { n_paths: self.paths, dt: self.dt, bridge_correction: self.bridge, seed: self.seed }
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            half_width: self.half_width,
            spacing: self.spacing,
            dt: self.dt,
            t: self.t,
            n_runs: self.runs,
            seed: self.seed,
            eval_margin: None,
            bridge_merge: self.bridge,
        }
    }

    /// PDE grid around x, honouring `umax` and `vpad` overrides.
    pub fn grid(&self, d: &DriftSpec, x_lo: f64, x_hi: f64) -> Result<RotatedGrid> {
        let mut g = RotatedGrid::for_window(x_lo, x_hi, self.t, d, self.h)?;
        let h = self.h;
        if let Some(u) = self.umax {
            g.u_max = (u / h).ceil().max(8.0) * h;
        }
        if let Some(pad) = self.vpad {
            g.v_min = ((std::f64::consts::SQRT_2 * x_lo - pad) / h).floor() * h;
            let span = std::f64::consts::SQRT_2 * x_hi + pad - g.v_min;
            g.v_max = g.v_min + (span / h).ceil().max(8.0) * h;
        }
        Ok(g)
    }
}

/// Optional side outputs of a density run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Exports<'a> {
    /// Final PDE field as `u,v,W` CSV.
    pub field: Option<&'a Path>,
    /// Flow point process as `run_id,position,mass` CSV.
    pub points: Option<&'a Path>,
}

/// Positions at which a run reports, and the estimates there.
pub fn estimate(cfg: &RunConfig) -> Result<Vec<(f64, DensityEstimate)>> {
    estimate_with(cfg, Exports::default())
}

pub fn estimate_with(cfg: &RunConfig, exports: Exports<'_>) -> Result<Vec<(f64, DensityEstimate)>> {
    if exports.field.is_some() && cfg.method != Method::Pde {
        return Err(Error::Config("dump-field needs method=pde".into()));
    }
    if exports.points.is_some() && cfg.method != Method::Flow {
        return Err(Error::Config("export-points needs method=flow".into()));
    }
    let d = cfg.drift_spec()?;
    let out = match cfg.method {
        Method::Oracle => {
            let form = match d.kind {
                DriftKind::Zero => oracle::ClosedFormDensity::ZeroDrift,
                DriftKind::Linear { c } if c == 0.0 => oracle::ClosedFormDensity::ZeroDrift,
                DriftKind::Linear { c } => oracle::ClosedFormDensity::LinearDrift { c },
                _ => return Err(Error::Config(format!("no closed-form density for drift '{d}'"))),
            };
            vec![(cfg.x, DensityEstimate::exact(form.value(cfg.t)?, Method::Oracle))]
        }
        Method::Series => {
            vec![(cfg.x, series::density_series(cfg.x, cfg.t, &d, cfg.tol, &cfg.series_config())?)]
        }
        Method::Pde => {
            let grid = cfg.grid(&d, cfg.x, cfg.x)?;
            let field = pde::solve(&d, cfg.t, &grid)?;
            if let Some(path) = exports.field {
                field.write_csv(path)?;
            }
            vec![(cfg.x, pde::density_from_field(&field, cfg.x)?)]
        }
        Method::Mc => {
            let delta = cfg.delta.unwrap_or_else(|| mc_exit::default_delta(cfg.t));
            vec![(cfg.x, mc_exit::density_mc(cfg.x, cfg.t, delta, &d, &cfg.path_config(), cfg.richardson)?)]
        }
        Method::Flow => {
            let fc = cfg.flow_config();
            let runs = flow::simulate_runs(&d, &fc)?;
            if let Some(path) = exports.points {
                runs.write_csv(path)?;
            }
            let window = cfg.window.unwrap_or_else(|| fc.safe_window(&d));
            flow::empirical_density(&runs, window, cfg.bins)?
                .into_iter()
                .map(|b| (0.5 * (b.lo + b.hi), b.estimate))
                .collect()
        }
    };
    let digest = cfg.digest();
    Ok(out
        .into_iter()
        .map(|(x, e)| {
            let seed = match cfg.method {
                Method::Oracle | Method::Pde => None,
                _ => Some(cfg.seed),
            };
            (x, DensityEstimate { config_digest: digest.clone(), seed, ..e })
        })
        .collect())
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub method: Method,
    pub drift: String,
    pub t: f64,
    pub x: f64,
    pub estimate: DensityEstimate,
    pub runtime_ms: Option<f64>,
}

impl CsvRow {
    pub fn fields(&self) -> [String; 11] {
        let e = &self.estimate;
        [
            self.method.to_string(),
            self.drift.clone(),
            self.t.to_string(),
            self.x.to_string(),
            e.value.to_string(),
            e.stat_error.to_string(),
            e.det_bound.to_string(),
            e.flag.as_str().to_string(),
            e.seed.map(|s| s.to_string()).unwrap_or_default(),
            e.config_digest.clone(),
            self.runtime_ms.map(|r| format!("{r:.3}")).unwrap_or_default(),
        ]
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[CsvRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

/// Runs one density configuration. Wall-clock time is recorded only when
/// `timing` is set, so default output is byte-reproducible.
pub fn run_density(cfg: &RunConfig, timing: bool) -> Result<Vec<CsvRow>> {
    run_density_with(cfg, timing, Exports::default())
}

pub fn run_density_with(cfg: &RunConfig, timing: bool, exports: Exports<'_>) -> Result<Vec<CsvRow>> {
    let start = Instant::now();
    let estimates = estimate_with(cfg, exports)?;
    let elapsed = timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    let drift = cfg.drift_spec()?.to_string();
    Ok(estimates
        .into_iter()
        .map(|(x, estimate)| CsvRow { method: cfg.method, drift: drift.clone(), t: cfg.t, x, estimate, runtime_ms: elapsed })
        .collect())
}

/// Process exit code for a set of rows: 2 if any tolerance was not met.
pub fn exit_code(rows: &[CsvRow]) -> i32 {
    if rows.iter().any(|r| r.estimate.flag == EstimateFlag::ToleranceNotMet) {
        2
    } else {
        0
    }
}

/// Relative accuracy each method is held to on top of its reported errors.
pub fn relative_tolerance(m: Method) -> f64 {
    match m {
        Method::Oracle | Method::Series => 0.0,
        Method::Pde => 0.01,
        Method::Mc => 0.02,
        Method::Flow => 0.05,
    }
}

/// Deterministic allowance of an estimate: det_bound plus the method's relative tolerance.
pub fn deterministic_budget(e: &DensityEstimate) -> f64 {
    e.det_bound + relative_tolerance(e.method) * e.value.abs()
}

/// Allowed |a − b| between two estimates.
pub fn pair_budget(a: &DensityEstimate, b: &DensityEstimate) -> f64 {
    deterministic_budget(a) + deterministic_budget(b) + 3.0 * a.stat_error.hypot(b.stat_error)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairCheck {
    pub a: Method,
    pub b: Method,
    pub discrepancy: f64,
    pub budget: f64,
}

impl PairCheck {
    pub fn ok(&self) -> bool {
        self.discrepancy <= self.budget
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<CsvRow>,
    pub pairs: Vec<PairCheck>,
}

impl ComparisonTable {
    pub fn all_ok(&self) -> bool {
        self.pairs.iter().all(PairCheck::ok)
    }

    /// `a,b,discrepancy,budget,ok` rows.
    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("a,b,discrepancy,budget,ok\n");
        for p in &self.pairs {
            s.push_str(&format!("{},{},{},{},{}\n", p.a, p.b, p.discrepancy, p.budget, p.ok()));
        }
        s
    }
}

/// Runs every method on the same drift and point and checks all pairs.
///
/// Flow contributes its whole-window estimate.
pub fn compare_methods(base: &RunConfig, methods: &[Method]) -> Result<ComparisonTable> {
    let mut rows = Vec::new();
    for &m in methods {
        let cfg = RunConfig { method: m, bins: 1, ..base.clone() };
        let mut r = run_density(&cfg, false)?;
        if m == Method::Flow {
            r.truncate(1);
            r[0].x = base.x;
        }
        rows.extend(r);
    }
    let mut pairs = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let (a, b) = (&rows[i].estimate, &rows[j].estimate);
            pairs.push(PairCheck {
                a: rows[i].method,
                b: rows[j].method,
                discrepancy: (a.value - b.value).abs(),
                budget: pair_budget(a, b),
            });
        }
    }
    Ok(ComparisonTable { rows, pairs })
}
