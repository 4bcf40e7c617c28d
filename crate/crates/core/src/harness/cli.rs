//! Command-line front end of the `arratia` binary.
//!
//! Every flag has a config-file twin with the same name (`--dump-field` ↔
//! `dump-field=`); flags given on the command line override the file.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::estimate::{EstimateFlag, Method};
use crate::harness::experiment::{self, ConvergenceMode};
use crate::harness::{self, config, plot, validate, Exports, RunConfig};
use crate::rng;

#[derive(Debug, Parser)]
#[command(name = "arratia", version, about = "One-point densities of Arratia flows with drift")]
pub struct Cli {
    /// key=value configuration file; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// worker threads (results do not depend on it)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate p_t(x) with one method and print a CSV row
    Density(DensityArgs),
    /// Run several methods on the same problem and check them pairwise
    Compare(CompareArgs),
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    #[command(subcommand)]
    Validate(ValidateCommand),
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Densities along a drift sequence aₙ → a₀
    Converge(ConvergeArgs),
    /// Occupation probability under a against non-meeting under −a
    Duality(DualityArgs),
    /// Non-meeting probability against the initial gap
    Coalescence(CoalescenceArgs),
}

#[derive(Debug, Subcommand)]
pub enum ValidateCommand {
    /// Kernel identities and bounds
    Kernels {
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// series | pde | mc | flow | oracle
    #[arg(long)]
    pub method: Option<String>,
    /// drift spec, e.g. zero, const:k=1, tanh:k=0.5,lam=1, step:h=0.5,lo=-1,hi=1, mollify(<spec>,n=8)
    #[arg(long, allow_hyphen_values = true)]
    pub drift: Option<String>,
    /// time horizon
    #[arg(long)]
    pub t: Option<String>,
    /// evaluation point (default 0)
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// master seed (falls back to ARRATIA_SEED, then 0)
    #[arg(long)]
    pub seed: Option<String>,
    /// series: target for the certified truncation tail
    #[arg(long)]
    pub tol: Option<String>,
    /// series: highest term index
    #[arg(long)]
    pub nmax: Option<String>,
    /// series: Monte Carlo samples per term
    #[arg(long)]
    pub samples: Option<String>,
    /// pde: grid step
    #[arg(long)]
    pub h: Option<String>,
    /// pde: override the grid extent in u
    #[arg(long)]
    pub umax: Option<String>,
    /// pde: override the padding in v
    #[arg(long)]
    pub vpad: Option<String>,
    /// mc: offset of the second particle (default 0.02·√t)
    #[arg(long)]
    pub delta: Option<String>,
    /// mc: number of paths
    #[arg(long)]
    pub paths: Option<String>,
    /// mc and flow: time step
    #[arg(long)]
    pub dt: Option<String>,
    /// mc: extrapolate from delta and delta/2
    #[arg(long)]
    pub richardson: bool,
    /// bridge correction / bridge merging (true | false)
    #[arg(long)]
    pub bridge: Option<String>,
    /// flow: starters cover [-U, U]
    #[arg(long = "U")]
    pub half_width: Option<String>,
    /// flow: distance between starters
    #[arg(long)]
    pub spacing: Option<String>,
    /// flow: independent runs
    #[arg(long)]
    pub runs: Option<String>,
    /// flow: histogram bins over the window
    #[arg(long)]
    pub bins: Option<String>,
    /// flow: evaluation window lo:hi (default: the safe window)
    #[arg(long, allow_hyphen_values = true)]
    pub window: Option<String>,
    /// write the CSV here instead of stdout
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    fn overlay(&self, map: &mut BTreeMap<String, String>) {
        let pairs: [(&str, &Option<String>); 20] = [
            ("method", &self.method),
            ("drift", &self.drift),
            ("t", &self.t),
            ("x", &self.x),
            ("seed", &self.seed),
            ("tol", &self.tol),
            ("nmax", &self.nmax),
            ("samples", &self.samples),
            ("h", &self.h),
            ("umax", &self.umax),
            ("vpad", &self.vpad),
            ("delta", &self.delta),
            ("paths", &self.paths),
            ("dt", &self.dt),
            ("bridge", &self.bridge),
            ("U", &self.half_width),
            ("spacing", &self.spacing),
            ("runs", &self.runs),
            ("bins", &self.bins),
            ("window", &self.window),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                map.insert(k.to_string(), v.clone());
            }
        }
        if self.richardson {
            map.insert("richardson".into(), "true".into());
        }
        if let Some(p) = &self.output {
            map.insert("output".into(), p.display().to_string());
        }
    }
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// record wall-clock time in runtime_ms (makes output non-reproducible)
    #[arg(long)]
    pub timing: bool,
    /// write the final PDE field as u,v,W CSV
    #[arg(long = "dump-field")]
    pub dump_field: Option<PathBuf>,
    /// write flow samples as run_id,position,mass CSV
    #[arg(long = "export-points")]
    pub export_points: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// comma-separated methods
    #[arg(long)]
    pub methods: Option<String>,
    /// write <stem>.dat and <stem>.svg
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// l1 | linf
    #[arg(long)]
    pub mode: Option<String>,
    /// comma-separated sequence indices
    #[arg(long = "n-list")]
    pub n_list: Option<String>,
    /// smallest index that must lie within tolerance (default 8)
    #[arg(long = "n-pass")]
    pub n_pass: Option<String>,
    /// write <stem>.dat and <stem>.svg
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DualityArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// left end of the interval
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<String>,
    /// right end of the interval
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<String>,
}

#[derive(Debug, Args)]
pub struct CoalescenceArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// comma-separated initial gaps (default 0.01, 0.02, 0.05 times √t)
    #[arg(long)]
    pub gaps: Option<String>,
}

/// Settings after merging the config file, the command line and `ARRATIA_SEED`.
struct Settings {
    map: BTreeMap<String, String>,
}

impl Settings {
    fn new(file: Option<&Path>, overlay: impl FnOnce(&mut BTreeMap<String, String>)) -> Result<Self> {
        let mut map = match file {
            Some(p) => config::load(p)?,
            None => BTreeMap::new(),
        };
        overlay(&mut map);
        if !map.contains_key("seed") {
            if let Ok(s) = std::env::var("ARRATIA_SEED") {
                map.insert("seed".into(), s.trim().to_string());
            }
        }
        Ok(Self { map })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.map
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("bad value '{v}' for '{key}'"))))
            .transpose()
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config(format!("missing '{key}'")))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.map
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|p| p.trim().parse::<T>().map_err(|_| Error::Config(format!("bad list entry '{p}' in '{key}'"))))
                    .collect()
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.map.get(key).map(PathBuf::from)
    }

    fn run_config(&self) -> Result<RunConfig> {
        RunConfig::from_map(&self.map)
    }

    fn flag(&self, key: &str) -> Result<bool> {
        self.or(key, false)
    }
}

fn emit(settings: &Settings, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match settings.path("output") {
        Some(p) => std::fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code
/// (0 success, 2 tolerance not met, 1 error).
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let file = cli.config.as_deref();
    let settings = match &cli.command {
        Command::Density(a) => Settings::new(file, |m| {
            a.run.overlay(m);
            if a.timing {
                m.insert("timing".into(), "true".into());
            }
            if let Some(p) = &a.dump_field {
                m.insert("dump-field".into(), p.display().to_string());
            }
            if let Some(p) = &a.export_points {
                m.insert("export-points".into(), p.display().to_string());
            }
        })?,
        Command::Compare(a) => Settings::new(file, |m| {
            a.run.overlay(m);
            if let Some(v) = &a.methods {
                m.insert("methods".into(), v.clone());
            }
            if let Some(p) = &a.plot {
                m.insert("plot".into(), p.display().to_string());
            }
        })?,
        Command::Experiment(ExperimentCommand::Converge(a)) => Settings::new(file, |m| {
            a.run.overlay(m);
            for (k, v) in [("mode", &a.mode), ("n-list", &a.n_list), ("n-pass", &a.n_pass)] {
                if let Some(v) = v {
                    m.insert(k.into(), v.clone());
                }
            }
            if let Some(p) = &a.plot {
                m.insert("plot".into(), p.display().to_string());
            }
        })?,
        Command::Experiment(ExperimentCommand::Duality(a)) => Settings::new(file, |m| {
            a.run.overlay(m);
            for (k, v) in [("u", &a.u), ("v", &a.v)] {
                if let Some(v) = v {
                    m.insert(k.into(), v.clone());
                }
            }
        })?,
        Command::Experiment(ExperimentCommand::Coalescence(a)) => Settings::new(file, |m| {
            a.run.overlay(m);
            if let Some(v) = &a.gaps {
                m.insert("gaps".into(), v.clone());
            }
        })?,
        Command::Validate(ValidateCommand::Kernels { seed }) => Settings::new(file, |m| {
            if let Some(s) = seed {
                m.insert("seed".into(), s.to_string());
            }
        })?,
    };
    let workers = match cli.workers {
        Some(w) => Some(w),
        None => settings.get("workers")?,
    };
    // output is buffered so the command can run inside a worker pool
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let result = rng::with_workers(workers, || execute(&cli.command, &settings, &mut out, &mut err));
    stdout.write_all(&out)?;
    stderr.write_all(&err)?;
    result
}

fn execute(command: &Command, s: &Settings, stdout: &mut Vec<u8>, stderr: &mut Vec<u8>) -> Result<i32> {
    match command {
        Command::Density(_) => {
            let cfg = s.run_config()?;
            let field = s.path("dump-field");
            let points = s.path("export-points");
            let exports = Exports { field: field.as_deref(), points: points.as_deref() };
            let rows = harness::run_density_with(&cfg, s.flag("timing")?, exports)?;
            for r in &rows {
                if r.estimate.flag == EstimateFlag::DeltaTooLarge {
                    writeln!(stderr, "warning: delta exceeds 0.1·√t; the O(delta) bias may dominate")?;
                }
                if r.estimate.flag == EstimateFlag::ToleranceNotMet {
                    writeln!(stderr, "warning: tolerance not met (det_bound = {})", r.estimate.det_bound)?;
                }
            }
            emit(s, &harness::csv_string(&rows)?, stdout)?;
            Ok(harness::exit_code(&rows))
        }
        Command::Compare(_) => {
            let mut map = s.map.clone();
            map.entry("method".into()).or_insert_with(|| "oracle".into());
            let base = RunConfig::from_map(&map)?;
            let methods: Vec<Method> = s
                .list("methods")?
                .unwrap_or_else(|| vec![Method::Series, Method::Pde, Method::Mc, Method::Flow]);
            let table = harness::compare_methods(&base, &methods)?;
            emit(s, &harness::csv_string(&table.rows)?, stdout)?;
            write!(stderr, "{}", table.pairs_csv())?;
            if let Some(stem) = s.path("plot") {
                plot::emit_plot_data(&table, &stem)?;
            }
            Ok(if table.all_ok() { 0 } else { 2 })
        }
        Command::Experiment(ExperimentCommand::Converge(_)) => {
            let mut map = s.map.clone();
            map.entry("method".into()).or_insert_with(|| "pde".into());
            let cfg = RunConfig::from_map(&map)?;
            let base: DriftSpec = cfg.drift.parse()?;
            let mode: ConvergenceMode = s.require("mode")?;
            let n_list: Vec<u32> = s.list("n-list")?.unwrap_or_else(|| vec![1, 2, 4, 8, 16]);
            let n_pass: u32 = s.or("n-pass", 8)?;
            let report = experiment::experiment_converge(&base, mode, &n_list, &cfg, n_pass)?;
            emit(s, &report.to_csv(), stdout)?;
            writeln!(
                stderr,
                "reference {} ; all n >= {} within tolerance: {} ; error at largest n <= error at smallest n: {}",
                report.reference.value,
                n_pass,
                report.passed(),
                report.improves()
            )?;
            if let Some(stem) = s.path("plot") {
                plot::emit_plot_data(&report, &stem)?;
            }
            Ok(if report.passed() && report.improves() { 0 } else { 2 })
        }
        Command::Experiment(ExperimentCommand::Duality(_)) => {
            let d: DriftSpec = s.require::<String>("drift")?.parse()?;
            let mut map = s.map.clone();
            map.entry("method".into()).or_insert_with(|| "flow".into());
            let mut cfg = RunConfig::from_map(&map)?.flow_config();
            cfg.half_width = s.or("U", 8.0)?;
            cfg.n_runs = s.or("runs", 10_000)?;
            let u: f64 = s.require("u")?;
            let v: f64 = s.require("v")?;
            let check = experiment::experiment_duality(u, v, &d, &cfg)?;
            emit(s, &experiment::duality_csv(&check), stdout)?;
            let ok = check.discrepancy() <= 3.0 * check.combined_stderr;
            writeln!(
                stderr,
                "|lhs - rhs| = {} ; 3·combined stderr = {} ; {}",
                check.discrepancy(),
                3.0 * check.combined_stderr,
                if ok { "consistent" } else { "inconsistent" }
            )?;
            Ok(if ok { 0 } else { 2 })
        }
        Command::Experiment(ExperimentCommand::Coalescence(_)) => {
            let d: DriftSpec = s.require::<String>("drift")?.parse()?;
            let t: f64 = s.require("t")?;
            let gaps: Vec<f64> = s
                .list("gaps")?
                .unwrap_or_else(|| [0.01, 0.02, 0.05].iter().map(|g| g * t.sqrt()).collect());
            let fit = experiment::experiment_coalescence(
                s.or("x", 0.0)?,
                &gaps,
                t,
                &d,
                s.or("dt", 1e-3)?,
                s.or("runs", 1_000_000)?,
                s.or("seed", 0)?,
            )?;
            emit(s, &experiment::coalescence_csv(&fit), stdout)?;
            let ok = fit.slope.is_finite() && fit.slope > 0.0 && fit.max_relative_residual <= 0.05;
            writeln!(stderr, "slope {} ; max relative residual {}", fit.slope, fit.max_relative_residual)?;
            Ok(if ok { 0 } else { 2 })
        }
        Command::Validate(ValidateCommand::Kernels { .. }) => {
            let checks = validate::validate_kernels(s.or("seed", 0)?)?;
            let mut all = true;
            for c in &checks {
                writeln!(
                    stdout,
                    "{} {}: worst {:e} (limit {:e})",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.worst,
                    c.limit
                )?;
                all &= c.passed();
            }
            Ok(if all { 0 } else { 2 })
        }
    }
}
