//! Python bindings: drift specs, the four density routes, closed forms,
//! kernel checks and the CLI entry point.

use std::collections::BTreeMap;

use arratia_core::flow::{self, FlowConfig};
use arratia_core::harness::{self, cli, validate, RunConfig};
use arratia_core::kernel::{self, WedgePoint};
use arratia_core::mc_exit::{self, PathConfig};
use arratia_core::series::{self, SeriesConfig};
use arratia_core::{oracle, pde};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

fn err(e: arratia_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn point(x: (f64, f64)) -> PyResult<WedgePoint> {
    WedgePoint::new(x.0, x.1).map_err(err)
}

/// Bounded or linear drift a(x) acting on every particle.
#[pyclass(name = "DriftSpec", module = "arratia", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyDrift {
    inner: arratia_core::DriftSpec,
}

#[pymethods]
impl PyDrift {
    /// Parses a spec string such as "tanh:k=0.5,lam=1".
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self { inner: spec.parse().map_err(err)? })
    }

    #[staticmethod]
    fn zero() -> Self {
        Self { inner: arratia_core::DriftSpec::zero() }
    }

    #[staticmethod]
    fn constant(k: f64) -> Self {
        Self { inner: arratia_core::DriftSpec::constant(k) }
    }

    #[staticmethod]
    fn linear(c: f64) -> Self {
        Self { inner: arratia_core::DriftSpec::linear(c) }
    }

    #[staticmethod]
    fn tanh(k: f64, lam: f64) -> PyResult<Self> {
        Ok(Self { inner: arratia_core::DriftSpec::tanh(k, lam).map_err(err)? })
    }

    #[staticmethod]
    fn step(h: f64, lo: f64, hi: f64) -> PyResult<Self> {
        Ok(Self { inner: arratia_core::DriftSpec::step(h, lo, hi).map_err(err)? })
    }

    fn __call__(&self, x: f64) -> f64 {
        self.inner.evaluate(x)
    }

    #[getter]
    fn sup_norm(&self) -> f64 {
        self.inner.sup_norm
    }

    fn mollify(&self, n: u32) -> PyResult<Self> {
        Ok(Self { inner: self.inner.mollify(n).map_err(err)? })
    }

    fn negate(&self) -> Self {
        Self { inner: self.inner.negate() }
    }

    fn scale(&self, factor: f64) -> Self {
        Self { inner: self.inner.scale(factor) }
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("DriftSpec('{}')", self.inner)
    }
}

/// Drift given either as a `DriftSpec` or as a spec string.
fn drift_arg(d: &Bound<'_, PyAny>) -> PyResult<arratia_core::DriftSpec> {
    if let Ok(s) = d.cast::<PyDrift>() {
        return Ok(s.get().inner.clone());
    }
    let text: String = d.extract()?;
    text.parse().map_err(err)
}

#[pyclass(name = "DensityEstimate", module = "arratia", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyEstimate {
    value: f64,
    stat_error: f64,
    det_bound: f64,
    method: String,
    flag: String,
    config_digest: String,
    seed: Option<u64>,
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!(
            "DensityEstimate(value={}, stat_error={}, det_bound={}, method='{}', flag='{}')",
            self.value, self.stat_error, self.det_bound, self.method, self.flag
        )
    }
}

impl From<arratia_core::DensityEstimate> for PyEstimate {
    fn from(e: arratia_core::DensityEstimate) -> Self {
        Self {
            value: e.value,
            stat_error: e.stat_error,
            det_bound: e.det_bound,
            method: e.method.as_str().to_string(),
            flag: e.flag.as_str().to_string(),
            config_digest: e.config_digest,
            seed: e.seed,
        }
    }
}

fn run_config(method: &str, drift: &str, t: f64, x: f64, options: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let mut map = BTreeMap::new();
    map.insert("method".to_string(), method.to_string());
    map.insert("drift".to_string(), drift.to_string());
    map.insert("t".to_string(), t.to_string());
    map.insert("x".to_string(), x.to_string());
    if let Some(opts) = options {
        for (k, v) in opts.iter() {
            let key: String = k.extract()?;
            let key = if key == "half_width" { "U".to_string() } else { key.replace('_', "-") };
            let value = if v.is_instance_of::<PyBool>() {
                v.extract::<bool>()?.to_string()
            } else if let Ok((lo, hi)) = v.extract::<(f64, f64)>() {
                format!("{lo}:{hi}")
            } else {
                v.str()?.to_string()
            };
            map.insert(key, value);
        }
    }
    RunConfig::from_map(&map).map_err(err)
}

/// p_t(x) by one method. Keyword options are the config keys
/// (`seed`, `h`, `paths`, `delta`, `runs`, `half_width`, `window`, ...).
#[pyfunction]
#[pyo3(signature = (method, drift, t, x = 0.0, **options))]
fn density(
    py: Python<'_>,
    method: &str,
    drift: &Bound<'_, PyAny>,
    t: f64,
    x: f64,
    options: Option<&Bound<'_, PyDict>>,
) -> PyResult<Vec<(f64, PyEstimate)>> {
    let drift = drift_arg(drift)?.to_string();
    let cfg = run_config(method, &drift, t, x, options)?;
    let rows = py.detach(|| harness::estimate(&cfg)).map_err(err)?;
    Ok(rows.into_iter().map(|(x, e)| (x, e.into())).collect())
}

/// The CSV text the `density` command would print.
#[pyfunction]
#[pyo3(signature = (method, drift, t, x = 0.0, **options))]
fn density_csv(
    py: Python<'_>,
    method: &str,
    drift: &Bound<'_, PyAny>,
    t: f64,
    x: f64,
    options: Option<&Bound<'_, PyDict>>,
) -> PyResult<String> {
    let drift = drift_arg(drift)?.to_string();
    let cfg = run_config(method, &drift, t, x, options)?;
    py.detach(|| harness::run_density(&cfg, false).and_then(|r| harness::csv_string(&r))).map_err(err)
}

#[pyfunction]
fn density_zero(t: f64) -> PyResult<f64> {
    oracle::density_zero(t).map_err(err)
}

#[pyfunction]
fn density_linear(c: f64, t: f64) -> PyResult<f64> {
    oracle::density_linear(c, t).map_err(err)
}

/// Killed heat kernel g_r(x, y) on the wedge x1 < x2.
#[pyfunction]
fn green_killed(r: f64, x: (f64, f64), y: (f64, f64)) -> PyResult<f64> {
    kernel::green_killed(r, point(x)?, point(y)?).map_err(err)
}

#[pyfunction]
fn simplex_gamma_integral(n: usize, s: f64, with_final_factor: bool) -> PyResult<f64> {
    kernel::simplex_gamma_integral(n, s, with_final_factor).map_err(err)
}

/// Drift-free survival W₀(x, s).
#[pyfunction]
fn w0(x: (f64, f64), s: f64) -> PyResult<f64> {
    series::w0(point(x)?, s).map_err(err)
}

/// Partial survival sum Σ_{n<=last} Wₙ(x, s): (value, stderr, tail bound).
#[pyfunction]
#[pyo3(signature = (x, s, drift, last = 3, samples = 1_000_000, seed = 0))]
fn w_partial(
    py: Python<'_>,
    x: (f64, f64),
    s: f64,
    drift: &Bound<'_, PyAny>,
    last: usize,
    samples: u64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let d = drift_arg(drift)?;
    let x = point(x)?;
    let cfg = SeriesConfig { samples, seed, n_max: last.max(1), ..SeriesConfig::default() };
    let p = py.detach(|| series::w_partial(x, s, &d, last, &cfg)).map_err(err)?;
    Ok((p.value, p.stderr, p.tail_bound))
}

/// Exit-time Monte Carlo survival P(θ_x > t): (estimate, stderr).
#[pyfunction]
#[pyo3(signature = (x, t, drift, paths = 100_000, dt = 1e-3, seed = 0, bridge = true))]
fn survival(
    py: Python<'_>,
    x: (f64, f64),
    t: f64,
    drift: &Bound<'_, PyAny>,
    paths: u64,
    dt: f64,
    seed: u64,
    bridge: bool,
) -> PyResult<(f64, f64)> {
    let d = drift_arg(drift)?;
    let x = point(x)?;
    let cfg = PathConfig { n_paths: paths, dt, seed, bridge_correction: bridge };
    let s = py.detach(|| mc_exit::survival(x, t, &d, &cfg)).map_err(err)?;
    Ok((s.p_hat, s.stderr))
}

/// Survival field on the rotated grid covering x ∈ [x_lo, x_hi]:
/// (u nodes, v nodes, rows of W indexed [v][u]).
#[pyfunction]
#[pyo3(signature = (drift, t, x_lo = 0.0, x_hi = 0.0, h = 0.02))]
fn pde_field(
    py: Python<'_>,
    drift: &Bound<'_, PyAny>,
    t: f64,
    x_lo: f64,
    x_hi: f64,
    h: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
    let d = drift_arg(drift)?;
    let f = py
        .detach(|| pde::RotatedGrid::for_window(x_lo, x_hi, t, &d, h).and_then(|g| pde::solve(&d, t, &g)))
        .map_err(err)?;
    let g = &f.grid;
    let u = (0..=g.nu()).map(|i| g.u(i)).collect();
    let v = (0..=g.nv()).map(|j| g.v(j)).collect();
    let rows = f.values.chunks(g.nu() + 1).map(<[f64]>::to_vec).collect();
    Ok((u, v, rows))
}

/// One run of the coalescing flow: (positions, masses).
#[pyfunction]
#[pyo3(signature = (drift, t, half_width = 10.0, spacing = 0.01, dt = 1e-3, seed = 0, run = 0))]
#[allow(clippy::too_many_arguments)]
fn simulate_flow(
    py: Python<'_>,
    drift: &Bound<'_, PyAny>,
    t: f64,
    half_width: f64,
    spacing: f64,
    dt: f64,
    seed: u64,
    run: u64,
) -> PyResult<(Vec<f64>, Vec<u64>)> {
    let d = drift_arg(drift)?;
    let cfg = FlowConfig { half_width, spacing, dt, t, seed, ..FlowConfig::default() };
    let s = py.detach(|| flow::simulate_flow(&d, &cfg, run)).map_err(err)?;
    Ok((s.positions, s.masses))
}

/// Occupation of [u, v] under a against non-meeting under −a:
/// ((lhs, stderr), (rhs, stderr)).
#[pyfunction]
#[pyo3(signature = (u, v, drift, t = 1.0, runs = 10_000, half_width = 8.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn duality_check(
    py: Python<'_>,
    u: f64,
    v: f64,
    drift: &Bound<'_, PyAny>,
    t: f64,
    runs: u64,
    half_width: f64,
    seed: u64,
) -> PyResult<((f64, f64), (f64, f64))> {
    let d = drift_arg(drift)?;
    let cfg = FlowConfig { half_width, t, n_runs: runs, seed, ..FlowConfig::default() };
    let c = py.detach(|| flow::duality_check(u, v, &d, &cfg)).map_err(err)?;
    Ok(((c.lhs.p, c.lhs.stderr), (c.rhs.p, c.rhs.stderr)))
}

/// Kernel self-checks as (name, worst, limit, passed).
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn validate_kernels(py: Python<'_>, seed: u64) -> PyResult<Vec<(String, f64, f64, bool)>> {
    let checks = py.detach(|| validate::validate_kernels(seed)).map_err(err)?;
    Ok(checks.into_iter().map(|c| (c.name.to_string(), c.worst, c.limit, c.passed())).collect())
}

/// Runs the command-line interface: (exit code, stdout, stderr).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> (i32, String, String) {
    py.detach(|| {
        let (mut out, mut errs) = (Vec::new(), Vec::new());
        let argv = std::iter::once("arratia".to_string()).chain(args);
        let code = cli::run(argv, &mut out, &mut errs);
        (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&errs).into_owned())
    })
}

#[pymodule]
fn arratia(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDrift>()?;
    m.add_class::<PyEstimate>()?;
    m.add_function(wrap_pyfunction!(density, m)?)?;
    m.add_function(wrap_pyfunction!(density_csv, m)?)?;
    m.add_function(wrap_pyfunction!(density_zero, m)?)?;
    m.add_function(wrap_pyfunction!(density_linear, m)?)?;
    m.add_function(wrap_pyfunction!(green_killed, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_gamma_integral, m)?)?;
    m.add_function(wrap_pyfunction!(w0, m)?)?;
    m.add_function(wrap_pyfunction!(w_partial, m)?)?;
    m.add_function(wrap_pyfunction!(survival, m)?)?;
    m.add_function(wrap_pyfunction!(pde_field, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_flow, m)?)?;
    m.add_function(wrap_pyfunction!(duality_check, m)?)?;
    m.add_function(wrap_pyfunction!(validate_kernels, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
