//! Convergence, duality and coalescence experiments.

use std::fmt;
use std::str::FromStr;

use crate::drift::{self, DriftKind, DriftSpec};
use crate::error::{Error, Result};
use crate::estimate::{DensityEstimate, Method};
use crate::flow::{self, CoalescenceFit, DualityCheck, FlowConfig};
use crate::harness::{estimate, relative_tolerance, RunConfig};

/// How the approximating drifts aₙ are built from a₀.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceMode {
    /// aₙ = a₀ mollified at width 1/n; distance in L¹.
    L1,
    /// aₙ = (1 + 1/n)a₀; distance in L∞.
    Linf,
}

impl FromStr for ConvergenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(ConvergenceMode::L1),
            "linf" => Ok(ConvergenceMode::Linf),
            _ => Err(Error::Config(format!("unknown convergence mode '{s}' (l1 | linf)"))),
        }
    }
}

impl fmt::Display for ConvergenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvergenceMode::L1 => "L1",
            ConvergenceMode::Linf => "Linf",
        })
    }
}

/// aₙ for the given mode.
pub fn sequence_member(base: &DriftSpec, mode: ConvergenceMode, n: u32) -> Result<DriftSpec> {
    if n == 0 {
        return Err(Error::InvalidParameter("sequence index must be >= 1".into()));
    }
    match mode {
        ConvergenceMode::L1 => match base.kind {
            DriftKind::Step { .. } | DriftKind::Zero => base.mollify(n),
            _ => Err(Error::InvalidParameter(format!(
                "L1 mode needs a compactly supported step drift, got '{base}'"
            ))),
        },
        ConvergenceMode::Linf => {
            base.require_bounded("the Linf convergence sequence")?;
            Ok(base.scale(1.0 + 1.0 / n as f64))
        }
    }
}

fn distance_window(base: &DriftSpec) -> (f64, f64) {
    base.variation_window().map(|(a, b)| (a - 1.0, b + 1.0)).unwrap_or((-10.0, 10.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    pub drift: String,
    pub distance: f64,
    pub estimate: DensityEstimate,
    /// |p(aₙ) − p(a₀)|.
    pub error: f64,
    /// Twice the method budget for the difference.
    pub tolerance: f64,
}

impl ConvergenceRow {
    pub fn within(&self) -> bool {
        self.error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub mode: ConvergenceMode,
    pub method: Method,
    pub base: String,
    pub t: f64,
    pub x: f64,
    pub reference: DensityEstimate,
    pub rows: Vec<ConvergenceRow>,
    pub n_pass: u32,
}

impl ConvergenceReport {
    /// Every n >= n_pass lies within its tolerance.
    pub fn passed(&self) -> bool {
        self.rows.iter().filter(|r| r.n >= self.n_pass).all(ConvergenceRow::within)
    }

    /// The error at the largest n is not above the error at the smallest n.
    pub fn improves(&self) -> bool {
        let first = self.rows.iter().min_by_key(|r| r.n);
        let last = self.rows.iter().max_by_key(|r| r.n);
        match (first, last) {
            (Some(f), Some(l)) => l.error <= f.error,
            _ => false,
        }
    }

    /// `n,drift,distance,estimate,stat_error,error,tolerance,within` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,drift,distance,estimate,stat_error,error,tolerance,within\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},\"{}\",{},{},{},{},{},{}\n",
                r.n,
                r.drift,
                r.distance,
                r.estimate.value,
                r.estimate.stat_error,
                r.error,
                r.tolerance,
                r.within()
            ));
        }
        s
    }
}

/// Budget for |a − b| between two estimates of one method: each estimate keeps its
/// own relative allowance, plus three combined standard errors (and the certified
/// tails for series).
pub fn difference_budget(a: &DensityEstimate, b: &DensityEstimate) -> f64 {
    let det = if a.method == Method::Series { a.det_bound + b.det_bound } else { 0.0 };
    relative_tolerance(a.method) * (a.value.abs() + b.value.abs()) + 3.0 * a.stat_error.hypot(b.stat_error) + det
}

fn single_estimate(cfg: &RunConfig) -> Result<DensityEstimate> {
    let mut c = cfg.clone();
    c.bins = 1;
    let mut e = estimate(&c)?;
    Ok(e.swap_remove(0).1)
}

/// p(aₙ) for every n against p(a₀), all with the seed of `cfg`.
pub fn experiment_converge(
    base: &DriftSpec,
    mode: ConvergenceMode,
    n_list: &[u32],
    cfg: &RunConfig,
    n_pass: u32,
) -> Result<ConvergenceReport> {
    if n_list.is_empty() {
        return Err(Error::InvalidParameter("empty index list".into()));
    }
    let reference = single_estimate(&RunConfig { drift: base.to_string(), ..cfg.clone() })?;
    let window = distance_window(base);
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let member = sequence_member(base, mode, n)?;
        let distance = match mode {
            ConvergenceMode::L1 => drift::l1_distance(&member, base, window)?,
            ConvergenceMode::Linf => drift::l_inf_distance(&member, base, window, 4001)?,
        };
        let e = single_estimate(&RunConfig { drift: member.to_string(), ..cfg.clone() })?;
        rows.push(ConvergenceRow {
            n,
            drift: member.to_string(),
            distance,
            error: (e.value - reference.value).abs(),
            tolerance: 2.0 * difference_budget(&e, &reference),
            estimate: e,
        });
    }
    Ok(ConvergenceReport { mode, method: cfg.method, base: base.to_string(), t: cfg.t, x: cfg.x, reference, rows, n_pass })
}

/// Occupation of [u, v] by the flow with drift a against non-meeting under −a.
pub fn experiment_duality(u: f64, v: f64, d: &DriftSpec, cfg: &FlowConfig) -> Result<DualityCheck> {
    flow::duality_check(u, v, d, cfg)
}

pub fn duality_csv(c: &DualityCheck) -> String {
    format!(
        "quantity,estimate,stderr,runs\nlhs,{},{},{}\nrhs,{},{},{}\n",
        c.lhs.p, c.lhs.stderr, c.lhs.runs, c.rhs.p, c.rhs.stderr, c.rhs.runs
    )
}

/// Non-meeting probability against the initial gap, with a fit through the origin.
pub fn experiment_coalescence(x: f64, gaps: &[f64], t: f64, d: &DriftSpec, dt: f64, runs: u64, seed: u64) -> Result<CoalescenceFit> {
    flow::coalescence_fit(x, gaps, t, d, dt, runs, seed)
}

pub fn coalescence_csv(f: &CoalescenceFit) -> String {
    let mut s = String::from("gap,probability,stderr,runs,fitted\n");
    for (g, p) in f.gaps.iter().zip(&f.probabilities) {
        s.push_str(&format!("{},{},{},{},{}\n", g, p.p, p.stderr, p.runs, f.slope * g));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_members() {
        let tanh = DriftSpec::tanh(0.5, 1.0).unwrap();
        let m = sequence_member(&tanh, ConvergenceMode::Linf, 4).unwrap();
        assert!((m.sup_norm - 0.625).abs() < 1e-12);
        assert!(sequence_member(&tanh, ConvergenceMode::L1, 4).is_err());
        assert!(sequence_member(&DriftSpec::linear(1.0), ConvergenceMode::Linf, 4).is_err());
        let step = DriftSpec::step(0.5, -1.0, 1.0).unwrap();
        assert!(matches!(sequence_member(&step, ConvergenceMode::L1, 8).unwrap().kind, DriftKind::Mollified { n: 8, .. }));
    }

    #[test]
    fn zero_base_has_zero_errors() {
        let cfg = RunConfig::new(Method::Oracle, "zero", 1.0, 0.0);
        let r = experiment_converge(&DriftSpec::zero(), ConvergenceMode::Linf, &[1, 2, 8], &cfg, 8).unwrap();
        assert!(r.rows.iter().all(|row| row.error == 0.0 && row.distance == 0.0));
        assert!(r.passed() && r.improves());
    }

    #[test]
    fn linf_distances_shrink_like_one_over_n() {
        let cfg = RunConfig { h: 0.1, ..RunConfig::new(Method::Pde, "zero", 0.25, 0.0) };
        let base = DriftSpec::tanh(0.5, 1.0).unwrap();
        let r = experiment_converge(&base, ConvergenceMode::Linf, &[1, 4], &cfg, 4).unwrap();
        assert!((r.rows[0].distance - 0.5).abs() < 1e-6);
        assert!((r.rows[1].distance - 0.125).abs() < 1e-6);
        assert!(r.improves());
    }
}
