//! Direct simulation of the coalescing flow with drift a.
//!
//! Particles start on a grid over [−U, U], move independently by
//! a(x)dt + √dt·N(0,1) and coalesce when they meet. Meetings are detected at
//! step resolution: an order inversion always merges, and with the bridge
//! rule a pair that stayed ordered still merges with the probability that two
//! Brownian bridges between the observed gaps touched in between.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::drift::{DriftKind, DriftSpec};
use crate::error::{check_time, Error, Result};
use crate::estimate::{DensityEstimate, EstimateFlag, Method};
use crate::rng::{self, Moments};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub half_width: f64,
    pub spacing: f64,
    pub dt: f64,
    pub t: f64,
    pub n_runs: u64,
    pub seed: u64,
    /// Overrides the default evaluation margin when set.
    pub eval_margin: Option<f64>,
    /// Merge still-ordered neighbours with their bridge crossing probability.
    pub bridge_merge: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            half_width: 30.0,
            spacing: 0.01,
            dt: 1e-3,
            t: 1.0,
            n_runs: 200,
            seed: 0,
            eval_margin: None,
            bridge_merge: true,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        check_time(self.t)?;
        if !(self.half_width > 0.0 && self.spacing > 0.0 && self.dt > 0.0) {
            return Err(Error::InvalidParameter("half_width, spacing and dt must be positive".into()));
        }
        if self.spacing > 0.05 * self.t.sqrt() {
            return Err(Error::InvalidParameter(format!(
                "spacing {} exceeds 0.05·√t = {}",
                self.spacing,
                0.05 * self.t.sqrt()
            )));
        }
        if self.n_runs == 0 {
            return Err(Error::InvalidParameter("n_runs must be positive".into()));
        }
        Ok(())
    }

    pub fn starters(&self) -> Vec<f64> {
        let n = (self.half_width / self.spacing).floor() as i64;
        (-n..=n).map(|k| k as f64 * self.spacing).collect()
    }

    /// Interval where the finite starter set represents the flow from all of ℝ.
    pub fn safe_window(&self, d: &DriftSpec) -> (f64, f64) {
        let t = self.t;
        match d.kind {
            DriftKind::Linear { c } if c != 0.0 => {
                // X(u, t) = e^{ct}u + Gaussian of variance (e^{2ct} − 1)/2c
                let sd = ((2.0 * c * t).exp_m1() / (2.0 * c)).sqrt();
                let m = self.eval_margin.unwrap_or(4.0 * sd);
                let reach = self.half_width * (c * t).exp();
                (-reach + m, reach - m)
            }
            _ => {
                let m = self.eval_margin.unwrap_or(4.0 * t.sqrt() + d.sup_norm * t);
                (-self.half_width + m, self.half_width - m)
            }
        }
    }
}

/// Surviving clusters of one run at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PointProcessSample {
    pub positions: Vec<f64>,
    pub masses: Vec<u64>,
}

impl PointProcessSample {
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        let a = self.positions.partition_point(|&p| p < lo);
        let b = self.positions.partition_point(|&p| p < hi);
        b - a
    }

    pub fn total_mass(&self) -> u64 {
        self.masses.iter().sum()
    }
}

#[derive(Clone, Copy)]
struct Cluster {
    /// Position before the current step.
    old: f64,
    pos: f64,
    mass: u64,
}

/// One step: move every cluster, then restore strict order by merging.
fn step(clusters: &mut Vec<Cluster>, d: &DriftSpec, dt: f64, bridge: bool, rng: &mut ChaCha8Rng) {
    let sd = dt.sqrt();
    for c in clusters.iter_mut() {
        c.old = c.pos;
        let z: f64 = rng.sample(StandardNormal);
        c.pos += d.evaluate(c.pos) * dt + sd * z;
    }
    let mut out: Vec<Cluster> = Vec::with_capacity(clusters.len());
    for &c in clusters.iter() {
        let mut cur = c;
        loop {
            let Some(last) = out.last().copied() else { break };
            let merge = if cur.pos <= last.pos {
                true
            } else if bridge {
                let before = cur.old - last.old;
                let after = cur.pos - last.pos;
                before > 0.0 && rng.random::<f64>() < (-before * after / dt).exp()
            } else {
                false
            };
            if !merge {
                break;
            }
            out.pop();
            cur = Cluster { old: cur.old, pos: 0.5 * (last.pos + cur.pos), mass: last.mass + cur.mass };
        }
        out.push(cur);
    }
    *clusters = out;
}

fn run_clusters(starts: &[f64], d: &DriftSpec, t: f64, dt: f64, bridge: bool, mut rng: ChaCha8Rng) -> Vec<Cluster> {
    let n = (t / dt).ceil().max(1.0) as u64;
    let dt = t / n as f64;
    let mut clusters: Vec<Cluster> = starts.iter().map(|&p| Cluster { old: p, pos: p, mass: 1 }).collect();
    for _ in 0..n {
        step(&mut clusters, d, dt, bridge, &mut rng);
    }
    clusters
}

/// Run number `run` of the flow.
pub fn simulate_flow(d: &DriftSpec, cfg: &FlowConfig, run: u64) -> Result<PointProcessSample> {
    cfg.validate()?;
    let rng = rng::stream(cfg.seed, rng::domain("flow", 0), run);
    let clusters = run_clusters(&cfg.starters(), d, cfg.t, cfg.dt, cfg.bridge_merge, rng);
    Ok(PointProcessSample {
        positions: clusters.iter().map(|c| c.pos).collect(),
        masses: clusters.iter().map(|c| c.mass).collect(),
    })
}

/// A batch of runs together with what produced it.
#[derive(Debug, Clone)]
pub struct FlowRuns {
    pub drift: DriftSpec,
    pub cfg: FlowConfig,
    pub samples: Vec<PointProcessSample>,
}

/// All `cfg.n_runs` runs, in run order.
pub fn simulate_runs(d: &DriftSpec, cfg: &FlowConfig) -> Result<FlowRuns> {
    cfg.validate()?;
    let samples = (0..cfg.n_runs)
        .into_par_iter()
        .map(|r| simulate_flow(d, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(FlowRuns { drift: d.clone(), cfg: cfg.clone(), samples })
}

impl FlowRuns {
    /// `run_id,position,mass` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "run_id,position,mass")?;
        for (r, s) in self.samples.iter().enumerate() {
            for (p, m) in s.positions.iter().zip(&s.masses) {
                writeln!(out, "{r},{p},{m}")?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// One histogram bin of the empirical intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: f64,
    pub estimate: DensityEstimate,
}

fn flow_estimate(m: &Moments, width: f64, seed: u64) -> DensityEstimate {
    DensityEstimate {
        value: m.mean() / width,
        stat_error: m.stderr() / width,
        det_bound: 0.0,
        method: Method::Flow,
        flag: EstimateFlag::Ok,
        config_digest: String::new(),
        seed: Some(seed),
    }
}

/// Mean cluster count per unit length in each bin, with the standard error across runs.
pub fn empirical_density(runs: &FlowRuns, window: (f64, f64), bins: usize) -> Result<Vec<DensityBin>> {
    let (lo, hi) = window;
    if !(hi > lo) || bins == 0 {
        return Err(Error::EmptyWindow(lo, hi));
    }
    let (safe_lo, safe_hi) = runs.cfg.safe_window(&runs.drift);
    if lo < safe_lo - 1e-12 || hi > safe_hi + 1e-12 {
        return Err(Error::Margin(format!("window [{lo}, {hi}] exceeds the safe window [{safe_lo}, {safe_hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    Ok((0..bins)
        .map(|b| {
            let a = lo + b as f64 * width;
            let z = if b + 1 == bins { hi } else { a + width };
            let mut m = Moments::default();
            for s in &runs.samples {
                m.push(s.count_in(a, z) as f64);
            }
            DensityBin { lo: a, hi: z, estimate: flow_estimate(&m, z - a, runs.cfg.seed) }
        })
        .collect())
}

/// The whole safe window as one bin: the flow estimate of the (translation-invariant) density.
pub fn window_density(runs: &FlowRuns) -> Result<DensityEstimate> {
    let w = runs.cfg.safe_window(&runs.drift);
    Ok(empirical_density(runs, w, 1)?.remove(0).estimate)
}

/// Fraction-type estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityEstimate {
    pub p: f64,
    pub stderr: f64,
    pub runs: u64,
}

/// P(X(u, t) ≠ X(v, t)): the two-particle flow from u < v has not coalesced by t.
///
/// Each run carries the product of per-step bridge non-crossing probabilities
/// instead of a random merge (same expectation, smaller variance).
pub fn meeting_probability(u: f64, v: f64, t: f64, d: &DriftSpec, dt: f64, runs: u64, seed: u64) -> Result<ProbabilityEstimate> {
    check_time(t)?;
    if u > v {
        return Err(Error::InvalidParameter(format!("need u <= v, got {u} > {v}")));
    }
    if u == v {
        return Ok(ProbabilityEstimate { p: 0.0, stderr: 0.0, runs });
    }
    let n = (t / dt).ceil().max(1.0) as u64;
    let dt = t / n as f64;
    let sd = dt.sqrt();
    let dom = rng::domain("flow-pair", 0);
    let m = rng::moments(runs, |i| {
        let mut r = rng::stream(seed, dom, i);
        let (mut a, mut b) = (u, v);
        let mut w = 1.0;
        for _ in 0..n {
            let z1: f64 = r.sample(StandardNormal);
            let z2: f64 = r.sample(StandardNormal);
            let na = a + d.evaluate(a) * dt + sd * z1;
            let nb = b + d.evaluate(b) * dt + sd * z2;
            if nb <= na {
                return 0.0;
            }
            w *= -(-(b - a) * (nb - na) / dt).exp_m1();
            a = na;
            b = nb;
        }
        w
    });
    Ok(ProbabilityEstimate { p: m.mean(), stderr: m.stderr(), runs })
}

/// P(the flow with drift a has a point in [u, v] at t), from full-flow runs.
pub fn occupation_probability(u: f64, v: f64, d: &DriftSpec, cfg: &FlowConfig) -> Result<ProbabilityEstimate> {
    cfg.validate()?;
    let (lo, hi) = cfg.safe_window(d);
    if u < lo || v > hi {
        return Err(Error::Margin(format!("[{u}, {v}] exceeds the safe window [{lo}, {hi}]")));
    }
    let starts = cfg.starters();
    let dom = rng::domain("flow", 0);
    let m = rng::moments(cfg.n_runs, |i| {
        let rng = rng::stream(cfg.seed, dom, i);
        let c = run_clusters(&starts, d, cfg.t, cfg.dt, cfg.bridge_merge, rng);
        let hit = c.iter().any(|c| c.pos >= u && c.pos <= v);
        if hit {
            1.0
        } else {
            0.0
        }
    });
    Ok(ProbabilityEstimate { p: m.mean(), stderr: m.stderr(), runs: cfg.n_runs })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityCheck {
    /// Occupation probability of [u, v] under the flow with drift a.
    pub lhs: ProbabilityEstimate,
    /// Non-meeting probability of u, v under the flow with drift −a.
    pub rhs: ProbabilityEstimate,
    pub combined_stderr: f64,
}

impl DualityCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.lhs.p - self.rhs.p).abs()
    }
}

pub fn duality_check(u: f64, v: f64, d: &DriftSpec, cfg: &FlowConfig) -> Result<DualityCheck> {
    if !(u < v) {
        return Err(Error::InvalidParameter(format!("need u < v, got [{u}, {v}]")));
    }
    let lhs = occupation_probability(u, v, d, cfg)?;
    let rhs = meeting_probability(u, v, cfg.t, &d.negate(), cfg.dt, cfg.n_runs, cfg.seed)?;
    Ok(DualityCheck { lhs, rhs, combined_stderr: lhs.stderr.hypot(rhs.stderr) })
}

/// Least-squares slope through the origin of P(no meeting) against the gap.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalescenceFit {
    pub gaps: Vec<f64>,
    pub probabilities: Vec<ProbabilityEstimate>,
    pub slope: f64,
    /// max_i |P_i − slope·g_i| / (slope·g_i).
    pub max_relative_residual: f64,
}

pub fn coalescence_fit(x: f64, gaps: &[f64], t: f64, d: &DriftSpec, dt: f64, runs: u64, seed: u64) -> Result<CoalescenceFit> {
    if gaps.is_empty() || gaps.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidParameter("gaps must be a non-empty list of positive numbers".into()));
    }
    let probabilities = gaps
        .iter()
        .map(|&g| meeting_probability(x, x + g, t, d, dt, runs, seed))
        .collect::<Result<Vec<_>>>()?;
    let sxy: f64 = gaps.iter().zip(&probabilities).map(|(g, p)| g * p.p).sum();
    let sxx: f64 = gaps.iter().map(|g| g * g).sum();
    let slope = sxy / sxx;
    let max_relative_residual = gaps
        .iter()
        .zip(&probabilities)
        .map(|(g, p)| (p.p - slope * g).abs() / (slope * g))
        .fold(0.0, f64::max);
    Ok(CoalescenceFit { gaps: gaps.to_vec(), probabilities, slope, max_relative_residual })
}
