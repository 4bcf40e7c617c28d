//! Exit-time Monte Carlo for the pair ξ = (ξ₁, ξ₂) with drift −a.
//!
//! W(x, t) = P(θ_x > t) where θ_x is the first time ξ₂ − ξ₁ reaches 0, and
//! p_t(u) = lim_{δ→0} δ⁻¹ P(θ_{(u, u+δ)} > t).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::drift::DriftSpec;
use crate::error::{check_time, Error, Result};
use crate::estimate::{DensityEstimate, EstimateFlag, Method};
use crate::kernel::WedgePoint;
use crate::rng::{self, Moments};

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    pub n_paths: u64,
    pub dt: f64,
    /// Multiply the path weight by the bridge non-crossing probability of each step.
    pub bridge_correction: bool,
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self { n_paths: 100_000, dt: 1e-3, bridge_correction: true, seed: 0 }
    }
}

impl PathConfig {
    pub fn validate(&self, t: f64) -> Result<()> {
        if self.n_paths < 1000 {
            return Err(Error::InvalidParameter(format!("n_paths must be >= 1000, got {}", self.n_paths)));
        }
        if !(self.dt > 0.0) || self.dt > t / 20.0 {
            return Err(Error::InvalidParameter(format!("dt must lie in (0, t/20], got {} for t = {t}", self.dt)));
        }
        Ok(())
    }

    /// Number of Euler steps and the step actually used to land exactly on t.
    pub fn steps(&self, t: f64) -> (u64, f64) {
        let n = (t / self.dt).ceil().max(1.0) as u64;
        (n, t / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub config_digest: String,
}

/// Weight of one path started at (x1, x2): 0 if killed, else the product of
/// per-step non-crossing probabilities (or 1 without bridge correction).
fn path_weight<R: Rng>(rng: &mut R, x1: f64, x2: f64, steps: u64, dt: f64, d: &DriftSpec, bridge: bool) -> f64 {
    let sd = dt.sqrt();
    let (mut a, mut b) = (x1, x2);
    let mut gap = b - a;
    let mut w = 1.0;
    for _ in 0..steps {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        a += -d.evaluate(a) * dt + sd * z1;
        b += -d.evaluate(b) * dt + sd * z2;
        let next = b - a;
        if next <= 0.0 {
            return 0.0;
        }
        if bridge {
            // the difference has diffusion coefficient 2
            w *= -(-gap * next / dt).exp_m1();
        }
        gap = next;
    }
    w
}

fn digest(x: WedgePoint, t: f64, d: &DriftSpec, cfg: &PathConfig) -> String {
    crate::harness::digest_pairs(&[
        ("method", "mc".to_string()),
        ("drift", d.to_string()),
        ("t", t.to_string()),
        ("x1", x.x1.to_string()),
        ("x2", x.x2.to_string()),
        ("paths", cfg.n_paths.to_string()),
        ("dt", cfg.dt.to_string()),
        ("bridge", cfg.bridge_correction.to_string()),
        ("seed", cfg.seed.to_string()),
    ])
}

fn path_domain() -> u64 {
    rng::domain("mc-exit", 0)
}

/// Moments of `f(weights)` where every path index draws the same noise for each start.
fn path_moments<F>(starts: &[(f64, f64)], t: f64, d: &DriftSpec, cfg: &PathConfig, combine: F) -> Moments
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (steps, dt) = cfg.steps(t);
    let dom = path_domain();
    rng::moments(cfg.n_paths, |i| {
        let mut w = [0.0f64; 4];
        for (slot, &(x1, x2)) in w.iter_mut().zip(starts) {
            let mut r = rng::stream(cfg.seed, dom, i);
            *slot = path_weight(&mut r, x1, x2, steps, dt, d, cfg.bridge_correction);
        }
        combine(&w[..starts.len()])
    })
}

/// P(θ_x > t) by Euler–Maruyama with optional Brownian-bridge correction.
pub fn survival(x: WedgePoint, t: f64, d: &DriftSpec, cfg: &PathConfig) -> Result<SurvivalEstimate> {
    check_time(t)?;
    let config_digest = digest(x, t, d, cfg);
    if !x.is_interior() {
        return Ok(SurvivalEstimate { p_hat: 0.0, stderr: 0.0, n_paths: cfg.n_paths, config_digest });
    }
    cfg.validate(t)?;
    let m = path_moments(&[(x.x1, x.x2)], t, d, cfg, |w| w[0]);
    Ok(SurvivalEstimate { p_hat: m.mean(), stderr: m.stderr(), n_paths: cfg.n_paths, config_digest })
}

/// p_t(u) ≈ P(θ_{(u, u+δ)} > t) / δ, optionally Richardson-extrapolated with δ/2.
///
/// Both gaps share the noise of each path index, so the extrapolated
/// estimator's standard error is computed path by path.
pub fn density_mc(u: f64, t: f64, delta: f64, d: &DriftSpec, cfg: &PathConfig, richardson: bool) -> Result<DensityEstimate> {
    check_time(t)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    cfg.validate(t)?;
    let flag = if delta > 0.1 * t.sqrt() { EstimateFlag::DeltaTooLarge } else { EstimateFlag::Ok };
    let (value, stat_error, det_bound) = if richardson {
        let half = 0.5 * delta;
        let starts = [(u, u + delta), (u, u + half)];
        let ext = path_moments(&starts, t, d, cfg, |w| 2.0 * w[1] / half - w[0] / delta);
        let coarse = path_moments(&starts, t, d, cfg, |w| w[1] / half - w[0] / delta);
        (ext.mean(), ext.stderr(), coarse.mean().abs())
    } else {
        let m = path_moments(&[(u, u + delta)], t, d, cfg, |w| w[0] / delta);
        (m.mean(), m.stderr(), 0.0)
    };
    let mut digest = digest(WedgePoint { x1: u, x2: u + delta }, t, d, cfg);
    if richardson {
        digest = crate::harness::digest_pairs(&[("base", digest), ("richardson", "true".into())]);
    }
    Ok(DensityEstimate {
        value,
        stat_error,
        det_bound,
        method: Method::Mc,
        flag,
        config_digest: digest,
        seed: Some(cfg.seed),
    })
}

/// Default density gap δ = 0.02√t.
pub fn default_delta(t: f64) -> f64 {
    0.02 * t.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: u64, seed: u64) -> PathConfig {
        PathConfig { n_paths: n, seed, ..PathConfig::default() }
    }

    fn w0(x1: f64, x2: f64, t: f64) -> f64 {
        libm::erf((x2 - x1) / (2.0 * t.sqrt()))
    }

    #[test]
    fn boundary_start_is_dead() {
        let s = survival(WedgePoint::diagonal(0.4), 1.0, &DriftSpec::zero(), &cfg(1000, 1)).unwrap();
        assert_eq!((s.p_hat, s.stderr), (0.0, 0.0));
    }

    #[test]
    fn zero_and_constant_drift_match_erf() {
        let x = WedgePoint::new(0.0, 1.0).unwrap();
        for d in [DriftSpec::zero(), DriftSpec::constant(1.5)] {
            let s = survival(x, 1.0, &d, &cfg(20_000, 7)).unwrap();
            assert!((s.p_hat - w0(0.0, 1.0, 1.0)).abs() < 3.0 * s.stderr, "{d}: {} ± {}", s.p_hat, s.stderr);
        }
    }

    #[test]
    fn rejects_bad_config() {
        let x = WedgePoint::new(0.0, 1.0).unwrap();
        assert!(survival(x, 1.0, &DriftSpec::zero(), &cfg(10, 1)).is_err());
        let coarse = PathConfig { dt: 0.1, ..cfg(1000, 1) };
        assert!(survival(x, 1.0, &DriftSpec::zero(), &coarse).is_err());
    }

    #[test]
    fn bridge_off_is_biased_high() {
        let x = WedgePoint::new(0.0, 0.3).unwrap();
        let on = survival(x, 1.0, &DriftSpec::zero(), &PathConfig { dt: 0.01, ..cfg(20_000, 3) }).unwrap();
        let off = survival(
            x,
            1.0,
            &DriftSpec::zero(),
            &PathConfig { dt: 0.01, bridge_correction: false, ..cfg(20_000, 3) },
        )
        .unwrap();
        assert!(off.p_hat >= on.p_hat - 3.0 * on.stderr);
        assert!(off.p_hat > w0(0.0, 0.3, 1.0) + 3.0 * off.stderr);
    }

    #[test]
    fn seed_determinism_across_workers() {
        let x = WedgePoint::new(0.0, 0.5).unwrap();
        let d = DriftSpec::tanh(0.5, 1.0).unwrap();
        let a = survival(x, 1.0, &d, &cfg(3000, 11)).unwrap();
        let b = rng::with_workers(Some(4), || survival(x, 1.0, &d, &cfg(3000, 11)).unwrap());
        assert_eq!(a.p_hat.to_bits(), b.p_hat.to_bits());
        assert_eq!(a.config_digest, b.config_digest);
    }

    #[test]
    fn linear_drift_sign() {
        // drift −a with a(x) = x pulls the pair together and lowers the density
        let e = density_mc(0.0, 1.0, 0.02, &DriftSpec::linear(1.0), &cfg(50_000, 5), false).unwrap();
        let exact = crate::oracle::density_linear(1.0, 1.0).unwrap();
        assert!((e.value - exact).abs() < 3.0 * e.stat_error + 0.02 * exact, "{} vs {exact}", e.value);
    }

    #[test]
    fn large_delta_is_flagged() {
        let e = density_mc(0.0, 1.0, 0.5, &DriftSpec::zero(), &cfg(1000, 1), false).unwrap();
        assert_eq!(e.flag, EstimateFlag::DeltaTooLarge);
    }

    #[test]
    fn richardson_matches_closed_form() {
        let e = density_mc(0.0, 1.0, 0.04, &DriftSpec::zero(), &cfg(50_000, 9), true).unwrap();
        let exact = 1.0 / std::f64::consts::PI.sqrt();
        assert!((e.value - exact).abs() < 3.0 * e.stat_error + 0.02 * exact);
        assert!(e.det_bound >= 0.0);
    }
}
