//! Duhamel series for the survival function W and the density p_t(x).
//!
//! W = Σ_n W_n with W_0 the drift-free survival probability and
//! W_n = -∫_0^s dr ∫_{D2} dy g_{s-r}(x, y) ∇^a_y W_{n-1}(y, r).
//! The density is the diagonal derivative p_t(x) = Σ_n ∂_{x2} W_n((x, x), t).
//!
//! Term 0 is closed form, term 1 is a three-dimensional Gauss–Legendre
//! quadrature, and terms n >= 2 are importance-sampled Monte Carlo integrals.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::drift::DriftSpec;
use crate::error::{check_time, Error, Result};
use crate::estimate::{DensityEstimate, EstimateFlag, Method};
use crate::kernel::{simplex_gamma_integral, KernelBoundConstants, WedgePoint};
use crate::oracle::density_zero;
use crate::quad::GaussLegendre;
use crate::rng;

/// Gaussian integrals are truncated at this many standard deviations.
const GAUSS_CUT: f64 = 8.5;

#[derive(Debug, Clone)]
pub struct SeriesConfig {
    /// Largest term index that will be evaluated.
    pub n_max: usize,
    /// Monte Carlo samples per term for n >= 2.
    pub samples: u64,
    pub seed: u64,
    /// Base Gauss–Legendre order of the term-1 quadrature.
    pub quad_nodes: usize,
    pub constants: KernelBoundConstants,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            n_max: 4,
            samples: 1_000_000,
            seed: 0,
            quad_nodes: 32,
            constants: KernelBoundConstants::constructive(),
        }
    }
}

/// One term of the series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesTermEstimate {
    pub n: usize,
    pub value: f64,
    /// Monte Carlo standard error (0 for deterministic terms).
    pub stderr: f64,
    /// Quadrature error estimate (term 1 only).
    pub quad_error: f64,
    /// A-priori bound on |term|.
    pub bound: f64,
}

/// W_0(x, s) = P(θ⁰_x > s) = erf((x2 - x1) / (2√s)).
pub fn w0(x: WedgePoint, s: f64) -> Result<f64> {
    check_time(s)?;
    Ok(libm::erf((x.x2 - x.x1) / (2.0 * s.sqrt())))
}

/// (∂_{x1} W_0, ∂_{x2} W_0); ∂_{x2} W_0 = e^{-(x2-x1)²/4s} / √(πs).
pub fn grad_w0(x: WedgePoint, s: f64) -> Result<(f64, f64)> {
    check_time(s)?;
    let d = x.x2 - x.x1;
    let g = (-d * d / (4.0 * s)).exp() / (PI * s).sqrt();
    Ok((-g, g))
}

fn check_series_input(n: usize, d: &DriftSpec, cfg: &SeriesConfig) -> Result<()> {
    d.require_bounded("series")?;
    if n > cfg.n_max {
        return Err(Error::TermIndexTooLarge { n, n_max: cfg.n_max });
    }
    Ok(())
}

/// Norm entering the bounds: 0 for constant drifts, whose correction terms vanish identically.
fn bound_norm(d: &DriftSpec) -> f64 {
    if d.is_constant() {
        0.0
    } else {
        d.sup_norm
    }
}

/// Constructive bound K^{n+1} (π/γ)^{n+1} ‖a‖^n ∫_{Δn(s)} (s-r_n)^{-1/2} Π(r_j - r_{j-1})^{-1/2}
/// on sup |∂_{x_k} W_n(·, s)|.
pub fn truncation_bound(n: usize, s: f64, sup_norm: f64, c: &KernelBoundConstants) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("truncation bound is defined for n >= 1".into()));
    }
    if sup_norm == 0.0 {
        return Ok(0.0);
    }
    Ok(log_bound(n, s, sup_norm, c, true)?.exp())
}

/// Bound K^n (π/γ)^n ‖a‖^n ∫_{Δn(s)} Π(r_j - r_{j-1})^{-1/2} on sup |W_n(·, s)|.
pub fn value_bound(n: usize, s: f64, sup_norm: f64, c: &KernelBoundConstants) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    if sup_norm == 0.0 {
        return Ok(0.0);
    }
    Ok(log_bound(n, s, sup_norm, c, false)?.exp())
}

fn log_bound(n: usize, s: f64, sup_norm: f64, c: &KernelBoundConstants, derivative: bool) -> Result<f64> {
    check_time(s)?;
    let nf = n as f64;
    let links = if derivative { nf + 1.0 } else { nf };
    let simplex = if derivative {
        0.5 * (nf + 1.0) * PI.ln() + 0.5 * (nf - 1.0) * s.ln() - ln_gamma(0.5 * (nf + 1.0))
    } else {
        (2.0f64).ln() + 0.5 * nf * PI.ln() + 0.5 * nf * s.ln() - nf.ln() - ln_gamma(0.5 * nf)
    };
    Ok(links * (c.k * PI / c.gamma).ln() + nf * sup_norm.ln() + simplex)
}

fn tail_sum(after: usize, s: f64, sup_norm: f64, c: &KernelBoundConstants, derivative: bool) -> Result<f64> {
    if sup_norm == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut prev = f64::NEG_INFINITY;
    for n in after + 1..after + 5000 {
        let lb = log_bound(n, s, sup_norm, c, derivative)?;
        let term = lb.exp();
        total += term;
        // terms decay super-geometrically once past their peak
        if lb < prev && term <= 1e-17 * total {
            break;
        }
        prev = lb;
    }
    Ok(total)
}

/// Σ_{n > after} truncation_bound(n): bound on the neglected density terms.
pub fn tail_bound(after: usize, s: f64, sup_norm: f64, c: &KernelBoundConstants) -> Result<f64> {
    tail_sum(after, s, sup_norm, c, true)
}

/// Σ_{n > after} value_bound(n): bound on the neglected survival terms.
pub fn value_tail_bound(after: usize, s: f64, sup_norm: f64, c: &KernelBoundConstants) -> Result<f64> {
    tail_sum(after, s, sup_norm, c, false)
}

/// Δa(u, v) = a(x2) - a(x1) at the wedge point with rotated coordinates (u, v).
#[inline]
fn drift_jump(d: &DriftSpec, u: f64, v: f64) -> f64 {
    d.evaluate((v + u) * FRAC_1_SQRT_2) - d.evaluate((v - u) * FRAC_1_SQRT_2)
}

/// ∫_0^s f(r) dr split at s/2 with r = (s/2)w² near 0 and s - r = (s/2)w² near s.
fn time_integral<F: FnMut(f64, f64) -> f64>(gl: &GaussLegendre, s: f64, mut f: F) -> f64 {
    let half = 0.5 * s;
    let mut total = 0.0;
    for (w, wt) in gl.mapped(0.0, 1.0) {
        let r = half * w * w;
        total += wt * s * w * f(r, s - r);
        let q = half * w * w;
        total += wt * s * w * f(s - q, q);
    }
    total
}

/// ∂_{x2} W_1((x, x), t) by tensor Gauss–Legendre quadrature.
///
/// With u = σp, σ² = τr/t, v = √2 x + √τ q and τ = t - r the integrand becomes
/// -(√2 / 2π√π) (√r / t√τ) p e^{-(p²+q²)/2} Δa(u, v).
fn density_term1_quadrature(x: f64, t: f64, d: &DriftSpec, nodes: usize) -> f64 {
    let gt = GaussLegendre::cached(nodes);
    let gp = GaussLegendre::cached(nodes);
    let gq = GaussLegendre::cached(2 * nodes);
    let v0 = SQRT_2 * x;
    let integral = time_integral(gt, t, |r, tau| {
        if r <= 0.0 || tau <= 0.0 {
            return 0.0;
        }
        let sigma = (tau * r / t).sqrt();
        let st = tau.sqrt();
        let mut inner = 0.0;
        for (p, wp) in gp.mapped(0.0, GAUSS_CUT) {
            let fp = wp * p * (-0.5 * p * p).exp();
            let u = sigma * p;
            let mut acc = 0.0;
            for (q, wq) in gq.mapped(-GAUSS_CUT, GAUSS_CUT) {
                acc += wq * (-0.5 * q * q).exp() * drift_jump(d, u, v0 + st * q);
            }
            inner += fp * acc;
        }
        r.sqrt() / (t * st) * inner
    });
    -SQRT_2 / (2.0 * PI * PI.sqrt()) * integral
}

/// W_1(x, s) by tensor Gauss–Legendre quadrature.
///
/// Completing the square in u leaves Gaussians of width σ = √(τr/s) centred at
/// ±μ, μ = u_x r / s, and an r-independent prefactor e^{-u_x²/2s} / (2π√(πs)).
fn w_term1_quadrature(x: WedgePoint, s: f64, d: &DriftSpec, nodes: usize) -> f64 {
    let rx = x.rotated();
    if rx.u == 0.0 {
        return 0.0;
    }
    let gt = GaussLegendre::cached(nodes);
    let gp = GaussLegendre::cached(nodes);
    let gq = GaussLegendre::cached(2 * nodes);
    let integral = time_integral(gt, s, |r, tau| {
        if r <= 0.0 || tau <= 0.0 {
            return 0.0;
        }
        let sigma = (tau * r / s).sqrt();
        let mu = rx.u * r / s;
        let st = tau.sqrt();
        let mut total = 0.0;
        for (q, wq) in gq.mapped(-GAUSS_CUT, GAUSS_CUT) {
            let v = rx.v + st * q;
            let mut direct = 0.0;
            let lo = (-mu / sigma).max(-GAUSS_CUT);
            if lo < GAUSS_CUT {
                for (p, wp) in gp.mapped(lo, GAUSS_CUT) {
                    direct += wp * (-0.5 * p * p).exp() * drift_jump(d, mu + sigma * p, v);
                }
            }
            let mut image = 0.0;
            let lo = mu / sigma;
            if lo < GAUSS_CUT {
                for (p, wp) in gp.mapped(lo, GAUSS_CUT) {
                    image += wp * (-0.5 * p * p).exp() * drift_jump(d, -mu + sigma * p, v);
                }
            }
            total += wq * (-0.5 * q * q).exp() * (direct - image);
        }
        total
    });
    -(-rx.u * rx.u / (2.0 * s)).exp() / (2.0 * PI * (PI * s).sqrt()) * integral
}

/// Quadrature value and error estimate from two resolutions.
fn with_quad_error<F: Fn(usize) -> f64>(nodes: usize, f: F) -> (f64, f64) {
    let fine = f(nodes);
    let coarse = f((3 * nodes / 4).max(4));
    (fine, (fine - coarse).abs())
}

/// What the last factor of the sampled chain is.
#[derive(Clone, Copy)]
enum ChainEnd {
    /// ∂_{x2} g at a diagonal point: density terms.
    DiagonalDerivative,
    /// g itself: survival terms.
    Value,
}

#[inline]
fn in_wedge(y: [f64; 2]) -> bool {
    y[0] < y[1]
}

/// ∇^a_x g_Δ(x, y) divided by the Gaussian proposal density of y around x.
#[inline]
fn drift_grad_ratio(d: &DriftSpec, delta: f64, x: [f64; 2], y: [f64; 2]) -> f64 {
    let ux = (x[1] - x[0]) * FRAC_1_SQRT_2;
    let uy = (y[1] - y[0]) * FRAC_1_SQRT_2;
    let rho = (-2.0 * ux * uy / delta).exp();
    // y* = (y2, y1)
    let g1 = (-(x[0] - y[0]) + (x[0] - y[1]) * rho) / delta;
    let g2 = (-(x[1] - y[1]) + (x[1] - y[0]) * rho) / delta;
    d.evaluate(x[0]) * g1 + d.evaluate(x[1]) * g2
}

/// One importance-sampled weight of the n-th term.
///
/// Gaps between consecutive times follow a Dirichlet law with exponent 1/2 on
/// every singular factor, which cancels the (Δr)^{-1/2} singularities; the
/// spatial chain runs backward from x with Gaussian links of matching variance.
fn chain_weight<R: Rng>(rng: &mut R, n: usize, x: [f64; 2], s: f64, d: &DriftSpec, end: ChainEnd, norm: f64) -> f64 {
    debug_assert!(n >= 1);
    // gaps[0] belongs to the W_0 factor, gaps[n] to the final factor
    let mut gaps = [0.0f64; 16];
    let mut total = 0.0;
    for (j, gap) in gaps.iter_mut().enumerate().take(n + 1) {
        let g = if j == n && matches!(end, ChainEnd::Value) {
            // Gamma(1)
            -(1.0 - rng.random::<f64>()).ln()
        } else {
            // Gamma(1/2) up to scale
            let z: f64 = rng.sample(StandardNormal);
            0.5 * z * z
        };
        *gap = g;
        total += g;
    }
    let mut time_weight = norm;
    for (j, gap) in gaps.iter_mut().enumerate().take(n + 1) {
        *gap *= s / total;
        if *gap <= 0.0 {
            return 0.0;
        }
        if !(j == n && matches!(end, ChainEnd::Value)) {
            time_weight *= gap.sqrt();
        }
    }
    let mut weight = time_weight;
    let final_gap = gaps[n];
    let sd = final_gap.sqrt();
    let mut y = [
        x[0] + sd * rng.sample::<f64, _>(StandardNormal),
        x[1] + sd * rng.sample::<f64, _>(StandardNormal),
    ];
    if !in_wedge(y) {
        return 0.0;
    }
    match end {
        ChainEnd::DiagonalDerivative => weight *= (y[1] - y[0]) / final_gap,
        ChainEnd::Value => {
            let ux = (x[1] - x[0]) * FRAC_1_SQRT_2;
            let uy = (y[1] - y[0]) * FRAC_1_SQRT_2;
            weight *= 1.0 - (-2.0 * ux * uy / final_gap).exp();
        }
    }
    for j in (1..n).rev() {
        let gap = gaps[j];
        let sd = gap.sqrt();
        let prev = [
            y[0] + sd * rng.sample::<f64, _>(StandardNormal),
            y[1] + sd * rng.sample::<f64, _>(StandardNormal),
        ];
        if !in_wedge(prev) {
            return 0.0;
        }
        weight *= drift_grad_ratio(d, gap, y, prev);
        y = prev;
        if weight == 0.0 {
            return 0.0;
        }
    }
    // ∇^a W_0(y, r_1) = (a(y2) - a(y1)) e^{-(y2-y1)²/4r} / √(πr)
    let r1 = gaps[0];
    let du = y[1] - y[0];
    weight *= (d.evaluate(y[1]) - d.evaluate(y[0])) * (-du * du / (4.0 * r1)).exp() / (PI * r1).sqrt();
    if n % 2 == 1 {
        -weight
    } else {
        weight
    }
}

fn mc_term(n: usize, x: [f64; 2], s: f64, d: &DriftSpec, cfg: &SeriesConfig, end: ChainEnd) -> Result<(f64, f64)> {
    if n + 1 > 16 {
        return Err(Error::InvalidParameter("Monte Carlo series terms support n <= 15".into()));
    }
    let norm = simplex_gamma_integral(n, s, matches!(end, ChainEnd::DiagonalDerivative))?;
    let label = match end {
        ChainEnd::DiagonalDerivative => "series-density",
        ChainEnd::Value => "series-survival",
    };
    let domain = rng::domain(label, n as u64);
    let m = rng::moments(cfg.samples, |i| {
        let mut r = rng::stream(cfg.seed, domain, i);
        chain_weight(&mut r, n, x, s, d, end, norm)
    });
    Ok((m.mean(), m.stderr()))
}

/// ∂_{x2} W_n((x, x), t).
pub fn density_term(n: usize, x: f64, t: f64, d: &DriftSpec, cfg: &SeriesConfig) -> Result<SeriesTermEstimate> {
    check_time(t)?;
    check_series_input(n, d, cfg)?;
    if n == 0 {
        let v = density_zero(t)?;
        return Ok(SeriesTermEstimate { n, value: v, stderr: 0.0, quad_error: 0.0, bound: v });
    }
    let bound = truncation_bound(n, t, bound_norm(d), &cfg.constants)?;
    if d.is_constant() {
        return Ok(SeriesTermEstimate { n, value: 0.0, stderr: 0.0, quad_error: 0.0, bound });
    }
    if n == 1 {
        let (value, quad_error) = with_quad_error(cfg.quad_nodes, |m| density_term1_quadrature(x, t, d, m));
        return Ok(SeriesTermEstimate { n, value, stderr: 0.0, quad_error, bound });
    }
    let (value, stderr) = mc_term(n, [x, x], t, d, cfg, ChainEnd::DiagonalDerivative)?;
    Ok(SeriesTermEstimate { n, value, stderr, quad_error: 0.0, bound })
}

/// ∂_{x2} W_n((x, x), t) by Monte Carlo for any n >= 1, including n = 1.
///
/// Independent of the quadrature route for n = 1.
pub fn density_term_mc(n: usize, x: f64, t: f64, d: &DriftSpec, cfg: &SeriesConfig) -> Result<SeriesTermEstimate> {
    check_time(t)?;
    check_series_input(n, d, cfg)?;
    if n == 0 {
        return density_term(0, x, t, d, cfg);
    }
    let bound = truncation_bound(n, t, bound_norm(d), &cfg.constants)?;
    let (value, stderr) = mc_term(n, [x, x], t, d, cfg, ChainEnd::DiagonalDerivative)?;
    Ok(SeriesTermEstimate { n, value, stderr, quad_error: 0.0, bound })
}

/// W_n(x, s) (term 0 exact, 1 by quadrature, >= 2 by Monte Carlo).
pub fn w_term(n: usize, x: WedgePoint, s: f64, d: &DriftSpec, cfg: &SeriesConfig) -> Result<SeriesTermEstimate> {
    check_time(s)?;
    check_series_input(n, d, cfg)?;
    if n == 0 {
        let v = w0(x, s)?;
        return Ok(SeriesTermEstimate { n, value: v, stderr: 0.0, quad_error: 0.0, bound: 1.0 });
    }
    let bound = value_bound(n, s, bound_norm(d), &cfg.constants)?;
    if d.is_constant() || !x.is_interior() {
        return Ok(SeriesTermEstimate { n, value: 0.0, stderr: 0.0, quad_error: 0.0, bound });
    }
    if n == 1 {
        let (value, quad_error) = with_quad_error(cfg.quad_nodes, |m| w_term1_quadrature(x, s, d, m));
        return Ok(SeriesTermEstimate { n, value, stderr: 0.0, quad_error, bound });
    }
    let (value, stderr) = mc_term(n, x.as_array(), s, d, cfg, ChainEnd::Value)?;
    Ok(SeriesTermEstimate { n, value, stderr, quad_error: 0.0, bound })
}

/// W_n(x, s) by Monte Carlo for any n >= 1.
pub fn w_term_mc(n: usize, x: WedgePoint, s: f64, d: &DriftSpec, cfg: &SeriesConfig) -> Result<SeriesTermEstimate> {
    check_time(s)?;
    check_series_input(n, d, cfg)?;
    if n == 0 {
        return w_term(0, x, s, d, cfg);
    }
    let bound = value_bound(n, s, bound_norm(d), &cfg.constants)?;
    let (value, stderr) = mc_term(n, x.as_array(), s, d, cfg, ChainEnd::Value)?;
    Ok(SeriesTermEstimate { n, value, stderr, quad_error: 0.0, bound })
}

/// A partial sum of the survival series with its error budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSum {
    pub value: f64,
    pub stderr: f64,
    pub quad_error: f64,
    /// Bound on Σ_{n > N} |W_n|.
    pub tail_bound: f64,
    pub terms: Vec<SeriesTermEstimate>,
}

/// Σ_{n <= N} W_n(x, s).
pub fn w_partial(x: WedgePoint, s: f64, d: &DriftSpec, last: usize, cfg: &SeriesConfig) -> Result<PartialSum> {
    let terms = (0..=last)
        .map(|n| w_term(n, x, s, d, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(PartialSum {
        value: terms.iter().map(|t| t.value).sum(),
        stderr: terms.iter().map(|t| t.stderr * t.stderr).sum::<f64>().sqrt(),
        quad_error: terms.iter().map(|t| t.quad_error).sum(),
        tail_bound: value_tail_bound(last, s, bound_norm(d), &cfg.constants)?,
        terms,
    })
}

/// p_t(x) summed until the certified tail drops below `tol` or n_max is reached.
pub fn density_series(x: f64, t: f64, d: &DriftSpec, tol: f64, cfg: &SeriesConfig) -> Result<DensityEstimate> {
    check_time(t)?;
    d.require_bounded("series")?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let c = &cfg.constants;
    let mut last = 0;
    let mut tail = tail_bound(0, t, bound_norm(d), c)?;
    while tail >= tol && last < cfg.n_max {
        last += 1;
        tail = tail_bound(last, t, bound_norm(d), c)?;
    }
    let mut value = 0.0;
    let mut var = 0.0;
    let mut quad = 0.0;
    for n in 0..=last {
        let term = density_term(n, x, t, d, cfg)?;
        value += term.value;
        var += term.stderr * term.stderr;
        quad += term.quad_error;
    }
    let flag = if tail < tol { EstimateFlag::Ok } else { EstimateFlag::ToleranceNotMet };
    Ok(DensityEstimate {
        value,
        stat_error: var.sqrt(),
        det_bound: tail + quad,
        method: Method::Series,
        flag,
        config_digest: String::new(),
        seed: Some(cfg.seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(samples: u64) -> SeriesConfig {
        SeriesConfig { samples, seed: 42, ..SeriesConfig::default() }
    }

    #[test]
    fn w0_examples() {
        assert_eq!(w0(WedgePoint::diagonal(0.3), 1.0).unwrap(), 0.0);
        let v = w0(WedgePoint::new(0.0, 1.0).unwrap(), 1.0).unwrap();
        assert!((v - 0.520_499_877_813_046_5).abs() < 1e-12, "{v:.17}");
        assert!((w0(WedgePoint::new(0.0, 100.0).unwrap(), 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(w0(WedgePoint::new(0.0, 1.0).unwrap(), 0.0).is_err());
    }

    #[test]
    fn grad_w0_examples() {
        let (a, b) = grad_w0(WedgePoint::diagonal(2.0), 1.0).unwrap();
        assert!((b - 0.564_189_583_547_756_3).abs() < 1e-15);
        assert_eq!(a + b, 0.0);
        // finite-difference oracle
        let x = WedgePoint::new(0.0, 0.5).unwrap();
        let h = 1e-6;
        let fd = (w0(WedgePoint::new(0.0, 0.5 + h).unwrap(), 0.7).unwrap()
            - w0(WedgePoint::new(0.0, 0.5 - h).unwrap(), 0.7).unwrap())
            / (2.0 * h);
        assert!((grad_w0(x, 0.7).unwrap().1 - fd).abs() < 1e-7);
    }

    #[test]
    fn term_zero_is_closed_form() {
        let t = density_term(0, 3.0, 1.0, &DriftSpec::tanh(0.5, 1.0).unwrap(), &cfg(10)).unwrap();
        assert!((t.value - 0.564_189_583_547_756_3).abs() < 1e-15);
        assert_eq!(t.stderr, 0.0);
    }

    #[test]
    fn zero_drift_terms_vanish() {
        let z = DriftSpec::zero();
        for n in 1..=4 {
            let t = density_term(n, 0.0, 1.0, &z, &cfg(100)).unwrap();
            assert_eq!(t.value, 0.0);
            assert_eq!(t.bound, 0.0);
        }
        let e = density_series(0.4, 1.0, &z, 1e-12, &cfg(100)).unwrap();
        assert_eq!(e.value, 1.0 / PI.sqrt());
        assert_eq!(e.det_bound, 0.0);
        assert_eq!(e.flag, EstimateFlag::Ok);
        let e = density_series(0.0, 0.25, &z, 1e-12, &cfg(100)).unwrap();
        assert!((e.value - 1.128_379_167_095_512_6).abs() < 1e-14);
        let p = w_partial(WedgePoint::new(0.0, 1.0).unwrap(), 1.0, &z, 3, &cfg(100)).unwrap();
        assert!((p.value - 0.520_499_877_813_046_5).abs() < 1e-12);
    }

    #[test]
    fn unbounded_drift_and_large_index_are_refused() {
        let err = density_term(1, 0.0, 1.0, &DriftSpec::linear(1.0), &cfg(10)).unwrap_err();
        assert_eq!(err.to_string(), "unbounded drift unsupported by series");
        assert!(matches!(
            density_term(5, 0.0, 1.0, &DriftSpec::zero(), &cfg(10)),
            Err(Error::TermIndexTooLarge { n: 5, n_max: 4 })
        ));
    }

    #[test]
    fn first_term_matches_linear_response() {
        // for a(x) = c x the first-order density correction is -c√t / (2√π),
        // the linear part of the closed form √(2/π)√c / √(e^{2tc} - 1)
        for (c, t) in [(0.3, 1.0), (-0.2, 2.0)] {
            let d = DriftSpec::linear(c);
            let v = density_term1_quadrature(0.7, t, &d, 32);
            let expected = -c * f64::sqrt(t) / (2.0 * PI.sqrt());
            assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
        }
    }

    #[test]
    fn first_term_quadrature_agrees_with_monte_carlo() {
        let d = DriftSpec::tanh(0.5, 1.0).unwrap();
        let q = density_term(1, 0.3, 1.0, &d, &cfg(10)).unwrap();
        let m = density_term_mc(1, 0.3, 1.0, &d, &cfg(200_000)).unwrap();
        assert!(q.quad_error < 1e-8);
        assert!((q.value - m.value).abs() < 4.0 * m.stderr + 1e-4, "{} vs {} ± {}", q.value, m.value, m.stderr);
    }

    #[test]
    fn survival_term_quadrature_agrees_with_monte_carlo() {
        let d = DriftSpec::tanh(0.5, 1.0).unwrap();
        let x = WedgePoint::new(-0.2, 0.6).unwrap();
        let q = w_term(1, x, 1.0, &d, &cfg(10)).unwrap();
        let m = w_term_mc(1, x, 1.0, &d, &cfg(200_000)).unwrap();
        assert!((q.value - m.value).abs() < 4.0 * m.stderr + 1e-4, "{} vs {} ± {}", q.value, m.value, m.stderr);
    }

    #[test]
    fn density_term_is_derivative_of_survival_term() {
        // ∂_{x2} W_1 at the diagonal by a one-sided difference of W_1
        let d = DriftSpec::tanh(0.5, 1.0).unwrap();
        let t = 1.0;
        let h = 1e-3;
        let w1 = |gap: f64| w_term1_quadrature(WedgePoint::new(0.2, 0.2 + gap).unwrap(), t, &d, 48);
        let fd = (4.0 * w1(h) - w1(2.0 * h)) / (2.0 * h);
        let q = density_term1_quadrature(0.2, t, &d, 48);
        assert!((fd - q).abs() < 1e-5, "{fd} vs {q}");
    }

    #[test]
    fn constant_drift_terms_cancel() {
        let d = DriftSpec::constant(1.0);
        assert_eq!(density_term(1, 0.0, 1.0, &d, &cfg(10)).unwrap().value, 0.0);
        for n in 2..=3 {
            let t = density_term(n, 0.0, 1.0, &d, &cfg(100_000)).unwrap();
            assert!(t.value.abs() <= 4.0 * t.stderr + 1e-12, "n={n}: {} ± {}", t.value, t.stderr);
        }
    }

    #[test]
    fn truncation_bound_properties() {
        let c = KernelBoundConstants::constructive();
        for n in 1..6 {
            assert_eq!(truncation_bound(n, 1.0, 0.0, &c).unwrap(), 0.0);
        }
        let b = |n, s, a| truncation_bound(n, s, a, &c).unwrap();
        assert!(b(2, 1.0, 0.6) > b(2, 1.0, 0.5));
        assert!(b(2, 1.5, 0.5) > b(2, 1.0, 0.5));
        // successive ratios shrink: Γ growth wins over the geometric factor
        let ratios: Vec<f64> = (1..12).map(|n| b(n + 1, 1.0, 0.5) / b(n, 1.0, 0.5)).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));
        let d = DriftSpec::tanh(0.5, 1.0).unwrap();
        let t1 = density_term(1, 0.0, 1.0, &d, &cfg(10)).unwrap();
        assert!(t1.value.abs() <= b(1, 1.0, 0.5));
        // tail sums are finite and decrease with the cut
        let t0 = tail_bound(0, 1.0, 0.5, &c).unwrap();
        let t4 = tail_bound(4, 1.0, 0.5, &c).unwrap();
        assert!(t0.is_finite() && t4 < t0);
    }

    #[test]
    fn monte_carlo_terms_are_reproducible() {
        let d = DriftSpec::tanh(0.5, 1.0).unwrap();
        let a = density_term(2, 0.0, 1.0, &d, &cfg(5000)).unwrap();
        let b = rng::with_workers(Some(3), || density_term(2, 0.0, 1.0, &d, &cfg(5000)).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
