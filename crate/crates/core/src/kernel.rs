//! Heat kernel and the Green function of planar Brownian motion killed on
//! the diagonal of the wedge {x1 < x2}, built by the method of images.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;

use crate::drift::DriftSpec;
use crate::error::{check_time, Error, Result};
use crate::quad::GaussLegendre;

/// A point of the closed wedge x1 <= x2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WedgePoint {
    pub x1: f64,
    pub x2: f64,
}

/// Rotated image of a wedge point: u = (x2 - x1)/√2 >= 0, v = (x1 + x2)/√2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedCoords {
    pub u: f64,
    pub v: f64,
}

impl WedgePoint {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        if x1 <= x2 {
            Ok(Self { x1, x2 })
        } else {
            Err(Error::OutsideWedge(x1, x2))
        }
    }

    pub fn diagonal(u: f64) -> Self {
        Self { x1: u, x2: u }
    }

    pub fn is_interior(&self) -> bool {
        self.x1 < self.x2
    }

    pub fn rotated(&self) -> RotatedCoords {
        RotatedCoords {
            u: (self.x2 - self.x1) * FRAC_1_SQRT_2,
            v: (self.x1 + self.x2) * FRAC_1_SQRT_2,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.x1, self.x2]
    }
}

impl RotatedCoords {
    pub fn to_wedge(&self) -> WedgePoint {
        WedgePoint {
            x1: (self.v - self.u) * FRAC_1_SQRT_2,
            x2: (self.v + self.u) * FRAC_1_SQRT_2,
        }
    }
}

#[inline]
fn dist2(x: [f64; 2], y: [f64; 2]) -> f64 {
    let a = x[0] - y[0];
    let b = x[1] - y[1];
    a * a + b * b
}

#[inline]
pub(crate) fn heat_raw(r: f64, x: [f64; 2], y: [f64; 2]) -> f64 {
    (-dist2(x, y) / (2.0 * r)).exp() / (2.0 * PI * r)
}

#[inline]
pub(crate) fn green_raw(r: f64, x: [f64; 2], y: [f64; 2]) -> f64 {
    let ys = [y[1], y[0]];
    ((-dist2(x, y) / (2.0 * r)).exp() - (-dist2(x, ys) / (2.0 * r)).exp()) / (2.0 * PI * r)
}

/// Gradient of g_r(x, y) in its first argument.
#[inline]
pub(crate) fn grad_green_raw(r: f64, x: [f64; 2], y: [f64; 2]) -> [f64; 2] {
    let ys = [y[1], y[0]];
    let e = (-dist2(x, y) / (2.0 * r)).exp();
    let es = (-dist2(x, ys) / (2.0 * r)).exp();
    let c = 1.0 / (2.0 * PI * r * r);
    [
        c * (-(x[0] - y[0]) * e + (x[0] - ys[0]) * es),
        c * (-(x[1] - y[1]) * e + (x[1] - ys[1]) * es),
    ]
}

/// Free-space heat kernel (2πr)^{-1} exp(-|x - y|² / 2r).
pub fn heat2d(r: f64, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
    check_time(r)?;
    Ok(heat_raw(r, x, y))
}

/// Transition density g_r(x, y) of the Brownian motion killed on the diagonal.
pub fn green_killed(r: f64, x: WedgePoint, y: WedgePoint) -> Result<f64> {
    check_time(r)?;
    // exact zero on the diagonal: both exponentials are the same number
    Ok(green_raw(r, x.as_array(), y.as_array()).max(0.0))
}

/// (∂_{x1} g_r(x, y), ∂_{x2} g_r(x, y)).
pub fn grad_green(r: f64, x: WedgePoint, y: WedgePoint) -> Result<(f64, f64)> {
    check_time(r)?;
    let g = grad_green_raw(r, x.as_array(), y.as_array());
    Ok((g[0], g[1]))
}

/// ∇^a_x g_r(x, y) = a(x1) ∂_{x1} g + a(x2) ∂_{x2} g.
pub fn drift_grad_green(r: f64, x: WedgePoint, y: WedgePoint, d: &DriftSpec) -> Result<f64> {
    let (g1, g2) = grad_green(r, x, y)?;
    Ok(d.evaluate(x.x1) * g1 + d.evaluate(x.x2) * g2)
}

/// Constants (K, γ) of the Gaussian bound on the derivatives of g_r.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelBoundConstants {
    pub k: f64,
    pub gamma: f64,
}

impl KernelBoundConstants {
    pub const GAMMA: f64 = 0.25;
    pub const SAFETY: f64 = 1.05;

    /// γ = 1/4 and K the sampled supremum of r^{3/2}(|∂1 g| + |∂2 g|) e^{γ|x-y|²/r},
    /// inflated by 5%.
    ///
    /// The sum of both partials dominates |∇^a g| / min(|a(x1)| + |a(x2)|, ‖a‖∞)
    /// as well as each single partial, so one K serves both bounds.
    pub fn constructive() -> Self {
        static CONSTANTS: OnceLock<KernelBoundConstants> = OnceLock::new();
        *CONSTANTS.get_or_init(|| {
            let gamma = Self::GAMMA;
            let mut sup = 0.0f64;
            // scale invariance: r = 1, and x on the line v = 0
            let nu = 120;
            let nv = 240;
            for i in 0..=nu {
                let ux = 7.0 * i as f64 / nu as f64;
                let x = RotatedCoords { u: ux, v: 0.0 }.to_wedge().as_array();
                for j in 0..=nu {
                    let uy = 7.0 * j as f64 / nu as f64;
                    for l in 0..=nv {
                        let vy = -7.0 + 14.0 * l as f64 / nv as f64;
                        let y = RotatedCoords { u: uy, v: vy }.to_wedge().as_array();
                        let g = grad_green_raw(1.0, x, y);
                        let s = (g[0].abs() + g[1].abs()) * (gamma * dist2(x, y)).exp();
                        sup = sup.max(s);
                    }
                }
            }
            KernelBoundConstants { k: Self::SAFETY * sup, gamma }
        })
    }
}

/// G_a(x) = min(|a(x1)| + |a(x2)|, ‖a‖∞).
pub fn drift_weight(d: &DriftSpec, x: WedgePoint) -> f64 {
    (d.evaluate(x.x1).abs() + d.evaluate(x.x2).abs()).min(d.sup_norm)
}

/// K G_a(x) r^{-3/2} exp(-γ |x - y|² / r), the Gaussian bound on |∇^a_x g_r(x, y)|.
pub fn grad_bound(r: f64, x: WedgePoint, d: &DriftSpec, y: WedgePoint, c: &KernelBoundConstants) -> Result<f64> {
    check_time(r)?;
    Ok(c.k * drift_weight(d, x) * r.powf(-1.5) * (-c.gamma * dist2(x.as_array(), y.as_array()) / r).exp())
}

/// Closed form of ∫_{Δn(s)} [(s - r_n)^{-1/2}] Π (r_j - r_{j-1})^{-1/2} dr.
///
/// With the final factor: π^{(n+1)/2} s^{(n-1)/2} / Γ((n+1)/2).
/// Without it: 2 π^{n/2} s^{n/2} / (n Γ(n/2)).
pub fn simplex_gamma_integral(n: usize, s: f64, with_final_factor: bool) -> Result<f64> {
    check_time(s)?;
    if n == 0 {
        return Err(Error::InvalidParameter("simplex dimension must be at least 1".into()));
    }
    let nf = n as f64;
    let v = if with_final_factor {
        (0.5 * (nf + 1.0) * PI.ln() + 0.5 * (nf - 1.0) * s.ln() - ln_gamma(0.5 * (nf + 1.0))).exp()
    } else {
        2.0 * (0.5 * nf * PI.ln() + 0.5 * nf * s.ln() - ln_gamma(0.5 * nf)).exp() / nf
    };
    Ok(v)
}

/// The same simplex integrals by nested one-dimensional Gauss–Legendre quadrature.
///
/// Integrates one time variable per level; each level is split at s/2 and the
/// square-root singularities at both ends are removed by r = (s/2) w².
pub fn simplex_gamma_quadrature(n: usize, s: f64, with_final_factor: bool, nodes: usize) -> Result<f64> {
    check_time(s)?;
    if n == 0 {
        return Err(Error::InvalidParameter("simplex dimension must be at least 1".into()));
    }
    let gl = GaussLegendre::new(nodes);
    if with_final_factor {
        Ok(with_final(&gl, n, s))
    } else {
        Ok(split_singular(&gl, s, |r| with_final(&gl, n - 1, r), |_| 1.0))
    }
}

/// ∫_0^s f(r) h(s - r) dr where f may carry r^{-1/2} and h may carry (s - r)^{-1/2}.
fn split_singular<F: Fn(f64) -> f64, H: Fn(f64) -> f64>(gl: &GaussLegendre, s: f64, f: F, h: H) -> f64 {
    let half = 0.5 * s;
    let left = gl.integrate(0.0, 1.0, |w| {
        let r = half * w * w;
        f(r) * h(s - r) * s * w
    });
    let right = gl.integrate(0.0, 1.0, |w| {
        let q = half * w * w;
        f(s - q) * h(q) * s * w
    });
    left + right
}

fn with_final(gl: &GaussLegendre, n: usize, s: f64) -> f64 {
    if n == 0 {
        return 1.0 / s.sqrt();
    }
    split_singular(gl, s, |r| with_final(gl, n - 1, r), |q| 1.0 / q.sqrt())
}

/// ∫_{D2} g_r(x, z) g_s(z, y) dz by tensor quadrature in rotated coordinates,
/// truncated at radius 8√(r + s) around the two points.
pub fn chapman_kolmogorov(r: f64, s: f64, x: WedgePoint, y: WedgePoint) -> Result<f64> {
    check_time(r)?;
    check_time(s)?;
    let rx = x.rotated();
    let ry = y.rotated();
    let reach = 8.0 * (r + s).sqrt();
    let u_hi = rx.u.max(ry.u) + reach;
    let v_lo = rx.v.min(ry.v) - reach;
    let v_hi = rx.v.max(ry.v) + reach;
    let panel = 0.25 * r.min(s).sqrt();
    let gl = GaussLegendre::cached(12);
    let panels = |lo: f64, hi: f64| {
        let m = ((hi - lo) / panel).ceil().max(1.0) as usize;
        let h = (hi - lo) / m as f64;
        (0..m).flat_map(move |p| gl.mapped(lo + h * p as f64, lo + h * (p + 1) as f64))
    };
    let xs = x.as_array();
    let ys = y.as_array();
    let mut total = 0.0;
    for (u, wu) in panels(0.0, u_hi) {
        for (v, wv) in panels(v_lo, v_hi) {
            let z = RotatedCoords { u, v }.to_wedge().as_array();
            total += wu * wv * green_raw(r, xs, z) * green_raw(s, z, ys);
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INV_2PI: f64 = 0.159_154_943_091_895_35;

    fn wedge() -> impl Strategy<Value = WedgePoint> {
        (-5.0f64..5.0, 0.0f64..5.0).prop_map(|(a, gap)| WedgePoint { x1: a, x2: a + gap })
    }

    #[test]
    fn heat_examples() {
        assert!((heat2d(1.0, [0.0, 0.0], [0.0, 0.0]).unwrap() - INV_2PI).abs() < 1e-15);
        let v = heat2d(1.0, [0.0, 0.0], [0.0, 2.0]).unwrap();
        assert!((v - 0.021_539_279_301_848_634).abs() < 1e-12);
        assert!(heat2d(0.0, [0.0, 0.0], [0.0, 0.0]).is_err());
        assert!(heat2d(-1.0, [0.0, 0.0], [0.0, 0.0]).is_err());
    }

    #[test]
    fn heat_kernel_has_unit_mass() {
        // polar quadrature on radius <= 8√r
        let r: f64 = 0.7;
        let gl = GaussLegendre::new(80);
        let radial = gl.integrate(0.0, 8.0 * r.sqrt(), |rho| {
            2.0 * PI * rho * heat_raw(r, [0.0, 0.0], [rho, 0.0])
        });
        assert!((radial - 1.0).abs() < 1e-8);
    }

    #[test]
    fn green_examples() {
        let v = green_killed(1.0, WedgePoint::new(0.0, 2.0).unwrap(), WedgePoint::new(0.0, 2.0).unwrap()).unwrap();
        assert!((v - 0.156_239_918_626_867_15).abs() < 1e-12);
        assert!(WedgePoint::new(1.0, 0.0).is_err());
        assert!(green_killed(0.0, WedgePoint::diagonal(0.0), WedgePoint::diagonal(0.0)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let fd = |r: f64, x: [f64; 2], y: [f64; 2]| {
            let h = 1e-5;
            [
                (green_raw(r, [x[0] + h, x[1]], y) - green_raw(r, [x[0] - h, x[1]], y)) / (2.0 * h),
                (green_raw(r, [x[0], x[1] + h], y) - green_raw(r, [x[0], x[1] - h], y)) / (2.0 * h),
            ]
        };
        for (x, y) in [([0.0, 1.0], [0.3, 0.9]), ([0.0, 2.0], [0.0, 2.0])] {
            let g = grad_green(1.0, WedgePoint::new(x[0], x[1]).unwrap(), WedgePoint::new(y[0], y[1]).unwrap()).unwrap();
            let f = fd(1.0, x, y);
            assert!((g.0 - f[0]).abs() < 1e-6 && (g.1 - f[1]).abs() < 1e-6);
        }
    }

    #[test]
    fn gradient_is_antisymmetric_on_the_diagonal() {
        let (a, b) = grad_green(0.4, WedgePoint::diagonal(0.3), WedgePoint::new(-0.2, 0.5).unwrap()).unwrap();
        assert!((a + b).abs() < 1e-15);
        assert!(b > 0.0);
    }

    #[test]
    fn grad_bound_examples() {
        let c = KernelBoundConstants::constructive();
        assert!(c.k > 0.0 && c.gamma == 0.25);
        let x = WedgePoint::new(0.0, 1.0).unwrap();
        let zero = DriftSpec::zero();
        assert_eq!(grad_bound(1.0, x, &zero, x, &c).unwrap(), 0.0);
        assert_eq!(drift_grad_green(1.0, x, x, &zero).unwrap(), 0.0);
        let one = DriftSpec::constant(1.0);
        let b = grad_bound(1.0, x, &one, x, &c).unwrap();
        assert!((b - c.k).abs() < 1e-15);
        assert!(drift_grad_green(1.0, x, x, &one).unwrap().abs() <= b);
    }

    #[test]
    fn simplex_closed_forms() {
        assert!((simplex_gamma_integral(1, 1.0, true).unwrap() - PI).abs() < 1e-14);
        assert!((simplex_gamma_integral(1, 1.0, false).unwrap() - 2.0).abs() < 1e-14);
        assert!((simplex_gamma_integral(2, 1.0, true).unwrap() - 2.0 * PI).abs() < 1e-13);
        for n in 1..=3 {
            for fin in [true, false] {
                for s in [0.5, 1.0, 2.0] {
                    let exact = simplex_gamma_integral(n, s, fin).unwrap();
                    let q = simplex_gamma_quadrature(n, s, fin, 24).unwrap();
                    assert!(((q - exact) / exact).abs() < 1e-6, "n={n} s={s} fin={fin}: {q} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn chapman_kolmogorov_holds() {
        let x = WedgePoint::new(0.0, 1.0).unwrap();
        let y = WedgePoint::new(-0.5, 0.7).unwrap();
        let lhs = chapman_kolmogorov(0.5, 0.7, x, y).unwrap();
        let rhs = green_raw(1.2, x.as_array(), y.as_array());
        assert!(((lhs - rhs) / rhs).abs() < 1e-3, "{lhs} vs {rhs}");
    }

    proptest! {
        #[test]
        fn green_vanishes_on_the_diagonal(u in -10.0f64..10.0, r in 0.01f64..5.0, y in wedge()) {
            prop_assert_eq!(green_killed(r, WedgePoint::diagonal(u), y).unwrap(), 0.0);
        }

        #[test]
        fn green_is_nonnegative_and_symmetric(r in 0.01f64..5.0, x in wedge(), y in wedge()) {
            let a = green_killed(r, x, y).unwrap();
            let b = green_killed(r, y, x).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn bound_dominates_drift_gradient(r in 0.01f64..4.0, x in wedge(), y in wedge(), k in -2.0f64..2.0, lam in 0.1f64..3.0) {
            let c = KernelBoundConstants::constructive();
            let d = DriftSpec::tanh(k, lam).unwrap();
            let lhs = drift_grad_green(r, x, y, &d).unwrap().abs();
            prop_assert!(lhs <= grad_bound(r, x, &d, y, &c).unwrap() * (1.0 + 1e-12));
        }
    }
}
