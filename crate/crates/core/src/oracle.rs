//! Closed-form one-point densities for zero and linear drift.

use std::f64::consts::{FRAC_2_PI, PI};

use crate::error::{check_time, Error, Result};

/// Families with a closed-form density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedFormDensity {
    ZeroDrift,
    /// a(x) = c x with c != 0.
    LinearDrift { c: f64 },
}

impl ClosedFormDensity {
    /// Density at time t; it does not depend on the position.
    pub fn value(&self, t: f64) -> Result<f64> {
        match *self {
            ClosedFormDensity::ZeroDrift => density_zero(t),
            ClosedFormDensity::LinearDrift { c } => density_linear(c, t),
        }
    }
}

/// 1/√(πt).
pub fn density_zero(t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(1.0 / (PI * t).sqrt())
}

/// √(2/π) |c|^{1/2} / ψ(t, c) with ψ² = e^{2tc} - 1 (c > 0) or 1 - e^{2tc} (c < 0).
pub fn density_linear(c: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if c == 0.0 {
        return Err(Error::InvalidParameter(
            "linear drift with c = 0 is the zero drift; use density_zero".into(),
        ));
    }
    if !c.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite slope {c}")));
    }
    // expm1 keeps ψ accurate as c -> 0
    let psi2 = if c > 0.0 { (2.0 * t * c).exp_m1() } else { -(2.0 * t * c).exp_m1() };
    Ok(FRAC_2_PI.sqrt() * c.abs().sqrt() / psi2.sqrt())
}
