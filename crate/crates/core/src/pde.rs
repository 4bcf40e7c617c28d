//! Explicit finite differences for ∂_s W = ½ΔW − ∇^a W on the wedge.
//!
//! The solver works in rotated coordinates u = (x₂−x₁)/√2, v = (x₁+x₂)/√2 so
//! that the killing boundary is the grid line u = 0. There the equation reads
//! ∂_s W = ½(W_uu + W_vv) − b_u W_u − b_v W_v with
//! b_u = (a(x₂) − a(x₁))/√2 and b_v = (a(x₁) + a(x₂))/√2.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::drift::{DriftKind, DriftSpec};
use crate::error::{check_time, Error, Result};
use crate::estimate::{DensityEstimate, EstimateFlag, Method};

/// Largest admissible τ / min(h)².
pub const STABILITY: f64 = 0.45;

#[derive(Debug, Clone, PartialEq)]
pub struct RotatedGrid {
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub h_u: f64,
    pub h_v: f64,
    pub tau: f64,
    /// Early steps use τ·min(1, ramp·2^k); 1 disables the ramp.
    pub ramp: f64,
}

/// Margin 6√t + 2‖a‖t required around every evaluation point.
pub fn margin(t: f64, sup_norm: f64) -> f64 {
    6.0 * t.sqrt() + 2.0 * sup_norm * t
}

impl RotatedGrid {
    /// Square grid of step h covering the diagonal points x ∈ [x_lo, x_hi] with the required margins.
    pub fn for_window(x_lo: f64, x_hi: f64, t: f64, d: &DriftSpec, h: f64) -> Result<Self> {
        check_time(t)?;
        d.require_bounded("pde")?;
        if !(h > 0.0) || x_lo > x_hi {
            return Err(Error::InvalidParameter(format!("bad grid request h={h}, window [{x_lo}, {x_hi}]")));
        }
        let m = margin(t, d.sup_norm);
        let cells = |len: f64| ((len / h).ceil() as usize).max(8) as f64;
        let u_max = cells(m) * h;
        let v_lo = SQRT_2 * x_lo - m;
        let v_min = (v_lo / h).floor() * h;
        let v_max = v_min + cells(SQRT_2 * x_hi + m - v_min) * h;
        Ok(Self { u_max, v_min, v_max, h_u: h, h_v: h, tau: STABILITY * h * h, ramp: 1.0 })
    }

    pub fn for_point(x: f64, t: f64, d: &DriftSpec, h: f64) -> Result<Self> {
        Self::for_window(x, x, t, d, h)
    }

    pub fn nu(&self) -> usize {
        (self.u_max / self.h_u).round() as usize
    }

    pub fn nv(&self) -> usize {
        ((self.v_max - self.v_min) / self.h_v).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let int_ok = |len: f64, h: f64| {
            let r = len / h;
            (r - r.round()).abs() < 1e-6 && r.round() >= 8.0
        };
        if !(self.h_u > 0.0 && self.h_v > 0.0 && self.tau > 0.0) {
            return Err(Error::InvalidParameter("grid steps must be positive".into()));
        }
        if !int_ok(self.u_max, self.h_u) || !int_ok(self.v_max - self.v_min, self.h_v) {
            return Err(Error::InvalidParameter("grid extents must be integer multiples (>= 8) of the steps".into()));
        }
        if !(self.ramp > 0.0 && self.ramp <= 1.0) {
            return Err(Error::InvalidParameter(format!("ramp must lie in (0, 1], got {}", self.ramp)));
        }
        let h = self.h_u.min(self.h_v);
        if self.tau > STABILITY * h * h * (1.0 + 1e-12) {
            return Err(Error::Stability(format!("tau = {} exceeds {STABILITY}·h² = {}", self.tau, STABILITY * h * h)));
        }
        Ok(())
    }

    pub fn u(&self, i: usize) -> f64 {
        i as f64 * self.h_u
    }

    pub fn v(&self, j: usize) -> f64 {
        self.v_min + j as f64 * self.h_v
    }
}

/// Survival field W on the grid at time t, stored row-major with u fastest.
#[derive(Debug, Clone)]
pub struct WField {
    pub grid: RotatedGrid,
    pub t: f64,
    pub values: Vec<f64>,
    pub drift: String,
    pub sup_norm: f64,
    /// Start time of the full evolution.
    pub s0: f64,
    pub steps: usize,
}

impl WField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * (self.grid.nu() + 1) + i]
    }

    /// Writes `u,v,W` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "u,v,W")?;
        for j in 0..=self.grid.nv() {
            for i in 0..=self.grid.nu() {
                writeln!(out, "{},{},{}", self.grid.u(i), self.grid.v(j), self.at(i, j))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-cell stencil weights for W' = c0 W + e W_{i+1} + w W_{i−1} + n W_{j+1} + s W_{j−1}.
#[derive(Clone, Copy)]
struct Stencil {
    c0: f64,
    e: f64,
    w: f64,
    n: f64,
    s: f64,
}

#[inline(always)]
fn stencil(grid: &RotatedGrid, tau: f64, bu: f64, bv: f64) -> Stencil {
    let du = 0.5 * tau / (grid.h_u * grid.h_u);
    let dv = 0.5 * tau / (grid.h_v * grid.h_v);
    // upwind along the process drift (−b_u, −b_v)
    let au = -bu * tau / grid.h_u;
    let av = -bv * tau / grid.h_v;
    let e = du + au.max(0.0);
    let w = du + (-au).max(0.0);
    let n = dv + av.max(0.0);
    let s = dv + (-av).max(0.0);
    Stencil { c0: 1.0 - e - w - n - s, e, w, n, s }
}

/// Uniform drifts share one stencil; others get per-node weights.
enum Stencils {
    Uniform { bu: f64, bv: f64 },
    Cells(Vec<Stencil>),
}

impl Stencils {
    fn new(d: &DriftSpec, grid: &RotatedGrid) -> Self {
        match d.kind {
            DriftKind::Zero => return Stencils::Uniform { bu: 0.0, bv: 0.0 },
            DriftKind::Constant { k } => return Stencils::Uniform { bu: 0.0, bv: SQRT_2 * k },
            _ => {}
        }
        let row = grid.nu() + 1;
        Stencils::Cells(
            (0..row * (grid.nv() + 1))
                .map(|k| {
                    let (u, v) = (grid.u(k % row), grid.v(k / row));
                    let a1 = d.evaluate((v - u) * FRAC_1_SQRT_2);
                    let a2 = d.evaluate((v + u) * FRAC_1_SQRT_2);
                    stencil(grid, grid.tau, (a2 - a1) * FRAC_1_SQRT_2, (a1 + a2) * FRAC_1_SQRT_2)
                })
                .collect(),
        )
    }
}

/// Solves the backward equation up to time t.
pub fn solve(d: &DriftSpec, t: f64, grid: &RotatedGrid) -> Result<WField> {
    check_time(t)?;
    d.require_bounded("pde")?;
    grid.validate()?;
    let m = margin(t, d.sup_norm);
    if grid.u_max < m - 1e-9 {
        return Err(Error::Margin(format!("u_max = {} is below the required margin {m}", grid.u_max)));
    }
    let nu = grid.nu();
    let nv = grid.nv();
    let row = nu + 1;

    let s0 = (10.0 * grid.tau).min(0.01 * t);
    let mut values = vec![0.0; row * (nv + 1)];
    for j in 0..=nv {
        for i in 0..=nu {
            values[j * row + i] = if i == nu { 1.0 } else { libm::erf(grid.u(i) / (2.0 * s0).sqrt()) };
        }
    }
    let mut next = values.clone();

    let span = t - s0;
    let n_full = (span / grid.tau).ceil().max(1.0) as usize;
    let tau = span / n_full as f64;
    let mut schedule = Vec::new();
    let mut elapsed = 0.0;
    let mut k = 0;
    while elapsed < span - 1e-15 * t {
        let step = (tau * (grid.ramp * 2f64.powi(k)).min(1.0)).min(span - elapsed);
        schedule.push(step);
        elapsed += step;
        k += 1;
    }

    let full = Stencils::new(d, &RotatedGrid { tau, ..grid.clone() });
    let mut current: Option<(f64, Stencils)> = None;
    for &step in &schedule {
        let stencils = if step == tau {
            &full
        } else {
            if current.as_ref().map(|c| c.0) != Some(step) {
                current = Some((step, Stencils::new(d, &RotatedGrid { tau: step, ..grid.clone() })));
            }
            &current.as_ref().unwrap().1
        };
        let worst = match stencils {
            Stencils::Uniform { bu, bv } => stencil(grid, step, *bu, *bv).c0,
            Stencils::Cells(c) => c.iter().map(|k| k.c0).fold(f64::INFINITY, f64::min),
        };
        if worst < 0.0 {
            return Err(Error::Stability(format!(
                "negative central weight {worst} (drift too strong for tau = {step})"
            )));
        }
        let cur = &values;
        next.par_chunks_mut(row).enumerate().for_each(|(j, out)| {
            let jn = if j == nv { nv - 1 } else { j + 1 };
            let js = if j == 0 { 1 } else { j - 1 };
            let here = &cur[j * row..(j + 1) * row];
            let up = &cur[jn * row..(jn + 1) * row];
            let down = &cur[js * row..(js + 1) * row];
            out[0] = 0.0;
            match stencils {
                Stencils::Uniform { bu, bv } => {
                    let k = stencil(grid, step, *bu, *bv);
                    for i in 1..nu {
                        out[i] = k.c0 * here[i] + k.e * here[i + 1] + k.w * here[i - 1] + k.n * up[i] + k.s * down[i];
                    }
                }
                Stencils::Cells(c) => {
                    let c = &c[j * row..(j + 1) * row];
                    for i in 1..nu {
                        let k = c[i];
                        out[i] = k.c0 * here[i] + k.e * here[i + 1] + k.w * here[i - 1] + k.n * up[i] + k.s * down[i];
                    }
                }
            }
            out[nu] = 1.0;
        });
        std::mem::swap(&mut values, &mut next);
    }
    if let Some(bad) = values.iter().find(|w| !(-1e-12..=1.0 + 1e-9).contains(*w)) {
        return Err(Error::Stability(format!("maximum principle violated: W = {bad}")));
    }
    Ok(WField {
        grid: grid.clone(),
        t,
        values,
        drift: d.to_string(),
        sup_norm: d.sup_norm,
        s0,
        steps: schedule.len(),
    })
}

/// p_t(x) = (1/√2) ∂_u W(0, √2x, t) by a one-sided second-order difference.
pub fn density_from_field(f: &WField, x: f64) -> Result<DensityEstimate> {
    let g = &f.grid;
    let v = SQRT_2 * x;
    let m = margin(f.t, f.sup_norm);
    if v < g.v_min + m - 1e-9 || v > g.v_max - m + 1e-9 {
        return Err(Error::Margin(format!(
            "x = {x} is outside the safe window [{}, {}]",
            (g.v_min + m) * FRAC_1_SQRT_2,
            (g.v_max - m) * FRAC_1_SQRT_2
        )));
    }
    let pos = (v - g.v_min) / g.h_v;
    let j = (pos.floor() as usize).min(g.nv() - 1);
    let frac = pos - j as f64;
    let at = |i: usize| (1.0 - frac) * f.at(i, j) + frac * f.at(i, j + 1);
    let second = (4.0 * at(1) - at(2)) / (2.0 * g.h_u);
    let first = at(1) / g.h_u;
    let value = FRAC_1_SQRT_2 * second;
    let det_bound = FRAC_1_SQRT_2 * (second - first).abs() + f.sup_norm * f.s0 * value;
    Ok(DensityEstimate {
        value,
        stat_error: 0.0,
        det_bound,
        method: Method::Pde,
        flag: EstimateFlag::Ok,
        config_digest: String::new(),
        seed: None,
    })
}

/// Convenience: grid for x with step h, solve, extract.
pub fn density_pde(x: f64, t: f64, d: &DriftSpec, h: f64) -> Result<DensityEstimate> {
    let grid = RotatedGrid::for_point(x, t, d, h)?;
    density_from_field(&solve(d, t, &grid)?, x)
}
