//! Bounded drift coefficients, their norms, negation and mollification.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::quad::{self, GaussLegendre};

/// Nodes of the Gauss–Legendre rule used per piece of a mollifier convolution.
pub const MOLLIFIER_NODES: usize = 64;
/// Lattice points per unit of 1/n for the mollified-drift cache.
pub const LATTICE_PER_WIDTH: f64 = 8.0;

/// Unnormalized bump exp(-1/(1-s^2)) on (-1, 1).
fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Normalizing constant of the standard bump, computed once by adaptive quadrature.
pub fn bump_normalizer() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| 1.0 / quad::adaptive(bump, -1.0, 1.0, 1e-15).0)
}

/// The unit-mass mollifier scaled to support (-1/n, 1/n): x -> n·η(n x).
pub fn mollifier_kernel(n: u32, x: f64) -> f64 {
    let n = n as f64;
    n * bump_normalizer() * bump(n * x)
}

#[derive(Debug, Clone)]
pub enum DriftKind {
    Zero,
    Linear { c: f64 },
    Constant { k: f64 },
    Tanh { amplitude: f64, scale: f64 },
    Step { height: f64, lo: f64, hi: f64 },
    Tabulated { knots: Arc<[f64]>, values: Arc<[f64]>, source: Option<String> },
    Mollified { base: Arc<DriftSpec>, n: u32, cache: Option<Arc<Lattice>> },
}

/// Precomputed values of a mollified drift on a uniform lattice.
#[derive(Debug)]
pub struct Lattice {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl Lattice {
    fn hi(&self) -> f64 {
        self.lo + self.step * (self.values.len() - 1) as f64
    }

    fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi()
    }

    fn interpolate(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        let i = (pos.floor() as usize).min(self.values.len() - 2);
        let w = pos - i as f64;
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }
}

/// A drift coefficient a with a certified bound on its sup-norm.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Certified upper bound on sup |a|.
    pub sup_norm: f64,
    /// Upper bound on the L1 norm when the drift is integrable.
    pub l1_norm: Option<f64>,
    pub smooth: bool,
}

impl DriftSpec {
    pub fn zero() -> Self {
        Self { kind: DriftKind::Zero, sup_norm: 0.0, l1_norm: Some(0.0), smooth: true }
    }

    /// a(x) = c x. Unbounded; only the flow, exit-time and oracle routes accept it.
    pub fn linear(c: f64) -> Self {
        Self {
            kind: DriftKind::Linear { c },
            sup_norm: if c == 0.0 { 0.0 } else { f64::INFINITY },
            l1_norm: (c == 0.0).then_some(0.0),
            smooth: true,
        }
    }

    pub fn constant(k: f64) -> Self {
        Self {
            kind: DriftKind::Constant { k },
            sup_norm: k.abs(),
            l1_norm: (k == 0.0).then_some(0.0),
            smooth: true,
        }
    }

    /// a(x) = k tanh(x / lam).
    pub fn tanh(amplitude: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!("tanh scale must be positive, got {scale}")));
        }
        Ok(Self {
            kind: DriftKind::Tanh { amplitude, scale },
            sup_norm: amplitude.abs(),
            l1_norm: (amplitude == 0.0).then_some(0.0),
            smooth: true,
        })
    }

    /// a = h on [lo, hi), 0 elsewhere.
    pub fn step(height: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidParameter(format!("step support [{lo}, {hi}] is empty")));
        }
        Ok(Self {
            kind: DriftKind::Step { height, lo, hi },
            sup_norm: height.abs(),
            l1_norm: Some(height.abs() * (hi - lo)),
            smooth: false,
        })
    }

    /// Piecewise-linear interpolation of (knot, value) pairs, constant outside the knots.
    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>, source: Option<String>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidParameter(
                "table needs at least two knots and one value per knot".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("table knots must be strictly increasing".into()));
        }
        if values.iter().chain(&knots).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("table entries must be finite".into()));
        }
        let sup_norm = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let integrable = values[0] == 0.0 && values[values.len() - 1] == 0.0;
        let l1_norm = integrable.then(|| {
            knots
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| abs_linear_integral(k[1] - k[0], v[0], v[1]))
                .sum()
        });
        Ok(Self {
            kind: DriftKind::Tabulated { knots: knots.into(), values: values.into(), source },
            sup_norm,
            l1_norm,
            smooth: false,
        })
    }

    /// Reads a two-column `knot,value` CSV file (an optional header row is skipped).
    pub fn from_table_file(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let mut knots = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 2 {
                return Err(Error::DriftParse(format!("{}: expected two columns", path.display())));
            }
            match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
                (Ok(k), Ok(v)) => {
                    knots.push(k);
                    values.push(v);
                }
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::DriftParse(format!(
                        "{}: bad row {}",
                        path.display(),
                        i + 1
                    )))
                }
            }
        }
        Self::tabulated(knots, values, Some(path.display().to_string()))
    }

    /// Zero or constant: Δa ≡ 0, so every correction term of the series vanishes.
    pub fn is_constant(&self) -> bool {
        matches!(self.kind, DriftKind::Zero | DriftKind::Constant { .. })
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm.is_finite()
    }

    /// Fails with the standard message when `consumer` needs a bounded drift.
    pub fn require_bounded(&self, consumer: &'static str) -> Result<()> {
        if self.is_bounded() {
            Ok(())
        } else {
            Err(Error::UnboundedDrift(consumer))
        }
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match &self.kind {
            DriftKind::Zero => 0.0,
            DriftKind::Linear { c } => c * x,
            DriftKind::Constant { k } => *k,
            DriftKind::Tanh { amplitude, scale } => amplitude * (x / scale).tanh(),
            DriftKind::Step { height, lo, hi } => {
                if x >= *lo && x < *hi {
                    *height
                } else {
                    0.0
                }
            }
            DriftKind::Tabulated { knots, values, .. } => interpolate_table(knots, values, x),
            DriftKind::Mollified { base, cache, .. } => {
                let v = match cache {
                    Some(lattice) if lattice.contains(x) => lattice.interpolate(x),
                    // outside the lattice the base is locally constant (or affine), and a
                    // symmetric unit-mass kernel reproduces it
                    _ => base.evaluate(x),
                };
                v.clamp(-self.sup_norm, self.sup_norm)
            }
        }
    }

    /// Convolution (a * n·η(n·)) at x by piecewise Gauss–Legendre quadrature.
    pub fn convolve_direct(base: &DriftSpec, n: u32, x: f64) -> f64 {
        let gl = GaussLegendre::cached(MOLLIFIER_NODES);
        let nf = n as f64;
        let mut cuts: Vec<f64> = base
            .breakpoints()
            .into_iter()
            .map(|b| nf * (x - b))
            .filter(|s| s.abs() < 1.0)
            .collect();
        cuts.push(-1.0);
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let c = bump_normalizer();
        cuts.windows(2)
            .map(|w| gl.integrate(w[0], w[1], |s| c * bump(s) * base.evaluate(x - s / nf)))
            .sum()
    }

    /// Points where the drift is discontinuous or has a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            DriftKind::Step { lo, hi, .. } => vec![*lo, *hi],
            DriftKind::Tabulated { knots, .. } => knots.to_vec(),
            _ => Vec::new(),
        }
    }

    /// Interval outside of which the drift is constant (or affine). `None` when
    /// it is affine everywhere.
    pub fn variation_window(&self) -> Option<(f64, f64)> {
        match &self.kind {
            DriftKind::Zero | DriftKind::Linear { .. } | DriftKind::Constant { .. } => None,
            // |x| > 20 lam gives tanh = ±1 exactly in double precision
            DriftKind::Tanh { scale, .. } => Some((-20.0 * scale, 20.0 * scale)),
            DriftKind::Step { lo, hi, .. } => Some((*lo, *hi)),
            DriftKind::Tabulated { knots, .. } => Some((knots[0], knots[knots.len() - 1])),
            DriftKind::Mollified { base, n, .. } => {
                let w = 1.0 / *n as f64;
                base.variation_window().map(|(lo, hi)| (lo - w, hi + w))
            }
        }
    }

    /// Mollified drift a * n·η(n·) with η the normalized C∞ bump on (-1, 1).
    pub fn mollify(&self, n: u32) -> Result<DriftSpec> {
        if n == 0 {
            return Err(Error::InvalidParameter("mollifier index must be positive".into()));
        }
        let cache = self.variation_window().map(|(lo, hi)| {
            let width = 1.0 / n as f64;
            let step = width / LATTICE_PER_WIDTH;
            let lo = lo - width;
            let count = (((hi + width) - lo) / step).ceil() as usize + 1;
            let values = (0..count)
                .map(|i| Self::convolve_direct(self, n, lo + step * i as f64))
                .collect();
            Arc::new(Lattice { lo, step, values })
        });
        Ok(DriftSpec {
            kind: DriftKind::Mollified { base: Arc::new(self.clone()), n, cache },
            sup_norm: self.sup_norm,
            l1_norm: self.l1_norm,
            smooth: true,
        })
    }

    /// Pointwise negation, used for the dual flow.
    pub fn negate(&self) -> DriftSpec {
        self.scale(-1.0)
    }

    /// The drift multiplied by `factor`.
    pub fn scale(&self, factor: f64) -> DriftSpec {
        let kind = match &self.kind {
            DriftKind::Zero => DriftKind::Zero,
            DriftKind::Linear { c } => DriftKind::Linear { c: c * factor },
            DriftKind::Constant { k } => DriftKind::Constant { k: k * factor },
            DriftKind::Tanh { amplitude, scale } => {
                DriftKind::Tanh { amplitude: amplitude * factor, scale: *scale }
            }
            DriftKind::Step { height, lo, hi } => {
                DriftKind::Step { height: height * factor, lo: *lo, hi: *hi }
            }
            DriftKind::Tabulated { knots, values, source } => DriftKind::Tabulated {
                knots: knots.clone(),
                values: values.iter().map(|v| v * factor).collect(),
                source: source.as_ref().map(|s| format!("{s}*{factor}")),
            },
            DriftKind::Mollified { base, n, cache } => DriftKind::Mollified {
                base: Arc::new(base.scale(factor)),
                n: *n,
                cache: cache.as_ref().map(|l| {
                    Arc::new(Lattice {
                        lo: l.lo,
                        step: l.step,
                        values: l.values.iter().map(|v| v * factor).collect(),
                    })
                }),
            },
        };
        DriftSpec {
            kind,
            sup_norm: self.sup_norm * factor.abs(),
            l1_norm: self.l1_norm.map(|v| v * factor.abs()),
            smooth: self.smooth,
        }
    }
}

fn interpolate_table(knots: &[f64], values: &[f64], x: f64) -> f64 {
    let last = knots.len() - 1;
    if x <= knots[0] {
        return values[0];
    }
    if x >= knots[last] {
        return values[last];
    }
    let i = knots.partition_point(|&k| k <= x) - 1;
    let w = (x - knots[i]) / (knots[i + 1] - knots[i]);
    (1.0 - w) * values[i] + w * values[i + 1]
}

/// ∫ |linear| over an interval of length `len` with end values `a`, `b`.
fn abs_linear_integral(len: f64, a: f64, b: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * len * (a.abs() + b.abs())
    } else {
        0.5 * len * (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// Maximum of |d1 - d2| over `grid_points` equispaced points of `window`.
///
/// This is a lower approximation of the sup-norm distance on the window.
pub fn l_inf_distance(d1: &DriftSpec, d2: &DriftSpec, window: (f64, f64), grid_points: usize) -> Result<f64> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::EmptyWindow(lo, hi));
    }
    if grid_points < 2 {
        return Err(Error::InvalidParameter("l_inf_distance needs at least two grid points".into()));
    }
    let h = (hi - lo) / (grid_points - 1) as f64;
    Ok((0..grid_points)
        .map(|i| {
            let x = if i + 1 == grid_points { hi } else { lo + h * i as f64 };
            (d1.evaluate(x) - d2.evaluate(x)).abs()
        })
        .fold(0.0, f64::max))
}

/// Absolute quadrature tolerance of [`l1_distance`].
pub const L1_TOLERANCE: f64 = 1e-8;

/// ∫ |d1 - d2| over `window` by adaptive Gauss–Kronrod quadrature.
pub fn l1_distance(d1: &DriftSpec, d2: &DriftSpec, window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::EmptyWindow(lo, hi));
    }
    let mut breaks = d1.breakpoints();
    breaks.extend(d2.breakpoints());
    for d in [d1, d2] {
        if let DriftKind::Mollified { base, n, .. } = &d.kind {
            let w = 1.0 / *n as f64;
            for b in base.breakpoints() {
                breaks.extend([b - w, b + w]);
            }
        }
    }
    let (v, _) = quad::adaptive_piecewise(|x| (d1.evaluate(x) - d2.evaluate(x)).abs(), lo, hi, &breaks, L1_TOLERANCE);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter("drift difference is not integrable on the window".into()))
    }
}

impl fmt::Display for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DriftKind::Zero => write!(f, "zero"),
            DriftKind::Linear { c } => write!(f, "linear:c={c}"),
            DriftKind::Constant { k } => write!(f, "const:k={k}"),
            DriftKind::Tanh { amplitude, scale } => write!(f, "tanh:k={amplitude},lam={scale}"),
            DriftKind::Step { height, lo, hi } => write!(f, "step:h={height},lo={lo},hi={hi}"),
            DriftKind::Tabulated { source: Some(s), .. } => write!(f, "table:{s}"),
            DriftKind::Tabulated { knots, .. } => write!(f, "table:<{} knots>", knots.len()),
            DriftKind::Mollified { base, n, .. } => write!(f, "mollify({base},n={n})"),
        }
    }
}

fn parse_params(body: &str, expected: &[&str]) -> Result<Vec<f64>> {
    let mut out = vec![None; expected.len()];
    for part in body.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::DriftParse(format!("expected key=value, got '{part}'")))?;
        let idx = expected
            .iter()
            .position(|k| *k == key.trim())
            .ok_or_else(|| Error::DriftParse(format!("unknown parameter '{}'", key.trim())))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::DriftParse(format!("bad number '{}'", value.trim())))?;
        if !v.is_finite() {
            return Err(Error::DriftParse(format!("non-finite value for '{key}'")));
        }
        out[idx] = Some(v);
    }
    out.into_iter()
        .zip(expected)
        .map(|(v, k)| v.ok_or_else(|| Error::DriftParse(format!("missing parameter '{k}'"))))
        .collect()
}

impl FromStr for DriftSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("mollify(").and_then(|r| r.strip_suffix(')')) {
            let (base, n) = inner
                .rsplit_once(',')
                .ok_or_else(|| Error::DriftParse("mollify needs (<spec>,n=<int>)".into()))?;
            let n = n
                .trim()
                .strip_prefix("n=")
                .and_then(|v| v.trim().parse::<u32>().ok())
                .ok_or_else(|| Error::DriftParse(format!("bad mollifier index in '{s}'")))?;
            return base.parse::<DriftSpec>()?.mollify(n);
        }
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        match name {
            "zero" if body.is_empty() => Ok(DriftSpec::zero()),
            "linear" => Ok(DriftSpec::linear(parse_params(body, &["c"])?[0])),
            "const" => Ok(DriftSpec::constant(parse_params(body, &["k"])?[0])),
            "tanh" => {
                let p = parse_params(body, &["k", "lam"])?;
                DriftSpec::tanh(p[0], p[1])
            }
            "step" => {
                let p = parse_params(body, &["h", "lo", "hi"])?;
                DriftSpec::step(p[0], p[1], p[2])
            }
            "table" if !body.is_empty() => DriftSpec::from_table_file(Path::new(body)),
            _ => Err(Error::DriftParse(format!("unknown drift '{s}'"))),
        }
    }
}

/// Rotated drift components (b_u, b_v) = ((a(x2) - a(x1))/√2, (a(x1) + a(x2))/√2).
pub fn rotated_components(d: &DriftSpec, x1: f64, x2: f64) -> (f64, f64) {
    let a1 = d.evaluate(x1);
    let a2 = d.evaluate(x2);
    ((a2 - a1) * FRAC_1_SQRT_2, (a1 + a2) * FRAC_1_SQRT_2)
}
