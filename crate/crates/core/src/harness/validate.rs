//! Numerical self-checks of the killed heat kernel.

use rand::Rng;

use crate::drift::DriftSpec;
use crate::error::Result;
use crate::kernel::{self, KernelBoundConstants, WedgePoint};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub limit: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.limit
    }
}

fn random_point<R: Rng>(r: &mut R, spread: f64) -> WedgePoint {
    let a = spread * (2.0 * r.random::<f64>() - 1.0);
    let b = spread * (2.0 * r.random::<f64>() - 1.0);
    WedgePoint { x1: a.min(b), x2: a.max(b) }
}

/// Diagonal vanishing, Chapman–Kolmogorov, gradient against finite differences
/// and the Gaussian derivative bound.
pub fn validate_kernels(seed: u64) -> Result<Vec<Check>> {
    let mut r = rng::stream(seed, rng::domain("validate-kernels", 0), 0);
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let y = random_point(&mut r, 3.0);
        let x = WedgePoint::diagonal(3.0 * (2.0 * r.random::<f64>() - 1.0));
        let t = 0.05 + 2.0 * r.random::<f64>();
        worst = worst.max(kernel::green_killed(t, x, y)?.abs());
    }
    checks.push(Check { name: "diagonal vanishing", worst, limit: 0.0 });

    let sets = [
        (0.3, 0.7, (0.0, 0.5), (0.2, 0.9)),
        (1.0, 1.0, (-0.5, 0.5), (0.0, 1.0)),
        (0.5, 0.25, (0.0, 0.1), (0.0, 0.3)),
        (0.2, 0.8, (1.0, 2.0), (0.5, 1.0)),
        (2.0, 0.5, (-1.0, 1.0), (-1.0, 0.0)),
    ];
    let mut worst = 0.0f64;
    for (a, b, x, y) in sets {
        let x = WedgePoint::new(x.0, x.1)?;
        let y = WedgePoint::new(y.0, y.1)?;
        let lhs = kernel::chapman_kolmogorov(a, b, x, y)?;
        let rhs = kernel::green_killed(a + b, x, y)?;
        worst = worst.max((lhs - rhs).abs() / rhs.abs());
    }
    checks.push(Check { name: "Chapman-Kolmogorov relative error", worst, limit: 1e-3 });

    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = random_point(&mut r, 2.0);
        let y = random_point(&mut r, 2.0);
        let t = 0.2 + r.random::<f64>();
        let (g1, g2) = kernel::grad_green(t, x, y)?;
        let f = |a: f64, b: f64| kernel::heat2d(t, [a, b], y.as_array()).and_then(|p| {
            kernel::heat2d(t, [a, b], [y.x2, y.x1]).map(|q| p - q)
        });
        let d1 = (f(x.x1 + h, x.x2)? - f(x.x1 - h, x.x2)?) / (2.0 * h);
        let d2 = (f(x.x1, x.x2 + h)? - f(x.x1, x.x2 - h)?) / (2.0 * h);
        worst = worst.max((g1 - d1).abs()).max((g2 - d2).abs());
    }
    checks.push(Check { name: "gradient vs finite difference", worst, limit: 1e-6 });

    let c = KernelBoundConstants::constructive();
    let d = DriftSpec::tanh(0.5, 1.0)?;
    let mut violations = 0.0;
    for _ in 0..10_000 {
        let x = random_point(&mut r, 4.0);
        let y = random_point(&mut r, 4.0);
        let t = 0.01 + 3.0 * r.random::<f64>();
        let value = kernel::drift_grad_green(t, x, y, &d)?.abs();
        if value > kernel::grad_bound(t, x, &d, y, &c)? {
            violations += 1.0;
        }
    }
    checks.push(Check { name: "bound violations", worst: violations, limit: 0.0 });
    Ok(checks)
}
