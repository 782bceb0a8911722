//! Sampling-based checks of a kernel against its declared growth class.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Kernel, KernelClass};

/// Which inequality a violation broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Nonnegative,
    PhysicalConstraint,
    SumClass,
    ProductClass,
    /// `A <= a (1 + x)(1 + y) phi(z)`.
    Universal,
    /// `eta(x) >= 1` and `eta(x) / (1 + x)` finite.
    Eta,
    DerivativeX,
    DerivativeY,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::Nonnegative => "nonnegative",
            Check::PhysicalConstraint => "physical-constraint",
            Check::SumClass => "sum-class",
            Check::ProductClass => "product-class",
            Check::Universal => "universal",
            Check::Eta => "eta",
            Check::DerivativeX => "d/dx",
            Check::DerivativeY => "d/dy",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: Check,
    pub point: (f64, f64, f64),
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (x, y, z) = self.point;
        write!(
            f,
            "{} at (x, y, z) = ({x:.6e}, {y:.6e}, {z:.6e}): {:.6e} > {:.6e}",
            self.check, self.lhs, self.rhs
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub samples: usize,
    pub violations: Vec<Violation>,
    /// Largest sampled `eta(x) / (1 + x)` over `x >= 1`, for kernels that carry `eta`.
    pub eta_star_estimate: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, check: Check) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub samples: usize,
    pub seed: u64,
    /// Upper end of the sampled `x` and `y` range.
    pub mass_max: f64,
    /// Also check the derivative bounds by central finite differences.
    pub derivatives: bool,
    /// Relative slack on every inequality, absorbing roundoff.
    pub rel_tol: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            samples: 10_000,
            seed: 0,
            mass_max: 100.0,
            derivatives: false,
            rel_tol: 1e-12,
        }
    }
}

/// Samples `sample_count` points and reports every bound the kernel breaks.
pub fn validate_class(k: &Kernel, sample_count: usize, rng_seed: u64) -> ValidationReport {
    validate_class_with(
        k,
        &ValidateOptions {
            samples: sample_count.max(1),
            seed: rng_seed,
            ..ValidateOptions::default()
        },
    )
}

pub fn validate_class_with(k: &Kernel, opts: &ValidateOptions) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = ValidationReport {
        samples: opts.samples,
        ..Default::default()
    };
    let ln_lo = 1e-3f64.ln();
    let ln_hi = opts.mass_max.ln();
    let mass = |rng: &mut ChaCha8Rng| -> f64 {
        // Half the draws resolve the unit box where the class bounds switch branches.
        if rng.gen_bool(0.5) {
            rng.gen_range(1e-6..2.0)
        } else {
            rng.gen_range(ln_lo..ln_hi).exp()
        }
    };
    for _ in 0..opts.samples {
        let x = mass(&mut rng);
        let y = mass(&mut rng);
        // A quarter of the chunks overshoot the donor to exercise the physical constraint.
        let z = rng.gen_range(0.0..1.0f64).max(1e-9) * x * 1.25;
        report.violations.extend(check_point(k, x, y, z, opts.rel_tol));
        if opts.derivatives {
            report.violations.extend(check_derivatives(k, x, y, z, opts.rel_tol));
        }
    }
    if k.class == KernelClass::Product || k.eta.is_some() {
        check_eta(k, &mut report);
    }
    report
}

fn exceeds(lhs: f64, rhs: f64, rel_tol: f64) -> bool {
    lhs > rhs + rel_tol * rhs.abs().max(f64::MIN_POSITIVE)
}

/// Every pointwise check at one `(x, y, z)`.
pub fn check_point(k: &Kernel, x: f64, y: f64, z: f64, rel_tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let point = (x, y, z);
    let v = k.rate(x, y, z);
    let mut flag = |check, lhs: f64, rhs: f64| {
        if !lhs.is_finite() || exceeds(lhs, rhs, rel_tol) {
            out.push(Violation {
                check,
                point,
                lhs,
                rhs,
            });
        }
    };
    flag(Check::Nonnegative, -v, 0.0);
    if z > x {
        flag(Check::PhysicalConstraint, v.abs(), 0.0);
    }
    let phi = k.phi.value(z);
    let a = k.a_const;
    flag(Check::Universal, v, a * (1.0 + x) * (1.0 + y) * phi);
    match k.class {
        KernelClass::Sum => {
            let s = x + y;
            if s < 1.0 {
                flag(Check::SumClass, v, a * phi);
            } else if s > 1.0 {
                flag(Check::SumClass, v, a * s * phi);
            }
        }
        KernelClass::Product => {
            if let Some(eta) = &k.eta {
                let ex = if x > 1.0 { eta(x) } else { 1.0 };
                let ey = if y > 1.0 { eta(y) } else { 1.0 };
                if x != 1.0 && y != 1.0 {
                    flag(Check::ProductClass, v, a * ex * ey * phi);
                }
            }
        }
        KernelClass::Custom => {}
    }
    out
}

fn check_derivatives(k: &Kernel, x: f64, y: f64, z: f64, rel_tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let hx = 1e-5 * x.max(1.0);
    let hy = 1e-5 * y.max(1.0);
    let phi = k.phi.value(z);
    let a = k.a_const;
    // Stay clear of the jump at z = x.
    if z < x - 2.0 * hx && x > 2.0 * hx {
        let d = (k.rate(x + hx, y, z) - k.rate(x - hx, y, z)) / (2.0 * hx);
        let rhs = a * (1.0 + y) * phi;
        if exceeds(d, rhs, rel_tol.max(1e-6)) {
            out.push(Violation {
                check: Check::DerivativeX,
                point: (x, y, z),
                lhs: d,
                rhs,
            });
        }
    }
    if z <= x && y > 2.0 * hy {
        let d = (k.rate(x, y + hy, z) - k.rate(x, y - hy, z)) / (2.0 * hy);
        let rhs = a * (1.0 + x) * phi;
        if exceeds(d, rhs, rel_tol.max(1e-6)) {
            out.push(Violation {
                check: Check::DerivativeY,
                point: (x, y, z),
                lhs: d,
                rhs,
            });
        }
    }
    out
}

fn check_eta(k: &Kernel, report: &mut ValidationReport) {
    let Some(eta) = &k.eta else {
        report.violations.push(Violation {
            check: Check::Eta,
            point: (f64::NAN, f64::NAN, f64::NAN),
            lhs: f64::INFINITY,
            rhs: 0.0,
        });
        return;
    };
    let mut star = 0.0f64;
    for i in 0..=400 {
        let x = 10f64.powf(i as f64 * 0.015);
        let e = eta(x);
        if !(e.is_finite() && e >= 1.0) {
            report.violations.push(Violation {
                check: Check::Eta,
                point: (x, f64::NAN, f64::NAN),
                lhs: 1.0,
                rhs: e,
            });
        }
        star = star.max(e / (1.0 + x));
    }
    report.eta_star_estimate = Some(star);
}
