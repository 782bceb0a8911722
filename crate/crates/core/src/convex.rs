//! Convex weights `sigma` and the a priori envelopes built from them.
//!
//! A weight is a `C^2` function on `[0, inf)` with `sigma(0) = sigma'(0) = 0`,
//! concave derivative and superlinear growth. Integrated against the density it
//! gives the tail moment `int sigma(x) zeta dx` and the equi-integrability
//! functional `int sigma(zeta) dx`, both of which obey explicit Gronwall bounds.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GedgError, Result};
use crate::grid::{moment, Density, SizeGrid};
use crate::kernels::Kernel;
use crate::quad;

type Fun = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct ConvexWeight {
    sigma: Fun,
    dsigma: Fun,
    name: String,
}

impl fmt::Debug for ConvexWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexWeight").field("name", &self.name).finish()
    }
}

impl ConvexWeight {
    /// Builds a weight from `sigma` and its derivative, checking the defining properties
    /// on sampled points.
    pub fn new(
        name: impl Into<String>,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dsigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let w = Self::unchecked(name, sigma, dsigma);
        w.check_shape(true)?;
        Ok(w)
    }

    fn unchecked(
        name: impl Into<String>,
        sigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dsigma: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            sigma: Arc::new(sigma),
            dsigma: Arc::new(dsigma),
            name: name.into(),
        }
    }

    fn check_shape(&self, superlinear: bool) -> Result<()> {
        let bad = |msg: String| Err(GedgError::Config(format!("convex weight {}: {msg}", self.name)));
        if self.sigma(0.0) != 0.0 {
            return bad(format!("sigma(0) = {} but must be 0", self.sigma(0.0)));
        }
        if self.dsigma(0.0) != 0.0 {
            return bad(format!("sigma'(0) = {} but must be 0", self.dsigma(0.0)));
        }
        let xs: Vec<f64> = (0..=240).map(|k| 1e-6 * 10f64.powf(k as f64 * 0.05)).collect();
        for w in xs.windows(3) {
            let (a, b, c) = (self.dsigma(w[0]), self.dsigma(w[1]), self.dsigma(w[2]));
            if b < a * (1.0 - 1e-12) {
                return bad(format!("sigma' decreases near x = {}", w[1]));
            }
            // Concavity on a non-uniform triple: the chord through the outer points
            // lies below the function.
            let t = (w[1] - w[0]) / (w[2] - w[0]);
            let chord = a + t * (c - a);
            if b < chord - 1e-12 * b.abs().max(chord.abs()) {
                return bad(format!("sigma' is not concave near x = {}", w[1]));
            }
        }
        if superlinear {
            let ratios: Vec<f64> = [1e2, 1e4, 1e6].iter().map(|&x| self.sigma(x) / x).collect();
            if !(ratios[0] < ratios[1] && ratios[1] < ratios[2]) {
                return bad(format!("sigma(x)/x is not increasing on 1e2, 1e4, 1e6: {ratios:?}"));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn sigma(&self, x: f64) -> f64 {
        (self.sigma)(x)
    }

    #[inline]
    pub fn dsigma(&self, x: f64) -> f64 {
        (self.dsigma)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

/// `sigma(x) = (1 + x) ln(1 + x) - x`, `sigma'(x) = ln(1 + x)`.
pub fn default_sigma() -> ConvexWeight {
    ConvexWeight::new("(1+x)ln(1+x)-x", default_sigma_value, f64::ln_1p)
        .expect("the default weight satisfies its own invariants")
}

fn default_sigma_value(x: f64) -> f64 {
    if x < 0.1 {
        // x^2/2 - x^3/6 + x^4/12 - ... = sum_{m >= 2} (-1)^m x^m / (m (m - 1)),
        // avoiding the cancellation of the closed form near 0.
        let mut term = x * x;
        let mut sum = 0.0;
        for m in 2..30 {
            let mf = m as f64;
            let add = term / (mf * (mf - 1.0));
            if m % 2 == 0 {
                sum += add;
            } else {
                sum -= add;
            }
            if add < 1e-18 * sum.abs() {
                break;
            }
            term *= x;
        }
        sum
    } else {
        (1.0 + x) * x.ln_1p() - x
    }
}

/// `sigma` continued linearly above `lambda`: `sigma(lambda) + sigma'(lambda)(x - lambda)`.
///
/// Still convex with concave derivative, but no longer superlinear, so the growth
/// check is skipped.
pub fn linearize_above(w: &ConvexWeight, lambda: f64) -> Result<ConvexWeight> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(GedgError::Config(format!(
            "linearization point must be positive, got {lambda}"
        )));
    }
    let (s, ds) = (w.sigma.clone(), w.dsigma.clone());
    let (s_l, ds_l) = (s(lambda), ds(lambda));
    let lin = ConvexWeight::unchecked(
        format!("{} linearized above {lambda}", w.name),
        move |x| if x <= lambda { s(x) } else { s_l + ds_l * (x - lambda) },
        move |x| if x <= lambda { ds(x) } else { ds_l },
    );
    lin.check_shape(false)?;
    Ok(lin)
}

/// Which of the three weight inequalities failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inequality {
    /// `sigma(x) <= x sigma'(x) <= 2 sigma(x)`.
    Derivative,
    /// `x sigma'(y) <= sigma(x) + sigma(y)`.
    Young,
    /// `0 <= sigma(x + y) - sigma(x) - sigma(y) <= 2 (x sigma(y) + y sigma(x)) / (x + y)`.
    Superadditive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InequalityViolation {
    pub which: Inequality,
    pub x: f64,
    pub y: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default)]
pub struct InequalityReport {
    pub samples: usize,
    pub violations: Vec<InequalityViolation>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the three inequalities on `samples` random positive pairs, log-uniform on
/// `[1e-6, 1e6]`.
pub fn check_convex_inequalities(w: &ConvexWeight, samples: usize, rng_seed: u64) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let (lo, hi) = (1e-6f64.ln(), 1e6f64.ln());
    let mut report = InequalityReport {
        samples: samples.max(1),
        violations: Vec::new(),
    };
    for _ in 0..report.samples {
        let x = rng.gen_range(lo..hi).exp();
        let y = rng.gen_range(lo..hi).exp();
        report.violations.extend(check_pair(w, x, y));
    }
    report
}

/// Relative slack for comparing sums of a few rounded terms.
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

/// The three inequalities at one pair `(x, y)`.
pub fn check_pair(w: &ConvexWeight, x: f64, y: f64) -> Vec<InequalityViolation> {
    let mut out = Vec::new();
    let mut le = |which, lhs: f64, rhs: f64, scale: f64| {
        if !(lhs <= rhs + ROUNDOFF * scale) {
            out.push(InequalityViolation { which, x, y, lhs, rhs });
        }
    };
    let (sx, sy, sxy) = (w.sigma(x), w.sigma(y), w.sigma(x + y));
    let xdx = x * w.dsigma(x);
    le(Inequality::Derivative, sx, xdx, xdx.abs());
    le(Inequality::Derivative, xdx, 2.0 * sx, xdx.abs());
    let xdy = x * w.dsigma(y);
    le(Inequality::Young, xdy, sx + sy, sx + sy);
    let gap = sxy - sx - sy;
    let scale = sxy.abs() + sx + sy;
    le(Inequality::Superadditive, 0.0, gap, scale);
    le(Inequality::Superadditive, gap, 2.0 * (x * sy + y * sx) / (x + y), scale);
    out
}

/// `sum_{i >= 1} sigma(i dx) c_i`, the discrete `int sigma(x) zeta dx`.
pub fn tail_moment(d: &Density, grid: &SizeGrid, w: &ConvexWeight) -> f64 {
    d.counts()
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| w.sigma(grid.mass(i)) * c)
        .sum()
}

/// `sum_{i >= 1} sigma(c_i / dx) dx`, the discrete `int sigma(zeta) dx`.
pub fn equiintegrability_functional(d: &Density, grid: &SizeGrid, w: &ConvexWeight) -> f64 {
    let dx = grid.dx();
    d.counts()[1..].iter().map(|c| w.sigma(c / dx) * dx).sum()
}

/// Constants entering the a priori bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// `M0(0) + M1(0)`.
    pub gamma: f64,
    /// `int sigma1(x) zeta_in(x) dx`.
    pub gamma1: f64,
    /// `int sigma2(zeta_in(x)) dx`.
    pub gamma2: f64,
    /// `int sigma1(x) phi(x) dx`.
    pub gamma3: f64,
    /// `int sigma2(phi(x)) dx`.
    pub gamma4: f64,
    /// `int phi`.
    pub phi_l1: f64,
    /// `int (1 + z) phi(z) dz`.
    pub phi_l1_weighted: f64,
    pub a_const: f64,
    pub eta_star: f64,
}

impl BoundInputs {
    /// Evaluates the constants for the projected initial density `d0` and `k`'s envelope.
    pub fn compute(k: &Kernel, d0: &Density, grid: &SizeGrid, w: &ConvexWeight) -> Result<Self> {
        let phi = k.phi();
        let gamma4 = {
            let f = |z: f64| w.sigma(phi.value(z));
            let end = phi.support_end();
            quad::adaptive_simpson(&f, 0.0, end, 1e-13)
        };
        let b = Self {
            gamma: moment(d0, grid, 0.0) + moment(d0, grid, 1.0),
            gamma1: tail_moment(d0, grid, w),
            gamma2: equiintegrability_functional(d0, grid, w),
            gamma3: phi.integrate_against(|z| w.sigma(z)),
            gamma4,
            phi_l1: phi.l1_norm(),
            phi_l1_weighted: phi.weighted_l1_norm(),
            a_const: k.a_const(),
            eta_star: k.eta_star(),
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("Gamma", self.gamma),
            ("Gamma1", self.gamma1),
            ("Gamma2", self.gamma2),
            ("Gamma3", self.gamma3),
            ("Gamma4", self.gamma4),
            ("||phi||", self.phi_l1),
            ("||phi||_{0,1}", self.phi_l1_weighted),
            ("A", self.a_const),
            ("eta*", self.eta_star),
        ];
        let bad: Vec<String> = fields
            .iter()
            .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
            .map(|(name, v)| format!("{name} = {v}"))
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GedgError::Data(format!(
                "bound constants must be finite and nonnegative: {}",
                bad.join(", ")
            )))
        }
    }

    /// `C0 = 4 A ||phi|| Gamma^2`, the equicontinuity constant.
    pub fn c0(&self) -> f64 {
        4.0 * self.a_const * self.phi_l1 * self.gamma * self.gamma
    }

    /// `exp(2 A Gamma ||phi|| t)`, the growth factor of the equi-integrability functional.
    pub fn equiintegrability_factor(&self, t: f64) -> f64 {
        (2.0 * self.a_const * self.gamma * self.phi_l1 * t).exp()
    }

    /// `exp(34 A Gamma ||phi|| t)` with the weighted norm of `phi`, the contraction factor.
    pub fn contraction_factor(&self, t: f64) -> f64 {
        (34.0 * self.a_const * self.gamma * self.phi_l1_weighted * t).exp()
    }
}

/// `Xi(T) = (Gamma1 + A Gamma^2 [7 Gamma3 + 2 sigma1(1) ||phi||] T) exp(4 A Gamma ||phi|| T)`.
pub fn gronwall_bound_sum(b: &BoundInputs, sigma1_at_1: f64, t: f64) -> f64 {
    let a = b.a_const;
    let g = b.gamma;
    let p = b.phi_l1;
    (b.gamma1 + a * g * g * (7.0 * b.gamma3 + 2.0 * sigma1_at_1 * p) * t) * (4.0 * a * g * p * t).exp()
}

/// `Lambda(T) = (A Gamma^2 Gamma3 T + Theta1(T)) exp(Theta2(T) T)` with
///
/// * `Theta1 = Gamma1 + 2 A T Gamma^2 [2 s ||phi|| + 2 s eta* ||phi|| + Gamma3 eta* ||phi|| + eta*^2 Gamma3]`,
/// * `Theta2 = 4 A eta* ||phi||_{0,1} Gamma (1 + Gamma eta*)`,
///
/// where `s = sigma1(1)`.
pub fn gronwall_bound_product(b: &BoundInputs, sigma1_at_1: f64, t: f64) -> f64 {
    let a = b.a_const;
    let g = b.gamma;
    let p = b.phi_l1;
    let e = b.eta_star;
    let s = sigma1_at_1;
    let theta1 = b.gamma1
        + 2.0 * a * t * g * g * (2.0 * s * p + 2.0 * s * e * p + b.gamma3 * e * p + e * e * b.gamma3);
    let theta2 = 4.0 * a * e * b.phi_l1_weighted * g * (1.0 + g * e);
    (a * g * g * b.gamma3 * t + theta1) * (theta2 * t).exp()
}
