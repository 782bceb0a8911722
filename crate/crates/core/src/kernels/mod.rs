//! Exchange rate kernels `A(x, y; z)`.
//!
//! A donor of mass `x` hands a chunk of mass `z` to an acceptor of mass `y`.
//! Every kernel here obeys the physical constraint `A(x, y; z) = 0` for `z > x`;
//! the wrapper enforces it regardless of what the underlying rate function says.
//! `z = x` is admitted and produces a void cluster.

mod envelope;
mod table;
mod validate;

use std::fmt;
use std::sync::Arc;

use rand::Rng;

pub use envelope::{Envelope, PiecewiseLinear, ScalarFn};
pub use table::KernelTable;
pub use validate::{check_point, validate_class, validate_class_with, Check, ValidateOptions, ValidationReport, Violation};

use crate::error::{GedgError, Result};
use crate::quad;

pub type RateFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
pub type WeightFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Growth-bound family a kernel claims to belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelClass {
    /// `A <= a phi(z)` for `x + y < 1`, `A <= a (x + y) phi(z)` for `x + y > 1`.
    Sum,
    /// Four-quadrant bound through `eta`, with `sup_{x >= 1} eta(x) / (1 + x)` finite.
    Product,
    /// No class claim; only the universal bound `a (1 + x)(1 + y) phi(z)` is checked.
    Custom,
}

#[derive(Clone)]
enum Form {
    /// `A = weight(x, y) * phi(z)`.
    Separable(WeightFn),
    General(RateFn),
    Table(Arc<KernelTable>),
}

/// Immutable exchange kernel with its class metadata.
#[derive(Clone)]
pub struct Kernel {
    form: Form,
    class: KernelClass,
    a_const: f64,
    phi: Envelope,
    eta: Option<ScalarFn>,
    eta_star: Option<f64>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match &self.form {
            Form::Separable(_) => "separable",
            Form::General(_) => "general",
            Form::Table(_) => "table",
        };
        f.debug_struct("Kernel")
            .field("form", &form)
            .field("class", &self.class)
            .field("a_const", &self.a_const)
            .field("phi", &self.phi)
            .field("has_eta", &self.eta.is_some())
            .finish()
    }
}

/// Choice of `eta` for the separable product-class kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta {
    /// `eta(x) = (1 + x)^q`, `0 <= q < 1`.
    OnePlusPow(f64),
    /// `eta(x) = max(1, x)^q`, `0 <= q < 1`.
    MaxPow(f64),
}

impl Eta {
    fn check(q: f64) -> Result<()> {
        if !(0.0..1.0).contains(&q) {
            return Err(GedgError::Config(format!(
                "eta exponent must lie in [0, 1) so that eta(x)/x -> 0, got {q}"
            )));
        }
        Ok(())
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Eta::OnePlusPow(q) => (1.0 + x).powf(q),
            Eta::MaxPow(q) => x.max(1.0).powf(q),
        }
    }

    /// `sup_{x >= 1} eta(x) / (1 + x)`, attained at `x = 1` for `q < 1`.
    pub fn eta_star(self) -> f64 {
        match self {
            Eta::OnePlusPow(q) => 2f64.powf(q - 1.0),
            Eta::MaxPow(_) => 0.5,
        }
    }

    /// Factor needed in `A` to cover the `(0,1)^2` quadrant when `eta > 1` there.
    fn quadrant_factor(self) -> f64 {
        match self {
            Eta::OnePlusPow(q) => 4f64.powf(q),
            Eta::MaxPow(_) => 1.0,
        }
    }
}

fn check_a(a: f64) -> Result<()> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(GedgError::Config(format!(
            "kernel constant a must be finite and >= 0, got {a}"
        )));
    }
    Ok(())
}

impl Kernel {
    /// Sum-class kernel `a * max(1, x + y)^p * phi(z)`, `0 <= p <= 1`.
    ///
    /// `p = 0` gives the kernel that is constant in the cluster masses.
    pub fn separable_sum(a: f64, p: f64, phi: Envelope) -> Result<Self> {
        check_a(a)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(GedgError::Config(format!(
                "sum-class growth exponent must lie in [0, 1], got {p}"
            )));
        }
        let weight: WeightFn = if p == 0.0 {
            Arc::new(move |_, _| a)
        } else {
            Arc::new(move |x: f64, y: f64| a * (x + y).max(1.0).powf(p))
        };
        Ok(Self {
            form: Form::Separable(weight),
            class: KernelClass::Sum,
            a_const: a,
            phi,
            eta: None,
            eta_star: None,
        })
    }

    /// Product-class kernel `a * eta(x) * eta(y) * phi(z)`.
    ///
    /// The class constant is `a` scaled so that the `(0,1)^2` quadrant is covered.
    pub fn separable_product(a: f64, eta: Eta, phi: Envelope) -> Result<Self> {
        check_a(a)?;
        match eta {
            Eta::OnePlusPow(q) | Eta::MaxPow(q) => Eta::check(q)?,
        }
        Ok(Self {
            form: Form::Separable(Arc::new(move |x, y| a * eta.eval(x) * eta.eval(y))),
            class: KernelClass::Product,
            a_const: a * eta.quadrant_factor(),
            phi,
            eta: Some(Arc::new(move |x| eta.eval(x))),
            eta_star: Some(eta.eta_star()),
        })
    }

    /// Kernel of the form `weight(x, y) * phi(z)` with caller-declared class metadata.
    pub fn from_weight(
        weight: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        class: KernelClass,
        a_const: f64,
        phi: Envelope,
    ) -> Result<Self> {
        check_a(a_const)?;
        Ok(Self {
            form: Form::Separable(Arc::new(weight)),
            class,
            a_const,
            phi,
            eta: None,
            eta_star: None,
        })
    }

    /// Arbitrary rate function with caller-declared class metadata.
    pub fn from_fn(
        rate: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        class: KernelClass,
        a_const: f64,
        phi: Envelope,
    ) -> Result<Self> {
        check_a(a_const)?;
        Ok(Self {
            form: Form::General(Arc::new(rate)),
            class,
            a_const,
            phi,
            eta: None,
            eta_star: None,
        })
    }

    pub fn from_table(table: KernelTable, a_const: f64, phi: Envelope) -> Result<Self> {
        check_a(a_const)?;
        Ok(Self {
            form: Form::Table(Arc::new(table)),
            class: KernelClass::Custom,
            a_const,
            phi,
            eta: None,
            eta_star: None,
        })
    }

    pub fn zero() -> Self {
        Self {
            form: Form::Separable(Arc::new(|_, _| 0.0)),
            class: KernelClass::Sum,
            a_const: 0.0,
            phi: Envelope::Exp { rate: 1.0 },
            eta: None,
            eta_star: None,
        }
    }

    /// Attaches a product-class `eta`. `eta_star` is estimated on a geometric grid.
    pub fn with_eta(mut self, eta: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let eta: ScalarFn = Arc::new(eta);
        let star = (0..=120)
            .map(|k| 10f64.powf(k as f64 * 0.05))
            .map(|x| eta(x) / (1.0 + x))
            .fold(0.0, f64::max);
        self.eta = Some(eta);
        self.eta_star = Some(star);
        self
    }

    pub fn class(&self) -> KernelClass {
        self.class
    }

    pub fn a_const(&self) -> f64 {
        self.a_const
    }

    pub fn phi(&self) -> &Envelope {
        &self.phi
    }

    pub fn eta(&self, x: f64) -> Option<f64> {
        self.eta.as_ref().map(|e| e(x))
    }

    /// `eta* = sup_{x >= 1} eta(x) / (1 + x)`; zero when no `eta` is attached.
    pub fn eta_star(&self) -> f64 {
        self.eta_star.unwrap_or(0.0)
    }

    /// Rate without argument checks. Zero whenever `z > x`.
    #[inline]
    pub fn rate(&self, x: f64, y: f64, z: f64) -> f64 {
        if z > x {
            return 0.0;
        }
        match &self.form {
            Form::Separable(w) => w(x, y) * self.phi.value(z),
            Form::General(f) => f(x, y, z),
            Form::Table(t) => t.value(x, y, z),
        }
    }

    /// Checked evaluation for `x > 0`, `y >= 0`, `z > 0`.
    pub fn eval(&self, x: f64, y: f64, z: f64) -> Result<f64> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GedgError::Domain(format!(
                "non-finite kernel argument ({x}, {y}, {z})"
            )));
        }
        if x <= 0.0 || y < 0.0 || z <= 0.0 {
            return Err(GedgError::Domain(format!(
                "kernel arguments must satisfy x > 0, y >= 0, z > 0; got ({x}, {y}, {z})"
            )));
        }
        Ok(self.rate(x, y, z))
    }

    pub fn truncate(&self, n: f64) -> Result<TruncatedKernel> {
        TruncatedKernel::new(self.clone(), n)
    }

    /// Total donor-to-acceptor rate `K(u, v) = int_0^u A(u, v; w) dw` by composite
    /// Gauss-Legendre quadrature on `quad_cells` (at least 16) cells.
    pub fn pair_rate(&self, u: f64, v: f64, quad_cells: usize) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        quad::gauss_legendre(|w| self.rate(u, v, w), 0.0, u, quad_cells.max(16))
    }

    /// Closed-form `K(u, v)` for separable kernels with a closed-form envelope.
    pub fn pair_rate_exact(&self, u: f64, v: f64) -> Option<f64> {
        match &self.form {
            Form::Separable(w) if self.phi.has_closed_form() => {
                if u <= 0.0 {
                    Some(0.0)
                } else {
                    Some(w(u, v) * self.phi.cumulative(u))
                }
            }
            _ => None,
        }
    }

    /// Pair rate by the fastest available route.
    pub fn pair_rate_auto(&self, u: f64, v: f64, quad_cells: usize) -> f64 {
        self.pair_rate_exact(u, v)
            .unwrap_or_else(|| self.pair_rate(u, v, quad_cells))
    }

    /// The per-donor factor `Phi(u)` when `K(u, v) = weight(u, v) * Phi(u)`.
    pub(crate) fn donor_capacity(&self, u: f64) -> Option<f64> {
        match &self.form {
            Form::Separable(_) if self.phi.has_closed_form() => Some(self.phi.cumulative(u)),
            _ => None,
        }
    }

    pub(crate) fn weight(&self, x: f64, y: f64) -> Option<f64> {
        match &self.form {
            Form::Separable(w) => Some(w(x, y)),
            _ => None,
        }
    }

    /// Draws a chunk `w` in `(0, u]` from the density `A(u, v; .) / K(u, v)`.
    pub fn sample_chunk<R: Rng + ?Sized>(&self, u: f64, v: f64, rng: &mut R) -> Result<f64> {
        self.sample_chunk_with(u, v, DEFAULT_SAMPLER_CELLS, rng)
    }

    /// As [`Kernel::sample_chunk`], with the resolution of the numerical inverse CDF
    /// used for non-separable kernels.
    pub fn sample_chunk_with<R: Rng + ?Sized>(
        &self,
        u: f64,
        v: f64,
        cells: usize,
        rng: &mut R,
    ) -> Result<f64> {
        // p in (0, 1] so that the draw never lands on 0.
        let p = 1.0 - rng.gen::<f64>();
        match &self.form {
            Form::Separable(w) => {
                if !(u > 0.0 && w(u, v) > 0.0 && self.phi.cumulative(u) > 0.0) {
                    return Err(zero_rate(u, v));
                }
                Ok(self.phi.sample_truncated(u, p))
            }
            _ => {
                let cdf = SliceCdf::build(self, u, v, cells);
                if !(cdf.total() > 0.0) {
                    return Err(zero_rate(u, v));
                }
                Ok(cdf.invert(p))
            }
        }
    }
}

fn zero_rate(u: f64, v: f64) -> GedgError {
    GedgError::Logic(format!(
        "chunk requested for a pair with zero total rate (u = {u}, v = {v})"
    ))
}

pub(crate) const DEFAULT_SAMPLER_CELLS: usize = 256;

/// Cumulative distribution of the kernel slice `A(u, v; .)` on a uniform grid of `(0, u]`.
struct SliceCdf {
    u: f64,
    h: f64,
    cumulative: Vec<f64>,
}

impl SliceCdf {
    fn build(k: &Kernel, u: f64, v: f64, cells: usize) -> Self {
        let cells = cells.max(16);
        let h = u / cells as f64;
        let mut cumulative = Vec::with_capacity(cells + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for c in 0..cells {
            let lo = c as f64 * h;
            acc += quad::gauss_legendre(|w| k.rate(u, v, w), lo, lo + h, 1);
            cumulative.push(acc);
        }
        Self { u, h, cumulative }
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    /// Piecewise-uniform inversion inside the located cell.
    fn invert(&self, p: f64) -> f64 {
        let target = p * self.total();
        let k = self.cumulative[1..]
            .partition_point(|&c| c < target)
            .min(self.cumulative.len() - 2);
        let mass = self.cumulative[k + 1] - self.cumulative[k];
        let frac = if mass > 0.0 {
            ((target - self.cumulative[k]) / mass).clamp(0.0, 1.0)
        } else {
            1.0
        };
        ((k as f64 + frac) * self.h).clamp(f64::MIN_POSITIVE, self.u)
    }
}

/// Kernel restricted to the mass window `(0, n)`:
/// `A_n(x, y; z) = A(x, y; z) * [0 < x < n] * [0 < y + z < n]`.
#[derive(Debug, Clone)]
pub struct TruncatedKernel {
    base: Kernel,
    n: f64,
}

impl TruncatedKernel {
    pub fn new(base: Kernel, n: f64) -> Result<Self> {
        if !(n.is_finite() && n > 1.0) {
            return Err(GedgError::Config(format!(
                "mass cutoff n must satisfy n > 1, got {n}"
            )));
        }
        Ok(Self { base, n })
    }

    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    #[inline]
    pub fn rate(&self, x: f64, y: f64, z: f64) -> f64 {
        if x > 0.0 && x < self.n && y + z > 0.0 && y + z < self.n {
            self.base.rate(x, y, z)
        } else {
            0.0
        }
    }

    pub fn eval(&self, x: f64, y: f64, z: f64) -> Result<f64> {
        self.base.eval(x, y, z)?;
        Ok(self.rate(x, y, z))
    }

    /// `4 a n^2 phi(z)`, the bound on the truncated kernel used for Lipschitz estimates.
    pub fn sup_bound(&self, z: f64) -> f64 {
        4.0 * self.base.a_const * self.n * self.n * self.base.phi.value(z)
    }
}
