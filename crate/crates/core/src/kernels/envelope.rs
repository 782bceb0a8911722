//! The chunk envelope `phi(z)` that bounds the kernel in its chunk argument.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{GedgError, Result};
use crate::quad;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Piecewise-linear function through `(xs[k], ys[k])`, zero outside `[xs[0], xs[last]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Running integral from `xs[0]` to `xs[k]`.
    cumulative: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(GedgError::Data(
                "piecewise-linear table needs at least two (x, y) rows".into(),
            ));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(GedgError::Data("non-finite value in table".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GedgError::Data(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        if xs[0] < 0.0 {
            return Err(GedgError::Data("table abscissae must be >= 0".into()));
        }
        if ys.iter().any(|&y| y < 0.0) {
            return Err(GedgError::Data("table values must be >= 0".into()));
        }
        let mut cumulative = Vec::with_capacity(xs.len());
        cumulative.push(0.0);
        for k in 1..xs.len() {
            let area = 0.5 * (ys[k] + ys[k - 1]) * (xs[k] - xs[k - 1]);
            cumulative.push(cumulative[k - 1] + area);
        }
        Ok(Self { xs, ys, cumulative })
    }

    /// Reads a two-column CSV with a header row, e.g. `z,phi`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            if record.len() != 2 {
                return Err(GedgError::Data(format!(
                    "{}: row {} has {} columns, expected 2",
                    path.display(),
                    row + 2,
                    record.len()
                )));
            }
            xs.push(parse_cell(path, row, &record[0])?);
            ys.push(parse_cell(path, row, &record[1])?);
        }
        Self::new(xs, ys)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn value(&self, x: f64) -> f64 {
        let last = self.xs.len() - 1;
        if !(x >= self.xs[0] && x <= self.xs[last]) {
            return 0.0;
        }
        let k = self.cell_of(x);
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let s = (x - x0) / (x1 - x0);
        self.ys[k] + s * (self.ys[k + 1] - self.ys[k])
    }

    /// Integral of the function over `(-inf, u]`.
    pub fn cumulative(&self, u: f64) -> f64 {
        let last = self.xs.len() - 1;
        if u <= self.xs[0] {
            return 0.0;
        }
        if u >= self.xs[last] {
            return self.cumulative[last];
        }
        let k = self.cell_of(u);
        let s = u - self.xs[k];
        let slope = (self.ys[k + 1] - self.ys[k]) / (self.xs[k + 1] - self.xs[k]);
        self.cumulative[k] + self.ys[k] * s + 0.5 * slope * s * s
    }

    /// Smallest `u` with `cumulative(u) = target`, for `target` in `[0, total]`.
    pub fn inverse_cumulative(&self, target: f64) -> f64 {
        let last = self.xs.len() - 1;
        if target <= 0.0 {
            return self.xs[0];
        }
        if target >= self.cumulative[last] {
            return self.xs[last];
        }
        // First k with cumulative[k + 1] >= target.
        let k = self.cumulative[1..]
            .partition_point(|&c| c < target)
            .min(last - 1);
        let rem = target - self.cumulative[k];
        let h = self.xs[k + 1] - self.xs[k];
        let y0 = self.ys[k];
        let slope = (self.ys[k + 1] - y0) / h;
        // Solve y0 s + slope s^2 / 2 = rem on [0, h].
        let s = if slope.abs() * h < 1e-12 * y0.max(f64::MIN_POSITIVE) {
            rem / y0
        } else {
            let disc = (y0 * y0 + 2.0 * slope * rem).max(0.0);
            2.0 * rem / (y0 + disc.sqrt())
        };
        self.xs[k] + s.clamp(0.0, h)
    }

    fn cell_of(&self, x: f64) -> usize {
        let last = self.xs.len() - 1;
        self.xs[1..].partition_point(|&v| v < x).min(last - 1)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> GedgError {
    GedgError::Data(format!("{}: {e}", path.display()))
}

fn parse_cell(path: &Path, row: usize, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        GedgError::Data(format!(
            "{}: row {}: cannot parse {cell:?} as a number",
            path.display(),
            row + 2
        ))
    })
}

/// The integrable chunk envelope `phi`. Zero for `z <= 0`.
#[derive(Clone)]
pub enum Envelope {
    /// `phi(z) = exp(-rate * z)`.
    Exp { rate: f64 },
    /// Tabulated, linearly interpolated, zero outside the table.
    Table(PiecewiseLinear),
    /// Arbitrary closure, assumed to vanish beyond `support`.
    Custom { f: ScalarFn, support: f64 },
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Envelope::Exp { rate } => write!(f, "Exp {{ rate: {rate} }}"),
            Envelope::Table(t) => write!(f, "Table({} nodes)", t.xs.len()),
            Envelope::Custom { support, .. } => write!(f, "Custom {{ support: {support} }}"),
        }
    }
}

/// Quadrature resolution for closure envelopes.
const CUSTOM_TOL: f64 = 1e-12;

impl Envelope {
    pub fn exp(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(GedgError::Config(format!(
                "exponential envelope rate must be positive, got {rate}"
            )));
        }
        Ok(Envelope::Exp { rate })
    }

    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static, support: f64) -> Self {
        Envelope::Custom {
            f: Arc::new(f),
            support,
        }
    }

    pub fn value(&self, z: f64) -> f64 {
        if z <= 0.0 {
            // phi lives on (0, inf); the limit from the right is used at 0.
            return match self {
                Envelope::Exp { .. } if z == 0.0 => 1.0,
                Envelope::Table(t) if z == 0.0 => t.value(0.0),
                Envelope::Custom { f, .. } if z == 0.0 => f(0.0),
                _ => 0.0,
            };
        }
        match self {
            Envelope::Exp { rate } => (-rate * z).exp(),
            Envelope::Table(t) => t.value(z),
            Envelope::Custom { f, support } => {
                if z > *support {
                    0.0
                } else {
                    f(z)
                }
            }
        }
    }

    /// Point beyond which the envelope is zero or negligible (below `1e-16` relative).
    pub fn support_end(&self) -> f64 {
        match self {
            Envelope::Exp { rate } => 40.0 / rate,
            Envelope::Table(t) => *t.xs.last().expect("table has nodes"),
            Envelope::Custom { support, .. } => *support,
        }
    }

    /// `Phi(u) = int_0^u phi(z) dz`.
    pub fn cumulative(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match self {
            Envelope::Exp { rate } => -(-rate * u).exp_m1() / rate,
            Envelope::Table(t) => t.cumulative(u),
            Envelope::Custom { f, support } => {
                quad::adaptive_simpson(&|z| f(z), 0.0, u.min(*support), CUSTOM_TOL)
            }
        }
    }

    /// `||phi||_{L^1}` on `(0, inf)`.
    pub fn l1_norm(&self) -> f64 {
        match self {
            Envelope::Exp { rate } => 1.0 / rate,
            _ => self.cumulative(self.support_end()),
        }
    }

    /// `||phi||_{L^1}` restricted to `(0, n)`.
    pub fn l1_norm_on(&self, n: f64) -> f64 {
        self.cumulative(n)
    }

    /// `int (1 + z) phi(z) dz`, the norm of `phi` in the space weighted by `(1 + z)`.
    pub fn weighted_l1_norm(&self) -> f64 {
        match self {
            Envelope::Exp { rate } => 1.0 / rate + 1.0 / (rate * rate),
            _ => self.l1_norm() + self.integrate_against(|z| z),
        }
    }

    /// `int_0^inf g(z) phi(z) dz` by adaptive quadrature.
    pub fn integrate_against<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let end = self.support_end();
        let integrand = |z: f64| g(z) * self.value(z);
        match self {
            Envelope::Table(t) => {
                // Integrate node-to-node so the kinks are never straddled.
                t.xs.windows(2)
                    .map(|w| quad::adaptive_simpson(&integrand, w[0], w[1], 1e-13))
                    .sum()
            }
            _ => quad::adaptive_simpson(&integrand, 0.0, end, 1e-13),
        }
    }

    /// Inverse of `Phi` restricted to `(0, u]`: the `w` with `Phi(w) = p * Phi(u)`.
    ///
    /// `p` must lie in `(0, 1]`; the result lies in `(0, u]` whenever `Phi(u) > 0`.
    pub fn sample_truncated(&self, u: f64, p: f64) -> f64 {
        let w = match self {
            Envelope::Exp { rate } => -(p * (-rate * u).exp_m1()).ln_1p() / rate,
            Envelope::Table(t) => t.inverse_cumulative(p * t.cumulative(u)),
            Envelope::Custom { .. } => {
                let target = p * self.cumulative(u);
                let (mut lo, mut hi) = (0.0, u);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if self.cumulative(mid) < target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        };
        w.clamp(f64::MIN_POSITIVE, u)
    }

    /// True when `cumulative` and `sample_truncated` are closed-form.
    pub fn has_closed_form(&self) -> bool {
        !matches!(self, Envelope::Custom { .. })
    }
}
