//! Node-aligned mass lattice on `[0, n]`, densities on it, and their moments.
//!
//! Bin `i` sits at mass `i * dx` for `i = 0..=N`; bin 0 holds void clusters.
//! Because every bin is a multiple of `dx`, an event `(i, j, k)` always lands on
//! bins `i - k` and `j + k`, which is what makes the discrete number and mass
//! identities exact.

use std::io::Write;

use serde::Serialize;

use crate::error::{GedgError, Result};
use crate::quad;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SizeGrid {
    n: f64,
    cells: usize,
}

/// Builds the lattice `{0, dx, ..., n}` with `dx = n / cells`.
pub fn make_uniform_grid(n: f64, cells: usize) -> Result<SizeGrid> {
    let mut problems = Vec::new();
    if !(n.is_finite() && n > 1.0) {
        problems.push(format!("mass cutoff n must satisfy n > 1, got {n}"));
    }
    if cells < 2 {
        problems.push(format!("cell count must be at least 2, got {cells}"));
    }
    if !problems.is_empty() {
        return Err(GedgError::Config(problems.join("; ")));
    }
    Ok(SizeGrid { n, cells })
}

impl SizeGrid {
    pub fn n(&self) -> f64 {
        self.n
    }

    /// Number of cells `N`; the lattice has `N + 1` bins.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn bins(&self) -> usize {
        self.cells + 1
    }

    pub fn dx(&self) -> f64 {
        self.n / self.cells as f64
    }

    #[inline]
    pub fn mass(&self, i: usize) -> f64 {
        if i == self.cells {
            self.n
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn masses(&self) -> Vec<f64> {
        (0..self.bins()).map(|i| self.mass(i)).collect()
    }

    /// `max{1, sqrt(x)}` at every bin; bin 0 gets weight 1.
    pub fn uniqueness_weights(&self) -> Vec<f64> {
        (0..self.bins()).map(|i| self.mass(i).sqrt().max(1.0)).collect()
    }

    fn check(&self, d: &Density) -> Result<()> {
        if d.c.len() != self.bins() {
            return Err(GedgError::Logic(format!(
                "density has {} bins but the grid has {}",
                d.c.len(),
                self.bins()
            )));
        }
        Ok(())
    }
}

/// Number concentrations per bin: `c[i]` approximates `zeta(i dx) dx`, `c[0]` counts void clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    c: Vec<f64>,
}

impl Density {
    pub fn zeros(grid: &SizeGrid) -> Self {
        Self {
            c: vec![0.0; grid.bins()],
        }
    }

    pub fn from_counts(grid: &SizeGrid, counts: Vec<f64>) -> Result<Self> {
        let d = Self { c: counts };
        grid.check(&d)?;
        if let Some(v) = d.c.iter().find(|v| !v.is_finite()) {
            return Err(GedgError::Data(format!("non-finite bin count {v}")));
        }
        Ok(d)
    }

    pub fn counts(&self) -> &[f64] {
        &self.c
    }

    pub fn counts_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    pub fn into_counts(self) -> Vec<f64> {
        self.c
    }

    pub fn void_count(&self) -> f64 {
        self.c[0]
    }

    pub fn min(&self) -> f64 {
        self.c.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l1_norm(&self) -> f64 {
        self.c.iter().map(|v| v.abs()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }
}

/// Sub-cells of Gauss-Legendre quadrature per lattice cell.
const PROJECTION_SUBCELLS: usize = 8;

/// Projects `f` restricted to `(0, n)` onto the lattice.
///
/// Each bin receives `int f(x) h_i(x) dx` against the hat function `h_i` centred on
/// its node, so both `int f` and `int x f` are reproduced exactly up to quadrature.
/// The share of the first cell that would land on the void bin is moved to bins 1
/// and 2 in the combination that keeps both integrals, so `c[0] = 0`.
pub fn project_initial(f: &dyn Fn(f64) -> f64, grid: &SizeGrid) -> Result<Density> {
    let n = grid.cells;
    let dx = grid.dx();
    let mut c = vec![0.0; grid.bins()];
    for cell in 0..n {
        let lo = grid.mass(cell);
        let hi = grid.mass(cell + 1);
        let h = hi - lo;
        let right = quad::gauss_legendre(|x| f(x) * ((x - lo) / h), lo, hi, PROJECTION_SUBCELLS);
        let total = quad::gauss_legendre(f, lo, hi, PROJECTION_SUBCELLS);
        c[cell] += total - right;
        c[cell + 1] += right;
    }
    if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(GedgError::Data(format!(
            "initial data integrates to {v} near mass {}",
            i as f64 * dx
        )));
    }
    if let Some((i, v)) = c.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(GedgError::Data(format!(
            "initial data is negative near mass {} (bin weight {v})",
            i as f64 * dx
        )));
    }
    let w0 = std::mem::take(&mut c[0]);
    fold_first_cell(&mut c, w0);
    Ok(Density { c })
}

/// Moves the node-0 hat share `w0` of the first cell onto bins 1 and 2, keeping
/// number and mass.
fn fold_first_cell(c: &mut [f64], w0: f64) {
    if w0 <= 0.0 {
        return;
    }
    if c.len() > 2 && c[2] >= w0 {
        c[1] += 2.0 * w0;
        c[2] -= w0;
    } else {
        // Not enough weight at bin 2 to rebalance; keep the number, give up mass.
        c[1] += w0;
    }
}

/// `sum_{i >= 1} (i dx)^r c_i`, plus the void bin when `r = 0`.
pub fn moment(d: &Density, grid: &SizeGrid, r: f64) -> f64 {
    if r == 0.0 {
        return d.c.iter().sum();
    }
    let tail: f64 = if r == 1.0 {
        d.c.iter().enumerate().skip(1).map(|(i, c)| grid.mass(i) * c).sum()
    } else {
        d.c.iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| grid.mass(i).powf(r) * c)
            .sum()
    };
    tail
}

/// Number of non-void clusters, `sum_{i >= 1} c_i`.
pub fn number_without_void(d: &Density) -> f64 {
    d.c[1..].iter().sum()
}

/// `sum_i max{1, sqrt(i dx)} |c_i - c'_i|`.
pub fn weighted_l1_distance(d1: &Density, d2: &Density, grid: &SizeGrid) -> Result<f64> {
    grid.check(d1)?;
    grid.check(d2)?;
    Ok(d1
        .c
        .iter()
        .zip(&d2.c)
        .enumerate()
        .map(|(i, (a, b))| grid.mass(i).sqrt().max(1.0) * (a - b).abs())
        .sum())
}

/// `int_0^n |zeta - zeta'| dx` over the non-void bins.
pub fn l1_distance(d1: &Density, d2: &Density, grid: &SizeGrid) -> Result<f64> {
    grid.check(d1)?;
    grid.check(d2)?;
    Ok(d1.c[1..]
        .iter()
        .zip(&d2.c[1..])
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// Writes `x,zeta` rows for bins `1..=N` followed by a `void_count,<c0>` line.
pub fn write_snapshot<W: Write>(out: &mut W, d: &Density, grid: &SizeGrid) -> std::io::Result<()> {
    let dx = grid.dx();
    writeln!(out, "x,zeta")?;
    for i in 1..grid.bins() {
        writeln!(out, "{:.16e},{:.16e}", grid.mass(i), d.c[i] / dx)?;
    }
    writeln!(out, "void_count,{:.16e}", d.c[0])
}

/// Distributes point masses onto the lattice with the same linear map as
/// [`project_initial`]: hat weights, with the first-cell share folded off bin 0.
/// Exact zeros are void clusters and go to bin 0.
///
/// Masses above `n` are dropped and counted in the returned overflow.
pub fn bin_masses(masses: &[f64], weight: f64, grid: &SizeGrid) -> (Density, usize) {
    let mut c = vec![0.0; grid.bins()];
    let dx = grid.dx();
    let mut overflow = 0;
    let mut voids = 0.0;
    let mut w0 = 0.0;
    for &m in masses {
        if m > grid.n {
            overflow += 1;
            continue;
        }
        if m == 0.0 {
            voids += weight;
            continue;
        }
        let s = m / dx;
        let i = (s.floor() as usize).min(grid.cells);
        let frac = s - i as f64;
        if i == grid.cells || frac == 0.0 {
            c[i] += weight;
        } else if i == 0 {
            w0 += weight * (1.0 - frac);
            c[1] += weight * frac;
        } else {
            c[i] += weight * (1.0 - frac);
            c[i + 1] += weight * frac;
        }
    }
    fold_first_cell(&mut c, w0);
    c[0] = voids;
    (Density { c }, overflow)
}
