//! CSV and JSON artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use gedg_core::convex::{equiintegrability_functional, tail_moment, BoundInputs, ConvexWeight};
use gedg_core::grid::{moment, number_without_void, write_snapshot, Density, SizeGrid};
use gedg_core::GedgError;

pub const MOMENT_HEADER: &str = "t,M0,M0_with_void,M1,Msigma1,sigma2_functional,min_density,dt";

pub fn create_dir(dir: &Path) -> Result<(), GedgError> {
    fs::create_dir_all(dir).map_err(|e| GedgError::io(dir, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>, GedgError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| GedgError::io(path, e))
}

/// Wraps an I/O result with the path it concerns.
pub fn at<T>(path: &Path, r: std::io::Result<T>) -> Result<T, GedgError> {
    r.map_err(|e| GedgError::io(path, e))
}

/// One row of the moment series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentRow {
    pub t: f64,
    pub m0: f64,
    pub m0_with_void: f64,
    pub m1: f64,
    pub msigma1: f64,
    pub sigma2_functional: f64,
    pub min_density: f64,
    pub dt: f64,
}

impl MomentRow {
    pub fn from_density(t: f64, dt: f64, d: &Density, grid: &SizeGrid, w: &ConvexWeight) -> Self {
        Self {
            t,
            m0: number_without_void(d),
            m0_with_void: moment(d, grid, 0.0),
            m1: moment(d, grid, 1.0),
            msigma1: tail_moment(d, grid, w),
            sigma2_functional: equiintegrability_functional(d, grid, w),
            min_density: d.min() / grid.dx(),
            dt,
        }
    }

    pub fn csv(&self) -> String {
        format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.t,
            self.m0,
            self.m0_with_void,
            self.m1,
            self.msigma1,
            self.sigma2_functional,
            self.min_density,
            self.dt
        )
    }
}

/// Streams moment rows to `moments.csv` in `dir`.
pub struct MomentWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl MomentWriter {
    pub fn create(dir: &Path, name: &str, extra_header: Option<&str>) -> Result<Self, GedgError> {
        let path = dir.join(name);
        let mut out = create(&path)?;
        let header = match extra_header {
            Some(extra) => format!("{MOMENT_HEADER},{extra}"),
            None => MOMENT_HEADER.to_string(),
        };
        at(&path, writeln!(out, "{header}"))?;
        Ok(Self { path, out })
    }

    pub fn row(&mut self, row: &MomentRow) -> Result<(), GedgError> {
        at(&self.path, writeln!(self.out, "{}", row.csv()))
    }

    pub fn row_with(&mut self, row: &MomentRow, extra: &str) -> Result<(), GedgError> {
        at(&self.path, writeln!(self.out, "{},{extra}", row.csv()))
    }

    pub fn finish(mut self) -> Result<(), GedgError> {
        at(&self.path, self.out.flush())
    }
}

pub fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t:.6}.csv")
}

pub fn write_density(dir: &Path, t: f64, d: &Density, grid: &SizeGrid) -> Result<(), GedgError> {
    let path = dir.join(snapshot_name(t));
    let mut out = create(&path)?;
    at(&path, write_snapshot(&mut out, d, grid))?;
    at(&path, out.flush())
}

/// Contents of `bounds.json`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub t_end: f64,
    pub sigma: String,
    pub sigma1_at_1: f64,
    #[serde(flatten)]
    pub inputs: BoundInputs,
    pub c0: f64,
    /// `Xi(T)` for sum-class kernels.
    pub xi: Option<f64>,
    /// `Lambda(T)` for product-class kernels.
    pub lambda: Option<f64>,
    pub equiintegrability_factor: f64,
    pub contraction_factor: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), GedgError> {
    let mut out = create(path)?;
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| GedgError::Logic(format!("cannot serialize {}: {e}", path.display())))?;
    at(path, writeln!(out, "{text}"))?;
    at(path, out.flush())
}
