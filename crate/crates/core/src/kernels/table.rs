//! Data-driven kernels: trilinear interpolation on a rectilinear `(x, y, z)` table.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{GedgError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
    zs: Vec<f64>,
    /// Row-major `[ix][iy][iz]`.
    values: Vec<f64>,
}

impl KernelTable {
    /// Builds a table from axis nodes and row-major values.
    ///
    /// Rejects negative values and any positive value at a node with `z > x`,
    /// since such a kernel would violate the physical constraint.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, zs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        for (name, axis) in [("x", &xs), ("y", &ys), ("z", &zs)] {
            if axis.len() < 2 {
                return Err(GedgError::Data(format!(
                    "kernel table needs at least two {name} nodes"
                )));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) || axis.iter().any(|v| !v.is_finite()) {
                return Err(GedgError::Data(format!(
                    "kernel table {name} axis must be finite and strictly increasing"
                )));
            }
        }
        if values.len() != xs.len() * ys.len() * zs.len() {
            return Err(GedgError::Data(format!(
                "kernel table has {} values, expected {}",
                values.len(),
                xs.len() * ys.len() * zs.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(GedgError::Data(format!(
                "kernel table values must be finite and >= 0, found {v}"
            )));
        }
        let table = Self { xs, ys, zs, values };
        for (ix, &x) in table.xs.iter().enumerate() {
            for iy in 0..table.ys.len() {
                for (iz, &z) in table.zs.iter().enumerate() {
                    let v = table.values[table.index(ix, iy, iz)];
                    if z > x && v > 0.0 {
                        return Err(GedgError::Data(format!(
                            "kernel table violates the physical constraint: value {v} at x = {x}, z = {z} > x"
                        )));
                    }
                }
            }
        }
        Ok(table)
    }

    /// Reads a CSV with header `x,y,z,value` covering the full rectilinear product.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let err = |msg: String| GedgError::Data(format!("{}: {msg}", path.display()));
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| err(e.to_string()))?;
        let mut rows = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| err(e.to_string()))?;
            if record.len() != 4 {
                return Err(err(format!("row {} has {} columns, expected 4", row + 2, record.len())));
            }
            let mut vals = [0.0; 4];
            for (slot, cell) in vals.iter_mut().zip(record.iter()) {
                *slot = cell
                    .parse()
                    .map_err(|_| err(format!("row {}: cannot parse {cell:?}", row + 2)))?;
            }
            rows.push(vals);
        }
        let axis = |c: usize| -> Vec<f64> {
            let mut v: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup();
            v
        };
        let (xs, ys, zs) = (axis(0), axis(1), axis(2));
        let key = |v: f64| v.to_bits();
        let mut seen = BTreeMap::new();
        for r in &rows {
            if seen.insert((key(r[0]), key(r[1]), key(r[2])), r[3]).is_some() {
                return Err(err(format!("duplicate node ({}, {}, {})", r[0], r[1], r[2])));
            }
        }
        let mut values = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &x in &xs {
            for &y in &ys {
                for &z in &zs {
                    let v = seen
                        .get(&(key(x), key(y), key(z)))
                        .ok_or_else(|| err(format!("missing node ({x}, {y}, {z})")))?;
                    values.push(*v);
                }
            }
        }
        Self::new(xs, ys, zs, values)
    }

    fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.ys.len() + iy) * self.zs.len() + iz
    }

    /// Trilinear interpolation; zero outside the table's bounding box.
    pub fn value(&self, x: f64, y: f64, z: f64) -> f64 {
        let (Some((ix, tx)), Some((iy, ty)), Some((iz, tz))) =
            (locate(&self.xs, x), locate(&self.ys, y), locate(&self.zs, z))
        else {
            return 0.0;
        };
        let mut acc = 0.0;
        for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
            for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
                for (dz, wz) in [(0, 1.0 - tz), (1, tz)] {
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        acc += w * self.values[self.index(ix + dx, iy + dy, iz + dz)];
                    }
                }
            }
        }
        acc
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// Cell index and local coordinate in `[0, 1]`, or `None` outside the axis range.
fn locate(axis: &[f64], v: f64) -> Option<(usize, f64)> {
    let last = axis.len() - 1;
    if !(v >= axis[0] && v <= axis[last]) {
        return None;
    }
    let k = axis[1..].partition_point(|&a| a < v).min(last - 1);
    Some((k, (v - axis[k]) / (axis[k + 1] - axis[k])))
}
