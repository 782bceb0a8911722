//! Event tensor and the conservative right-hand side of the truncated system.
//!
//! Every admissible event `(i, j, k)` moves one cluster from bin `i` to `i - k`
//! and one from bin `j` to `j + k` with flux `R_ijk c_i c_j`. Summing the four
//! bin updates per event gives the discrete gain/loss terms
//!
//! * `B1`: gain at `i - k` (a donor leaves with the remainder),
//! * `D1`: loss at `j` (an acceptor is consumed),
//! * `B2`: gain at `j + k` (the enlarged acceptor),
//! * `D2`: loss at `i` (the donor is consumed),
//!
//! and makes the number and mass identities hold event by event.

use crate::error::{GedgError, Result};
use crate::grid::{Density, SizeGrid};
use crate::kernels::TruncatedKernel;

/// A contiguous range of acceptor bins `j0..j0 + len` sharing donor `i` and chunk `k`.
#[derive(Debug, Clone, Copy)]
struct Run {
    i: u32,
    k: u32,
    j0: u32,
    len: u32,
    start: usize,
}

/// Precomputed rates `R_ijk` over the admissible set
/// `{1 <= k <= i <= N, j >= 1 (or 0 when voids accept), j + k <= N}`.
///
/// `R_ijk = A(i dx, j dx; k dx) * w_ijk`, where the chunk weight `w_ijk` is the
/// length of the chunk cell `(k dx - dx/2, k dx + dx/2]` inside the admissible
/// range `(0, min(x, n - y)]`: `dx` inside, `dx/2` on the cell that holds the
/// upper limit. Zero rates are not stored.
#[derive(Debug, Clone)]
pub struct EventTensor {
    cells: usize,
    dx: f64,
    void_accepts: bool,
    runs: Vec<Run>,
    rates: Vec<f64>,
}

/// One stored event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub rate: f64,
}

/// Chunk quadrature weight for donor bin `i`, acceptor bin `j`, chunk bin `k`.
#[inline]
pub fn chunk_weight(i: usize, j: usize, k: usize, cells: usize, dx: f64) -> f64 {
    if k == i.min(cells - j) {
        0.5 * dx
    } else {
        dx
    }
}

/// Builds the event tensor of `tk` on `grid`.
pub fn assemble_event_tensor(
    tk: &TruncatedKernel,
    grid: &SizeGrid,
    void_accepts: bool,
) -> Result<EventTensor> {
    if (tk.n() - grid.n()).abs() > 1e-12 * grid.n() {
        return Err(GedgError::Config(format!(
            "kernel cutoff n = {} does not match grid cutoff n = {}",
            tk.n(),
            grid.n()
        )));
    }
    let cells = grid.cells();
    if cells >= u32::MAX as usize {
        return Err(GedgError::Config(format!("cell count {cells} is too large")));
    }
    let dx = grid.dx();
    let base = tk.base();
    let j_min = usize::from(!void_accepts);
    let mut runs = Vec::new();
    let mut rates = Vec::new();
    for i in 1..=cells {
        let x = grid.mass(i);
        for k in 1..=i {
            let z = grid.mass(k);
            let mut open: Option<Run> = None;
            for j in j_min..=cells - k {
                let r = base.rate(x, grid.mass(j), z) * chunk_weight(i, j, k, cells, dx);
                if r > 0.0 {
                    let run = open.get_or_insert(Run {
                        i: i as u32,
                        k: k as u32,
                        j0: j as u32,
                        len: 0,
                        start: rates.len(),
                    });
                    run.len += 1;
                    rates.push(r);
                } else {
                    if r.is_nan() || r < 0.0 {
                        return Err(GedgError::Data(format!(
                            "kernel returned {r} at (x, y, z) = ({x}, {}, {z})",
                            grid.mass(j)
                        )));
                    }
                    if let Some(run) = open.take() {
                        runs.push(run);
                    }
                }
            }
            if let Some(run) = open.take() {
                runs.push(run);
            }
        }
    }
    Ok(EventTensor {
        cells,
        dx,
        void_accepts,
        runs,
        rates,
    })
}

impl EventTensor {
    /// Number of stored (nonzero) events.
    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn void_accepts(&self) -> bool {
        self.void_accepts
    }

    /// All events in `(i, k, j)` order.
    pub fn entries(&self) -> impl Iterator<Item = Entry> + '_ {
        self.runs.iter().flat_map(move |run| {
            self.rates[run.start..run.start + run.len as usize]
                .iter()
                .enumerate()
                .map(move |(t, &rate)| Entry {
                    i: run.i as usize,
                    j: run.j0 as usize + t,
                    k: run.k as usize,
                    rate,
                })
        })
    }

    fn check(&self, c: &[f64]) {
        assert_eq!(
            c.len(),
            self.cells + 1,
            "density and event tensor live on different grids"
        );
    }
}

/// Scratch arrays for [`eval_rhs_into`], reusable across evaluations.
#[derive(Debug, Clone, Default)]
pub struct RhsWorkspace {
    donor_loss: Vec<f64>,
    donor_gain: Vec<f64>,
    acceptor_loss: Vec<f64>,
    acceptor_gain: Vec<f64>,
}

impl RhsWorkspace {
    pub fn new(bins: usize) -> Self {
        Self {
            donor_loss: vec![0.0; bins],
            donor_gain: vec![0.0; bins],
            acceptor_loss: vec![0.0; bins],
            acceptor_gain: vec![0.0; bins],
        }
    }

    fn accumulate(&mut self, c: &[f64], et: &EventTensor) {
        let bins = c.len();
        for v in [
            &mut self.donor_loss,
            &mut self.donor_gain,
            &mut self.acceptor_loss,
            &mut self.acceptor_gain,
        ] {
            v.clear();
            v.resize(bins, 0.0);
        }
        for run in &et.runs {
            let i = run.i as usize;
            let ci = c[i];
            if ci == 0.0 {
                continue;
            }
            let k = run.k as usize;
            let j0 = run.j0 as usize;
            let len = run.len as usize;
            let rates = &et.rates[run.start..run.start + len];
            let cj = &c[j0..j0 + len];
            let loss = &mut self.acceptor_loss[j0..j0 + len];
            let gain = &mut self.acceptor_gain[j0 + k..j0 + k + len];
            let total = run_fluxes(ci, rates, cj, loss, gain);
            self.donor_loss[i] += total;
            self.donor_gain[i - k] += total;
        }
    }
}

/// Adds `R c_i c_j` to the acceptor loss and gain slices and returns the run total.
///
/// Four independent partial sums let the loop vectorize.
#[inline]
fn run_fluxes(ci: f64, rates: &[f64], cj: &[f64], loss: &mut [f64], gain: &mut [f64]) -> f64 {
    let split = rates.len() / 4 * 4;
    let (r_head, r_tail) = rates.split_at(split);
    let (c_head, c_tail) = cj.split_at(split);
    let (l_head, l_tail) = loss.split_at_mut(split);
    let (g_head, g_tail) = gain.split_at_mut(split);
    let mut acc = [0.0f64; 4];
    for (((r, c), l), g) in r_head
        .chunks_exact(4)
        .zip(c_head.chunks_exact(4))
        .zip(l_head.chunks_exact_mut(4))
        .zip(g_head.chunks_exact_mut(4))
    {
        for lane in 0..4 {
            let f = r[lane] * ci * c[lane];
            l[lane] += f;
            g[lane] += f;
            acc[lane] += f;
        }
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (((r, c), l), g) in r_tail.iter().zip(c_tail).zip(l_tail).zip(g_tail) {
        let f = r * ci * c;
        *l += f;
        *g += f;
        total += f;
    }
    total
}

/// `dc/dt` into `out`, reusing `ws`.
pub fn eval_rhs_into(c: &[f64], et: &EventTensor, ws: &mut RhsWorkspace, out: &mut [f64]) {
    et.check(c);
    ws.accumulate(c, et);
    for (b, o) in out.iter_mut().enumerate() {
        *o = (ws.donor_gain[b] - ws.donor_loss[b]) + (ws.acceptor_gain[b] - ws.acceptor_loss[b]);
    }
}

/// `dc/dt` for the density `d`.
pub fn eval_rhs(d: &Density, et: &EventTensor, _grid: &SizeGrid) -> Vec<f64> {
    let c = d.counts();
    let mut ws = RhsWorkspace::new(c.len());
    let mut out = vec![0.0; c.len()];
    eval_rhs_into(c, et, &mut ws, &mut out);
    out
}

/// The four contributions to `dc/dt`, signed so that `b1 + d1 + b2 + d2` is the RHS.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsTerms {
    pub b1: Vec<f64>,
    pub d1: Vec<f64>,
    pub b2: Vec<f64>,
    pub d2: Vec<f64>,
}

pub fn rhs_terms(d: &Density, et: &EventTensor, _grid: &SizeGrid) -> RhsTerms {
    let c = d.counts();
    et.check(c);
    let mut ws = RhsWorkspace::new(c.len());
    ws.accumulate(c, et);
    RhsTerms {
        b1: ws.donor_gain,
        d1: ws.acceptor_loss.iter().map(|v| -v).collect(),
        b2: ws.acceptor_gain,
        d2: ws.donor_loss.iter().map(|v| -v).collect(),
    }
}

/// `sum over events of [w(j + k) + w(i - k) - w(i) - w(j)] R_ijk c_i c_j`.
///
/// Computed entry by entry, independently of the bin accumulation in [`eval_rhs`].
pub fn weak_form_rate(d: &Density, et: &EventTensor, _grid: &SizeGrid, omega: &[f64]) -> f64 {
    let c = d.counts();
    et.check(c);
    assert_eq!(omega.len(), c.len(), "test function has the wrong length");
    et.entries()
        .map(|e| {
            let w = omega[e.j + e.k] + omega[e.i - e.k] - omega[e.i] - omega[e.j];
            w * e.rate * c[e.i] * c[e.j]
        })
        .sum()
}
