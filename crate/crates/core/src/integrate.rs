//! Explicit time stepping of the truncated system.
//!
//! Two schemes are available: classical fixed-step RK4 and the adaptive
//! Dormand-Prince 5(4) pair. Both reject any stage result with a negative bin and
//! retry with half the step; number and mass are monitored after every accepted
//! step and a drift beyond `cons_tol` aborts the run.

use crate::error::{GedgError, Result};
use crate::grid::{moment, project_initial, Density, SizeGrid};
use crate::kernels::{Kernel, TruncatedKernel};
use crate::rhs::{assemble_event_tensor, eval_rhs_into, EventTensor, RhsWorkspace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Rk4 { dt: f64 },
    /// `dt0` seeds the first step; `None` derives a guess from the initial right-hand side.
    Rk45 { rtol: f64, atol: f64, dt0: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub method: Method,
    /// Relative drift of `M0` and `M1` that aborts the run.
    pub cons_tol: f64,
    /// Consecutive rejections tolerated before giving up.
    pub max_rejections: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            method: Method::Rk45 {
                rtol: 1e-6,
                atol: 1e-12,
                dt0: None,
            },
            cons_tol: 1e-8,
            max_rejections: 40,
        }
    }
}

impl StepControl {
    pub fn rk4(dt: f64) -> Self {
        Self {
            method: Method::Rk4 { dt },
            ..Self::default()
        }
    }

    pub fn rk45(rtol: f64, atol: f64) -> Self {
        Self {
            method: Method::Rk45 { rtol, atol, dt0: None },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        match self.method {
            Method::Rk4 { dt } => {
                if !(dt.is_finite() && dt > 0.0) {
                    bad.push(format!("dt must be positive, got {dt}"));
                }
            }
            Method::Rk45 { rtol, atol, dt0 } => {
                if !(rtol.is_finite() && rtol > 0.0) {
                    bad.push(format!("rtol must be positive, got {rtol}"));
                }
                if !(atol.is_finite() && atol > 0.0) {
                    bad.push(format!("atol must be positive, got {atol}"));
                }
                if let Some(dt) = dt0 {
                    if !(dt.is_finite() && dt > 0.0) {
                        bad.push(format!("dt must be positive, got {dt}"));
                    }
                }
            }
        }
        if !(self.cons_tol.is_finite() && self.cons_tol > 0.0) {
            bad.push(format!("cons_tol must be positive, got {}", self.cons_tol));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GedgError::Config(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected_steps: usize,
    pub min_density_seen: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub t: f64,
    pub d: Density,
    pub stats: SolverStats,
    /// Step proposed for the next attempt (adaptive scheme), or the last step taken.
    pub dt: f64,
    m0_ref: f64,
    m1_ref: f64,
}

impl SolverState {
    pub fn new(d: Density, grid: &SizeGrid) -> Self {
        let min = d.min();
        Self {
            t: 0.0,
            m0_ref: moment(&d, grid, 0.0),
            m1_ref: moment(&d, grid, 1.0),
            d,
            stats: SolverStats {
                steps: 0,
                rejected_steps: 0,
                min_density_seen: min,
            },
            dt: 0.0,
        }
    }
}

/// `1 / (16 a n^2 ||phi||_{L1(0,n)} ||d||_1)`, or `+inf` when the density or kernel vanishes.
pub fn stability_dt(d: &Density, tk: &TruncatedKernel, _grid: &SizeGrid) -> f64 {
    let n = tk.n();
    let lipschitz = 16.0 * tk.base().a_const() * n * n * tk.base().phi().l1_norm_on(n);
    let mass = d.l1_norm();
    if lipschitz == 0.0 || mass == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (lipschitz * mass)
    }
}

/// Stepper that owns the scratch space for one trajectory.
pub struct Solver<'a> {
    et: &'a EventTensor,
    grid: SizeGrid,
    control: StepControl,
    ws: RhsWorkspace,
    k: [Vec<f64>; 7],
    y: Vec<f64>,
    y_new: Vec<f64>,
    fsal_valid: bool,
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

enum Attempt {
    Accepted { dt_next: f64 },
    /// Error estimate too large; retry with the given step.
    Inaccurate { dt_retry: f64 },
    Negative,
}

impl<'a> Solver<'a> {
    pub fn new(et: &'a EventTensor, grid: &SizeGrid, control: StepControl) -> Result<Self> {
        control.validate()?;
        if et.cells() != grid.cells() {
            return Err(GedgError::Logic(format!(
                "event tensor has {} cells but the grid has {}",
                et.cells(),
                grid.cells()
            )));
        }
        let bins = grid.bins();
        Ok(Self {
            et,
            grid: *grid,
            control,
            ws: RhsWorkspace::new(bins),
            k: std::array::from_fn(|_| vec![0.0; bins]),
            y: vec![0.0; bins],
            y_new: vec![0.0; bins],
            fsal_valid: false,
        })
    }

    pub fn control(&self) -> &StepControl {
        &self.control
    }

    /// `0.01 ||y|| / ||f(y)||` in the error norm, the usual starting guess.
    fn initial_dt(&mut self, c: &[f64], rtol: f64, atol: f64) -> f64 {
        self.y.copy_from_slice(c);
        self.rhs(0);
        self.fsal_valid = true;
        let (mut ny, mut nf) = (0.0, 0.0);
        for (y, f) in c.iter().zip(&self.k[0]) {
            let scale = atol + rtol * y.abs();
            ny += (y / scale).powi(2);
            nf += (f / scale).powi(2);
        }
        if nf == 0.0 {
            f64::INFINITY
        } else {
            0.01 * (ny / nf).sqrt()
        }
    }

    fn rhs(&mut self, stage: usize) {
        let (k, y) = (&mut self.k, &self.y);
        eval_rhs_into(y, self.et, &mut self.ws, &mut k[stage]);
    }

    /// `y = base + dt * sum_s coef[s] * k[s]`.
    fn combine(&mut self, base: &[f64], dt: f64, coefs: &[(usize, f64)]) {
        for (b, y) in self.y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for &(s, a) in coefs {
                acc += a * self.k[s][b];
            }
            *y = base[b] + dt * acc;
        }
    }

    fn attempt_rk4(&mut self, c: &[f64], dt: f64) -> Attempt {
        self.y.copy_from_slice(c);
        self.rhs(0);
        self.combine(c, dt, &[(0, 0.5)]);
        self.rhs(1);
        self.combine(c, dt, &[(1, 0.5)]);
        self.rhs(2);
        self.combine(c, dt, &[(2, 1.0)]);
        self.rhs(3);
        let sixth = 1.0 / 6.0;
        for b in 0..c.len() {
            self.y_new[b] = c[b]
                + dt * (sixth * self.k[0][b] + 2.0 * sixth * self.k[1][b] + 2.0 * sixth * self.k[2][b] + sixth * self.k[3][b]);
        }
        if self.y_new.iter().any(|&v| v < 0.0) {
            Attempt::Negative
        } else {
            Attempt::Accepted { dt_next: dt }
        }
    }

    fn attempt_dp45(&mut self, c: &[f64], dt: f64, rtol: f64, atol: f64) -> Attempt {
        if !self.fsal_valid {
            self.y.copy_from_slice(c);
            self.rhs(0);
            self.fsal_valid = true;
        }
        self.combine(c, dt, &[(0, A21)]);
        self.rhs(1);
        self.combine(c, dt, &[(0, A31), (1, A32)]);
        self.rhs(2);
        self.combine(c, dt, &[(0, A41), (1, A42), (2, A43)]);
        self.rhs(3);
        self.combine(c, dt, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        self.rhs(4);
        self.combine(c, dt, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        self.rhs(5);
        self.combine(c, dt, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)]);
        self.y_new.copy_from_slice(&self.y);
        if self.y_new.iter().any(|&v| v < 0.0) {
            return Attempt::Negative;
        }
        self.rhs(6);
        let mut err2 = 0.0;
        for b in 0..c.len() {
            let e = dt
                * (E1 * self.k[0][b] + E3 * self.k[2][b] + E4 * self.k[3][b] + E5 * self.k[4][b] + E6 * self.k[5][b]
                    + E7 * self.k[6][b]);
            let scale = atol + rtol * c[b].abs().max(self.y_new[b].abs());
            err2 += (e / scale).powi(2);
        }
        let err = (err2 / c.len() as f64).sqrt();
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            Attempt::Accepted { dt_next: dt * factor }
        } else {
            Attempt::Inaccurate {
                dt_retry: dt * factor.min(0.9),
            }
        }
    }

    /// Advances `state` by one accepted step of at most `max_dt`; returns the step taken.
    pub fn step(&mut self, state: &mut SolverState, max_dt: f64) -> Result<f64> {
        let nominal = match self.control.method {
            Method::Rk4 { dt } => dt,
            Method::Rk45 { dt0, rtol, atol } => {
                if state.dt > 0.0 {
                    state.dt
                } else {
                    dt0.unwrap_or_else(|| self.initial_dt(state.d.counts(), rtol, atol))
                }
            }
        };
        let mut dt = nominal.min(max_dt);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(GedgError::Logic(format!("cannot step with dt = {dt}")));
        }
        if state.d.is_zero() {
            state.t += dt;
            state.dt = nominal;
            state.stats.steps += 1;
            return Ok(dt);
        }
        let c = state.d.counts().to_vec();
        let mut rejections = 0;
        loop {
            let outcome = match self.control.method {
                Method::Rk4 { .. } => self.attempt_rk4(&c, dt),
                Method::Rk45 { rtol, atol, .. } => self.attempt_dp45(&c, dt, rtol, atol),
            };
            let dt_retry = match outcome {
                Attempt::Accepted { dt_next } => {
                    let taken = dt;
                    state.d.counts_mut().copy_from_slice(&self.y_new);
                    if matches!(self.control.method, Method::Rk45 { .. }) {
                        // First-same-as-last: the final stage is the next step's first.
                        self.k.swap(0, 6);
                        state.dt = dt_next;
                    } else {
                        state.dt = taken;
                    }
                    state.t += taken;
                    state.stats.steps += 1;
                    state.stats.min_density_seen = state.stats.min_density_seen.min(state.d.min());
                    self.check_conservation(state)?;
                    return Ok(taken);
                }
                Attempt::Inaccurate { dt_retry } => dt_retry,
                Attempt::Negative => 0.5 * dt,
            };
            rejections += 1;
            state.stats.rejected_steps += 1;
            if rejections >= self.control.max_rejections || dt_retry <= f64::EPSILON * state.t.max(1e-300) {
                let negatives = self.y_new.iter().filter(|&&v| v < 0.0).count();
                return Err(GedgError::Stiffness {
                    t: state.t,
                    dt: dt_retry,
                    rejections,
                    dump: format!(
                        "M0 = {:.6e}, M1 = {:.6e}, min bin = {:.3e}, negative bins in last attempt = {negatives}",
                        moment(&state.d, &self.grid, 0.0),
                        moment(&state.d, &self.grid, 1.0),
                        state.d.min(),
                    ),
                });
            }
            dt = dt_retry;
        }
    }

    fn check_conservation(&self, state: &SolverState) -> Result<()> {
        let tol = self.control.cons_tol;
        for (name, reference, now) in [
            ("M0", state.m0_ref, moment(&state.d, &self.grid, 0.0)),
            ("M1", state.m1_ref, moment(&state.d, &self.grid, 1.0)),
        ] {
            if reference == 0.0 {
                continue;
            }
            let drift = ((now - reference) / reference).abs();
            if !(drift <= tol) {
                return Err(GedgError::ConservationBreach {
                    t: state.t,
                    quantity: name,
                    relative_drift: drift,
                    tolerance: tol,
                });
            }
        }
        Ok(())
    }
}

/// Single accepted step with a fresh solver; convenient for tests and one-off use.
pub fn step(
    state: &SolverState,
    control: &StepControl,
    et: &EventTensor,
    grid: &SizeGrid,
    max_dt: f64,
) -> Result<SolverState> {
    let mut solver = Solver::new(et, grid, *control)?;
    let mut next = state.clone();
    solver.step(&mut next, max_dt)?;
    Ok(next)
}

/// State recorded at one output time.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub density: Density,
    /// Last accepted step before this frame (0 at the initial frame).
    pub dt: f64,
    pub stats: SolverStats,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
}

impl Trajectory {
    pub fn last(&self) -> &Frame {
        self.frames.last().expect("trajectory has the initial frame")
    }
}

/// Sorted, deduplicated output times in `[0, t_end]`, always including both ends.
pub fn output_schedule(t_end: f64, times: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = times
        .iter()
        .copied()
        .filter(|&t| t > 0.0 && t < t_end)
        .collect();
    out.push(0.0);
    out.push(t_end);
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup();
    out
}

/// `count + 1` equally spaced times on `[0, t_end]`.
pub fn uniform_times(t_end: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|k| t_end * k as f64 / count as f64).collect()
}

/// Integrates from `d0` at `t = 0` and records a frame at every output time.
///
/// Steps are shortened to land exactly on output times. `observe` sees every frame
/// as it is produced.
pub fn run(
    d0: Density,
    et: &EventTensor,
    grid: &SizeGrid,
    control: &StepControl,
    output_times: &[f64],
    mut observe: impl FnMut(&Frame) -> Result<()>,
) -> Result<Trajectory> {
    let t_end = output_times.iter().copied().fold(0.0, f64::max);
    let schedule = output_schedule(t_end, output_times);
    let mut solver = Solver::new(et, grid, *control)?;
    let mut state = SolverState::new(d0, grid);
    let mut frames = Vec::with_capacity(schedule.len());
    let first = Frame {
        t: 0.0,
        density: state.d.clone(),
        dt: 0.0,
        stats: state.stats,
    };
    observe(&first)?;
    frames.push(first);
    let mut last_dt = 0.0;
    for &target in &schedule[1..] {
        while state.t < target {
            let remaining = target - state.t;
            last_dt = solver.step(&mut state, remaining)?;
            if (target - state.t).abs() <= 1e-12 * target.max(1.0) {
                state.t = target;
            }
        }
        let frame = Frame {
            t: target,
            density: state.d.clone(),
            dt: last_dt,
            stats: state.stats,
        };
        observe(&frame)?;
        frames.push(frame);
    }
    Ok(Trajectory { frames })
}

/// Convenience wrapper: projects `ic`, assembles the tensor and runs.
pub struct Problem<'k> {
    pub kernel: &'k Kernel,
    pub grid: SizeGrid,
    pub void_accepts: bool,
}

impl Problem<'_> {
    pub fn tensor(&self) -> Result<EventTensor> {
        let tk = self.kernel.truncate(self.grid.n())?;
        assemble_event_tensor(&tk, &self.grid, self.void_accepts)
    }

    pub fn project(&self, ic: &dyn Fn(f64) -> f64) -> Result<Density> {
        project_initial(ic, &self.grid)
    }
}

/// One point of a convergence-in-`n` study.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub n: f64,
    pub grid: SizeGrid,
    pub trajectory: Trajectory,
}

/// Solves the same problem for each cutoff in `ns` at fixed lattice spacing `dx`.
pub fn truncation_sweep(
    kernel: &Kernel,
    ic: &dyn Fn(f64) -> f64,
    ns: &[f64],
    dx: f64,
    control: &StepControl,
    output_times: &[f64],
    void_accepts: bool,
) -> Result<Vec<SweepPoint>> {
    ns.iter()
        .map(|&n| {
            let cells = (n / dx).round();
            if (cells * dx - n).abs() > 1e-9 * n {
                return Err(GedgError::Config(format!(
                    "cutoff n = {n} is not a multiple of dx = {dx}"
                )));
            }
            let grid = crate::grid::make_uniform_grid(n, cells as usize)?;
            let problem = Problem {
                kernel,
                grid,
                void_accepts,
            };
            let et = problem.tensor()?;
            let d0 = problem.project(ic)?;
            let trajectory = run(d0, &et, &grid, control, output_times, |_| Ok(()))?;
            Ok(SweepPoint { n, grid, trajectory })
        })
        .collect()
}
