//! Direct-method stochastic simulation of the exchange reaction.
//!
//! A finite ensemble of cluster masses evolves by ordered-pair events: donor
//! `u`, acceptor `v`, chunk `w in (0, u]`, at rate `K(u, v) / V` where
//! `K(u, v) = int_0^u A(u, v; w) dw` and `V` is the system volume. With `V`
//! equal to the initial particle count (and unit initial number density) the
//! empirical concentrations follow the deterministic equation in the
//! mean-field limit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GedgError, Result};
use crate::grid::{bin_masses, Density, SizeGrid};
use crate::kernels::Kernel;

/// Quadrature cells for pair rates of kernels without a closed form.
pub const PAIR_QUAD_CELLS: usize = 64;

/// Events between full recomputations of the per-particle rate cache.
pub const REFRESH_INTERVAL: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    masses: Vec<f64>,
    volume: f64,
    t: f64,
    rng: ChaCha8Rng,
    void_accepts: bool,
    events: u64,
}

/// Draws `count` i.i.d. masses from `sampler`; the volume is set to `count`.
pub fn init_ensemble(
    sampler: impl FnMut(&mut ChaCha8Rng) -> f64,
    count: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    init_ensemble_with_rng(sampler, count, ChaCha8Rng::seed_from_u64(seed))
}

/// Generator for replica `id` of a run seeded with `master`: same key, distinct stream.
pub fn replica_rng(master: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(id);
    rng
}

pub fn init_ensemble_with_rng(
    mut sampler: impl FnMut(&mut ChaCha8Rng) -> f64,
    count: usize,
    mut rng: ChaCha8Rng,
) -> Result<ParticleEnsemble> {
    if count < 2 {
        return Err(GedgError::Config(format!(
            "an ensemble needs at least two particles to form a pair, got {count}"
        )));
    }
    let mut masses = Vec::with_capacity(count);
    for _ in 0..count {
        let m = sampler(&mut rng);
        if !(m.is_finite() && m >= 0.0) {
            return Err(GedgError::Data(format!("sampled mass {m} is not a finite nonnegative number")));
        }
        masses.push(m);
    }
    Ok(ParticleEnsemble {
        masses,
        volume: count as f64,
        t: 0.0,
        rng,
        void_accepts: false,
        events: 0,
    })
}

impl ParticleEnsemble {
    pub fn from_masses(masses: Vec<f64>, seed: u64) -> Result<Self> {
        let mut it = masses.into_iter();
        let count = it.len();
        init_ensemble(move |_| it.next().unwrap_or(0.0), count, seed)
    }

    pub fn with_volume(mut self, volume: f64) -> Result<Self> {
        if !(volume.is_finite() && volume > 0.0) {
            return Err(GedgError::Config(format!("volume must be positive, got {volume}")));
        }
        self.volume = volume;
        Ok(self)
    }

    pub fn with_void_accepts(mut self, on: bool) -> Self {
        self.void_accepts = on;
        self
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn count(&self) -> usize {
        self.masses.len()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `sum u^r / V`; voids count for `r = 0`.
    pub fn moment(&self, r: f64) -> f64 {
        let s: f64 = if r == 0.0 {
            self.masses.len() as f64
        } else {
            self.masses.iter().map(|u| u.powf(r)).sum()
        };
        s / self.volume
    }

    pub fn voids(&self) -> usize {
        self.masses.iter().filter(|&&u| u == 0.0).count()
    }

    /// Concentrations per lattice bin, with the hat binning of [`bin_masses`].
    pub fn histogram(&self, grid: &SizeGrid) -> (Density, usize) {
        bin_masses(&self.masses, 1.0 / self.volume, grid)
    }
}

/// `K(u, v)` with the void conventions applied.
#[inline]
fn pair_rate(k: &Kernel, u: f64, v: f64, void_accepts: bool) -> f64 {
    if u <= 0.0 || (v == 0.0 && !void_accepts) {
        return 0.0;
    }
    k.pair_rate_auto(u, v, PAIR_QUAD_CELLS)
}

/// `sum over ordered pairs i != j of K(u_i, u_j) / V`, computed directly.
pub fn total_rate(e: &ParticleEnsemble, k: &Kernel) -> f64 {
    let mut s = 0.0;
    for (i, &u) in e.masses.iter().enumerate() {
        if u <= 0.0 {
            continue;
        }
        for (j, &v) in e.masses.iter().enumerate() {
            if i != j {
                s += pair_rate(k, u, v, e.void_accepts);
            }
        }
    }
    s / e.volume
}

/// What one call to [`Ssa::step_until`] did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// An event fired at the new time.
    Event { donor: usize, acceptor: usize, chunk: f64 },
    /// The next event would fall after the horizon; time was moved to the horizon.
    Horizon,
    /// No admissible pair remains.
    Absorbed,
}

/// Direct-method simulator with a per-particle row-sum cache.
///
/// `row[i] = sum_{j != i} K(u_i, u_j)` is updated in `O(count)` per event; only the
/// two particles touched by the event change their own row, and every other row
/// changes in the two columns of those particles.
pub struct Ssa<'k> {
    ensemble: ParticleEnsemble,
    kernel: &'k Kernel,
    /// `Phi(u_i)` when `K(u, v) = weight(u, v) Phi(u)` in closed form.
    capacity: Option<Vec<f64>>,
    row: Vec<f64>,
    scratch: Vec<f64>,
    since_refresh: u64,
}

impl<'k> Ssa<'k> {
    pub fn new(ensemble: ParticleEnsemble, kernel: &'k Kernel) -> Self {
        let count = ensemble.count();
        let capacity = kernel.donor_capacity(1.0).map(|_| {
            ensemble
                .masses
                .iter()
                .map(|&u| kernel.donor_capacity(u).unwrap_or(0.0))
                .collect()
        });
        let mut s = Self {
            ensemble,
            kernel,
            capacity,
            row: vec![0.0; count],
            scratch: vec![0.0; count],
            since_refresh: 0,
        };
        s.refresh();
        s
    }

    pub fn ensemble(&self) -> &ParticleEnsemble {
        &self.ensemble
    }

    pub fn into_ensemble(self) -> ParticleEnsemble {
        self.ensemble
    }

    #[inline]
    fn pair(&self, i: usize, j: usize) -> f64 {
        self.pair_with(i, self.ensemble.masses[j])
    }

    /// `K` between particle `i` (as donor) and an acceptor of mass `v`.
    #[inline]
    fn pair_with(&self, i: usize, v: f64) -> f64 {
        let u = self.ensemble.masses[i];
        if u <= 0.0 || (v == 0.0 && !self.ensemble.void_accepts) {
            return 0.0;
        }
        match &self.capacity {
            Some(cap) => self.kernel.weight(u, v).unwrap_or(0.0) * cap[i],
            None => self.kernel.pair_rate(u, v, PAIR_QUAD_CELLS),
        }
    }

    fn row_of(&self, i: usize) -> f64 {
        (0..self.ensemble.count()).filter(|&j| j != i).map(|j| self.pair(i, j)).sum()
    }

    /// Recomputes every row from scratch.
    pub fn refresh(&mut self) {
        for i in 0..self.ensemble.count() {
            self.row[i] = self.row_of(i);
        }
        self.since_refresh = 0;
    }

    /// Current total event rate `sum_i row[i] / V`.
    pub fn total_rate(&self) -> f64 {
        self.row.iter().sum::<f64>() / self.ensemble.volume
    }

    /// One event, or none if the next event would happen after `horizon`.
    ///
    /// Waiting times are memoryless, so stopping at the horizon and drawing afresh
    /// later leaves the law of the process unchanged.
    pub fn step_until(&mut self, horizon: f64) -> Result<StepOutcome> {
        let row_sum: f64 = self.row.iter().sum();
        if !(row_sum > 0.0) {
            return Ok(StepOutcome::Absorbed);
        }
        let rate = row_sum / self.ensemble.volume;
        let rng = &mut self.ensemble.rng;
        let wait = -(1.0 - rng.gen::<f64>()).ln() / rate;
        if self.ensemble.t + wait > horizon {
            self.ensemble.t = self.ensemble.t.max(horizon);
            return Ok(StepOutcome::Horizon);
        }
        let donor = pick(&self.row, rng.gen::<f64>() * row_sum);
        // Column weights of the donor, evaluated fresh so the choice is exact.
        let count = self.ensemble.count();
        let mut s = 0.0;
        for j in 0..count {
            let r = if j == donor { 0.0 } else { self.pair(donor, j) };
            self.scratch[j] = r;
            s += r;
        }
        if !(s > 0.0) {
            // The cached row drifted away from an exactly zero row.
            self.refresh();
            return self.step_until(horizon);
        }
        let acceptor = pick(&self.scratch, self.ensemble.rng.gen::<f64>() * s);
        let u = self.ensemble.masses[donor];
        let v = self.ensemble.masses[acceptor];
        let chunk = self.kernel.sample_chunk(u, v, &mut self.ensemble.rng)?;
        self.ensemble.t += wait;
        self.apply(donor, acceptor, u, v, chunk);
        Ok(StepOutcome::Event { donor, acceptor, chunk })
    }

    fn apply(&mut self, d: usize, a: usize, u: f64, v: f64, w: f64) {
        let new_u = if w >= u { 0.0 } else { u - w };
        let new_v = v + w;
        let count = self.ensemble.count();
        self.ensemble.masses[d] = new_u;
        self.ensemble.masses[a] = new_v;
        if let Some(cap) = &mut self.capacity {
            cap[d] = self.kernel.donor_capacity(new_u).unwrap_or(0.0);
            cap[a] = self.kernel.donor_capacity(new_v).unwrap_or(0.0);
        }
        for i in 0..count {
            if i == d || i == a {
                continue;
            }
            if self.ensemble.masses[i] <= 0.0 {
                continue;
            }
            // Row i depends only on u_i and the column masses, so the old columns can
            // be evaluated after the update.
            let delta = (self.pair_with(i, new_u) - self.pair_with(i, u)) + (self.pair_with(i, new_v) - self.pair_with(i, v));
            self.row[i] = (self.row[i] + delta).max(0.0);
        }
        self.row[d] = self.row_of(d);
        self.row[a] = self.row_of(a);
        self.ensemble.events += 1;
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh();
        }
    }
}

/// Index whose cumulative weight first exceeds `target`; skips zero weights.
fn pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if acc > target {
                return i;
            }
        }
    }
    last_positive
}

/// Single event with a freshly built cache; see [`Ssa`] for repeated stepping.
///
/// Returns `Ok(None)` when the ensemble is absorbing.
pub fn ssa_step(e: ParticleEnsemble, k: &Kernel) -> Result<(ParticleEnsemble, Option<StepOutcome>)> {
    let mut sim = Ssa::new(e, k);
    let out = sim.step_until(f64::INFINITY)?;
    let e = sim.into_ensemble();
    Ok(match out {
        StepOutcome::Absorbed => (e, None),
        other => (e, Some(other)),
    })
}

/// Empirical state at one snapshot time.
#[derive(Debug, Clone)]
pub struct SsaFrame {
    pub t: f64,
    pub m0: f64,
    pub m0_with_void: f64,
    pub m1: f64,
    pub m2: f64,
    pub events: u64,
    pub histogram: Density,
    /// Particles above the grid cutoff, left out of the histogram.
    pub overflow: usize,
}

#[derive(Debug, Clone)]
pub struct SsaTrajectory {
    pub frames: Vec<SsaFrame>,
    /// True if the ensemble reached a state with no admissible pair.
    pub absorbed: bool,
}

fn frame(e: &ParticleEnsemble, t: f64, grid: &SizeGrid) -> SsaFrame {
    let (histogram, overflow) = e.histogram(grid);
    SsaFrame {
        t,
        m0: (e.count() - e.voids()) as f64 / e.volume,
        m0_with_void: e.moment(0.0),
        m1: e.moment(1.0),
        m2: e.moment(2.0),
        events: e.events,
        histogram,
        overflow,
    }
}

/// Simulates to `t_end`, recording a frame at `t = 0`, every snapshot time and `t_end`.
pub fn run_ssa(
    e: ParticleEnsemble,
    k: &Kernel,
    t_end: f64,
    snapshot_times: &[f64],
    grid: &SizeGrid,
) -> Result<SsaTrajectory> {
    let schedule = crate::integrate::output_schedule(t_end, snapshot_times);
    let mut sim = Ssa::new(e, k);
    let mut frames = vec![frame(sim.ensemble(), 0.0, grid)];
    let mut absorbed = false;
    for &target in &schedule[1..] {
        if !absorbed {
            loop {
                match sim.step_until(target)? {
                    StepOutcome::Event { .. } => {}
                    StepOutcome::Horizon => break,
                    StepOutcome::Absorbed => {
                        absorbed = true;
                        break;
                    }
                }
            }
        }
        sim.ensemble.t = target;
        frames.push(frame(sim.ensemble(), target, grid));
    }
    Ok(SsaTrajectory { frames, absorbed })
}
