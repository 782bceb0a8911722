//! The subcommands: deterministic, particle, contraction and sweep runs, bound
//! checks and kernel validation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use gedg_core::convex::{
    default_sigma, equiintegrability_functional, gronwall_bound_product, gronwall_bound_sum, tail_moment,
    BoundInputs,
};
use gedg_core::grid::{l1_distance, make_uniform_grid, moment, weighted_l1_distance, Density, SizeGrid};
use gedg_core::integrate::{output_schedule, run, Problem, Trajectory};
use gedg_core::kernels::{validate_class_with, Check, Kernel, KernelClass, PiecewiseLinear, ValidateOptions};
use gedg_core::particles::{init_ensemble_with_rng, replica_rng, run_ssa};
use gedg_core::GedgError;

use crate::config::{IcSpec, Mode, RunConfig};
use crate::output::{
    at, create, create_dir, write_density, write_json, BoundsReport, MomentRow, MomentWriter,
};

type Ic = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Result of a command that completed without an error.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Ok,
    /// A checked bound failed; each entry describes one failure.
    BoundViolation(Vec<String>),
}

fn ic_density(ic: &IcSpec) -> Result<Ic, GedgError> {
    Ok(match ic {
        IcSpec::Exp => Arc::new(|x: f64| (-x).exp()),
        IcSpec::Box(a, b) => {
            let (a, b) = (*a, *b);
            Arc::new(move |x: f64| if x >= a && x <= b { 1.0 } else { 0.0 })
        }
        IcSpec::Table(path) => {
            let t = PiecewiseLinear::from_csv(path)?;
            Arc::new(move |x: f64| t.value(x))
        }
    })
}

/// Inverse-CDF sampler of `zeta_in` restricted to `(0, n)`, with the number density
/// `int_0^n zeta_in`.
fn ic_sampler(ic: &IcSpec, n: f64) -> Result<(Ic, f64), GedgError> {
    Ok(match ic {
        IcSpec::Exp => {
            let total = -(-n).exp_m1();
            (Arc::new(move |u: f64| -(-u * total).ln_1p()), total)
        }
        IcSpec::Box(a, b) => {
            let (a, b) = (*a, b.min(n));
            (Arc::new(move |u: f64| a + u * (b - a)), b - a)
        }
        IcSpec::Table(path) => {
            let t = PiecewiseLinear::from_csv(path)?;
            let start = t.cumulative(0.0);
            let total = t.cumulative(n) - start;
            (Arc::new(move |u: f64| t.inverse_cumulative(start + u * total)), total)
        }
    })
}

fn bounds_report(kernel: &Kernel, d0: &Density, grid: &SizeGrid, t_end: f64) -> Result<BoundsReport, GedgError> {
    let w = default_sigma();
    let inputs = BoundInputs::compute(kernel, d0, grid, &w)?;
    let s1 = w.sigma(1.0);
    Ok(BoundsReport {
        t_end,
        sigma: w.name().to_string(),
        sigma1_at_1: s1,
        inputs,
        c0: inputs.c0(),
        xi: (kernel.class() == KernelClass::Sum).then(|| gronwall_bound_sum(&inputs, s1, t_end)),
        lambda: (kernel.class() == KernelClass::Product).then(|| gronwall_bound_product(&inputs, s1, t_end)),
        equiintegrability_factor: inputs.equiintegrability_factor(t_end),
        contraction_factor: inputs.contraction_factor(t_end),
    })
}

fn output_times(cfg: &RunConfig) -> Vec<f64> {
    let mut all = cfg.output_times.clone();
    all.extend(&cfg.snapshot_times);
    output_schedule(cfg.t_end, &all)
}

fn is_snapshot(cfg: &RunConfig, t: f64) -> bool {
    let near = |s: f64| (s - t).abs() <= 1e-12 * s.abs().max(1.0);
    t == 0.0 || cfg.snapshot_times.iter().any(|&s| near(s)) || (cfg.snapshot_times.is_empty() && near(cfg.t_end))
}

struct PdeRun {
    grid: SizeGrid,
    bounds: BoundsReport,
    trajectory: Trajectory,
}

/// Solves on `grid`, writing `bounds.json` first, then moments and snapshots as frames arrive.
fn run_pde(cfg: &RunConfig, kernel: &Kernel, grid: SizeGrid, dir: &Path) -> Result<PdeRun, GedgError> {
    create_dir(dir)?;
    let problem = Problem {
        kernel,
        grid,
        void_accepts: cfg.void_accepts,
    };
    let ic = ic_density(&cfg.ic)?;
    let d0 = problem.project(&*ic)?;
    let bounds = bounds_report(kernel, &d0, &grid, cfg.t_end)?;
    write_json(&dir.join("bounds.json"), &bounds)?;
    let et = problem.tensor()?;
    let w = default_sigma();
    let mut moments = MomentWriter::create(dir, "moments.csv", None)?;
    let trajectory = run(d0, &et, &grid, &cfg.control, &output_times(cfg), |f| {
        moments.row(&MomentRow::from_density(f.t, f.dt, &f.density, &grid, &w))?;
        if is_snapshot(cfg, f.t) {
            write_density(dir, f.t, &f.density, &grid)?;
        }
        Ok(())
    })?;
    moments.finish()?;
    Ok(PdeRun {
        grid,
        bounds,
        trajectory,
    })
}

fn main_grid(cfg: &RunConfig) -> Result<SizeGrid, GedgError> {
    make_uniform_grid(cfg.n, cfg.cells)
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, GedgError> {
    let kernel = cfg.kernel.build()?;
    match cfg.mode {
        Mode::Pde => {
            run_pde(cfg, &kernel, main_grid(cfg)?, &cfg.output_dir)?;
            Ok(Outcome::Ok)
        }
        Mode::Ssa => run_particles(cfg, &kernel),
        Mode::Contraction => run_contraction(cfg, &kernel),
        Mode::TruncationSweep => run_sweep(cfg, &kernel),
    }
}

fn run_particles(cfg: &RunConfig, kernel: &Kernel) -> Result<Outcome, GedgError> {
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let grid = main_grid(cfg)?;
    let d0 = Problem {
        kernel,
        grid,
        void_accepts: cfg.void_accepts,
    }
    .project(&*ic_density(&cfg.ic)?)?;
    write_json(&dir.join("bounds.json"), &bounds_report(kernel, &d0, &grid, cfg.t_end)?)?;
    let (sampler, number) = ic_sampler(&cfg.ic, cfg.n)?;
    if !(number > 0.0) {
        return Err(GedgError::Config("initial data has no clusters on (0, n)".into()));
    }
    let times = output_times(cfg);
    let w = default_sigma();
    let replicas: Vec<Vec<MomentRow>> = (0..cfg.replicas as u64)
        .into_par_iter()
        .map(|id| {
            let rng = replica_rng(cfg.seed, id);
            let e = init_ensemble_with_rng(|r| sampler(r.gen::<f64>()), cfg.particles, rng)?
                .with_volume(cfg.particles as f64 / number)?
                .with_void_accepts(cfg.void_accepts);
            let traj = run_ssa(e, kernel, cfg.t_end, &times, &grid)?;
            let rdir = dir.join(format!("replica_{id:03}"));
            create_dir(&rdir)?;
            let mut rows = Vec::with_capacity(traj.frames.len());
            for f in &traj.frames {
                if f.overflow > 0 {
                    eprintln!(
                        "warning: replica {id}: {} particle(s) above n = {} left out of the histogram at t = {}",
                        f.overflow, cfg.n, f.t
                    );
                }
                if is_snapshot(cfg, f.t) {
                    write_density(&rdir, f.t, &f.histogram, &grid)?;
                }
                rows.push(MomentRow {
                    t: f.t,
                    m0: f.m0,
                    m0_with_void: f.m0_with_void,
                    m1: f.m1,
                    msigma1: tail_moment(&f.histogram, &grid, &w),
                    sigma2_functional: equiintegrability_functional(&f.histogram, &grid, &w),
                    min_density: f.histogram.min() / grid.dx(),
                    dt: 0.0,
                });
            }
            if traj.absorbed {
                eprintln!("note: replica {id} reached a state with no admissible pair");
            }
            Ok(rows)
        })
        .collect::<Result<_, GedgError>>()?;
    let mut out = MomentWriter::create(dir, "moments.csv", Some("replica_id"))?;
    for (id, rows) in replicas.iter().enumerate() {
        for row in rows {
            out.row_with(row, &id.to_string())?;
        }
    }
    out.finish()?;
    Ok(Outcome::Ok)
}

fn run_contraction(cfg: &RunConfig, kernel: &Kernel) -> Result<Outcome, GedgError> {
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let grid = main_grid(cfg)?;
    let problem = Problem {
        kernel,
        grid,
        void_accepts: cfg.void_accepts,
    };
    let d0 = problem.project(&*ic_density(&cfg.ic)?)?;
    let norm = weighted_l1_distance(&d0, &Density::zeros(&grid), &grid)?;
    if !(norm > 0.0) {
        return Err(GedgError::Config("contraction needs nonzero initial data".into()));
    }
    let d1 = d0.scaled(1.0 + cfg.delta / norm);
    let delta = weighted_l1_distance(&d0, &d1, &grid)?;
    let bounds = bounds_report(kernel, &d0, &grid, cfg.t_end)?;
    write_json(&dir.join("bounds.json"), &bounds)?;
    let et = problem.tensor()?;
    let times = output_times(cfg);
    let (a, b) = rayon::join(
        || run(d0.clone(), &et, &grid, &cfg.control, &times, |_| Ok(())),
        || run(d1.clone(), &et, &grid, &cfg.control, &times, |_| Ok(())),
    );
    let (a, b) = (a?, b?);
    let path = dir.join("contraction.csv");
    let mut out = create(&path)?;
    use std::io::Write;
    at(&path, writeln!(out, "t,weighted_distance,gronwall_envelope"))?;
    let mut violations = Vec::new();
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        let dist = weighted_l1_distance(&fa.density, &fb.density, &grid)?;
        let envelope = delta * bounds.inputs.contraction_factor(fa.t);
        at(&path, writeln!(out, "{:.16e},{:.16e},{:.16e}", fa.t, dist, envelope))?;
        if dist > envelope {
            violations.push(format!("t = {}: weighted distance {dist:e} exceeds {envelope:e}", fa.t));
        }
    }
    at(&path, out.flush())?;
    Ok(if violations.is_empty() {
        Outcome::Ok
    } else {
        Outcome::BoundViolation(violations)
    })
}

fn run_sweep(cfg: &RunConfig, kernel: &Kernel) -> Result<Outcome, GedgError> {
    let dir = &cfg.output_dir;
    create_dir(dir)?;
    let dx = cfg.n / cfg.cells as f64;
    let runs: Vec<(f64, PdeRun)> = cfg
        .sweep_ns
        .par_iter()
        .map(|&n| {
            let cells = (n / dx).round() as usize;
            let grid = make_uniform_grid(n, cells)?;
            let sub: PathBuf = dir.join(format!("n_{n}"));
            Ok((n, run_pde(cfg, kernel, grid, &sub)?))
        })
        .collect::<Result<_, GedgError>>()?;
    let path = dir.join("sweep_summary.csv");
    let mut out = create(&path)?;
    use std::io::Write;
    at(&path, writeln!(out, "n,cells,M0_drift,M1_drift,M2_final"))?;
    for (n, r) in &runs {
        let frames = &r.trajectory.frames;
        let drift = |p: f64| {
            let m = moment(&frames[0].density, &r.grid, p);
            frames
                .iter()
                .map(|f| (moment(&f.density, &r.grid, p) - m).abs() / m)
                .fold(0.0, f64::max)
        };
        let m2 = moment(&r.trajectory.last().density, &r.grid, 2.0);
        at(
            &path,
            writeln!(out, "{n},{},{:.16e},{:.16e},{:.16e}", r.grid.cells(), drift(0.0), drift(1.0), m2),
        )?;
    }
    at(&path, out.flush())?;
    Ok(Outcome::Ok)
}

/// Relative slack on the equi-integrability envelope.
const ENVELOPE_TOL: f64 = 1e-2;

/// Deterministic run followed by the a priori bounds checked frame by frame.
pub fn check_bounds(cfg: &RunConfig) -> Result<Outcome, GedgError> {
    let kernel = cfg.kernel.build()?;
    let r = run_pde(cfg, &kernel, main_grid(cfg)?, &cfg.output_dir)?;
    let w = default_sigma();
    let b = &r.bounds;
    let frames = &r.trajectory.frames;
    let mut violations = Vec::new();
    let gamma = b.inputs.gamma;
    let f2_0 = equiintegrability_functional(&frames[0].density, &r.grid, &w);
    for f in frames {
        let total = moment(&f.density, &r.grid, 0.0) + moment(&f.density, &r.grid, 1.0);
        if total > gamma * (1.0 + 1e-8) {
            violations.push(format!("t = {}: M0 + M1 = {total:e} exceeds Gamma = {gamma:e}", f.t));
        }
        let tail = tail_moment(&f.density, &r.grid, &w);
        for (name, bound) in [("Xi(T)", b.xi), ("Lambda(T)", b.lambda)] {
            if let Some(bound) = bound {
                if tail > bound {
                    violations.push(format!("t = {}: sigma1 moment {tail:e} exceeds {name} = {bound:e}", f.t));
                }
            }
        }
        let f2 = equiintegrability_functional(&f.density, &r.grid, &w);
        let env = f2_0 * b.inputs.equiintegrability_factor(f.t) * (1.0 + ENVELOPE_TOL);
        if f2 > env {
            violations.push(format!("t = {}: sigma2 functional {f2:e} exceeds {env:e}", f.t));
        }
    }
    for (i, s) in frames.iter().enumerate() {
        for t in &frames[i + 1..] {
            let dist = l1_distance(&t.density, &s.density, &r.grid)?;
            let bound = b.c0 * (t.t - s.t);
            if dist > bound {
                violations.push(format!(
                    "s = {}, t = {}: L1 distance {dist:e} exceeds C0 (t - s) = {bound:e}",
                    s.t, t.t
                ));
            }
        }
    }
    println!("gamma = {gamma:.10e}, C0 = {:.10e}", b.c0);
    match (b.xi, b.lambda) {
        (Some(xi), _) => println!("Xi({}) = {xi:.10e}", cfg.t_end),
        (_, Some(l)) => println!("Lambda({}) = {l:.10e}", cfg.t_end),
        _ => println!("no tail-moment envelope for a kernel of custom class"),
    }
    println!("{} frames checked, {} violation(s)", frames.len(), violations.len());
    Ok(if violations.is_empty() {
        Outcome::Ok
    } else {
        Outcome::BoundViolation(violations)
    })
}

pub fn validate_kernel(cfg: &RunConfig) -> Result<Outcome, GedgError> {
    let kernel = cfg.kernel.build()?;
    let report = validate_class_with(
        &kernel,
        &ValidateOptions {
            samples: cfg.validate_samples,
            seed: cfg.seed,
            derivatives: cfg.validate_derivatives,
            ..ValidateOptions::default()
        },
    );
    println!("kernel class: {:?}, a = {}", kernel.class(), kernel.a_const());
    println!("{} samples", report.samples);
    for check in [
        Check::Nonnegative,
        Check::PhysicalConstraint,
        Check::Universal,
        Check::SumClass,
        Check::ProductClass,
        Check::Eta,
        Check::DerivativeX,
        Check::DerivativeY,
    ] {
        println!("  {check}: {} violation(s)", report.count(check));
    }
    if let Some(star) = report.eta_star_estimate {
        println!("eta* estimate: {star}");
    }
    Ok(if report.passed() {
        Outcome::Ok
    } else {
        Outcome::BoundViolation(report.violations.iter().take(20).map(|v| v.to_string()).collect())
    })
}
