//! Comparisons against independent reference computations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gedg_core::grid::{make_uniform_grid, Density};
use gedg_core::kernels::{Envelope, Kernel, KernelClass};
use gedg_core::particles::{total_rate, ParticleEnsemble, Ssa};
use gedg_core::rhs::{assemble_event_tensor, eval_rhs};

/// Direct event enumeration on the lattice `0, 1, 2, 3` with unit spacing.
fn brute_force_rhs(a: &dyn Fn(f64, f64, f64) -> f64, c: &[f64], void_accepts: bool) -> Vec<f64> {
    let n = 3usize;
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        for j in 0..=n {
            if j == 0 && !void_accepts {
                continue;
            }
            for k in 1..=i {
                if j + k > n {
                    continue;
                }
                // Half weight on the last chunk the donor or acceptor can take.
                let w = if k == i.min(n - j) { 0.5 } else { 1.0 };
                let flux = a(i as f64, j as f64, k as f64) * w * c[i] * c[j];
                out[i] -= flux;
                out[i - k] += flux;
                out[j] -= flux;
                out[j + k] += flux;
            }
        }
    }
    out
}

#[test]
fn rhs_matches_brute_force_on_three_bins() {
    let f = |x: f64, y: f64, z: f64| (1.0 + x + 2.0 * y) * (-z).exp();
    let k = Kernel::from_fn(f, KernelClass::Custom, 3.0, Envelope::exp(1.0).unwrap()).unwrap();
    let grid = make_uniform_grid(3.0, 3).unwrap();
    let states = [
        vec![0.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.3, 0.7, 0.2],
        vec![0.4, 0.1, 0.0, 1.3],
        vec![1.0, 1.0, 1.0, 1.0],
    ];
    for va in [false, true] {
        let et = assemble_event_tensor(&k.truncate(3.0).unwrap(), &grid, va).unwrap();
        for c in &states {
            let got = eval_rhs(&Density::from_counts(&grid, c.clone()).unwrap(), &et, &grid);
            let want = brute_force_rhs(&f, c, va);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() <= 1e-14 * (1.0 + w.abs()), "{got:?} vs {want:?}");
            }
        }
    }
}

#[test]
fn lone_donor_bin_drains_at_the_summed_rate() {
    // One filled bin i: every event has donor and acceptor in bin i, so
    // dc_i/dt = -2 c_i^2 sum_k R_iik.
    let grid = make_uniform_grid(4.0, 8).unwrap();
    let k = Kernel::separable_sum(1.0, 0.0, Envelope::exp(1.0).unwrap()).unwrap();
    let et = assemble_event_tensor(&k.truncate(4.0).unwrap(), &grid, false).unwrap();
    let dx = grid.dx();
    for i in 1..=4usize {
        let mut c = vec![0.0; 9];
        c[i] = 0.5;
        let r = eval_rhs(&Density::from_counts(&grid, c).unwrap(), &et, &grid);
        let kmax = i.min(8 - i);
        let total: f64 = (1..=kmax)
            .map(|kk| {
                let w = if kk == kmax { 0.5 * dx } else { dx };
                (-(kk as f64) * dx).exp() * w
            })
            .sum();
        assert!((r[i] + 2.0 * 0.25 * total).abs() < 1e-14, "bin {i}: {}", r[i]);
    }
}

/// Kolmogorov-Smirnov statistic of `samples` against `cdf`.
fn ks_statistic(mut samples: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn draw(k: &Kernel, u: f64, v: f64, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| k.sample_chunk(u, v, &mut rng).unwrap()).collect()
}

const SAMPLES: usize = 5000;

fn critical() -> f64 {
    // 1% level of the asymptotic KS distribution.
    1.628 / (SAMPLES as f64).sqrt()
}

#[test]
fn exponential_chunks_follow_the_truncated_law() {
    let k = Kernel::separable_sum(1.0, 0.0, Envelope::exp(1.0).unwrap()).unwrap();
    let u = 2.5;
    let xs = draw(&k, u, 1.0, SAMPLES, 1);
    assert!(xs.iter().all(|&w| w > 0.0 && w <= u));
    let d = ks_statistic(xs, |z| (1.0 - (-z).exp()) / (1.0 - (-u).exp()));
    assert!(d < critical(), "D = {d}");
}

#[test]
fn uniform_chunks_from_a_general_kernel() {
    let k = Kernel::from_fn(|_, y, _| 1.0 + y, KernelClass::Custom, 1.0, Envelope::custom(|_| 1.0, 100.0)).unwrap();
    let u = 3.0;
    let d = ks_statistic(draw(&k, u, 0.5, SAMPLES, 2), |z| z / u);
    assert!(d < critical(), "D = {d}");
}

#[test]
fn linear_chunks_from_a_general_kernel() {
    let k = Kernel::from_fn(|_, _, z| z, KernelClass::Custom, 1.0, Envelope::custom(|z| z, 100.0)).unwrap();
    let u = 1.7;
    let d = ks_statistic(draw(&k, u, 2.0, SAMPLES, 3), |z| (z / u).powi(2));
    assert!(d < critical(), "D = {d}");
}

#[test]
fn wrong_law_is_rejected_by_the_same_test() {
    let k = Kernel::separable_sum(1.0, 0.0, Envelope::exp(1.0).unwrap()).unwrap();
    let u = 2.5;
    let d = ks_statistic(draw(&k, u, 1.0, SAMPLES, 4), |z| z / u);
    assert!(d > critical(), "D = {d}");
}

#[test]
fn cached_total_rate_matches_direct_sum_along_a_run() {
    let k = Kernel::separable_sum(1.0, 1.0, Envelope::exp(2.0).unwrap()).unwrap();
    let masses: Vec<f64> = (0..60).map(|i| 0.05 + (i as f64 * 0.37).sin().abs() * 3.0).collect();
    let e = ParticleEnsemble::from_masses(masses, 8).unwrap();
    let mut sim = Ssa::new(e, &k);
    for _ in 0..500 {
        sim.step_until(f64::INFINITY).unwrap();
        let direct = total_rate(sim.ensemble(), &k);
        assert!((sim.total_rate() - direct).abs() <= 1e-9 * direct);
    }
}
