//! Property-based invariants of the sectional operator, lattice and kernels.

use proptest::prelude::*;

use gedg_core::grid::{make_uniform_grid, moment, weighted_l1_distance, Density, SizeGrid};
use gedg_core::integrate::{Solver, SolverState, StepControl};
use gedg_core::kernels::{validate_class, Check, Envelope, Kernel};
use gedg_core::rhs::{assemble_event_tensor, eval_rhs, rhs_terms, EventTensor};

fn sum_kernel(a: f64, p: f64, rate: f64) -> Kernel {
    Kernel::separable_sum(a, p, Envelope::exp(rate).unwrap()).unwrap()
}

fn setup(cells: usize, a: f64, p: f64, rate: f64, void_accepts: bool) -> (SizeGrid, EventTensor) {
    let grid = make_uniform_grid(4.0, cells).unwrap();
    let tk = sum_kernel(a, p, rate).truncate(4.0).unwrap();
    let et = assemble_event_tensor(&tk, &grid, void_accepts).unwrap();
    (grid, et)
}

fn counts(bins: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..3.0f64], bins)
}

fn kernel_params() -> impl Strategy<Value = (f64, f64, f64, bool)> {
    (0.05..3.0f64, 0.0..1.0f64, 0.2..5.0f64, any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rhs_conserves_number_and_mass((a, p, rate, va) in kernel_params(), c in counts(17)) {
        let (grid, et) = setup(16, a, p, rate, va);
        let d = Density::from_counts(&grid, c).unwrap();
        let r = eval_rhs(&d, &et, &grid);
        let scale: f64 = r.iter().map(|v| v.abs()).sum::<f64>() * 4.0 + f64::MIN_POSITIVE;
        let m0: f64 = r.iter().sum();
        let m1: f64 = r.iter().zip(grid.masses()).map(|(v, x)| v * x).sum();
        prop_assert!(m0.abs() <= 1e-13 * scale, "dM0/dt = {m0}");
        prop_assert!(m1.abs() <= 1e-13 * scale, "dM1/dt = {m1}");
    }

    #[test]
    fn rhs_is_homogeneous_of_degree_two((a, p, rate, va) in kernel_params(), c in counts(17), lambda in 0.01..10.0f64) {
        let (grid, et) = setup(16, a, p, rate, va);
        let d = Density::from_counts(&grid, c).unwrap();
        let r = eval_rhs(&d, &et, &grid);
        let rs = eval_rhs(&d.scaled(lambda), &et, &grid);
        for (x, y) in r.iter().zip(&rs) {
            let expected = lambda * lambda * x;
            prop_assert!((y - expected).abs() <= 1e-12 * (expected.abs() + lambda * lambda * 1e-3));
        }
    }

    #[test]
    fn donor_loss_grows_with_the_state((a, p, rate, va) in kernel_params(), c in counts(17), bump in counts(17)) {
        let (grid, et) = setup(16, a, p, rate, va);
        let lo = Density::from_counts(&grid, c.clone()).unwrap();
        let hi = Density::from_counts(&grid, c.iter().zip(&bump).map(|(x, y)| x + y).collect()).unwrap();
        let (tl, th) = (rhs_terms(&lo, &et, &grid), rhs_terms(&hi, &et, &grid));
        for (l, h) in tl.d2.iter().zip(&th.d2) {
            prop_assert!(*l <= 0.0);
            prop_assert!(*h <= *l + 1e-14 * l.abs());
        }
    }

    #[test]
    fn moments_are_linear(c1 in counts(33), c2 in counts(33), s in -2.0..2.0f64, r in 0.0..3.0f64) {
        let grid = make_uniform_grid(8.0, 32).unwrap();
        let d1 = Density::from_counts(&grid, c1.clone()).unwrap();
        let d2 = Density::from_counts(&grid, c2.clone()).unwrap();
        let combo: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| x + s * y).collect();
        let mut mixed = Density::zeros(&grid);
        mixed.counts_mut().copy_from_slice(&combo);
        let lhs = moment(&mixed, &grid, r);
        let rhs = moment(&d1, &grid, r) + s * moment(&d2, &grid, r);
        let scale = moment(&d1, &grid, r) + s.abs() * moment(&d2, &grid, r) + 1e-300;
        prop_assert!((lhs - rhs).abs() <= 1e-13 * scale);
    }

    #[test]
    fn weighted_distance_is_a_metric(c1 in counts(33), c2 in counts(33), c3 in counts(33)) {
        let grid = make_uniform_grid(8.0, 32).unwrap();
        let d = |c: &Vec<f64>| Density::from_counts(&grid, c.clone()).unwrap();
        let (a, b, c) = (d(&c1), d(&c2), d(&c3));
        let ab = weighted_l1_distance(&a, &b, &grid).unwrap();
        let bc = weighted_l1_distance(&b, &c, &grid).unwrap();
        let ac = weighted_l1_distance(&a, &c, &grid).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12 * (ab + bc));
        prop_assert_eq!(ab, weighted_l1_distance(&b, &a, &grid).unwrap());
        prop_assert_eq!(weighted_l1_distance(&a, &a, &grid).unwrap(), 0.0);
    }

    #[test]
    fn truncation_only_masks((a, p, rate, _va) in kernel_params(), n in 1.5..20.0f64,
                             x in 0.0..25.0f64, y in 0.0..25.0f64, z in 0.0..25.0f64) {
        let k = sum_kernel(a, p, rate);
        let tk = k.truncate(n).unwrap();
        let inside = x > 0.0 && x < n && y + z > 0.0 && y + z < n;
        let got = tk.rate(x, y, z);
        if inside {
            prop_assert_eq!(got.to_bits(), k.rate(x, y, z).to_bits());
        } else {
            prop_assert_eq!(got, 0.0);
        }
    }

    #[test]
    fn pair_rate_grows_with_donor_mass((a, _p, rate, _va) in kernel_params(), u in 0.01..10.0f64, du in 0.001..5.0f64, v in 0.0..10.0f64) {
        let k = Kernel::separable_sum(a, 0.0, Envelope::exp(rate).unwrap()).unwrap();
        let (lo, hi) = (k.pair_rate_exact(u, v).unwrap(), k.pair_rate_exact(u + du, v).unwrap());
        prop_assert!(hi >= lo);
        for (x, exact) in [(u, lo), (u + du, hi)] {
            prop_assert!((k.pair_rate(x, v, 64) - exact).abs() <= 1e-6 * exact);
            prop_assert!((k.pair_rate(x, v, 512) - exact).abs() <= 1e-11 * exact);
        }
    }

    #[test]
    fn integrator_keeps_bins_nonnegative((a, p, rate, va) in kernel_params(), c in counts(17), adaptive in any::<bool>()) {
        let (grid, et) = setup(16, a, p, rate, va);
        let control = if adaptive { StepControl::rk45(1e-6, 1e-12) } else { StepControl::rk4(1e-2) };
        let mut solver = Solver::new(&et, &grid, control).unwrap();
        let mut state = SolverState::new(Density::from_counts(&grid, c).unwrap(), &grid);
        while state.t < 0.25 {
            let remaining = 0.25 - state.t;
            solver.step(&mut state, remaining).unwrap();
            prop_assert!(state.d.min() >= 0.0);
        }
    }
}

#[test]
fn sampled_kernels_are_nonnegative() {
    let kernels = [
        sum_kernel(1.0, 0.0, 1.0),
        sum_kernel(2.5, 1.0, 0.3),
        Kernel::separable_product(1.0, gedg_core::kernels::Eta::MaxPow(0.5), Envelope::exp(2.0).unwrap()).unwrap(),
    ];
    for (seed, k) in kernels.iter().enumerate() {
        let r = validate_class(k, 100_000, seed as u64);
        assert_eq!(r.count(Check::Nonnegative), 0);
        assert_eq!(r.count(Check::PhysicalConstraint), 0);
        assert!(r.passed(), "{}", r.violations[0]);
    }
}
