//! Small quadrature helpers shared by the kernel, grid and bound modules.

/// Composite Simpson rule on `[a, b]` with `cells` subintervals (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cells: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = cells.max(2) + cells.max(2) % 2;
    let h = (b - a) / m as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..m {
        let x = a + i as f64 * h;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(a) + 4.0 * odd + 2.0 * even + f(b))
}

/// Composite midpoint rule with `cells` subintervals. Never evaluates the endpoints,
/// so it is safe for integrands with a jump exactly at `a` or `b`.
pub fn midpoint<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cells: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = cells.max(1);
    let h = (b - a) / m as f64;
    (0..m).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Composite three-point Gauss-Legendre rule with `cells` subintervals.
///
/// Interior nodes only; exact for polynomials of degree five on each cell.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cells: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    const NODE: f64 = 0.774_596_669_241_483_4; // sqrt(3/5)
    const W_OUTER: f64 = 5.0 / 9.0;
    const W_MID: f64 = 8.0 / 9.0;
    let m = cells.max(1);
    let h = (b - a) / m as f64;
    let half = 0.5 * h;
    let mut acc = 0.0;
    for i in 0..m {
        let mid = a + (i as f64 + 0.5) * h;
        acc += W_OUTER * (f(mid - half * NODE) + f(mid + half * NODE)) + W_MID * f(mid);
    }
    acc * half
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    // Seed on a fixed partition so that narrow features are not skipped.
    const SEEDS: usize = 64;
    let h = (b - a) / SEEDS as f64;
    (0..SEEDS)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            recurse(f, lo, hi, flo, fmid, fhi, whole, tol / SEEDS as f64, 40)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 2);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_matches_closed_form() {
        let v = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 50.0, 1e-12);
        assert!((v - (1.0 - (-50.0f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn gauss_legendre_is_exact_on_quintics() {
        let v = gauss_legendre(|x| x.powi(5), 0.0, 1.0, 1);
        assert!((v - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn midpoint_skips_endpoints() {
        let v = midpoint(|x| if x == 0.0 { f64::NAN } else { 1.0 }, 0.0, 3.0, 7);
        assert!((v - 3.0).abs() < 1e-14);
    }
}
