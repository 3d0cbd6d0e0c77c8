//! Shared helpers for the integration suites.
//!
//! Everything here is deliberately written from first principles rather than
//! reusing the library code under test: the Student-t oracle evaluates the
//! density and integrates it numerically, and the Pareto helpers rank by
//! direct pairwise comparison. Slow but independent.

#![allow(dead_code)]

use std::f64::consts::PI;

/// Normalizing constant of the Student-t density for integer degrees of
/// freedom: `Gamma((v+1)/2) / (sqrt(v*pi) * Gamma(v/2))`.
///
/// The gamma ratio `r(v) = Gamma((v+1)/2) / Gamma(v/2)` satisfies the exact
/// recurrence `r(v) = (v-1) / (2 * r(v-1))` with `r(1) = 1/sqrt(pi)`, so no
/// gamma-function approximation is involved.
pub fn t_norm_const(dof: u32) -> f64 {
    assert!(dof >= 1);
    let mut r = 1.0 / PI.sqrt();
    for v in 2..=dof {
        r = (f64::from(v) - 1.0) / (2.0 * r);
    }
    r / (f64::from(dof) * PI).sqrt()
}

/// Student-t probability density.
pub fn t_pdf(x: f64, dof: u32) -> f64 {
    let v = f64::from(dof);
    t_norm_const(dof) * (1.0 + x * x / v).powf(-(v + 1.0) / 2.0)
}

/// Adaptive Simpson integration of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        eps: f64,
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
        if depth == 0 || delta.abs() <= 15.0 * eps {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, fm, flm, left, eps / 2.0, depth - 1)
                + step(f, m, b, fm, fb, frm, right, eps / 2.0, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fb, fm, whole, eps, 48)
}

/// Student-t CDF obtained by integrating the density numerically.
pub fn oracle_t_cdf(x: f64, dof: u32) -> f64 {
    if x < 0.0 {
        return 1.0 - oracle_t_cdf(-x, dof);
    }
    let f = move |t: f64| t_pdf(t, dof);
    0.5 + integrate(&f, 0.0, x, 1e-13)
}

/// Student-t quantile obtained by bisecting [`oracle_t_cdf`].
pub fn oracle_t_quantile(p: f64, dof: u32) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -oracle_t_quantile(1.0 - p, dof);
    }
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while oracle_t_cdf(hi, dof) < p {
        lo = hi;
        hi *= 2.0;
        assert!(hi < 1e12, "quantile bracket blew up");
    }
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if oracle_t_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Sample standard deviation (n-1 denominator), written independently of the
/// library implementation.
pub fn oracle_sample_std(xs: &[f64]) -> f64 {
    assert!(xs.len() >= 2);
    let n = xs.len() as f64;
    let mut sum = 0.0;
    for x in xs {
        sum += x;
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for x in xs {
        ss += (x - mean).powi(2);
    }
    (ss / (n - 1.0)).sqrt()
}

/// Pareto domination for minimization: `u` dominates `v` when it is no worse
/// on every coordinate and strictly better on at least one.
pub fn dominates_min(u: &[f64], v: &[f64]) -> bool {
    assert_eq!(u.len(), v.len());
    let mut strictly_better = false;
    for (a, b) in u.iter().zip(v) {
        if a > b {
            return false;
        }
        if a < b {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Ranks a population into Pareto fronts by repeatedly peeling off the
/// currently non-dominated points. Quadratic per peel, used as a reference.
pub fn brute_force_fronts(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut remaining: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let mut front = Vec::new();
        for &i in &remaining {
            let dominated = remaining
                .iter()
                .any(|&j| j != i && dominates_min(&points[j], &points[i]));
            if !dominated {
                front.push(i);
            }
        }
        assert!(!front.is_empty(), "peeling must make progress");
        remaining.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}
