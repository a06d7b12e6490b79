//! One-dimensional quadrature rules.

use alloc::vec;

use crate::math::{abs, sqrt};

/// Nodes and weights of the five-point Gauss-Legendre rule on `[-1, 1]`.
const GL5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.0, 0.568_888_888_888_888_9),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

const MAX_DEPTH: u32 = 64;

/// Two-point Gauss rule on the unit interval: `(x, w)` pairs, weights sum to 1.
pub fn gauss2_unit() -> [(f64, f64); 2] {
    let d = 0.5 / sqrt(3.0);
    [(0.5 - d, 0.5), (0.5 + d, 0.5)]
}

fn gl5<F, E>(f: &mut F, a: f64, b: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = 0.0;
    for &(x, w) in &GL5 {
        sum += w * f(mid + half * x)?;
    }
    Ok(sum * half)
}

/// Adaptive bisection driven by the five-point Gauss-Legendre rule.
///
/// An interval is accepted once its estimate agrees with the sum over its two
/// halves to within its share of `rel_tol * |integral|`.
pub fn adaptive_gauss_legendre<F, E>(mut f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    if a == b {
        return Ok(0.0);
    }
    let whole = gl5(&mut f, a, b)?;
    // Coarse magnitude for the absolute target; refined halves below may
    // overrule it but never loosen it past the floor.
    let scale = {
        let n = 16;
        let h = (b - a) / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            s += abs(gl5(&mut f, a + i as f64 * h, a + (i + 1) as f64 * h)?);
        }
        s.max(abs(whole))
    };
    let tol = (rel_tol * scale).max(f64::MIN_POSITIVE);

    let mut total = 0.0;
    let mut stack = vec![(a, b, whole, 0u32)];
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gl5(&mut f, lo, mid)?;
        let right = gl5(&mut f, mid, hi)?;
        let refined = left + right;
        let share = tol * (hi - lo) / (b - a);
        if abs(refined - est) <= share || depth >= MAX_DEPTH {
            total += refined;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
    }
    Ok(total)
}
