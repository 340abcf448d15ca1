//! Internal numeric helpers: stable logistic forms, log-sum-exp,
//! order-independent fixed-point accumulation, and a small dense solver.

/// Logistic sigmoid, stable for any finite input.
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(sigmoid(x)) via the softplus identity; never overflows.
#[inline]
pub(crate) fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// ln(p / (1 - p)).
#[inline]
pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// ln(1 - exp(t)) for t <= 0, stable near both ends.
#[inline]
pub(crate) fn log1mexp(t: f64) -> f64 {
    debug_assert!(t <= 0.0);
    if t < -std::f64::consts::LN_2 {
        (-t.exp()).ln_1p()
    } else {
        (-t.exp_m1()).ln()
    }
}

/// softplus(x) = ln(1 + exp(x)), overflow-safe.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable log-sum-exp of a slice.
pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `n` equally spaced values covering [lo, hi] inclusive.
pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 1);
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

// ---------------------------------------------------------------------------
// Order-independent accumulation.
//
// EM reduces per-learner quantities over the whole sample. Plain f64 sums
// depend on summation order, so shuffling learner rows (or rechunking a
// parallel reduction) would perturb estimates at the ulp level. Rounding each
// term to a fixed-point i128 makes the reduction exactly associative and
// commutative: identical multisets of terms give bit-identical sums.
// ---------------------------------------------------------------------------

/// Scale for values in [0, 1] (posterior weights): 2^64.
const FX_UNIT_SCALE: f64 = 18_446_744_073_709_551_616.0;
/// Scale for log-likelihood terms (|x| up to ~1e4): 2^60.
const FX_LOG_SCALE: f64 = 1_152_921_504_606_846_976.0;

#[inline]
pub(crate) fn fx_unit(x: f64) -> i128 {
    (x * FX_UNIT_SCALE) as i128
}

#[inline]
pub(crate) fn unfx_unit(v: i128) -> f64 {
    v as f64 / FX_UNIT_SCALE
}

#[inline]
pub(crate) fn fx_log(x: f64) -> i128 {
    (x * FX_LOG_SCALE) as i128
}

#[inline]
pub(crate) fn unfx_log(v: i128) -> f64 {
    v as f64 / FX_LOG_SCALE
}

// ---------------------------------------------------------------------------
// Small dense linear solve (Newton steps in at most K+1 <= 4 unknowns).
// ---------------------------------------------------------------------------

/// Solve `a x = b` in place for a small dense system (row-major `a`, d x d).
/// Gaussian elimination with partial pivoting; returns None when singular.
pub(crate) fn solve_small(a: &mut [f64], b: &mut [f64], d: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), d * d);
    debug_assert_eq!(b.len(), d);
    for col in 0..d {
        let mut pivot = col;
        let mut best = a[col * d + col].abs();
        for row in (col + 1)..d {
            let v = a[row * d + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..d {
                a.swap(col * d + j, pivot * d + j);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * d + col];
        for row in (col + 1)..d {
            let f = a[row * d + col] * inv;
            if f == 0.0 {
                continue;
            }
            for j in col..d {
                a[row * d + j] -= f * a[col * d + j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; d];
    for row in (0..d).rev() {
        let mut s = b[row];
        for j in (row + 1)..d {
            s -= a[row * d + j] * x[j];
        }
        x[row] = s / a[row * d + row];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Simple statistics.
// ---------------------------------------------------------------------------

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (denominator n－1).
pub(crate) fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Sample skewness m3 / m2^(3/2).
pub(crate) fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = xs.iter().map(|&x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|&x| (x - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

pub(crate) fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    debug_assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
