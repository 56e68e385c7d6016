//! Golden-section search for unimodal scalar functions on a closed interval.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMin {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Minimizes `f` on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// Returns the best point evaluated, endpoints included. Ties go to the
/// smaller abscissa, and NaN evaluations are treated as +∞.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> Result<ScalarMin>
where
    F: FnMut(f64) -> f64,
{
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Input(format!("invalid search interval [{lo}, {hi}]")));
    }
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = ScalarMin {
        x: lo,
        value: eval(lo),
        iterations: 0,
    };
    let consider = |x: f64, v: f64, best: &mut ScalarMin| {
        if v < best.value || (v == best.value && x < best.x) {
            best.x = x;
            best.value = v;
        }
    };
    if hi == lo {
        return Ok(best);
    }
    let v_hi = eval(hi);
    consider(hi, v_hi, &mut best);

    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);

    let mut iterations = 0;
    while b - a > tol {
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                routine: "golden-section search",
                iterations,
            });
        }
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
            consider(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
            consider(d, fd, &mut best);
        }
    }
    best.iterations = iterations;
    Ok(best)
}
