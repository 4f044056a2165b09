//! Dichotomic search on monotone functions.

/// Locates the crossing of a non-decreasing `f` with zero on `[lo, hi]`.
///
/// Assumes `f(lo) <= 0 <= f(hi)`. Halves the bracket until its width drops to
/// `x_tol` or until the midpoint can no longer be distinguished from an
/// endpoint in floating point; with `x_tol = 0` the root is resolved to the
/// last representable bit. Returns whichever of the final bracket ends has the
/// smaller residual.
pub(crate) fn bisect_increasing<F>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> f64
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    if f_lo >= 0.0 {
        return lo;
    }
    if f_hi <= 0.0 {
        return hi;
    }
    // 2100 halvings exhaust any finite f64 interval.
    for _ in 0..2100 {
        if hi - lo <= x_tol {
            break;
        }
        let mid = lo + 0.5 * (hi - lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid < 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if -f_lo <= f_hi {
        lo
    } else {
        hi
    }
}
