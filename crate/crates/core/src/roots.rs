//! Bracketing primitives shared by the model reduction and the solvers.

/// Root of a non-increasing function on `[lo, hi]` with `f(lo) > 0 > f(hi)`,
/// bisected until the bracket stops shrinking in floating point.
pub(crate) fn bisect_decreasing<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximizer of a concave function on `[lo, hi]`.
///
/// Bisects on the derivative when it is available and finite at the
/// endpoints; falls back to golden-section search on `value` otherwise.
/// `tol` bounds the final bracket width.
pub(crate) fn maximize_concave<V, D>(value: V, deriv: D, lo: f64, hi: f64, tol: f64) -> f64
where
    V: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let d_lo = deriv(lo);
    let d_hi = deriv(hi);
    if d_lo.is_nan() || d_hi.is_nan() {
        return golden_section(value, lo, hi, tol);
    }
    if d_lo <= 0.0 {
        return lo;
    }
    if d_hi >= 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let d = deriv(mid);
        if d.is_nan() {
            return golden_section(value, a, b, tol);
        }
        if d > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

fn golden_section<V: Fn(f64) -> f64>(value: V, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (value(c), value(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = value(d);
        }
    }
    // Endpoint maxima are reached only in the limit; compare explicitly.
    let mid = 0.5 * (a + b);
    [lo, mid, hi]
        .into_iter()
        .max_by(|x, y| value(*x).total_cmp(&value(*y)))
        .unwrap_or(mid)
}
