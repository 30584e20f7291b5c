//! Float helpers that work without `std`.

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn powi(x: f64, n: usize) -> f64 {
    libm::pow(x, n as f64)
}

pub(crate) fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Inverse-CDF draw from a probability vector given `u` in [0, 1).
///
/// Falls back to the last index with positive mass when rounding leaves `u`
/// above the accumulated total.
pub(crate) fn categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Number of sweeps after which a gamma-contraction with first-step change
/// `first_delta` has provably shrunk its step below `tol`, plus headroom for
/// rounding. Used as a hard stop when rounding keeps the residual above `tol`.
pub(crate) fn sweep_cap(discount: f64, tol: f64, first_delta: f64) -> usize {
    const HEADROOM: usize = 64;
    if first_delta <= tol || discount <= 0.0 {
        return HEADROOM;
    }
    let needed = libm::log(tol / first_delta) / libm::log(discount);
    if needed.is_finite() && needed < 1e9 {
        libm::ceil(needed) as usize * 2 + HEADROOM
    } else {
        1_000_000_000
    }
}
