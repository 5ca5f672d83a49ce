//! Piecewise-linear lookup on strictly increasing breakpoints.

/// Index `j` such that `xs[j] <= x <= xs[j + 1]`. Caller guarantees `x` is in range
/// and `xs.len() >= 2`.
fn segment(xs: &[f64], x: f64) -> usize {
    let j = xs.partition_point(|&b| b <= x);
    j.saturating_sub(1).min(xs.len() - 2)
}

/// Linear interpolation; exact at breakpoints.
pub(crate) fn lerp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.len() == 1 {
        return ys[0];
    }
    let j = segment(xs, x);
    let (x0, x1) = (xs[j], xs[j + 1]);
    if x == x0 {
        return ys[j];
    }
    if x == x1 {
        return ys[j + 1];
    }
    let w = (x - x0) / (x1 - x0);
    ys[j] + w * (ys[j + 1] - ys[j])
}

/// Linear interpolation with the end values held outside the table.
pub(crate) fn lerp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let lo = xs[0];
    let hi = xs[xs.len() - 1];
    lerp(xs, ys, x.clamp(lo, hi))
}

pub(crate) fn strictly_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}
