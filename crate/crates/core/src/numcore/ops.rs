//! Scalar kernels shared by tape ops and fused likelihood ops.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln sigmoid(x)`, accurate for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

/// `ln(sigmoid(a) - sigmoid(b))` for `a > b`, without cancellation.
///
/// Uses `sigmoid(a) - sigmoid(b) = expm1(a - b) * sigmoid(b) * sigmoid(-a)`.
pub fn log_sigmoid_diff(a: f64, b: f64) -> f64 {
    let d = a - b;
    log_expm1(d) + log_sigmoid(b) + log_sigmoid(-a)
}

/// `ln(e^d - 1)` for `d > 0`.
pub fn log_expm1(d: f64) -> f64 {
    if d > 30.0 {
        d + (-(-d).exp()).ln_1p()
    } else {
        d.exp_m1().ln()
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    super::tape::logsumexp_slice(xs)
}
