use crate::numerics::DenseMatrix;

/// `ln(1 + max(0, x))`.
#[inline]
pub fn log1p_relu_scalar(x: f64) -> f64 {
    if x > 0.0 {
        libm::log1p(x)
    } else {
        0.0
    }
}

/// Entrywise `ln(1 + max(0, s))`. Output is exactly zero on the nonpositive
/// orthant.
pub fn log1p_relu(pre: &DenseMatrix) -> DenseMatrix {
    let mut out = pre.clone();
    out.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = log1p_relu_scalar(*v));
    out
}

/// Backward pass of [`log1p_relu`]: `d/ds = 1/(1+s)` for `s > 0`, else 0
/// (subgradient 0 at the kink).
pub fn log1p_relu_backward(pre: &DenseMatrix, upstream: &DenseMatrix) -> DenseMatrix {
    debug_assert_eq!(pre.shape(), upstream.shape());
    let mut out = upstream.clone();
    for (g, &s) in out.as_mut_slice().iter_mut().zip(pre.as_slice()) {
        *g = if s > 0.0 && *g != 0.0 { *g / (1.0 + s) } else { 0.0 };
    }
    out
}
