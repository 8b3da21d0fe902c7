//! Safe wrappers around `matrixmultiply::dgemm` for row-major operands.

fn check(len: usize, need: usize, what: &str) {
    assert!(len >= need, "gemm operand {what}: {len} < {need}");
}

/// `c = a * b + beta * c` with `a: m x k`, `b: k x n`.
pub(crate) fn gemm_nn(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    check(a.len(), m * k, "a");
    check(b.len(), k * n, "b");
    check(c.len(), m * n, "c");
    // SAFETY: bounds checked above; strides describe dense row-major storage.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a^T * b + beta * c` with `a` stored `k x m`, `b: k x n`.
pub(crate) fn gemm_tn(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    check(a.len(), k * m, "a");
    check(b.len(), k * n, "b");
    check(c.len(), m * n, "c");
    // SAFETY: bounds checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a * b^T + beta * c` with `a: m x k`, `b` stored `n x k`.
pub(crate) fn gemm_nt(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    check(a.len(), m * k, "a");
    check(b.len(), n * k, "b");
    check(c.len(), m * n, "c");
    // SAFETY: bounds checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
