use super::Real;

/// `c = beta·c + op(a)·op(b)` on row-major slices, where `op(a)` is `m × k`
/// and `op(b)` is `k × n`. With `ta` set, `a` is stored as `k × m`; with `tb`
/// set, `b` is stored as `n × k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    ta: bool,
    b: &[T],
    tb: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too short");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    T::gemm_strided(m, k, n, a, rsa, csa, b, rsb, csb, beta, c, n as isize, 1);
}
