/// Resummed value of a sequence of partial sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resummed {
    pub value: f64,
    /// Too few orders for the requested start; `value` is the last partial sum.
    pub fallback: bool,
}

/// Euler transform of the expansion terms from `start_order` on.
///
/// `partial_sums[k]` is the sum through order `k + 1`. Terms below
/// `start_order` are kept as is; the tail series of increments is replaced by
/// its Euler transform truncated at the available terms, which equals the
/// binomial average
///
/// `2^-M sum_{i=0}^{M} binom(M, i) S_{k-1+i}`, with `M = n - k + 1`,
///
/// of the partial sums `S_{k-1}, ..., S_n` (`S_0 = 0`).
pub fn euler_resum(partial_sums: &[f64], start_order: usize) -> Resummed {
    let n = partial_sums.len();
    let k = start_order.max(1);
    if n == 0 {
        return Resummed { value: 0.0, fallback: true };
    }
    if n < k {
        return Resummed { value: partial_sums[n - 1], fallback: true };
    }
    let m = n - k + 1;
    let s = |order: usize| if order == 0 { 0.0 } else { partial_sums[order - 1] };
    let mut binom = 1.0;
    let mut acc = 0.0;
    for i in 0..=m {
        acc += binom * s(k - 1 + i);
        binom = binom * (m - i) as f64 / (i + 1) as f64;
    }
    Resummed { value: acc / 2f64.powi(m as i32), fallback: false }
}
