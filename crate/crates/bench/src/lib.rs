//! Shared setup for the criterion benchmarks.

use slbf::{FilterParams, Slack, SlidingFilter};

/// A filter with `n` elements already inserted, so every benchmarked insert
/// runs in steady state.
pub fn warmed_filter(n: u64, m: Slack, epsilon: f64, seed: u64) -> SlidingFilter {
    let params = FilterParams::derive(n, m, epsilon, 1 << 64).expect("valid benchmark parameters");
    let mut filter = SlidingFilter::new(params, seed);
    for x in 0..2 * n {
        filter.insert(element(x)).expect("warm-up insert");
    }
    filter
}

/// Spreads consecutive indices over the universe.
pub fn element(i: u64) -> u64 {
    i.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}
