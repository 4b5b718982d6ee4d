// Exact "ceil(fraction * n)" for decimal fractions. Plain f64 products
// overshoot integers (0.15 * 20 = 3.0000000000000004), which would change
// label and percentile counts.

const SCALE: u128 = 1_000_000_000;

pub(crate) fn ceil_fraction(fraction: f64, n: usize) -> usize {
    debug_assert!(fraction.is_finite() && fraction >= 0.0);
    let scaled = (fraction * SCALE as f64).round() as u128;
    let product = scaled * n as u128;
    product.div_ceil(SCALE) as usize
}
