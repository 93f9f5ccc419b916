//! Small closed-form target functions used by tests, benchmarks, and the
//! documentation examples. Each has known per-coordinate gains, which makes
//! them useful as ground truth for the decomposition.

use crate::blackbox::BlackBox;

/// `f(x) = (10 x cos x, x sin x cos x)` on scalars.
///
/// The two output coordinates have sharply different gains: the first peaks
/// at 10 (near x = 0), the second at 0.5 (|sin x cos x| = |sin 2x| / 2). A
/// single worst-case operator norm treats both rows as equally large; the
/// per-coordinate gain vector (10, 0.5) keeps the scale split.
pub fn cosine_pair() -> BlackBox {
    BlackBox::new(1, 2, |x| {
        let t = x[0];
        vec![10.0 * t * t.cos(), t * t.sin() * t.cos()]
    })
}

/// Exact per-coordinate gains of [`cosine_pair`].
pub const COSINE_PAIR_GAINS: [f64; 2] = [10.0, 0.5];

/// `f(x) = a x_1` on the plane: one output coordinate that reads a scaled
/// first input coordinate and ignores the second.
pub fn first_coordinate_scaled(a: f64) -> BlackBox {
    assert!(a.is_finite() && a != 0.0);
    BlackBox::new(2, 1, move |x| vec![a * x[0]])
}
