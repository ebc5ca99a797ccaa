//! Seeded parameter initializers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::Scalar;

/// Values drawn uniformly from `[-bound, bound)`.
pub fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: impl Into<Vec<usize>>, bound: f64) -> Tensor<T> {
    let shape = shape.into();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if bound > 0.0 {
                T::lit(rng.gen_range(-bound..bound))
            } else {
                T::zero()
            }
        })
        .collect();
    Tensor { shape, data }
}

/// Weight bound for a sine layer with `fan_in` inputs: `1/n` for the first
/// layer, `sqrt(6/n)/omega0` after it.
pub fn siren_bound(fan_in: usize, first: bool, omega0: f64) -> f64 {
    let n = fan_in.max(1) as f64;
    if first {
        1.0 / n
    } else {
        (6.0 / n).sqrt() / omega0
    }
}

/// Bound preserving activation variance through a leaky rectifier with the
/// given negative slope.
pub fn he_bound(fan_in: usize, slope: f64) -> f64 {
    (6.0 / ((1.0 + slope * slope) * fan_in.max(1) as f64)).sqrt()
}

/// Default bound for a plain linear layer, `1/sqrt(fan_in)`.
pub fn linear_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}
