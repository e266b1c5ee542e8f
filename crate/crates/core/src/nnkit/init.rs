use rand::Rng;

use crate::nnkit::tensor::Tensor;
use crate::scalar::Scalar;

/// Uniform values in `[-bound, bound]`.
pub fn uniform<T: Scalar>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..=bound)))
}

/// He/Kaiming uniform initialisation for ReLU networks: bound `sqrt(6 / fan_in)`.
pub fn kaiming_uniform<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor<T> {
    uniform(shape, (6.0 / fan_in.max(1) as f64).sqrt(), rng)
}
