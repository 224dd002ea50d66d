use rand::Rng;

use crate::real::Real;
use crate::tensor::Tensor;

/// Kaiming-uniform with ReLU gain: `U(−√(6/fan_in), √(6/fan_in))`.
pub fn kaiming_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
    uniform(shape, bound, rng)
}

/// `U(−bound, bound)` drawn in f64 and cast, so f32 and f64 models built
/// from the same seed agree up to rounding.
pub fn uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
