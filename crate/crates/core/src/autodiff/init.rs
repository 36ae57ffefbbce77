use ndarray::Array2;
use rand::Rng;

/// Uniform entries in `[-bound, bound)`.
pub fn uniform(rng: &mut impl Rng, shape: (usize, usize), bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
}

/// Glorot/Xavier uniform: variance `2 / (fan_in + fan_out)`.
pub fn xavier_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, (fan_in, fan_out), bound)
}
