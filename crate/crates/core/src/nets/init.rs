use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform in `±1/sqrt(fan_in)`, where fan-in is the product of every
/// axis but the first (`[out, in, k, k]` kernels).
pub fn fan_in_uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
    let bound = 1.0 / (fan_in as f64).sqrt();
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-bound..bound))
}

/// Same bound for a transposed kernel `[in, out, k, k]`, whose fan-in is
/// `in * k * k`.
pub fn fan_in_uniform_transposed(rng: &mut ChaCha8Rng, shape: &[usize]) -> ArrayD<f64> {
    let fan_in = (shape[0] * shape[2] * shape[3]).max(1);
    let bound = 1.0 / (fan_in as f64).sqrt();
    ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.random_range(-bound..bound))
}

pub fn bias_uniform(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> ArrayD<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    ArrayD::from_shape_simple_fn(IxDyn(&[len]), || rng.random_range(-bound..bound))
}
