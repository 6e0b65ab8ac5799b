//! Seeded weight initializers. All randomness flows through the caller's RNG
//! so models rebuild bit-identically from a seed.

use crate::Arr;
use ndarray::IxDyn;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn zeros(shape: &[usize]) -> Arr {
    Arr::zeros(IxDyn(shape))
}

pub fn full(shape: &[usize], value: f64) -> Arr {
    Arr::from_elem(IxDyn(shape), value)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Arr {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    Arr::from_shape_vec(IxDyn(shape), data).unwrap()
}

pub fn normal(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> Arr {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| std * gaussian(rng)).collect();
    Arr::from_shape_vec(IxDyn(shape), data).unwrap()
}

/// He (Kaiming) normal: std = sqrt(2 / fan_in).
pub fn he_normal(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Arr {
    normal(rng, shape, (2.0 / fan_in as f64).sqrt())
}

/// Glorot uniform: limit = sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Arr {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, shape, -limit, limit)
}

/// Box-Muller transform; two uniform draws per call keeps the stream
/// independent of any library-internal caching.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
