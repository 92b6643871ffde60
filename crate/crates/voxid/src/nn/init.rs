//! Seeded weight initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scalar::Scalar;
use super::tensor::Tensor;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stream))
}

/// Glorot-uniform: U(-l, l) with `l = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<S: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, shape, limit)
}

/// U(-limit, limit), drawn in f64 so f32 and f64 nets share a seed stream.
pub fn uniform<S: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], limit: f64) -> Tensor<S> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| S::from_f64((rng.gen::<f64>() * 2.0 - 1.0) * limit))
        .collect();
    Tensor::from_vec(shape, data).expect("shape/product mismatch")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_deterministic() {
        let a: Tensor<f32> = glorot_uniform(&mut seeded_rng(7, 0), &[4, 4], 4, 4);
        let b: Tensor<f32> = glorot_uniform(&mut seeded_rng(7, 0), &[4, 4], 4, 4);
        assert_eq!(a, b);
        let c: Tensor<f32> = glorot_uniform(&mut seeded_rng(7, 1), &[4, 4], 4, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn glorot_respects_limit() {
        let t: Tensor<f64> = glorot_uniform(&mut seeded_rng(3, 9), &[100], 50, 50);
        let limit = (6.0f64 / 100.0).sqrt();
        assert!(t.data().iter().all(|&v| v.abs() <= limit));
    }
}
