use rand::Rng;

use super::Tensor;

/// `uniform(−1/√fan_in, 1/√fan_in)` for a `fan_out × fan_in` weight matrix.
pub fn weight<R: Rng>(rng: &mut R, fan_out: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    uniform(rng, &[fan_out, fan_in], bound)
}

pub fn embedding<R: Rng>(rng: &mut R, vocab: usize, dim: usize) -> Tensor {
    uniform(rng, &[vocab, dim], 0.1)
}

pub fn bias(len: usize) -> Tensor {
    Tensor::zeros(&[len])
}

fn uniform<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape is positive")
}
