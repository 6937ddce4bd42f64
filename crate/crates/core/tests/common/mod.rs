#![allow(dead_code)]

use dfformer_core::rng::{named_stream, Stream};
use dfformer_core::{Real, Tensor};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn uniform(shape: &[usize], seed: u64, tag: &str) -> Tensor {
    let mut rng = named_stream(seed, Stream::Data, tag);
    Tensor::from_fn(shape.to_vec(), |_| rng.random::<f64>() as Real * 2.0 - 1.0)
}

pub fn gaussian(shape: &[usize], seed: u64, tag: &str) -> Tensor {
    let mut rng = named_stream(seed, Stream::Data, tag);
    Tensor::from_fn(shape.to_vec(), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z as Real
    })
}

pub fn max_diff(a: &[Real], b: &[Real]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max)
}

/// Least-squares `c` for `y ≈ c·x` and the largest relative residual.
pub fn proportional_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let c = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / x.iter().map(|a| a * a).sum::<f64>();
    let worst = x.iter().zip(y).map(|(a, b)| ((c * a - b) / b).abs()).fold(0.0, f64::max);
    (c, worst)
}
