//! Seeded weight initialization.
//!
//! All draws go through `f64` and are converted down, so an `f32` and an
//! `f64` network built from the same seed hold the same underlying values.

use super::Scalar;
use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Gaussian tensor with the given standard deviation.
pub fn normal<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> ArrayD<T> {
    let dist = Normal::new(0.0f64, std).expect("std must be finite and positive");
    let data: Vec<T> = (0..shape.iter().product::<usize>())
        .map(|_| T::from_f64(dist.sample(rng)))
        .collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape/product mismatch")
}

/// He-normal initialization for a conv kernel `(cout, cin, kh, kw)` or a
/// linear weight `(out, in)`: std = sqrt(2 / fan_in).
pub fn he_normal<T: Scalar, R: Rng>(rng: &mut R, shape: &[usize]) -> ArrayD<T> {
    let fan_in: usize = match shape.len() {
        2 => shape[1],
        4 => shape[1] * shape[2] * shape[3],
        n => panic!("he_normal expects a 2-d or 4-d shape, got {n}-d"),
    };
    normal(rng, shape, (2.0 / fan_in as f64).sqrt())
}

pub fn zeros<T: Scalar>(shape: &[usize]) -> ArrayD<T> {
    ArrayD::zeros(IxDyn(shape))
}

pub fn ones<T: Scalar>(shape: &[usize]) -> ArrayD<T> {
    ArrayD::from_elem(IxDyn(shape), T::one())
}
