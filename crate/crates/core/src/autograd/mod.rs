//! A small reverse-mode automatic differentiation engine.
//!
//! Define-by-run: every operation evaluates eagerly on `ndarray` storage and
//! records a backward closure on a tape. Tensors are `ArrayD<T>` with `T`
//! either `f32` (training) or `f64` (gradient checks). Everything is
//! single-threaded with fixed iteration order, so identical inputs produce
//! bitwise-identical outputs and gradients.
//!
//! Layout conventions: image batches are `(N, C, H, W)`; linear-layer inputs
//! are `(N, F)`; scalars are zero-dimensional arrays.

mod graph;
mod ops;
mod optim;
mod params;

pub mod init;

#[cfg(test)]
mod tests;

pub use graph::{Gradients, Graph, Var};
pub use ops::conv_out_size;
pub use optim::{Adam, AdamConfig};
pub use params::{NamedTensor, PIdx, ParamSet};

use ndarray::ScalarOperand;
use num_traits::Float;

/// Element type the engine is generic over.
pub trait Scalar:
    ndarray::LinalgScalar
    + Float
    + std::ops::AddAssign
    + ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}
