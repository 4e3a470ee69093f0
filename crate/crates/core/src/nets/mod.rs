//! Network definitions: translation generators, patch discriminators, and
//! the residual contact estimators.
//!
//! Networks own their parameters (a [`ParamSet`]); a forward pass first
//! `insert`s them into a fresh graph as leaves and then wires the
//! computation. All nets are generic over `f32`/`f64`, so the same
//! architecture code serves training and double-precision gradient checks.

mod discriminator;
mod estimator;
mod generator;
mod layers;
mod weights;

pub use discriminator::{min_input_side, score_grid_size, Discriminator, DiscriminatorConfig};
pub use estimator::{Estimator, EstimatorConfig};
pub use generator::{Generator, GeneratorConfig};
pub use weights::{arch_hash, load_weights, save_weights, NetModule, WEIGHTS_FORMAT_VERSION};

pub use crate::autograd::conv_out_size;
use crate::autograd::{ParamSet, Scalar, Var};
use crate::image::Image;
use ndarray::{ArrayD, IxDyn};

/// Handle to one network's parameter leaves inside a graph, in
/// registration order.
pub struct WiredParams {
    pub vars: Vec<Var>,
}

/// Stacks images into an `(N, 3, H, W)` batch array.
pub fn batch_from_images<T: Scalar>(images: &[&Image]) -> ArrayD<T> {
    assert!(!images.is_empty(), "empty image batch");
    let (h, w) = (images[0].height(), images[0].width());
    let mut out = ArrayD::<T>::zeros(IxDyn(&[images.len(), 3, h, w]));
    for (i, img) in images.iter().enumerate() {
        assert_eq!(
            (img.height(), img.width()),
            (h, w),
            "image {i} size differs within batch"
        );
        for c in 0..3 {
            for y in 0..h {
                for x in 0..w {
                    out[[i, c, y, x]] = T::from_f64(img.data()[[c, y, x]] as f64);
                }
            }
        }
    }
    out
}

impl NetModule for Generator<f32> {
    fn kind(&self) -> &'static str {
        "generator"
    }
    fn config_json(&self) -> String {
        serde_json::to_string(self.config()).expect("config serializes")
    }
    fn params(&self) -> &ParamSet<f32> {
        Generator::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        Generator::params_mut(self)
    }
}

impl NetModule for Discriminator<f32> {
    fn kind(&self) -> &'static str {
        "discriminator"
    }
    fn config_json(&self) -> String {
        serde_json::to_string(self.config()).expect("config serializes")
    }
    fn params(&self) -> &ParamSet<f32> {
        Discriminator::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        Discriminator::params_mut(self)
    }
}

impl NetModule for Estimator<f32> {
    fn kind(&self) -> &'static str {
        "estimator"
    }
    fn config_json(&self) -> String {
        serde_json::to_string(self.config()).expect("config serializes")
    }
    fn params(&self) -> &ParamSet<f32> {
        Estimator::params(self)
    }
    fn params_mut(&mut self) -> &mut ParamSet<f32> {
        Estimator::params_mut(self)
    }
}
