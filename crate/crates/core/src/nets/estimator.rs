//! Contact position / force estimator.
//!
//! Residual convolutional backbone (ResNet-18 block layout by default, with
//! instance norm so inference is batch-size independent and deterministic)
//! over the 6-channel stack of reference and difference image, followed by
//! average pooling to a fixed `pool_grid`-sided grid and a two-layer
//! fully-connected head emitting an R^3 prediction. The default pools all
//! the way to 1x1 (classic global average pooling); the small desk presets
//! keep a 4x4 grid, because with only a handful of conv layers the padding
//! cues that let a deep backbone recover absolute position through global
//! pooling are too weak. Inputs of any resolution are resized internally to
//! `input_size` by adaptive average pooling.

use crate::autograd::{Graph, ParamSet, Scalar, Var};
use crate::error::{Error, Result};
use crate::nets::layers::{ConvNormRelu, Init, LinearLayer, ResBlock};
use crate::nets::WiredParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Side length inputs are resized to before the backbone.
    pub input_size: usize,
    /// Channels of the stem; doubles at each stage.
    pub base_channels: usize,
    /// Residual blocks per stage; every stage after the first downsamples.
    pub stage_blocks: Vec<usize>,
    /// Side of the grid the final feature map is average-pooled to before
    /// the head; 1 is global average pooling.
    pub pool_grid: usize,
    /// Widths of the two fully-connected head layers.
    pub head_widths: (usize, usize),
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        // ResNet-18 layout: 4 stages of 2 basic blocks, 512/256 head,
        // 224x224 input.
        EstimatorConfig {
            input_size: 224,
            base_channels: 64,
            stage_blocks: vec![2, 2, 2, 2],
            pool_grid: 1,
            head_widths: (512, 256),
        }
    }
}

impl EstimatorConfig {
    /// Reduced preset for fast CPU experiments.
    pub fn desk(input_size: usize, base_channels: usize, stages: usize) -> Self {
        EstimatorConfig {
            input_size,
            base_channels,
            stage_blocks: vec![1; stages],
            pool_grid: 4,
            head_widths: (4 * base_channels, 2 * base_channels),
        }
    }
}

#[derive(Clone)]
pub struct Estimator<T: Scalar> {
    config: EstimatorConfig,
    params: ParamSet<T>,
    stem: ConvNormRelu,
    blocks: Vec<ResBlock>,
    fc1: LinearLayer,
    fc2: LinearLayer,
    out: LinearLayer,
    final_channels: usize,
}

impl<T: Scalar> Estimator<T> {
    pub fn new(config: EstimatorConfig, seed: u64) -> Self {
        assert!(
            !config.stage_blocks.is_empty() && config.base_channels >= 1,
            "estimator config needs at least one stage"
        );
        assert!(
            config.pool_grid >= 1
                && config.input_size >> config.stage_blocks.len() >= config.pool_grid,
            "input_size too small for the downsampling stages and pool grid"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();

        // Stem consumes the 6-channel (reference, difference) stack.
        let stem = ConvNormRelu::new(
            &mut p,
            &mut rng,
            "stem",
            6,
            config.base_channels,
            7,
            2,
            3,
            Init::He,
        );
        let mut blocks = Vec::new();
        let mut cin = config.base_channels;
        for (s, &n) in config.stage_blocks.iter().enumerate() {
            let cout = config.base_channels << s;
            for b in 0..n {
                let stride = if s > 0 && b == 0 { 2 } else { 1 };
                blocks.push(ResBlock::new(
                    &mut p,
                    &mut rng,
                    &format!("stage{s}.block{b}"),
                    cin,
                    cout,
                    stride,
                    Init::He,
                    true,
                ));
                cin = cout;
            }
        }
        let (h1, h2) = config.head_widths;
        let head_in = cin * config.pool_grid * config.pool_grid;
        let fc1 = LinearLayer::new(&mut p, &mut rng, "fc1", head_in, h1, Init::He);
        let fc2 = LinearLayer::new(&mut p, &mut rng, "fc2", h1, h2, Init::He);
        let out = LinearLayer::new(&mut p, &mut rng, "out", h2, 3, Init::He);

        Estimator {
            config,
            params: p,
            stem,
            blocks,
            fc1,
            fc2,
            out,
            final_channels: cin,
        }
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn map_precision<U: Scalar>(&self) -> Estimator<U> {
        let mut e = Estimator::<U>::new(self.config.clone(), 0);
        e.params = self.params.map_precision();
        e
    }

    pub fn insert(&self, g: &mut Graph<T>, trainable: bool) -> WiredParams {
        WiredParams {
            vars: g.insert_params(&self.params, trainable),
        }
    }

    fn check_image_batch(shape: &[usize], what: &str) -> Result<()> {
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::Shape(format!(
                "estimator {what} must be (N, 3, H, W), got {shape:?}"
            )));
        }
        Ok(())
    }

    /// Predicts an R^3 target from a (reference, difference) pair of image
    /// batches. Both are resized internally; batch sizes must match.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        w: &WiredParams,
        reference: Var,
        difference: Var,
    ) -> Result<Var> {
        Self::check_image_batch(g.value(reference).shape(), "reference")?;
        Self::check_image_batch(g.value(difference).shape(), "difference")?;
        if g.value(reference).shape()[0] != g.value(difference).shape()[0] {
            return Err(Error::Shape(
                "reference/difference batch sizes differ".into(),
            ));
        }
        for (what, v) in [("reference", reference), ("difference", difference)] {
            if !g.value(v).iter().all(|x| x.is_finite()) {
                return Err(Error::Validation(format!(
                    "non-finite values in estimator {what} input"
                )));
            }
        }

        let s = self.config.input_size;
        let reference = g.adaptive_avg_pool(reference, s, s);
        let difference = g.adaptive_avg_pool(difference, s, s);
        let x = g.concat_channels(reference, difference);

        let vars = &w.vars;
        let mut y = self.stem.forward(g, vars, x);
        for block in &self.blocks {
            y = block.forward(g, vars, y);
        }
        let grid = self.config.pool_grid;
        y = g.adaptive_avg_pool(y, grid, grid);
        let n = g.value(y).shape()[0];
        let y = g.reshape(y, &[n, self.final_channels * grid * grid]);
        let y = self.fc1.forward(g, vars, y);
        let y = g.relu(y);
        let y = self.fc2.forward(g, vars, y);
        let y = g.relu(y);
        Ok(self.out.forward(g, vars, y))
    }
}
