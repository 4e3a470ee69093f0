//! Image-translation generator (used for both directions G and F).
//!
//! Layout follows the CycleGAN reference design: a 7x7 ingest conv, two
//! stride-2 downsampling stages, `res_blocks` residual blocks at the
//! bottleneck, two nearest-neighbor upsampling stages, and a 7x7 output
//! conv with tanh. Fully convolutional: works at any resolution divisible
//! by 4, and output dimensions always equal input dimensions.

use crate::autograd::{Graph, ParamSet, Scalar, Var};
use crate::error::{Error, Result};
use crate::nets::layers::{ConvLayer, ConvNormRelu, Init, ResBlock};
use crate::nets::WiredParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Channels of the first stage; doubles at each downsampling.
    pub base_channels: usize,
    /// Residual blocks at the bottleneck.
    pub res_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        // Reference scale for 224x224 translation.
        GeneratorConfig {
            base_channels: 64,
            res_blocks: 9,
        }
    }
}

impl GeneratorConfig {
    /// Reduced preset for fast CPU experiments at small resolutions.
    pub fn desk(base_channels: usize, res_blocks: usize) -> Self {
        GeneratorConfig {
            base_channels,
            res_blocks,
        }
    }
}

#[derive(Clone)]
pub struct Generator<T: Scalar> {
    config: GeneratorConfig,
    params: ParamSet<T>,
    ingest: ConvNormRelu,
    down1: ConvNormRelu,
    down2: ConvNormRelu,
    blocks: Vec<ResBlock>,
    up1: ConvNormRelu,
    up2: ConvNormRelu,
    out: ConvLayer,
}

impl<T: Scalar> Generator<T> {
    pub fn new(config: GeneratorConfig, seed: u64) -> Self {
        assert!(config.base_channels >= 1, "base_channels must be >= 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let c = config.base_channels;

        let ingest = ConvNormRelu::new(&mut p, &mut rng, "ingest", 3, c, 7, 1, 3, Init::Gan);
        let down1 = ConvNormRelu::new(&mut p, &mut rng, "down1", c, 2 * c, 3, 2, 1, Init::Gan);
        let down2 = ConvNormRelu::new(&mut p, &mut rng, "down2", 2 * c, 4 * c, 3, 2, 1, Init::Gan);
        let blocks = (0..config.res_blocks)
            .map(|i| {
                ResBlock::new(
                    &mut p,
                    &mut rng,
                    &format!("res{i}"),
                    4 * c,
                    4 * c,
                    1,
                    Init::Gan,
                    false,
                )
            })
            .collect();
        let up1 = ConvNormRelu::new(&mut p, &mut rng, "up1", 4 * c, 2 * c, 3, 1, 1, Init::Gan);
        let up2 = ConvNormRelu::new(&mut p, &mut rng, "up2", 2 * c, c, 3, 1, 1, Init::Gan);
        let out = ConvLayer::new(&mut p, &mut rng, "out", c, 3, 7, 1, 3, true, Init::Gan);

        Generator {
            config,
            params: p,
            ingest,
            down1,
            down2,
            blocks,
            up1,
            up2,
            out,
        }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Rebuilds this generator at another precision (same weights).
    pub fn map_precision<U: Scalar>(&self) -> Generator<U> {
        let mut g = Generator::<U>::new(self.config.clone(), 0);
        g.params = self.params.map_precision();
        g
    }

    /// Inserts the parameters into a graph as (optionally trainable) leaves.
    pub fn insert(&self, g: &mut Graph<T>, trainable: bool) -> WiredParams {
        WiredParams {
            vars: g.insert_params(&self.params, trainable),
        }
    }

    /// Checks that `(n, c, h, w)` is a batch this generator accepts.
    pub fn check_input(shape: &[usize]) -> Result<()> {
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::Shape(format!(
                "generator expects (N, 3, H, W) input, got {shape:?}"
            )));
        }
        if shape[2] % 4 != 0 || shape[3] % 4 != 0 || shape[2] == 0 || shape[3] == 0 {
            return Err(Error::Shape(format!(
                "generator needs H, W divisible by 4, got {}x{}",
                shape[2], shape[3]
            )));
        }
        Ok(())
    }

    /// Translates a batch of difference images; output shape equals input
    /// shape and values lie in `(-1, 1)` (tanh).
    pub fn forward(&self, g: &mut Graph<T>, w: &WiredParams, x: Var) -> Result<Var> {
        Self::check_input(g.value(x).shape())?;
        let vars = &w.vars;
        let mut y = self.ingest.forward(g, vars, x);
        y = self.down1.forward(g, vars, y);
        y = self.down2.forward(g, vars, y);
        for block in &self.blocks {
            y = block.forward(g, vars, y);
        }
        y = g.upsample_nearest2(y);
        y = self.up1.forward(g, vars, y);
        y = g.upsample_nearest2(y);
        y = self.up2.forward(g, vars, y);
        y = self.out.forward(g, vars, y);
        Ok(g.tanh(y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    fn desk() -> GeneratorConfig {
        GeneratorConfig::desk(4, 2)
    }

    #[test]
    fn output_matches_input_shape_and_range() {
        let net = Generator::<f32>::new(desk(), 7);
        for (h, w) in [(16, 16), (24, 32)] {
            let mut g = Graph::new();
            let wired = net.insert(&mut g, false);
            let x = g.constant(ArrayD::zeros(IxDyn(&[2, 3, h, w])));
            let y = net.forward(&mut g, &wired, x).unwrap();
            assert_eq!(g.value(y).shape(), &[2, 3, h, w]);
            for &v in g.value(y).iter() {
                assert!((-1.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn indivisible_resolution_is_rejected() {
        let net = Generator::<f32>::new(desk(), 7);
        let mut g = Graph::new();
        let wired = net.insert(&mut g, false);
        let x = g.constant(ArrayD::zeros(IxDyn(&[1, 3, 18, 16])));
        assert!(matches!(
            net.forward(&mut g, &wired, x),
            Err(Error::Shape(_))
        ));
        let mut g = Graph::new();
        let wired = net.insert(&mut g, false);
        let x = g.constant(ArrayD::zeros(IxDyn(&[1, 4, 16, 16])));
        assert!(matches!(
            net.forward(&mut g, &wired, x),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn same_seed_same_outputs() {
        let a = Generator::<f32>::new(desk(), 11);
        let b = Generator::<f32>::new(desk(), 11);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let x_arr = crate::autograd::init::normal::<f32, _>(&mut rng, &[1, 3, 16, 16], 0.3);
        let run = |net: &Generator<f32>| {
            let mut g = Graph::new();
            let wired = net.insert(&mut g, false);
            let x = g.constant(x_arr.clone());
            let y = net.forward(&mut g, &wired, x).unwrap();
            g.value(y).clone()
        };
        assert_eq!(run(&a), run(&b));
        let c = Generator::<f32>::new(desk(), 12);
        assert_ne!(run(&a), run(&c));
    }
}
