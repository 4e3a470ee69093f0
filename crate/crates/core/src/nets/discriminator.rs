//! Patch-level discriminator.
//!
//! A stack of stride-2 4x4 convolutions followed by two stride-1 stages,
//! emitting a grid of per-patch realism scores. Scores are raw
//! pre-activations: the least-squares objective consumes them directly and
//! the log objective applies a sigmoid inside the loss.

use crate::autograd::{Graph, ParamSet, Scalar, Var};
use crate::error::{Error, Result};
use crate::nets::layers::{ConvLayer, Init, NormLayer, LEAKY_SLOPE};
use crate::nets::WiredParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Channels after the first convolution; doubles per strided stage.
    pub base_channels: usize,
    /// Number of stride-2 stages (3 gives the classic 70x70 patch size).
    pub strided_stages: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            base_channels: 64,
            strided_stages: 3,
        }
    }
}

impl DiscriminatorConfig {
    pub fn desk(base_channels: usize, strided_stages: usize) -> Self {
        DiscriminatorConfig {
            base_channels,
            strided_stages,
        }
    }
}

/// Output size of one axis for a k=4, p=1 convolution with the given stride.
fn stage_out(size: usize, stride: usize) -> usize {
    crate::nets::conv_out_size(size, 4, stride, 1)
}

/// Score-grid dimensions as a pure function of the input dimensions: one
/// k4/s2/p1 stage per strided stage, then two k4/s1/p1 stages.
pub fn score_grid_size(config: &DiscriminatorConfig, h: usize, w: usize) -> (usize, usize) {
    let mut h = h;
    let mut w = w;
    for _ in 0..config.strided_stages {
        h = stage_out(h, 2);
        w = stage_out(w, 2);
    }
    for _ in 0..2 {
        h = stage_out(h, 1);
        w = stage_out(w, 1);
    }
    (h, w)
}

/// Smallest square input the layer stack accepts without collapsing.
pub fn min_input_side(config: &DiscriminatorConfig) -> usize {
    // Each strided stage halves (floor of (n+2-4)/2+1 = n/2); the two
    // stride-1 stages each subtract 1. Need >= 1 at the end.
    3 << config.strided_stages
}

#[derive(Clone)]
pub struct Discriminator<T: Scalar> {
    config: DiscriminatorConfig,
    params: ParamSet<T>,
    stages: Vec<(ConvLayer, Option<NormLayer>)>,
    out: ConvLayer,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig, seed: u64) -> Self {
        assert!(config.base_channels >= 1 && config.strided_stages >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        let mut stages = Vec::new();

        let mut cin = 3;
        let mut cout = config.base_channels;
        for i in 0..config.strided_stages {
            let conv = ConvLayer::new(
                &mut p,
                &mut rng,
                &format!("stage{i}"),
                cin,
                cout,
                4,
                2,
                1,
                i == 0, // no norm on the first stage, so it keeps a bias
                Init::Gan,
            );
            let norm = (i > 0).then(|| NormLayer::new(&mut p, &format!("stage{i}.norm"), cout));
            stages.push((conv, norm));
            cin = cout;
            cout *= 2;
        }
        // Penultimate stride-1 stage with norm, then the 1-channel head.
        let conv = ConvLayer::new(
            &mut p, &mut rng, "pre_out", cin, cout, 4, 1, 1, false, Init::Gan,
        );
        let norm = NormLayer::new(&mut p, "pre_out.norm", cout);
        stages.push((conv, Some(norm)));
        let out = ConvLayer::new(&mut p, &mut rng, "out", cout, 1, 4, 1, 1, true, Init::Gan);

        Discriminator {
            config,
            params: p,
            stages,
            out,
        }
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn map_precision<U: Scalar>(&self) -> Discriminator<U> {
        let mut d = Discriminator::<U>::new(self.config.clone(), 0);
        d.params = self.params.map_precision();
        d
    }

    pub fn insert(&self, g: &mut Graph<T>, trainable: bool) -> WiredParams {
        WiredParams {
            vars: g.insert_params(&self.params, trainable),
        }
    }

    /// Scores a batch of difference images; returns the patch score grid
    /// `(N, 1, Ho, Wo)` of raw pre-activations.
    pub fn forward(&self, g: &mut Graph<T>, w: &WiredParams, x: Var) -> Result<Var> {
        let shape = g.value(x).shape();
        if shape.len() != 4 || shape[1] != 3 {
            return Err(Error::Shape(format!(
                "discriminator expects (N, 3, H, W) input, got {shape:?}"
            )));
        }
        let min_side = min_input_side(&self.config);
        if shape[2] < min_side || shape[3] < min_side {
            return Err(Error::Shape(format!(
                "discriminator needs at least {min_side}x{min_side} input, got {}x{}",
                shape[2], shape[3]
            )));
        }
        let vars = &w.vars;
        let mut y = x;
        for (conv, norm) in &self.stages {
            y = conv.forward(g, vars, y);
            if let Some(norm) = norm {
                y = norm.forward(g, vars, y);
            }
            y = g.leaky_relu(y, T::from_f64(LEAKY_SLOPE));
        }
        Ok(self.out.forward(g, vars, y))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn score_grid_matches_hand_computed_sizes() {
        // Hand-walked k4/p1 chain at 224 with 3 strided stages:
        // 224 -> 112 -> 56 -> 28 (stride 2), then 28 -> 27 -> 26.
        let cfg = DiscriminatorConfig::default();
        assert_eq!(score_grid_size(&cfg, 224, 224), (26, 26));
        // 64 -> 32 -> 16 -> 8, then 8 -> 7 -> 6.
        assert_eq!(score_grid_size(&cfg, 64, 64), (6, 6));
        // Two strided stages at 32: 32 -> 16 -> 8, then 8 -> 7 -> 6.
        let cfg2 = DiscriminatorConfig::desk(8, 2);
        assert_eq!(score_grid_size(&cfg2, 32, 32), (6, 6));
    }

    #[test]
    fn forward_shape_agrees_with_closed_form() {
        let cfg = DiscriminatorConfig::desk(4, 2);
        let net = Discriminator::<f32>::new(cfg.clone(), 3);
        for (h, w) in [(32, 32), (48, 32), (31, 33)] {
            let mut g = Graph::new();
            let wired = net.insert(&mut g, false);
            let x = g.constant(ArrayD::zeros(IxDyn(&[2, 3, h, w])));
            let y = net.forward(&mut g, &wired, x).unwrap();
            let (gh, gw) = score_grid_size(&cfg, h, w);
            assert_eq!(g.value(y).shape(), &[2, 1, gh, gw]);
        }
    }

    #[test]
    fn undersized_input_is_rejected() {
        let cfg = DiscriminatorConfig::desk(4, 2);
        let net = Discriminator::<f32>::new(cfg, 3);
        let mut g = Graph::new();
        let wired = net.insert(&mut g, false);
        let x = g.constant(ArrayD::zeros(IxDyn(&[1, 3, 8, 8])));
        assert!(matches!(
            net.forward(&mut g, &wired, x),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn deterministic_construction() {
        let cfg = DiscriminatorConfig::desk(4, 2);
        let a = Discriminator::<f32>::new(cfg.clone(), 9);
        let b = Discriminator::<f32>::new(cfg, 9);
        for (ta, tb) in a.params().tensors().iter().zip(b.params().tensors()) {
            assert_eq!(ta.name, tb.name);
            assert_eq!(ta.value, tb.value);
        }
    }
}
