//! Internal layer builders shared by the network definitions.
//!
//! Each layer registers its tensors in a [`ParamSet`] at construction and
//! remembers the handles; `forward` then wires the computation into a graph
//! against the leaf list produced by `Graph::insert_params` (same order).

use crate::autograd::{init, Graph, PIdx, ParamSet, Scalar, Var};
use rand_chacha::ChaCha8Rng;

/// Normalization epsilon used by all instance-norm layers.
pub(crate) const NORM_EPS: f64 = 1e-5;

/// Leaky-relu slope used by discriminators.
pub(crate) const LEAKY_SLOPE: f64 = 0.2;

fn var(vars: &[Var], idx: PIdx) -> Var {
    vars[idx.0]
}

/// How conv / linear weights are initialized.
#[derive(Clone, Copy)]
pub(crate) enum Init {
    /// N(0, 0.02), the CycleGAN convention for GAN modules.
    Gan,
    /// He-normal, for the estimator backbone.
    He,
}

fn sample<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], init: Init) -> ndarray::ArrayD<T> {
    match init {
        Init::Gan => init::normal(rng, shape, 0.02),
        Init::He => init::he_normal(rng, shape),
    }
}

#[derive(Clone)]
pub(crate) struct ConvLayer {
    w: PIdx,
    b: Option<PIdx>,
    stride: usize,
    pad: usize,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        p: &mut ParamSet<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        init: Init,
    ) -> Self {
        let w = p.add(
            format!("{name}.w"),
            sample(rng, &[cout, cin, kernel, kernel], init),
        );
        let b = bias.then(|| p.add(format!("{name}.b"), init::zeros::<T>(&[cout])));
        ConvLayer { w, b, stride, pad }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Var {
        g.conv2d(
            x,
            var(vars, self.w),
            self.b.map(|b| var(vars, b)),
            self.stride,
            self.pad,
        )
    }
}

#[derive(Clone)]
pub(crate) struct NormLayer {
    gamma: PIdx,
    beta: PIdx,
}

impl NormLayer {
    pub fn new<T: Scalar>(p: &mut ParamSet<T>, name: &str, channels: usize) -> Self {
        NormLayer {
            gamma: p.add(format!("{name}.gamma"), init::ones::<T>(&[channels])),
            beta: p.add(format!("{name}.beta"), init::zeros::<T>(&[channels])),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Var {
        g.instance_norm(
            x,
            var(vars, self.gamma),
            var(vars, self.beta),
            T::from_f64(NORM_EPS),
        )
    }
}

#[derive(Clone)]
pub(crate) struct LinearLayer {
    w: PIdx,
    b: PIdx,
}

impl LinearLayer {
    pub fn new<T: Scalar>(
        p: &mut ParamSet<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        fin: usize,
        fout: usize,
        init: Init,
    ) -> Self {
        LinearLayer {
            w: p.add(format!("{name}.w"), sample(rng, &[fout, fin], init)),
            b: p.add(format!("{name}.b"), init::zeros::<T>(&[fout])),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Var {
        g.linear(x, var(vars, self.w), var(vars, self.b))
    }
}

/// conv + instance norm + relu, the standard encoder/decoder unit.
#[derive(Clone)]
pub(crate) struct ConvNormRelu {
    conv: ConvLayer,
    norm: NormLayer,
}

impl ConvNormRelu {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        p: &mut ParamSet<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        init: Init,
    ) -> Self {
        ConvNormRelu {
            conv: ConvLayer::new(p, rng, name, cin, cout, kernel, stride, pad, false, init),
            norm: NormLayer::new(p, &format!("{name}.norm"), cout),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Var {
        let x = self.conv.forward(g, vars, x);
        let x = self.norm.forward(g, vars, x);
        g.relu(x)
    }
}

/// Two 3x3 conv+norm stages with an additive skip; the skip path gets a
/// 1x1 projection when the shape changes. `post_relu` selects the ResNet
/// convention (relu after the add); generator blocks omit it.
#[derive(Clone)]
pub(crate) struct ResBlock {
    conv1: ConvLayer,
    norm1: NormLayer,
    conv2: ConvLayer,
    norm2: NormLayer,
    skip: Option<ConvLayer>,
    post_relu: bool,
}

impl ResBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        p: &mut ParamSet<T>,
        rng: &mut ChaCha8Rng,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
        init: Init,
        post_relu: bool,
    ) -> Self {
        let conv1 = ConvLayer::new(
            p,
            rng,
            &format!("{name}.conv1"),
            cin,
            cout,
            3,
            stride,
            1,
            false,
            init,
        );
        let norm1 = NormLayer::new(p, &format!("{name}.norm1"), cout);
        let conv2 = ConvLayer::new(
            p,
            rng,
            &format!("{name}.conv2"),
            cout,
            cout,
            3,
            1,
            1,
            false,
            init,
        );
        let norm2 = NormLayer::new(p, &format!("{name}.norm2"), cout);
        let skip = (cin != cout || stride != 1).then(|| {
            ConvLayer::new(
                p,
                rng,
                &format!("{name}.skip"),
                cin,
                cout,
                1,
                stride,
                0,
                false,
                init,
            )
        });
        ResBlock {
            conv1,
            norm1,
            conv2,
            norm2,
            skip,
            post_relu,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Var {
        let y = self.conv1.forward(g, vars, x);
        let y = self.norm1.forward(g, vars, y);
        let y = g.relu(y);
        let y = self.conv2.forward(g, vars, y);
        let y = self.norm2.forward(g, vars, y);
        let shortcut = match &self.skip {
            Some(proj) => proj.forward(g, vars, x),
            None => x,
        };
        let y = g.add(y, shortcut);
        if self.post_relu {
            g.relu(y)
        } else {
            y
        }
    }
}
