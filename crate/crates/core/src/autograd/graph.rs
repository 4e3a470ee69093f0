//! The tape: eager forward evaluation plus recorded backward ops.

use super::ops;
use super::params::ParamSet;
use super::Scalar;
use ndarray::{ArrayD, IxDyn};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) u32);

/// Backward rule for one recorded operation. Returns one gradient per input,
/// skipping (returning `None` for) inputs whose `needs` flag is false.
pub(crate) trait BackOp<T: Scalar> {
    fn backward(
        &self,
        grad: &ArrayD<T>,
        inputs: &[&ArrayD<T>],
        output: &ArrayD<T>,
        needs: &[bool],
    ) -> Vec<Option<ArrayD<T>>>;
}

struct Node<T: Scalar> {
    parents: Vec<u32>,
    op: Option<Box<dyn BackOp<T>>>,
    requires_grad: bool,
}

/// A computation tape. Build one per training step, run ops on it, then call
/// [`Graph::backward`] on a scalar loss node.
pub struct Graph<T: Scalar> {
    values: Vec<ArrayD<T>>,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            values: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &ArrayD<T> {
        &self.values[v.0 as usize]
    }

    /// Scalar payload of a zero-dimensional node.
    pub fn scalar_value(&self, v: Var) -> T {
        let val = self.value(v);
        assert_eq!(val.ndim(), 0, "expected a scalar node, got {:?}", val.shape());
        *val.iter().next().unwrap()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0 as usize].requires_grad
    }

    /// Inserts a differentiable leaf (a parameter or an input that needs a
    /// gradient).
    pub fn leaf(&mut self, value: ArrayD<T>, requires_grad: bool) -> Var {
        self.values.push(value);
        self.nodes.push(Node {
            parents: Vec::new(),
            op: None,
            requires_grad,
        });
        Var(self.nodes.len() as u32 - 1)
    }

    /// Inserts a non-differentiable leaf.
    pub fn constant(&mut self, value: ArrayD<T>) -> Var {
        self.leaf(value, false)
    }

    /// Inserts every tensor of a parameter set as a leaf, in order.
    pub fn insert_params(&mut self, params: &ParamSet<T>, requires_grad: bool) -> Vec<Var> {
        params
            .tensors()
            .iter()
            .map(|t| self.leaf(t.value.clone(), requires_grad))
            .collect()
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<T>,
        parents: Vec<Var>,
        op: Box<dyn BackOp<T>>,
    ) -> Var {
        let requires_grad = parents.iter().any(|p| self.requires_grad(*p));
        let parents = parents.iter().map(|p| p.0).collect();
        self.values.push(value);
        self.nodes.push(Node {
            parents,
            // Nodes with no differentiable ancestors never run backward.
            op: requires_grad.then_some(op),
            requires_grad,
        });
        Var(self.nodes.len() as u32 - 1)
    }

    /// Reverse-mode sweep from a scalar loss. Returns one gradient slot per
    /// node; only nodes reachable from differentiable leaves are populated.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        let lv = self.value(loss);
        assert_eq!(lv.ndim(), 0, "backward requires a scalar loss node");
        assert!(
            self.requires_grad(loss),
            "loss does not depend on any differentiable leaf"
        );
        let mut grads: Vec<Option<ArrayD<T>>> = vec![None; self.nodes.len()];
        grads[loss.0 as usize] = Some(ArrayD::from_elem(IxDyn(&[]), T::one()));

        for i in (0..=loss.0 as usize).rev() {
            if grads[i].is_none() {
                continue;
            }
            let node = &self.nodes[i];
            let Some(op) = node.op.as_ref() else {
                continue;
            };
            let grad = grads[i].take().expect("checked above");
            let inputs: Vec<&ArrayD<T>> =
                node.parents.iter().map(|&p| &self.values[p as usize]).collect();
            let needs: Vec<bool> = node
                .parents
                .iter()
                .map(|&p| self.nodes[p as usize].requires_grad)
                .collect();
            let contribs = op.backward(&grad, &inputs, &self.values[i], &needs);
            debug_assert_eq!(contribs.len(), node.parents.len());
            for (slot, contrib) in node.parents.iter().zip(contribs) {
                let Some(contrib) = contrib else { continue };
                let entry = &mut grads[*slot as usize];
                match entry {
                    Some(acc) => *acc += &contrib,
                    None => *entry = Some(contrib),
                }
            }
        }
        Gradients { grads }
    }

    // ---- elementwise arithmetic ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        ops::add(self, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        ops::sub(self, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        ops::mul(self, a, b)
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        ops::scale(self, a, c)
    }

    pub fn add_scalar(&mut self, a: Var, c: T) -> Var {
        ops::add_scalar(self, a, c)
    }

    // ---- elementwise nonlinearities ----

    pub fn relu(&mut self, a: Var) -> Var {
        ops::relu(self, a)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        ops::leaky_relu(self, a, slope)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        ops::tanh(self, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        ops::sigmoid(self, a)
    }

    pub fn log(&mut self, a: Var) -> Var {
        ops::log(self, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        ops::abs(self, a)
    }

    // ---- reductions and shape ----

    pub fn mean_all(&mut self, a: Var) -> Var {
        ops::mean_all(self, a)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        ops::reshape(self, a, shape)
    }

    pub fn concat_channels(&mut self, a: Var, b: Var) -> Var {
        ops::concat_channels(self, a, b)
    }

    // ---- neural network layers ----

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Var {
        ops::conv2d(self, x, w, b, stride, pad)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        ops::linear(self, x, w, b)
    }

    pub fn instance_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        ops::instance_norm(self, x, gamma, beta, eps)
    }

    pub fn upsample_nearest2(&mut self, x: Var) -> Var {
        ops::upsample_nearest2(self, x)
    }

    pub fn adaptive_avg_pool(&mut self, x: Var, out_h: usize, out_w: usize) -> Var {
        ops::adaptive_avg_pool(self, x, out_h, out_w)
    }

    // ---- composite helpers ----

    /// Mean absolute error between two same-shape tensors.
    pub fn l1_mean(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let d = self.abs(d);
        self.mean_all(d)
    }

    /// Mean squared error between two same-shape tensors.
    pub fn mse_mean(&mut self, a: Var, b: Var) -> Var {
        let d = self.sub(a, b);
        let d = self.mul(d, d);
        self.mean_all(d)
    }
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<ArrayD<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&ArrayD<T>> {
        self.grads[v.0 as usize].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<ArrayD<T>> {
        self.grads[v.0 as usize].take()
    }

    /// Gradients for a leaf list (as returned by `insert_params`), with zeros
    /// for leaves no loss path reached.
    pub fn for_vars(&mut self, vars: &[Var], shapes: &[&[usize]]) -> Vec<ArrayD<T>> {
        vars.iter()
            .zip(shapes)
            .map(|(v, s)| {
                self.take(*v)
                    .unwrap_or_else(|| ArrayD::zeros(IxDyn(s)))
            })
            .collect()
    }
}
