//! Adam optimizer with bias correction.
//!
//! Updates are applied in parameter-registration order with plain
//! single-threaded loops, so a given (parameters, gradients, step count)
//! triple always produces bitwise-identical results — a property the
//! training-equivalence tests rely on.

use super::params::ParamSet;
use super::Scalar;
use ndarray::ArrayD;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        // CycleGAN-style defaults: beta1 lowered to 0.5 for GAN stability.
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam state for one parameter set.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    config: AdamConfig,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let m = params
            .tensors()
            .iter()
            .map(|t| ArrayD::zeros(t.value.raw_dim()))
            .collect::<Vec<_>>();
        let v = m.clone();
        Self { config, m, v, t: 0 }
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update. `grads` must align with the parameter order; the
    /// effective learning rate is `config.lr * lr_scale` (for schedules).
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[ArrayD<T>], lr_scale: f64) {
        assert_eq!(grads.len(), params.len(), "gradient count mismatch");
        self.t += 1;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let one = T::one();
        let eps = T::from_f64(self.config.eps);
        let lr = T::from_f64(self.config.lr * lr_scale);
        let bc1 = T::from_f64(1.0 - self.config.beta1.powi(self.t as i32));
        let bc2 = T::from_f64(1.0 - self.config.beta2.powi(self.t as i32));

        for ((tensor, grad), (m, v)) in params
            .tensors_mut()
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(
                tensor.value.shape(),
                grad.shape(),
                "gradient shape mismatch for {}",
                tensor.name
            );
            ndarray::Zip::from(&mut tensor.value)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                });
        }
    }

    /// Snapshot of the internal state for checkpointing, in parameter order.
    pub fn state(&self) -> (u64, &[ArrayD<T>], &[ArrayD<T>]) {
        (self.t, &self.m, &self.v)
    }

    /// Restores a snapshot taken by [`Adam::state`].
    pub fn restore(&mut self, t: u64, m: Vec<ArrayD<T>>, v: Vec<ArrayD<T>>) {
        assert_eq!(m.len(), self.m.len(), "moment count mismatch");
        assert_eq!(v.len(), self.v.len(), "moment count mismatch");
        for (new, old) in m.iter().zip(&self.m).chain(v.iter().zip(&self.v)) {
            assert_eq!(new.shape(), old.shape(), "moment shape mismatch");
        }
        self.t = t;
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    fn one_param(value: f64) -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.add("w", ArrayD::from_elem(IxDyn(&[1]), value));
        p
    }

    /// First Adam step moves by exactly -lr * g/|g| (bias corrections cancel).
    #[test]
    fn first_step_matches_closed_form() {
        let mut p = one_param(1.0);
        let config = AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(&p, config);
        let g = ArrayD::from_elem(IxDyn(&[1]), 3.0f64);
        opt.step(&mut p, &[g], 1.0);
        // m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps') ~= lr.
        let got = p.get(crate::autograd::PIdx(0))[[0]];
        assert!((got - (1.0 - 1e-2)).abs() < 1e-6, "got {got}");
        assert_eq!(opt.steps(), 1);
    }

    /// Two fresh optimizers fed the same gradients stay bitwise identical.
    #[test]
    fn updates_are_deterministic() {
        let mut pa = one_param(0.5);
        let mut pb = one_param(0.5);
        let mut oa = Adam::new(&pa, AdamConfig::default());
        let mut ob = Adam::new(&pb, AdamConfig::default());
        for k in 0..20 {
            let g = ArrayD::from_elem(IxDyn(&[1]), ((k * k) % 7) as f64 - 3.0);
            oa.step(&mut pa, std::slice::from_ref(&g), 1.0);
            ob.step(&mut pb, std::slice::from_ref(&g), 1.0);
            let (a, b) = (
                pa.get(crate::autograd::PIdx(0))[[0]],
                pb.get(crate::autograd::PIdx(0))[[0]],
            );
            assert_eq!(a.to_bits(), b.to_bits(), "diverged at step {k}");
        }
    }

    /// Restoring checkpointed state resumes the exact same trajectory.
    #[test]
    fn state_restore_resumes_identically() {
        let grads: Vec<ArrayD<f64>> = (0..10)
            .map(|k| ArrayD::from_elem(IxDyn(&[1]), (k as f64 * 0.37).sin()))
            .collect();

        let mut p_ref = one_param(2.0);
        let mut o_ref = Adam::new(&p_ref, AdamConfig::default());
        for g in &grads {
            o_ref.step(&mut p_ref, std::slice::from_ref(g), 1.0);
        }

        let mut p = one_param(2.0);
        let mut o = Adam::new(&p, AdamConfig::default());
        for g in &grads[..4] {
            o.step(&mut p, std::slice::from_ref(g), 1.0);
        }
        let (t, m, v) = o.state();
        let (t, m, v) = (t, m.to_vec(), v.to_vec());
        let snapshot = p.clone();

        let mut p2 = snapshot.clone();
        let mut o2 = Adam::new(&p2, AdamConfig::default());
        o2.restore(t, m, v);
        for g in &grads[4..] {
            o2.step(&mut p2, std::slice::from_ref(g), 1.0);
        }
        let a = p_ref.get(crate::autograd::PIdx(0))[[0]];
        let b = p2.get(crate::autograd::PIdx(0))[[0]];
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
