//! Named parameter storage shared by all network modules.
//!
//! A [`ParamSet`] owns the trainable tensors of one network. Layer structs
//! keep [`PIdx`] handles into it, so the same architecture code can run
//! against `f32` weights for training and `f64` weights for gradient
//! checking. The tape ([`crate::autograd::Graph`]) is rebuilt every step;
//! parameters live here between steps.

use super::Scalar;
use ndarray::ArrayD;

/// Stable handle of one tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PIdx(pub(crate) usize);

/// One trainable tensor with a stable, unique name.
#[derive(Debug, Clone)]
pub struct NamedTensor<T> {
    pub name: String,
    pub value: ArrayD<T>,
}

/// Ordered collection of named tensors. Order is the serialization and
/// optimizer-state order, so construction must be deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<T> {
    tensors: Vec<NamedTensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { tensors: Vec::new() }
    }

    /// Registers a tensor under a unique name.
    pub fn add(&mut self, name: impl Into<String>, value: ArrayD<T>) -> PIdx {
        let name = name.into();
        assert!(
            self.tensors.iter().all(|t| t.name != name),
            "duplicate parameter name: {name}"
        );
        self.tensors.push(NamedTensor { name, value });
        PIdx(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar entries across all tensors.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn get(&self, idx: PIdx) -> &ArrayD<T> {
        &self.tensors[idx.0].value
    }

    pub fn get_mut(&mut self, idx: PIdx) -> &mut ArrayD<T> {
        &mut self.tensors[idx.0].value
    }

    pub fn tensors(&self) -> &[NamedTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [NamedTensor<T>] {
        &mut self.tensors
    }

    /// Shape of every tensor, in registration order.
    pub fn shapes(&self) -> Vec<&[usize]> {
        self.tensors.iter().map(|t| t.value.shape()).collect()
    }

    /// True when every scalar in every tensor is finite.
    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.value.iter().all(|v| v.is_finite()))
    }

    /// Converts values to another precision through `f64`, keeping names and
    /// order. Used to lift `f32` networks into `f64` for gradient checks.
    pub fn map_precision<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| NamedTensor {
                    name: t.name.clone(),
                    value: t.value.mapv(|v| U::from_f64(v.to_f64())),
                })
                .collect(),
        }
    }

    /// Overwrites all values from another set with identical names and shapes.
    pub fn copy_values_from(&mut self, other: &ParamSet<T>) {
        assert_eq!(self.len(), other.len(), "parameter set size mismatch");
        for (dst, src) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            assert_eq!(dst.name, src.name, "parameter name mismatch");
            assert_eq!(
                dst.value.shape(),
                src.value.shape(),
                "parameter shape mismatch for {}",
                dst.name
            );
            dst.value.assign(&src.value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};

    #[test]
    fn add_and_lookup_round_trip() {
        let mut p = ParamSet::<f32>::new();
        let a = p.add("w", ArrayD::zeros(IxDyn(&[2, 3])));
        let b = p.add("b", ArrayD::from_elem(IxDyn(&[3]), 1.0f32));
        assert_eq!(p.len(), 2);
        assert_eq!(p.num_scalars(), 9);
        assert_eq!(p.get(a).shape(), &[2, 3]);
        assert_eq!(p.get(b)[[0]], 1.0);
        p.get_mut(a)[[1, 2]] = 5.0;
        assert_eq!(p.get(a)[[1, 2]], 5.0);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_are_rejected() {
        let mut p = ParamSet::<f32>::new();
        p.add("w", ArrayD::zeros(IxDyn(&[1])));
        p.add("w", ArrayD::zeros(IxDyn(&[1])));
    }

    #[test]
    fn precision_mapping_preserves_values() {
        let mut p = ParamSet::<f32>::new();
        p.add("w", ArrayD::from_elem(IxDyn(&[2]), 0.25f32));
        let q: ParamSet<f64> = p.map_precision();
        assert_eq!(q.get(PIdx(0))[[0]], 0.25f64);
        assert_eq!(q.tensors()[0].name, "w");
    }

    #[test]
    fn all_finite_flags_nan() {
        let mut p = ParamSet::<f32>::new();
        let w = p.add("w", ArrayD::zeros(IxDyn(&[2])));
        assert!(p.all_finite());
        p.get_mut(w)[[0]] = f32::NAN;
        assert!(!p.all_finite());
    }
}
