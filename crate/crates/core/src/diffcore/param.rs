//! Named parameter storage with gradients and trainability flags.

use std::collections::BTreeMap;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Stable handle into a [`ParamSet`]. Ids are assigned in insertion order
/// and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    /// Gradient accumulator, same element count as `value`. Only meaningful
    /// between a backward pass and the next `zero_grads`.
    pub grad: Vec<f64>,
    /// Frozen parameters enter tapes as constants: backward never reaches
    /// them and the optimizer skips them.
    pub trainable: bool,
}

/// Ordered collection of named parameters. Iteration order is insertion
/// order (= id order), so optimizer sweeps and serialization are
/// deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    /// Registers a parameter. Names are unique; reusing one is an error.
    pub fn insert(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "parameter `{name}` already exists"
            )));
        }
        let id = ParamId(self.params.len());
        let grad = vec![0.0; value.numel()];
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad,
            trainable,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name.get(name).copied().ok_or_else(|| Error::Unknown {
            kind: "parameter",
            name: name.to_string(),
        })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Ids in insertion order.
    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Clears every gradient buffer. Backward accumulates, so training
    /// steps must call this between batches.
    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Marks every parameter trainable or frozen.
    pub fn set_all_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.trainable = trainable;
        }
    }

    /// Total scalar entries across trainable parameters.
    pub fn trainable_entries(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.numel())
            .sum()
    }

    /// Names of trainable parameters, in id order.
    pub fn trainable_names(&self) -> Vec<String> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.name.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_and_lookup() {
        let mut ps = ParamSet::new();
        let id = ps.insert("w", Tensor::zeros(vec![2, 2]), true).unwrap();
        assert_eq!(ps.id("w").unwrap(), id);
        assert!(ps.id("v").is_err());
        assert!(ps.insert("w", Tensor::zeros(vec![1]), true).is_err());
    }

    #[test]
    fn trainable_entries_counts_scalars() {
        let mut ps = ParamSet::new();
        ps.insert("a", Tensor::zeros(vec![3, 4]), true).unwrap();
        let b = ps.insert("b", Tensor::zeros(vec![5]), true).unwrap();
        assert_eq!(ps.trainable_entries(), 17);
        ps.set_trainable(b, false);
        assert_eq!(ps.trainable_entries(), 12);
        assert_eq!(ps.trainable_names(), vec!["a".to_string()]);
    }

    #[test]
    fn zero_grads_resets() {
        let mut ps = ParamSet::new();
        let id = ps.insert("a", Tensor::zeros(vec![2]), true).unwrap();
        ps.get_mut(id).grad[0] = 3.0;
        ps.zero_grads();
        assert_eq!(ps.get(id).grad, vec![0.0, 0.0]);
    }
}
