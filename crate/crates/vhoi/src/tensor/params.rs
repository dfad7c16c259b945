//! Named parameter storage shared by all models.

use ndarray::{ArcArray, ArrayD, IxDyn};
use std::collections::HashMap;

use super::Real;

/// Index of a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Flat name -> array parameter store. Arrays are Arc-backed so tapes can
/// reference them without copying; the optimizer is the single writer.
pub struct ParamStore<S: Real> {
    names: Vec<String>,
    values: Vec<ArcArray<S, IxDyn>>,
    by_name: HashMap<String, ParamId>,
}

impl<S: Real> Default for ParamStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> ParamStore<S> {
    pub fn new() -> Self {
        Self { names: Vec::new(), values: Vec::new(), by_name: HashMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<S>) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.values.len());
        self.names.push(name.to_string());
        self.values.push(value.into_shared());
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &ArcArray<S, IxDyn> {
        &self.values[id.0]
    }

    pub fn set(&mut self, id: ParamId, value: ArrayD<S>) {
        assert_eq!(self.values[id.0].shape(), value.shape(), "{}", self.names[id.0]);
        self.values[id.0] = value.into_shared();
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    /// Ids whose name starts with `prefix` (e.g. one sub-model).
    pub fn ids_with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(prefix))
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn insert_lookup_prefix() {
        let mut ps: ParamStore<f32> = ParamStore::new();
        let a = ps.insert("base.w", ArrayD::zeros(ndarray::IxDyn(&[2, 3])));
        let b = ps.insert("aug.w", ArrayD::zeros(ndarray::IxDyn(&[4])));
        assert_eq!(ps.id("base.w"), Some(a));
        assert_eq!(ps.ids_with_prefix("aug."), vec![b]);
        assert_eq!(ps.num_scalars(), 10);
        assert_eq!(ps.name(b), "aug.w");
    }
}
