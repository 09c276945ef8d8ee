use super::tape::{Gradients, NodeId, Tape};
use super::tensor::Tensor;
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameter blocks living outside any tape, each paired with a
/// gradient accumulator of identical shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    blocks: BTreeMap<String, ParamBlock>,
}

/// Leaf nodes a [`ParamStore`] was bound to on one tape.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    ids: BTreeMap<String, NodeId>,
}

impl Bindings {
    /// Node for `name`. Panics if the block was never bound, which is a
    /// wiring bug rather than a data error.
    pub fn get(&self, name: &str) -> NodeId {
        match self.ids.get(name) {
            Some(&id) => id,
            None => panic!("parameter block `{name}` is not bound"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<NodeId> {
        self.ids.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let grad = Tensor::zeros(value.rows(), value.cols());
        self.blocks.insert(name.into(), ParamBlock { value, grad });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.blocks.contains_key(name)
    }

    pub fn value(&self, name: &str) -> &Tensor {
        &self.block(name).value
    }

    pub fn grad(&self, name: &str) -> &Tensor {
        &self.block(name).grad
    }

    fn block(&self, name: &str) -> &ParamBlock {
        self.blocks
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter block `{name}`"))
    }

    /// Replaces a block's value; the new value must keep the block's shape.
    pub fn set_value(&mut self, name: &str, value: Tensor) {
        let block = self
            .blocks
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter block `{name}`"));
        assert_eq!(block.value.shape(), value.shape(), "shape change for `{name}`");
        block.value = value;
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.blocks.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamBlock)> {
        self.blocks.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamBlock)> {
        self.blocks.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.blocks.values().map(|b| b.value.len()).sum()
    }

    /// Records every block as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let ids = self
            .blocks
            .iter()
            .map(|(name, block)| (name.clone(), tape.leaf(block.value.clone())))
            .collect();
        Bindings { ids }
    }

    /// Binds only the blocks whose names start with `prefix`.
    pub fn bind_prefix(&self, tape: &mut Tape, prefix: &str) -> Bindings {
        let ids = self
            .blocks
            .iter()
            .filter(|(name, _)| name.starts_with(prefix))
            .map(|(name, block)| (name.clone(), tape.leaf(block.value.clone())))
            .collect();
        Bindings { ids }
    }

    pub fn zero_grad(&mut self) {
        for block in self.blocks.values_mut() {
            block.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds `scale ·` the gradients of every bound block.
    pub fn accumulate(&mut self, bindings: &Bindings, grads: &Gradients, scale: f64) {
        for (name, id) in bindings.iter() {
            if let (Some(block), Some(g)) = (self.blocks.get_mut(name), grads.get(id)) {
                for (acc, v) in block.grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += scale * v;
                }
            }
        }
    }

    /// Flattened gradients in block-name order.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.blocks.values().flat_map(|b| b.grad.data().iter().copied()).collect()
    }

    /// Flattened values in block-name order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.blocks.values().flat_map(|b| b.value.data().iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_backward_accumulate() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![1.0, 2.0]));
        let mut tape = Tape::new();
        let b = store.bind(&mut tape);
        let w = b.get("w");
        let sq = tape.square(w).unwrap();
        let s = tape.sum(sq).unwrap();
        let g = tape.backward(s).unwrap();
        store.accumulate(&b, &g, 1.0);
        store.accumulate(&b, &g, 0.5);
        assert_eq!(store.grad("w").data(), &[3.0, 6.0]);
        assert_eq!(store.grad("w").shape(), store.value("w").shape());
        store.zero_grad();
        assert_eq!(store.flat_grads(), vec![0.0, 0.0]);
    }
}
