use std::collections::HashMap;

use super::{Real, Tensor};
use crate::error::{Error, Result};

/// Named tensor table. Entries flagged non-trainable (batch-norm running
/// statistics) are stored and checkpointed but never touched by the optimiser.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    trainable: Vec<bool>,
    lookup: HashMap<String, usize>,
}

impl<T: Real> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            trainable: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    /// Adds an entry and returns its slot.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>, trainable: bool) -> usize {
        let name = name.into();
        assert!(!self.lookup.contains_key(&name), "duplicate parameter {name}");
        let id = self.names.len();
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        self.trainable.push(trainable);
        id
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.lookup.get(name).copied()
    }

    pub fn get(&self, id: usize) -> &Tensor<T> {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor<T> {
        &mut self.tensors[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|i| &self.tensors[i])
    }

    pub fn is_trainable(&self, id: usize) -> bool {
        self.trainable[id]
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    /// Total number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.tensors
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|(t, _)| t.len())
            .sum()
    }

    /// Zero tensors shaped like every entry.
    pub fn zeros_like(&self) -> Vec<Tensor<T>> {
        self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect()
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| t.cast()).collect(),
            trainable: self.trainable.clone(),
            lookup: self.lookup.clone(),
        }
    }

    /// Overwrite an existing entry's values, checking the shape.
    pub fn assign(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::ConfigMismatch(format!("unknown parameter {name}")))?;
        if self.tensors[id].shape() != tensor.shape() {
            return Err(Error::ConfigMismatch(format!(
                "parameter {name}: expected shape {:?}, found {:?}",
                self.tensors[id].shape(),
                tensor.shape()
            )));
        }
        self.tensors[id] = tensor;
        Ok(())
    }
}
