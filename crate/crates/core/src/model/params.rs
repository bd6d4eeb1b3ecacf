use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: DenseTensor,
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub entries: Vec<ParamEntry>,
}

impl Params {
    pub fn push(&mut self, name: impl Into<String>, tensor: DenseTensor) {
        let name = name.into();
        debug_assert!(self.position(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, tensor });
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&DenseTensor> {
        self.position(name)
            .map(|i| &self.entries[i].tensor)
            .ok_or_else(|| Error::State(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut DenseTensor> {
        match self.position(name) {
            Some(i) => Ok(&mut self.entries[i].tensor),
            None => Err(Error::State(format!("missing parameter {name}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnState {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnState {
    pub fn new(width: usize) -> Self {
        Self {
            mean: vec![0.0; width],
            var: vec![1.0; width],
        }
    }

    pub fn update(&mut self, mean: &[f64], var: &[f64], momentum: f64) {
        for (r, b) in self.mean.iter_mut().zip(mean) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
        for (r, b) in self.var.iter_mut().zip(var) {
            *r = (1.0 - momentum) * *r + momentum * b;
        }
    }
}
