//! Named parameter storage.
//!
//! Model weights live outside any computation graph as flat arrays; every
//! forward pass binds them onto a fresh [`Graph`] as gradient-tracked leaves.
//! Registration order is fixed, which pins both the initialization RNG stream
//! and the optimizer state layout.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone)]
pub struct ParamEntry<T: Scalar> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<T: Scalar> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, shape: Vec<usize>, data: Vec<T>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter {name}")));
        }
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Shape(format!(
                "parameter {name}: {} values for shape {:?}",
                data.len(),
                shape
            )));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            shape,
            data,
        });
        Ok(())
    }

    /// Glorot/Xavier uniform init in +-sqrt(6 / (fan_in + fan_out)).
    pub fn register_xavier(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        rng: &mut RngState,
    ) -> Result<()> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::from_f64(rng.uniform(-bound, bound)))
            .collect();
        self.register(name, vec![rows, cols], data)
    }

    pub fn register_zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<()> {
        let numel: usize = shape.iter().product();
        self.register(name, shape, vec![T::zero(); numel])
    }

    pub fn register_ones(&mut self, name: &str, shape: Vec<usize>) -> Result<()> {
        let numel: usize = shape.iter().product();
        self.register(name, shape, vec![T::one(); numel])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Result<&ParamEntry<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i])
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamEntry<T>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i]),
            None => Err(Error::Contract(format!("unknown parameter {name}"))),
        }
    }

    /// Total number of scalar weights.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Insert every entry as a gradient-tracked leaf on `graph`.
    pub fn bind(&self, graph: &Graph<T>) -> Result<BoundParams<T>> {
        let mut leaves = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            leaves.push(graph.leaf(e.data.clone(), e.shape.clone(), true)?);
        }
        Ok(BoundParams {
            leaves,
            index: self.index.clone(),
        })
    }
}

/// Leaf tensors for one forward/backward pass, in store order.
#[derive(Debug)]
pub struct BoundParams<T: Scalar> {
    leaves: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> BoundParams<T> {
    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.leaves[i])
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name}")))
    }

    pub fn leaves(&self) -> &[Tensor<T>] {
        &self.leaves
    }

    /// Gradient per parameter in store order; zeros where a parameter did not
    /// participate in the loss (e.g. embedding rows of unused tokens are
    /// still covered, but a whole unused tensor gets an explicit zero buffer).
    pub fn grads(&self) -> Vec<Vec<T>> {
        self.leaves
            .iter()
            .map(|t| t.grad().unwrap_or_else(|| vec![T::zero(); t.numel()]))
            .collect()
    }
}
