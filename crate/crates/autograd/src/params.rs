use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

pub type ParamId = usize;

/// Named trainable tensors, addressed by insertion index.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name)
    }

    /// Ids of every parameter whose name starts with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> Vec<ParamId> {
        self.names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.starts_with(prefix))
            .map(|(i, _)| i)
            .collect()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Overwrites values from `other`, matching by name and shape.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<(), String> {
        if other.len() != self.len() {
            return Err(format!(
                "parameter count mismatch: expected {}, found {}",
                self.len(),
                other.len()
            ));
        }
        for (name, value) in other.iter() {
            let id = self
                .find(name)
                .ok_or_else(|| format!("unknown parameter {name}"))?;
            if self.values[id].shape() != value.shape() {
                return Err(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    self.values[id].shape(),
                    value.shape()
                ));
            }
            self.values[id] = value.clone();
        }
        Ok(())
    }
}

/// Binds a [`ParamStore`] to a [`Graph`] for one forward pass.
///
/// Each parameter becomes a single graph node on first use. When `trainable` is false
/// parameters enter as constants and no backward closures are kept.
pub struct Session<'g> {
    pub graph: &'g Graph,
    store: &'g ParamStore,
    bound: RefCell<Vec<Option<Var<'g>>>>,
    trainable: bool,
}

impl<'g> Session<'g> {
    pub fn new(graph: &'g Graph, store: &'g ParamStore, trainable: bool) -> Self {
        Self {
            graph,
            store,
            bound: RefCell::new(vec![None; store.len()]),
            trainable,
        }
    }

    pub fn store(&self) -> &'g ParamStore {
        self.store
    }

    pub fn trainable(&self) -> bool {
        self.trainable
    }

    pub fn param(&self, id: ParamId) -> Var<'g> {
        if let Some(v) = self.bound.borrow()[id] {
            return v;
        }
        let value = self.store.get(id).clone();
        let v = if self.trainable {
            self.graph.leaf(value)
        } else {
            self.graph.constant(value)
        };
        self.bound.borrow_mut()[id] = Some(v);
        v
    }

    pub fn constant(&self, t: Tensor) -> Var<'g> {
        self.graph.constant(t)
    }

    /// Gradient of every parameter touched in this session (None if unused).
    pub fn param_grads(&self, grads: &Gradients) -> Vec<Option<Tensor>> {
        self.bound
            .borrow()
            .iter()
            .map(|b| b.and_then(|v| grads.get(v).cloned()))
            .collect()
    }
}
