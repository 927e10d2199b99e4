use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Which side of the personalization split a parameter lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    /// Shared representation: embeddings, numeric projection, GRU.
    Body,
    /// Final fully connected layers.
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Ordered, uniquely named collection of parameters with a BODY/HEAD tag per entry.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<ParamTensor>,
    tags: Vec<Partition>,
    index: HashMap<String, usize>,
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.tags == other.tags
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor, tag: Partition) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Argument(format!("duplicate parameter name `{name}`")));
        }
        let idx = self.params.len();
        self.index.insert(name.clone(), idx);
        self.params.push(ParamTensor::new(name, value));
        self.tags.push(tag);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[ParamTensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.params
    }

    pub fn tag(&self, i: usize) -> Partition {
        self.tags[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamTensor, Partition)> {
        self.params.iter().zip(self.tags.iter().copied())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|p| p.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&ParamTensor> {
        self.index_of(name).map(|i| &self.params[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor> {
        self.index_of(name).map(move |i| &mut self.params[i])
    }

    pub fn tag_of(&self, name: &str) -> Option<Partition> {
        self.index_of(name).map(|i| self.tags[i])
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(ParamTensor::zero_grad);
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copy of the parameters carrying `tag`, in original order. Gradients are reset.
    pub fn subset(&self, tag: Partition) -> ParamSet {
        let mut out = ParamSet::new();
        for (p, t) in self.iter() {
            if t == tag {
                out.push(p.name.clone(), p.value.clone(), t)
                    .expect("names already unique");
            }
        }
        out
    }

    /// Overwrite values of every parameter in `src` by name. Shapes must agree.
    pub fn assign_from(&mut self, src: &ParamSet) -> Result<()> {
        for p in src.params() {
            let dst = self.get_mut(&p.name).ok_or_else(|| Error::Protocol {
                path: p.name.clone(),
                reason: "unknown parameter".into(),
            })?;
            if dst.value.shape() != p.value.shape() {
                return Err(Error::Protocol {
                    path: p.name.clone(),
                    reason: format!(
                        "shape {:?} does not match {:?}",
                        p.value.shape(),
                        dst.value.shape()
                    ),
                });
            }
            dst.value.data_mut().copy_from_slice(p.value.data());
        }
        Ok(())
    }

    /// Largest absolute elementwise difference over parameters present in both sets.
    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.params
            .iter()
            .filter_map(|p| other.get(&p.name).map(|q| p.value.max_abs_diff(&q.value)))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.is_finite())
    }

    /// Checks that `other` has the same names, order, tags and shapes.
    pub fn check_same_structure(&self, other: &ParamSet) -> Result<()> {
        if self.len() != other.len() {
            let path = self
                .names()
                .find(|n| other.index_of(n).is_none())
                .or_else(|| other.names().find(|n| self.index_of(n).is_none()))
                .unwrap_or("<root>")
                .to_string();
            return Err(Error::Protocol {
                path,
                reason: format!("parameter count {} vs {}", self.len(), other.len()),
            });
        }
        for ((a, ta), (b, tb)) in self.iter().zip(other.iter()) {
            if a.name != b.name || ta != tb || a.value.shape() != b.value.shape() {
                return Err(Error::Protocol {
                    path: a.name.clone(),
                    reason: format!(
                        "expected `{}` {:?} {:?}, found `{}` {:?} {:?}",
                        a.name,
                        ta,
                        a.value.shape(),
                        b.name,
                        tb,
                        b.value.shape()
                    ),
                });
            }
        }
        Ok(())
    }
}
