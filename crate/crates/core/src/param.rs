//! Named parameter storage shared by every learnable component.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::Gradients;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub trainable: bool,
    /// Rows outside the mask neither receive gradient nor move.
    pub row_mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            grad: None,
            trainable: true,
            row_mask: None,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> Option<&Tensor> {
        self.params[id.0].grad.as_ref()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    /// Marks every parameter frozen.
    pub fn freeze_all(&mut self) {
        for p in &mut self.params {
            p.trainable = false;
            p.row_mask = None;
        }
    }

    pub fn set_row_mask(&mut self, id: ParamId, mask: Option<Vec<bool>>) -> Result<()> {
        if let Some(m) = &mask {
            let (rows, _) = self.params[id.0].value.dims2("row_mask")?;
            if m.len() != rows {
                return Err(Error::contract("row mask length differs from row count"));
            }
        }
        self.params[id.0].row_mask = mask;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Adds the parameter gradients of a backward pass into the store.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (id, g) in grads.params() {
            let p = &mut self.params[id.0];
            if !p.trainable {
                continue;
            }
            if g.shape() != p.value.shape() {
                return Err(Error::Shape {
                    op: "accumulate",
                    lhs: p.value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let buf = p
                .grad
                .get_or_insert_with(|| Tensor::zeros(p.value.shape()));
            for (b, v) in buf.data_mut().iter_mut().zip(g.data()) {
                *b += v;
            }
            if let Some(mask) = &p.row_mask {
                let cols = p.value.shape()[1];
                for (r, keep) in mask.iter().enumerate() {
                    if !keep {
                        buf.data_mut()[r * cols..(r + 1) * cols].fill(0.0);
                    }
                }
            }
        }
        Ok(())
    }

    /// Copies values of same-named parameters from `other`.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        for p in &mut self.params {
            if let Some(id) = other.find(&p.name) {
                let src = other.value(id);
                if src.shape() != p.value.shape() {
                    return Err(Error::Shape {
                        op: "copy_values_from",
                        lhs: p.value.shape().to_vec(),
                        rhs: src.shape().to_vec(),
                    });
                }
                p.value = src.clone();
            }
        }
        Ok(())
    }
}
