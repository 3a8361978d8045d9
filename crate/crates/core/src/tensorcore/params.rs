use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::io::{read_tensor, write_tensor};
use super::{Gradients, Tape, Tensor, Var};

/// Index of a parameter inside a [`Params`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(usize);

/// Named trainable tensors kept in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params<T: Scalar = f64> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

/// Parameters placed on a tape for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Rebinds one parameter to an existing tape variable.
    pub fn with(mut self, id: ParamId, v: Var) -> Self {
        self.vars[id.0] = v;
        self
    }
}

impl<T: Scalar> Params<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Drops every parameter declared at or after `id`.
    pub fn truncate(&mut self, id: ParamId) {
        self.names.truncate(id.0);
        self.tensors.truncate(id.0);
    }

    /// Places every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound {
            vars: self.tensors.iter().map(|t| tape.leaf(t.clone())).collect(),
        }
    }

    /// Places every parameter on `tape` as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|t| tape.constant(t.clone()))
                .collect(),
        }
    }

    /// Plain gradient descent over the parameters selected by `only`
    /// (all of them when `None`).
    pub fn sgd_step(
        &mut self,
        grads: &Gradients<T>,
        bound: &Bound,
        lr: T,
        only: Option<&[ParamId]>,
    ) {
        for (i, t) in self.tensors.iter_mut().enumerate() {
            if let Some(sel) = only {
                if !sel.contains(&ParamId(i)) {
                    continue;
                }
            }
            if let Some(g) = grads.get_ref(bound.vars[i]) {
                t.sgd_update(g, lr);
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_all_finite)
    }

    /// Writes `u32` count, then every tensor in declaration order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for t in &self.tensors {
            write_tensor(w, t)?;
        }
        Ok(())
    }

    /// Reads tensors into an existing layout, checking shapes.
    pub fn read_into<R: Read>(&mut self, r: &mut R) -> Result<()> {
        let mut buf = [0u8; 4];
        r.read_exact(&mut buf)?;
        let n = u32::from_le_bytes(buf) as usize;
        if n != self.tensors.len() {
            return Err(Error::Format(format!(
                "checkpoint has {n} tensors, model expects {}",
                self.tensors.len()
            )));
        }
        for (i, slot) in self.tensors.iter_mut().enumerate() {
            let t: Tensor<T> = read_tensor(r)?;
            if t.shape() != slot.shape() {
                return Err(Error::Format(format!(
                    "tensor {} (`{}`) has shape {:?}, expected {:?}",
                    i,
                    self.names[i],
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("write to Vec");
        out
    }
}
