use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use super::tape::{Grads, Mat, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
}

/// Named parameters in insertion order. The order is part of the checkpoint
/// format and never changes after construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Tape handles for every parameter of a store, indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Places every parameter on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
        }
    }

    /// Collects per-parameter gradients; unreached parameters get zeros.
    pub fn gradients(&self, grads: &mut Grads, bound: &Bound) -> ParamGrads {
        ParamGrads(
            self.params
                .iter()
                .zip(&bound.vars)
                .map(|(p, &v)| grads.take(v).unwrap_or_else(|| Mat::zeros(p.value.dim())))
                .collect(),
        )
    }

    pub fn zeros_like(&self) -> ParamGrads {
        ParamGrads(self.params.iter().map(|p| Mat::zeros(p.value.dim())).collect())
    }

    pub(crate) fn replace(&mut self, params: Vec<Param>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model has {}",
                params.len(),
                self.params.len()
            )));
        }
        for (old, new) in self.params.iter().zip(&params) {
            if old.name != new.name || old.value.dim() != new.value.dim() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match checkpoint entry {} {:?}",
                    old.name,
                    old.value.dim(),
                    new.name,
                    new.value.dim()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    pub(crate) fn params(&self) -> &[Param] {
        &self.params
    }
}

/// Gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads(pub Vec<Mat>);

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> &Mat {
        &self.0[id.0]
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.0 {
            g.mapv_inplace(|e| e * k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.iter().all(|e| e.is_finite()))
    }
}

impl AddAssign<&ParamGrads> for ParamGrads {
    fn add_assign(&mut self, rhs: &ParamGrads) {
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}
