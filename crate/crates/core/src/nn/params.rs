use std::collections::HashMap;

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
}

impl Parameter {
    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

/// Named parameters of one or more models. Names are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Parameter>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        let id = ParamId(self.params.len());
        let grad = vec![0.0; value.len()];
        self.index.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad });
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) {
        for (a, b) in self.params[id.0].grad.iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Rounds every value to the nearest `f32` so checkpoints store it exactly.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            for v in p.value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Concatenated values of `ids`.
    pub fn flatten(&self, ids: &[ParamId]) -> Vec<f64> {
        ids.iter().flat_map(|id| self.value(*id).data().iter().copied()).collect()
    }

    /// Concatenated gradients of `ids`.
    pub fn flatten_grads(&self, ids: &[ParamId]) -> Vec<f64> {
        ids.iter().flat_map(|id| self.grad(*id).iter().copied()).collect()
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign(&mut self, ids: &[ParamId], flat: &[f64]) {
        let mut offset = 0;
        for id in ids {
            let data = self.params[id.0].value.data_mut();
            data.copy_from_slice(&flat[offset..offset + data.len()]);
            offset += data.len();
        }
        assert_eq!(offset, flat.len(), "flat vector length does not match parameters");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(matches!(s.add("w", Tensor::zeros(&[1])), Err(Error::DuplicateParameter(_))));
    }

    #[test]
    fn flatten_assign_inverse() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        let b = s.add("b", Tensor::new(vec![1, 3], vec![3.0, 4.0, 5.0]).unwrap()).unwrap();
        let flat = s.flatten(&[b, a]);
        assert_eq!(flat, vec![3.0, 4.0, 5.0, 1.0, 2.0]);
        s.assign(&[a, b], &[9.0, 8.0, 7.0, 6.0, 5.0]);
        assert_eq!(s.value(b).data(), &[7.0, 6.0, 5.0]);
        assert_eq!(s.get(a).grad.len(), s.get(a).shape().iter().product::<usize>());
    }
}
