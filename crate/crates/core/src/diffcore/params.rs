use std::collections::HashMap;

use super::real::Real;
use super::tape::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub grad: Vec<T>,
    /// Running statistics and other buffers are stored here too, with `learnable = false`.
    pub learnable: bool,
}

/// Named parameters of one model, in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        data: Vec<T>,
        learnable: bool,
    ) -> Result<ParamId, TensorError> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::Contract(format!("duplicate parameter name {name}")));
        }
        let numel: usize = shape.iter().product();
        if shape.is_empty() || numel != data.len() || numel == 0 {
            return Err(TensorError::Dimension {
                op: "param",
                detail: format!("{name}: shape {shape:?} vs {} values", data.len()),
            });
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.clone(),
            shape: shape.to_vec(),
            grad: vec![T::zero(); numel],
            data,
            learnable,
        });
        self.by_name.insert(name, id);
        Ok(id)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    /// Disjoint mutable access to two buffers (used for batch-norm running statistics).
    pub fn pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [T], &mut [T]) {
        assert_ne!(a, b);
        if a.0 < b.0 {
            let (lo, hi) = self.params.split_at_mut(b.0);
            (&mut lo[a.0].data, &mut hi[0].data)
        } else {
            let (lo, hi) = self.params.split_at_mut(a.0);
            (&mut hi[0].data, &mut lo[b.0].data)
        }
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn learnable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.learnable)
            .map(|p| p.data.len())
            .sum()
    }

    /// Element-type conversion (for example an f32 training model checked at f64).
    pub fn convert<U: Real>(&self) -> ParamStore<U> {
        let params = self
            .params
            .iter()
            .map(|p| Parameter {
                name: p.name.clone(),
                shape: p.shape.clone(),
                data: p.data.iter().map(|v| U::of(v.f64())).collect(),
                grad: p.grad.iter().map(|v| U::of(v.f64())).collect(),
                learnable: p.learnable,
            })
            .collect();
        ParamStore {
            params,
            by_name: self.by_name.clone(),
        }
    }
}
