use std::collections::HashMap;

use rand::Rng;

use super::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A named trainable tensor with its gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> ParamTensor<T> {
    /// Graph view: the last dimension is the column count, all leading
    /// dimensions fold into rows.
    pub fn matrix_shape(&self) -> (usize, usize) {
        match self.shape.split_last() {
            None => (1, 1),
            Some((&cols, lead)) => (lead.iter().product(), cols),
        }
    }
}

/// Ordered collection of parameters, addressable by id or unique name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    tensors: Vec<ParamTensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Panics on a duplicate name or a data length that disagrees with
    /// the shape: both are construction bugs.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<T>) -> ParamId {
        let name = name.into();
        assert_eq!(shape.iter().product::<usize>(), data.len(), "parameter {name}: data length");
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        let grad = vec![T::zero(); data.len()];
        self.tensors.push(ParamTensor {
            name,
            shape: shape.to_vec(),
            data,
            grad,
        });
        ParamId(id)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![T::zero(); n])
    }

    pub fn add_uniform<R: Rng>(&mut self, name: impl Into<String>, shape: &[usize], limit: f64, rng: &mut R) -> ParamId {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::from_f(rng.random_range(-limit..=limit))).collect();
        self.add(name, shape, data)
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn add_glorot<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.add_uniform(name, shape, limit, rng)
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor<T> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[ParamTensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<T>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = T::zero());
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.grad.iter())
            .map(|g| g.to_f().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Copy with values converted to another precision; grads reset.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for t in &self.tensors {
            out.add(t.name.clone(), &t.shape, t.data.iter().map(|v| U::from_f(v.to_f())).collect());
        }
        out
    }
}
