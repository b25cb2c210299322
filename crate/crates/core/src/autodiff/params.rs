use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named dense tensor in row-major order with its gradient buffer and
/// first/second moment estimates. Equality ignores the gradient buffer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl PartialEq for Tensor {
    fn eq(&self, o: &Self) -> bool {
        self.name == o.name && self.shape == o.shape && self.data == o.data && self.m == o.m && self.v == o.v
    }
}

impl Tensor {
    fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor {
            name: name.to_string(),
            shape,
            data,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            self.data.len()
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }
}

/// All trainable tensors, addressable by name or by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    by_name: BTreeMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<ParamId> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch { expected, got: data.len() });
        }
        if self.by_name.contains_key(name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter `{name}`")));
        }
        let id = self.tensors.len();
        self.tensors.push(Tensor::new(name, shape, data));
        self.by_name.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn zeros(&mut self, name: &str, shape: Vec<usize>) -> Result<ParamId> {
        let n = shape.iter().product();
        self.insert(name, shape, vec![0.0; n])
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        scale: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-scale..=scale)).collect();
        self.insert(name, shape, data)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar parameter count.
    pub fn size(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Copies accumulated gradients into the tensors' gradient buffers.
    pub fn load_grads(&mut self, grads: &Gradients) {
        for (t, g) in self.tensors.iter_mut().zip(&grads.per_param) {
            if g.is_empty() {
                t.grad.iter_mut().for_each(|x| *x = 0.0);
            } else {
                t.grad.copy_from_slice(g);
            }
        }
    }

    pub(crate) fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let mut store = ParamStore::new();
        for mut t in tensors {
            let n: usize = t.shape.iter().product();
            if n != t.data.len() || t.m.len() != n || t.v.len() != n {
                return Err(Error::Checkpoint(format!("tensor `{}` has inconsistent sizes", t.name)));
            }
            t.grad = vec![0.0; n];
            let id = store.tensors.len();
            store.by_name.insert(t.name.clone(), id);
            store.tensors.push(t);
        }
        Ok(store)
    }
}

/// Gradients for every parameter; an empty vector means "all zero".
#[derive(Debug, Clone)]
pub struct Gradients {
    pub(crate) per_param: Vec<Vec<f64>>,
}

impl Gradients {
    pub(crate) fn new(n: usize) -> Self {
        Gradients { per_param: vec![Vec::new(); n] }
    }

    pub(crate) fn slot(&mut self, id: ParamId, len: usize) -> &mut [f64] {
        let g = &mut self.per_param[id.0];
        if g.is_empty() {
            *g = vec![0.0; len];
        }
        g
    }

    /// Gradient of one parameter, `None` if the loss does not depend on it.
    pub fn get(&self, id: ParamId) -> Option<&[f64]> {
        let g = &self.per_param[id.0];
        (!g.is_empty()).then_some(g.as_slice())
    }

    pub fn is_zero(&self) -> bool {
        self.per_param.iter().all(|g| g.iter().all(|x| *x == 0.0))
    }
}
