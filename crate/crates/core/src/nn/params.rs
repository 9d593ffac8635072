use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Ix1, Ix2};
use rand::Rng;

use crate::error::{Error, Result};

/// Handle to one named array inside a [`ParameterStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One named, fixed-shape, row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Named parameter arrays plus the seed they were initialised from.
///
/// Shapes are fixed at insertion. Values change only through `values_mut`,
/// which optimizers and gradient checks use.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterStore {
    seed: u64,
    params: Vec<Param>,
}

impl ParameterStore {
    pub fn new(seed: u64) -> Self {
        ParameterStore { seed, params: Vec::new() }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        if self.find(&name).is_some() {
            return Err(Error::validation(format!("parameter {name} already exists")));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::shape(format!("parameter {name}: {} values for shape {shape:?}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {name} has non-finite values")));
        }
        self.params.push(Param { name, shape, values });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Inserts a weight matrix drawn uniformly from `[-1/sqrt(rows), 1/sqrt(rows)]`.
    pub fn insert_uniform(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut impl Rng) -> Result<ParamId> {
        let bound = 1.0 / (rows.max(1) as f64).sqrt();
        let values = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, vec![rows, cols], values)
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, len: usize) -> Result<ParamId> {
        self.insert(name, vec![len], vec![0.0; len])
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    pub fn values_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].values
    }

    pub fn mat(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let p = &self.params[id.0];
        ArrayView2::from_shape((p.shape[0], p.shape[1]), &p.values).expect("parameter is 2-D")
    }

    pub fn vec(&self, id: ParamId) -> ArrayView1<'_, f64> {
        let p = &self.params[id.0];
        ArrayView1::from(&p.values[..])
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.values.iter().all(|v| v.is_finite()))
    }
}

/// Gradient buffers laid out exactly like a [`ParameterStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    shapes: Vec<Vec<usize>>,
    values: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParameterStore) -> Self {
        Gradients {
            shapes: store.params.iter().map(|p| p.shape.clone()).collect(),
            values: store.params.iter().map(|p| vec![0.0; p.values.len()]).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn mat_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, f64> {
        let shape = &self.shapes[id.0];
        ArrayViewMut2::from_shape((shape[0], shape[1]), &mut self.values[id.0])
            .expect("gradient is 2-D")
            .into_dimensionality::<Ix2>()
            .expect("2-D")
    }

    pub fn vec_mut(&mut self, id: ParamId) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.values[id.0][..]).into_dimensionality::<Ix1>().expect("1-D")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.iter().map(Vec::as_slice)
    }

    pub fn fill_zero(&mut self) {
        for v in &mut self.values {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Adds `other` elementwise; both must come from the same store layout.
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }

    pub fn global_norm(&self) -> f64 {
        self.values.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}
