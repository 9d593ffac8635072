use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamId, ParameterStore};
use super::sigmoid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
    /// Sigmoid stretched to `(−0.1, 1.1)`, so both ends of the unit interval
    /// lie inside the non-saturated range.
    HeadroomSigmoid,
}

/// Margin beyond the unit interval on each side of [`Activation::HeadroomSigmoid`].
pub const SIGMOID_HEADROOM: f64 = 0.1;

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::HeadroomSigmoid => (1.0 + 2.0 * SIGMOID_HEADROOM) * sigmoid(x) - SIGMOID_HEADROOM,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::HeadroomSigmoid => {
                let span = 1.0 + 2.0 * SIGMOID_HEADROOM;
                let s = (y + SIGMOID_HEADROOM) / span;
                span * s * (1.0 - s)
            }
        }
    }
}

/// Fully connected layer `y = act(x·W + b)` over rows of `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub input_dim: usize,
    pub output_dim: usize,
    pub w: ParamId,
    pub b: ParamId,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    x: Array2<f64>,
    y: Array2<f64>,
}

impl Dense {
    pub fn new(store: &mut ParameterStore, prefix: &str, input_dim: usize, output_dim: usize, activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        let w = store.insert_uniform(format!("{prefix}.w"), input_dim, output_dim, rng)?;
        let b = store.insert_zeros(format!("{prefix}.b"), output_dim)?;
        Ok(Dense { input_dim, output_dim, w, b, activation })
    }

    pub fn forward(&self, store: &ParameterStore, x: ArrayView2<f64>) -> Result<(Array2<f64>, DenseCache)> {
        if x.ncols() != self.input_dim {
            return Err(Error::shape(format!("dense expects width {}, got {}", self.input_dim, x.ncols())));
        }
        let mut y = x.dot(&store.mat(self.w));
        y += &store.vec(self.b);
        let act = self.activation;
        if act != Activation::Identity {
            y.mapv_inplace(|v| act.apply(v));
        }
        Ok((y.clone(), DenseCache { x: x.to_owned(), y }))
    }

    pub fn backward(&self, store: &ParameterStore, cache: &DenseCache, dy: ArrayView2<f64>, grads: &mut Gradients, need_dx: bool) -> Option<Array2<f64>> {
        let mut da = dy.to_owned();
        if self.activation != Activation::Identity {
            let act = self.activation;
            Zip::from(&mut da).and(&cache.y).for_each(|d, &y| *d *= act.derivative_from_output(y));
        }
        general_mat_mul(1.0, &cache.x.t(), &da, 1.0, &mut grads.mat_mut(self.w));
        grads.vec_mut(self.b).scaled_add(1.0, &da.sum_axis(Axis(0)));
        need_dx.then(|| da.dot(&store.mat(self.w).t()))
    }
}
