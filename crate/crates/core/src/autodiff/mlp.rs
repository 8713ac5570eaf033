use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Relu6,
    Tanh,
    Sigmoid,
    Softmax,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, g: &mut Graph<T>, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Relu6 => g.relu6(x),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
            Activation::Softmax => g.softmax(x),
            Activation::Identity => x,
        }
    }

    fn apply_array<T: Scalar>(self, x: &mut Array2<T>) {
        match self {
            Activation::Relu => x.mapv_inplace(|v| v.max(T::zero())),
            Activation::Relu6 => x.mapv_inplace(|v| v.max(T::zero()).min(T::of(6.0))),
            Activation::Tanh => x.mapv_inplace(T::tanh),
            Activation::Sigmoid => x.mapv_inplace(|v| T::one() / (T::one() + (-v).exp())),
            Activation::Softmax => {
                for mut row in x.axis_iter_mut(Axis(0)) {
                    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                    row.mapv_inplace(|v| (v - max).exp());
                    let total = row.sum();
                    row.mapv_inplace(|v| v / total);
                }
            }
            Activation::Identity => {}
        }
    }
}

/// Layer widths (input first) and one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = Self { widths, activations };
        spec.validate()?;
        Ok(spec)
    }

    /// `input -> hidden... -> output`, `hidden_act` on hidden layers.
    pub fn hidden(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        out_act: Activation,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(out_act);
        Self::new(widths, acts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::InvalidParameter("an MLP needs at least one layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        if self.activations.len() != self.widths.len() - 1 {
            return Err(Error::InvalidParameter(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.widths.len() - 1
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

/// Dense multi-layer perceptron. Weights are `[in, out]`, biases `[1, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Scalar = f64> {
    spec: MlpSpec,
    weights: Vec<Array2<T>>,
    biases: Vec<Array2<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in spec.widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| T::of(dist.sample(rng))));
            biases.push(Array2::zeros((1, fan_out)));
        }
        Ok(Self { spec, weights, biases })
    }

    pub fn from_parts(spec: MlpSpec, weights: Vec<Array2<T>>, biases: Vec<Array2<T>>) -> Result<Self> {
        spec.validate()?;
        let layers = spec.widths.len() - 1;
        if weights.len() != layers || biases.len() != layers {
            return Err(Error::DimensionMismatch("layer count does not match spec".into()));
        }
        for (l, pair) in spec.widths.windows(2).enumerate() {
            if weights[l].dim() != (pair[0], pair[1]) || biases[l].dim() != (1, pair[1]) {
                return Err(Error::DimensionMismatch(format!("layer {l} shape does not match spec")));
            }
        }
        Ok(Self { spec, weights, biases })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array2<T>] {
        &self.biases
    }

    /// Parameters in `w0, b0, w1, b1, ...` order.
    pub fn params(&self) -> Vec<&Array2<T>> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<T>> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Registers every parameter as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.params().into_iter().map(|p| g.param(p.clone())).collect()
    }

    /// Graph forward pass through parameters previously returned by [`Mlp::bind`].
    pub fn forward(&self, g: &mut Graph<T>, bound: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (l, act) in self.spec.activations.iter().enumerate() {
            let z = g.matmul(h, bound[2 * l])?;
            let z = g.add(z, bound[2 * l + 1])?;
            h = act.apply(g, z);
        }
        Ok(h)
    }

    /// Plain evaluation without recording a graph.
    pub fn predict(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has {} columns, MLP expects {}",
                x.ncols(),
                self.spec.input_dim()
            )));
        }
        let mut h = x.to_owned();
        for ((w, b), act) in self.weights.iter().zip(&self.biases).zip(&self.spec.activations) {
            h = h.dot(w) + b;
            act.apply_array(&mut h);
        }
        Ok(h)
    }
}
