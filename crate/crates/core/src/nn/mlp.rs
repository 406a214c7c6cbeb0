//! Fully connected networks over flat parameter slices.
//!
//! Layer `l` maps `sizes[l] -> sizes[l+1]` and stores its weight matrix
//! (`out x in`, row-major) followed by its bias vector. Hidden layers use
//! tanh; the last layer uses the shape's output activation.

use serde::{Deserialize, Serialize};

use super::NnError;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpShape {
    pub sizes: Vec<usize>,
    pub output: Activation,
}

/// Layer inputs/outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    /// `activations[0]` is the input, `activations[l + 1]` the output of layer `l`.
    pub activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds the input")
    }
}

impl MlpShape {
    pub fn new(sizes: Vec<usize>, output: Activation) -> Self {
        assert!(!sizes.is_empty(), "an MLP needs at least an input size");
        Self { sizes, output }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// `(weight offset, bias offset, in, out)` of each layer.
    pub fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let entry = (off, off + n_in * n_out, n_in, n_out);
                off += n_in * n_out + n_out;
                entry
            })
            .collect()
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output
        } else {
            Activation::Tanh
        }
    }

    /// Uniform `(-1/sqrt(in), 1/sqrt(in))` weights and biases; the last
    /// layer's weights are multiplied by `out_gain`.
    pub fn init(&self, params: &mut [f64], rng: &mut RngStream, out_gain: f64) {
        assert_eq!(params.len(), self.num_params());
        let last = self.num_layers().saturating_sub(1);
        for (l, (w_off, b_off, n_in, n_out)) in self.layer_offsets().into_iter().enumerate() {
            let bound = 1.0 / (n_in as f64).sqrt();
            let gain = if l == last { out_gain } else { 1.0 };
            for p in &mut params[w_off..b_off] {
                *p = rng.uniform(-bound, bound) * gain;
            }
            for p in &mut params[b_off..b_off + n_out] {
                *p = rng.uniform(-bound, bound) * gain;
            }
        }
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<MlpCache, NnError> {
        if params.len() != self.num_params() {
            return Err(NnError::Shape {
                what: "parameters",
                expected: self.num_params(),
                got: params.len(),
            });
        }
        if input.len() != self.input_dim() {
            return Err(NnError::Shape {
                what: "input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        for (l, (w_off, b_off, n_in, n_out)) in self.layer_offsets().into_iter().enumerate() {
            let x = &activations[l];
            let act = self.activation(l);
            let w = &params[w_off..b_off];
            let b = &params[b_off..b_off + n_out];
            let y: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = row.iter().zip(x).fold(b[o], |acc, (wi, xi)| acc + wi * xi);
                    act.apply(z)
                })
                .collect();
            activations.push(y);
        }
        Ok(MlpCache { activations })
    }

    /// Accumulates `d(output . grad_out)/d(params)` into `grads` and returns
    /// the gradient with respect to the input.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &MlpCache,
        grad_out: &[f64],
        grads: &mut [f64],
    ) -> Result<Vec<f64>, NnError> {
        if cache.activations.len() != self.sizes.len()
            || cache.activations.iter().zip(&self.sizes).any(|(a, &s)| a.len() != s)
        {
            return Err(NnError::CacheMismatch);
        }
        if grad_out.len() != self.output_dim() {
            return Err(NnError::Shape {
                what: "output gradient",
                expected: self.output_dim(),
                got: grad_out.len(),
            });
        }
        if grads.len() != self.num_params() || params.len() != self.num_params() {
            return Err(NnError::Shape {
                what: "gradient buffer",
                expected: self.num_params(),
                got: grads.len(),
            });
        }
        let mut upstream = grad_out.to_vec();
        let offsets = self.layer_offsets();
        for l in (0..self.num_layers()).rev() {
            let (w_off, b_off, n_in, n_out) = offsets[l];
            let act = self.activation(l);
            let x = &cache.activations[l];
            let y = &cache.activations[l + 1];
            let delta: Vec<f64> = (0..n_out)
                .map(|o| upstream[o] * act.derivative_from_output(y[o]))
                .collect();
            let mut down = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = w_off + o * n_in;
                for i in 0..n_in {
                    grads[row + i] += d * x[i];
                    down[i] += d * params[row + i];
                }
                grads[b_off + o] += d;
            }
            upstream = down;
        }
        Ok(upstream)
    }
}

/// A shape with its own parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub shape: MlpShape,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn new(shape: MlpShape, rng: &mut RngStream) -> Self {
        let mut params = vec![0.0; shape.num_params()];
        shape.init(&mut params, rng, 1.0);
        Self { shape, params }
    }

    pub fn zeros(shape: MlpShape) -> Self {
        let params = vec![0.0; shape.num_params()];
        Self { shape, params }
    }
}

pub fn mlp_forward(mlp: &Mlp, input: &[f64]) -> Result<(Vec<f64>, MlpCache), NnError> {
    let cache = mlp.shape.forward(&mlp.params, input)?;
    Ok((cache.output().to_vec(), cache))
}

/// Parameter gradients and the input gradient of `output . grad_out`.
pub fn mlp_backward(mlp: &Mlp, cache: &MlpCache, grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let mut grads = vec![0.0; mlp.params.len()];
    let input_grad = mlp.shape.backward(&mlp.params, cache, grad_out, &mut grads)?;
    Ok((grads, input_grad))
}
