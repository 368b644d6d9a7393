use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_finite, Matrix, Vector};

/// Activation applied after the final affine layer. Hidden layers always use ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    Relu,
}

/// Parameters of a fully connected ReLU network.
///
/// `weights[l]` has shape `layer_dims[l + 1] x layer_dims[l]`. The same type doubles as
/// the gradient accumulator during training.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
    pub output: OutputActivation,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, `activations[L]` the network output.
    activations: Vec<Vector>,
    pre_activations: Vec<Vector>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("non-empty cache")
    }

    /// Smallest `|z|` over pre-activations that pass through a ReLU, i.e. how far this
    /// input is from a kink. Infinite when no ReLU is involved.
    pub fn kink_margin(&self, output: OutputActivation) -> f64 {
        let last = self.pre_activations.len() - 1;
        self.pre_activations
            .iter()
            .enumerate()
            .filter(|(l, _)| *l < last || output == OutputActivation::Relu)
            .flat_map(|(_, z)| z.iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

// Subgradient at the kink is 0.
#[inline]
fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

impl MlpParams {
    /// All-zero parameters.
    pub fn zeros(layer_dims: &[usize], output: OutputActivation) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::dim(format!("invalid layer dims {layer_dims:?}")));
        }
        let weights = layer_dims.windows(2).map(|w| Matrix::zeros(w[1], w[0])).collect();
        let biases = layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            output,
        })
    }

    /// Scaled uniform initialization: weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(layer_dims: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(layer_dims, output)?;
        for w in &mut params.weights {
            let limit = (6.0 / (w.rows() + w.cols()) as f64).sqrt();
            for x in w.data_mut() {
                *x = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    /// Rebuilds parameters from explicit arrays, validating every shape.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
        output: OutputActivation,
    ) -> Result<Self> {
        let mut params = Self::zeros(&layer_dims, output)?;
        if weights.len() != params.weights.len() || biases.len() != params.biases.len() {
            return Err(Error::dim(format!(
                "{} weight and {} bias arrays for {} layers",
                weights.len(),
                biases.len(),
                params.weights.len()
            )));
        }
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (rows, cols) = (layer_dims[l + 1], layer_dims[l]);
            params.weights[l] = Matrix::new(rows, cols, w)?;
            if b.len() != rows {
                return Err(Error::dim(format!(
                    "layer {l} bias has {} entries, want {rows}",
                    b.len()
                )));
            }
            check_finite(&b, "bias")?;
            params.biases[l] = b;
        }
        Ok(params)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("validated dims")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.data().len()).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.layer_dims, self.output).expect("dims already validated")
    }

    /// Flattened parameters: each layer's weights (row-major) then its bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let data = w.data_mut();
            data.copy_from_slice(&flat[k..k + data.len()]);
            k += data.len();
            let len = b.len();
            b.copy_from_slice(&flat[k..k + len]);
            k += len;
        }
        Ok(())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (w, ow) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in w.data_mut().iter_mut().zip(ow.data()) {
                *x += alpha * y;
            }
        }
        for (b, ob) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in b.iter_mut().zip(ob) {
                *x += alpha * y;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for w in &mut self.weights {
            w.data_mut().iter_mut().for_each(|x| *x *= alpha);
        }
        for b in &mut self.biases {
            b.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    pub fn weight_sq_norm(&self) -> f64 {
        self.weights.iter().flat_map(|w| w.data()).map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::dim(format!(
                "input of length {} for a network expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        self.check_input(x)?;
        let last = self.num_layers() - 1;
        let mut a = x.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = affine(w, b, &a);
            a = if l < last || self.output == OutputActivation::Relu {
                z.into_iter().map(relu).collect()
            } else {
                z
            };
        }
        Ok(a)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let last = self.num_layers() - 1;
        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        let mut pre_activations = Vec::with_capacity(self.num_layers());
        activations.push(x.to_vec());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = affine(w, b, activations.last().expect("input pushed"));
            let a = if l < last || self.output == OutputActivation::Relu {
                z.iter().copied().map(relu).collect()
            } else {
                z.clone()
            };
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardCache {
            activations,
            pre_activations,
        })
    }

    /// Accumulates `scale * d(loss)/d(params)` into `grad`, given `d(loss)/d(output)`.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[f64], scale: f64, grad: &mut Self) {
        let last = self.num_layers() - 1;
        let mut delta: Vector = if self.output == OutputActivation::Relu {
            d_output
                .iter()
                .zip(&cache.pre_activations[last])
                .map(|(d, &z)| d * relu_grad(z))
                .collect()
        } else {
            d_output.to_vec()
        };
        for l in (0..=last).rev() {
            let input = &cache.activations[l];
            let w = &self.weights[l];
            let cols = w.cols();
            {
                let gw = grad.weights[l].data_mut();
                for (r, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let sd = scale * d;
                    for (g, &a) in gw[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                        *g += sd * a;
                    }
                }
            }
            for (g, &d) in grad.biases[l].iter_mut().zip(&delta) {
                *g += scale * d;
            }
            if l == 0 {
                break;
            }
            let mut prev = vec![0.0; cols];
            for (r, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, &wv) in prev.iter_mut().zip(w.row(r)) {
                    *p += wv * d;
                }
            }
            for (p, &z) in prev.iter_mut().zip(&cache.pre_activations[l - 1]) {
                *p *= relu_grad(z);
            }
            delta = prev;
        }
    }
}

fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Vector {
    let cols = w.cols();
    w.data()
        .chunks(cols)
        .zip(b)
        .map(|(row, &bias)| bias + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<Vector> {
    params.forward(x)
}
