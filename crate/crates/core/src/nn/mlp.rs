//! Fully connected ReLU network with an explicit gradient tape.
//!
//! Inputs are row-major batches: one sample per row. Weights have shape
//! `(out_dim, in_dim)`, so a layer computes `z = x W^T + b`. Every hidden
//! layer applies ReLU; the output layer is linear.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::{Error, Result};

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

/// One affine layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Multilayer perceptron with ReLU hidden activations.
#[derive(Debug)]
pub struct Mlp {
    dims: Vec<usize>,
    layers: Vec<Dense>,
    id: u64,
    version: u64,
}

impl Clone for Mlp {
    /// A clone has identical parameters but its own identity, so tapes
    /// recorded on the original are rejected by the copy.
    fn clone(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            layers: self.layers.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.layers == other.layers
    }
}

/// Cached activations from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    net_id: u64,
    version: u64,
    /// Input fed to each layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Array2<f64>>,
}

impl Tape {
    pub fn batch_size(&self) -> usize {
        self.inputs[0].nrows()
    }
}

/// Parameter gradients, shaped exactly like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weight.raw_dim())).collect(),
            biases: net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect(),
        }
    }

    /// Flattened in the same order as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

/// Result of a full backward pass.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub params: Gradients,
    /// Gradient with respect to the network input, one row per sample.
    pub input: Array2<f64>,
}

impl Mlp {
    /// Builds a network with uniform fan-in initialization: every weight and
    /// bias of layer `i` is drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("an MLP needs at least an input and an output size"));
        }
        if dims.contains(&0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(rng));
                let bias = Array1::from_shape_simple_fn(fan_out, || dist.sample(rng));
                Dense { weight, bias }
            })
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            id: fresh_id(),
            version: 0,
        })
    }

    /// Builds a network from explicit layers; shapes must chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("an MLP needs at least one layer"));
        }
        let mut dims = vec![layers[0].in_dim()];
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != dims[i] {
                return Err(Error::DimensionMismatch {
                    context: "layer chaining",
                    expected: dims[i],
                    actual: layer.in_dim(),
                });
            }
            if layer.bias.len() != layer.out_dim() {
                return Err(Error::DimensionMismatch {
                    context: "bias length",
                    expected: layer.out_dim(),
                    actual: layer.bias.len(),
                });
            }
            dims.push(layer.out_dim());
        }
        Ok(Self {
            dims,
            layers,
            id: fresh_id(),
            version: 0,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two dims")
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to the parameters. Invalidates outstanding tapes.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version += 1;
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Multiplies the output layer's weights and bias by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let last = self.layers_mut().last_mut().expect("non-empty");
        last.weight.mapv_inplace(|w| w * factor);
        last.bias.mapv_inplace(|b| b * factor);
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weight.iter().copied());
            out.extend(l.bias.iter().copied());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "flat parameter vector",
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in self.layers_mut() {
            l.weight
                .iter_mut()
                .for_each(|w| *w = it.next().expect("length checked"));
            l.bias.iter_mut().for_each(|b| *b = it.next().expect("length checked"));
        }
        Ok(())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass over a batch, recording a tape for [`Mlp::backward`].
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Tape)> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weight.t()) + &layer.bias;
            inputs.push(h);
            if i < last {
                h = z.mapv(relu);
                pre.push(z);
            } else {
                h = z;
            }
        }
        let tape = Tape {
            net_id: self.id,
            version: self.version,
            inputs,
            pre,
        };
        Ok((h, tape))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weight.t()) + &layer.bias;
            h = if i < last { z.mapv(relu) } else { z };
        }
        Ok(h)
    }

    /// Single-sample convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("contiguous slice");
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    fn check_tape(&self, tape: &Tape, out_grad: &ArrayView2<f64>) -> Result<()> {
        if tape.net_id != self.id || tape.version != self.version {
            return Err(Error::StaleTape);
        }
        if out_grad.ncols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient width",
                expected: self.output_dim(),
                actual: out_grad.ncols(),
            });
        }
        if out_grad.nrows() != tape.batch_size() {
            return Err(Error::DimensionMismatch {
                context: "output gradient rows",
                expected: tape.batch_size(),
                actual: out_grad.nrows(),
            });
        }
        Ok(())
    }

    /// Reverse pass: gradients of `sum(out_grad ⊙ output)` with respect to
    /// every parameter and to the input.
    pub fn backward(&self, tape: &Tape, out_grad: ArrayView2<f64>) -> Result<Backprop> {
        self.check_tape(tape, &out_grad)?;
        let n = self.layers.len();
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        let mut delta = out_grad.to_owned();
        for i in (0..n).rev() {
            // `dᵀx` may come back column-major; optimizers want row-major.
            weights.push(delta.t().dot(&tape.inputs[i]).as_standard_layout().into_owned());
            biases.push(delta.sum_axis(Axis(0)));
            let mut down = delta.dot(&self.layers[i].weight);
            if i > 0 {
                down.zip_mut_with(&tape.pre[i - 1], |d, &z| *d *= relu_grad(z));
            }
            delta = down;
        }
        weights.reverse();
        biases.reverse();
        Ok(Backprop {
            params: Gradients { weights, biases },
            input: delta,
        })
    }

    /// Reverse pass that only propagates to the input, skipping parameter
    /// gradients.
    pub fn backward_input(&self, tape: &Tape, out_grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_tape(tape, &out_grad)?;
        let mut delta = out_grad.to_owned();
        for i in (0..self.layers.len()).rev() {
            let mut down = delta.dot(&self.layers[i].weight);
            if i > 0 {
                down.zip_mut_with(&tape.pre[i - 1], |d, &z| *d *= relu_grad(z));
            }
            delta = down;
        }
        Ok(delta)
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

/// Subgradient 0 at exactly zero.
#[inline]
fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let n = net.layers().len();
        for (i, l) in net.layers().iter().enumerate() {
            let mut z = vec![0.0; l.out_dim()];
            for r in 0..l.out_dim() {
                let mut acc = l.bias[r];
                for c in 0..l.in_dim() {
                    acc += l.weight[[r, c]] * h[c];
                }
                z[r] = if i + 1 < n { acc.max(0.0) } else { acc };
            }
            h = z;
        }
        h
    }

    #[test]
    fn affine_identity() {
        let net = Mlp::from_layers(vec![Dense {
            weight: array![[2.0]],
            bias: array![1.0],
        }])
        .unwrap();
        assert_eq!(net.predict_one(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn zero_net_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[4, 5, 2], &mut rng).unwrap();
        let zeros = vec![0.0; net.param_count()];
        net.set_flat_params(&zeros).unwrap();
        assert_eq!(net.predict_one(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn matches_naive_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::new(&[3, 8, 1], &mut rng).unwrap();
        for x in [[0.3, -1.2, 2.0], [1.0, 1.0, 1.0], [-0.5, 0.0, 4.0]] {
            let got = net.predict_one(&x).unwrap();
            let want = naive_forward(&net, &x);
            assert!((got[0] - want[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_input_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 4, 1], &mut rng).unwrap();
        let err = net.predict_one(&[1.0, 2.0]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 3,
                actual: 2,
                ..
            }
        ));
    }

    #[test]
    fn bias_gradient_of_single_layer_is_one() {
        let net = Mlp::from_layers(vec![Dense {
            weight: array![[0.5, -1.0]],
            bias: array![0.2],
        }])
        .unwrap();
        let x = array![[1.0, 2.0]];
        let (_, tape) = net.forward(x.view()).unwrap();
        let bp = net.backward(&tape, array![[1.0]].view()).unwrap();
        assert_eq!(bp.params.biases[0], array![1.0]);
        assert_eq!(bp.params.weights[0], array![[1.0, 2.0]]);
        assert_eq!(bp.input, array![[0.5, -1.0]]);
    }

    #[test]
    fn relu_at_zero_uses_zero_subgradient() {
        // Hidden pre-activation is exactly 0 for input 0 with zero bias.
        let net = Mlp::from_layers(vec![
            Dense {
                weight: array![[1.0]],
                bias: array![0.0],
            },
            Dense {
                weight: array![[3.0]],
                bias: array![0.0],
            },
        ])
        .unwrap();
        let (_, tape) = net.forward(array![[0.0]].view()).unwrap();
        let bp = net.backward(&tape, array![[1.0]].view()).unwrap();
        assert_eq!(bp.params.weights[0][[0, 0]], 0.0);
        assert_eq!(bp.params.biases[0][0], 0.0);
        assert_eq!(bp.input[[0, 0]], 0.0);
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut net = Mlp::new(&[2, 3, 1], &mut rng).unwrap();
        let (_, tape) = net.forward(array![[1.0, 2.0]].view()).unwrap();
        net.scale_output_layer(0.5);
        assert!(matches!(
            net.backward(&tape, array![[1.0]].view()),
            Err(Error::StaleTape)
        ));
        let copy = net.clone();
        let (_, tape) = net.forward(array![[1.0, 2.0]].view()).unwrap();
        assert!(matches!(
            copy.backward(&tape, array![[1.0]].view()),
            Err(Error::StaleTape)
        ));
    }

    #[test]
    fn forward_is_bit_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[5, 16, 16, 2], &mut rng).unwrap();
        let x = Array2::from_shape_fn((7, 5), |(i, j)| (i as f64 - 2.0 * j as f64) * 0.37);
        let a = net.predict(x.view()).unwrap();
        let (b, _) = net.forward(x.view()).unwrap();
        assert_eq!(a, b);
    }
}
