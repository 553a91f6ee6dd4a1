use rand::Rng as _;
use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};
use crate::norm::Affine;
use crate::rng::Rng;

/// Fully connected layer, `y = W x + b` with `W` stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::config("dense weights must be a matrix"));
        }
        if weights.rows() != bias.len() {
            return Err(Error::config(format!(
                "dense layer has {} outputs but {} biases",
                weights.rows(),
                bias.len()
            )));
        }
        if !weights.all_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("dense parameters".into()));
        }
        Ok(DenseLayer { weights, bias })
    }

    /// Uniform init in `±√(6/(in+out))`, zero bias.
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..=limit)).collect();
        DenseLayer {
            weights: Tensor::matrix(out_dim, in_dim, data).expect("nonzero dims"),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub(crate) fn apply(&self, x: &Tensor) -> Tensor {
        let (b, n_in, n_out) = (x.rows(), self.in_dim(), self.out_dim());
        let mut out = vec![0.0; b * n_out];
        for (row, o) in x.iter_rows().zip(out.chunks_exact_mut(n_out)) {
            for (j, oj) in o.iter_mut().enumerate() {
                let w = &self.weights.data()[j * n_in..(j + 1) * n_in];
                *oj = self.bias[j] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Tensor::matrix(b, n_out, out).expect("dense output shape")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense(DenseLayer),
    Relu,
    /// Normalization slot; carries only the affine parameters. Statistics live
    /// in a separate [`crate::norm::NormState`] per slot so several branches
    /// can share the weights.
    Norm(Affine),
}

/// Which parameters receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainable {
    All,
    NormAffinesOnly,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    in_dim: usize,
    out_dim: usize,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(in_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if in_dim == 0 {
            return Err(Error::config("network input dimension must be positive"));
        }
        let mut dim = in_dim;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    if d.in_dim() != dim {
                        return Err(Error::config(format!(
                            "layer {i}: dense expects {} inputs, previous layer gives {dim}",
                            d.in_dim()
                        )));
                    }
                    dim = d.out_dim();
                }
                Layer::Relu => {}
                Layer::Norm(a) => {
                    if a.channels() != dim || a.shift.len() != dim {
                        return Err(Error::config(format!(
                            "layer {i}: norm has {} channels, previous layer gives {dim}",
                            a.channels()
                        )));
                    }
                }
            }
        }
        Ok(Network { in_dim, out_dim: dim, layers })
    }

    /// No layers: logits equal the input.
    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new())
    }

    /// `[Norm] → (Dense → Norm → ReLU)* → Dense`.
    pub fn mlp(in_dim: usize, hidden: &[usize], out_dim: usize, input_norm: bool, rng: &mut Rng) -> Result<Self> {
        let mut layers = Vec::new();
        if input_norm {
            layers.push(Layer::Norm(Affine::identity(in_dim)));
        }
        let mut dim = in_dim;
        for &h in hidden {
            layers.push(Layer::Dense(DenseLayer::init(dim, h, rng)));
            layers.push(Layer::Norm(Affine::identity(h)));
            layers.push(Layer::Relu);
            dim = h;
        }
        layers.push(Layer::Dense(DenseLayer::init(dim, out_dim, rng)));
        Self::new(in_dim, layers)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    /// Number of classes `Kc`.
    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn affines(&self) -> impl Iterator<Item = &Affine> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Norm(a) => Some(a),
            _ => None,
        })
    }

    pub fn affines_mut(&mut self) -> impl Iterator<Item = &mut Affine> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::Norm(a) => Some(a),
            _ => None,
        })
    }

    /// Channel count of each normalization slot, in layer order.
    pub fn norm_channels(&self) -> Vec<usize> {
        self.affines().map(Affine::channels).collect()
    }

    pub fn norm_slots(&self) -> usize {
        self.affines().count()
    }

    /// Mutable views of the selected parameters, in the same order as
    /// [`super::Gradients::flat`].
    pub fn params_mut(&mut self, trainable: Trainable) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) if trainable == Trainable::All => {
                    out.push(d.weights.data_mut());
                    out.push(&mut d.bias);
                }
                Layer::Norm(a) => {
                    out.push(&mut a.scale);
                    out.push(&mut a.shift);
                }
                _ => {}
            }
        }
        out
    }

    /// SHA-256 over every dense weight and bias (little-endian bytes).
    /// Normalization affines are excluded.
    pub fn dense_digest(&self) -> String {
        let mut h = Sha256::new();
        for layer in &self.layers {
            if let Layer::Dense(d) = layer {
                for v in d.weights.data().iter().chain(&d.bias) {
                    h.update(v.to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
