//! A small dense MLP with per-layer trainable specs. A pretrained layer is
//! frozen and extended with a zero-initialized increment — dense, masked
//! coordinate-list, or low-rank — so the first forward pass after attachment
//! is bit-identical to the pretrained model's.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::{apply_update, Mask, MaskMode, SparseUpdate};
use crate::tensor::{DenseMatrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed in terms of the activation output.
    #[inline]
    pub fn derivative_from_output(&self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Low-rank increment (alpha / rank) * up * down with `up` zero-initialized
/// and `down` small random, so the initial increment vanishes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoraAdapter {
    pub down: DenseMatrix,
    pub up: DenseMatrix,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn new(out_dim: usize, in_dim: usize, rank: usize, alpha: f64, rng: &mut RngStream) -> Result<Self> {
        if rank == 0 || rank > in_dim.min(out_dim) {
            return Err(Error::invalid(format!(
                "lora rank {rank} invalid for a {out_dim}x{in_dim} layer"
            )));
        }
        let mut down = DenseMatrix::zeros(rank, in_dim);
        let scale = 1.0 / (in_dim as f64).sqrt();
        for r in 0..rank {
            for c in 0..in_dim {
                down.set(r, c, scale * rng.normal());
            }
        }
        Ok(Self {
            down,
            up: DenseMatrix::zeros(out_dim, rank),
            rank,
            alpha,
        })
    }

    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn increment(&self) -> DenseMatrix {
        self.up
            .matmul(&self.down)
            .expect("rank dims agree")
            .scaled(self.scaling())
    }
}

/// How a layer's weight participates in training.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum LayerTrain {
    /// Weights and bias trained in place (pretraining).
    Base,
    Frozen,
    /// Dense zero-initialized increment over the frozen weight.
    Full(DenseMatrix),
    Masked(SparseUpdate),
    Lora(LoraAdapter),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub train: LayerTrain,
}

impl Layer {
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn effective_weight(&self) -> DenseMatrix {
        match &self.train {
            LayerTrain::Base | LayerTrain::Frozen => self.weight.clone(),
            LayerTrain::Full(inc) => self.weight.add(inc).expect("shapes agree"),
            LayerTrain::Masked(upd) => apply_update(&self.weight, upd).expect("shapes agree"),
            LayerTrain::Lora(l) => self.weight.add(&l.increment()).expect("shapes agree"),
        }
    }

    pub fn trainable_len(&self) -> usize {
        match &self.train {
            LayerTrain::Base => self.weight.numel() + self.bias.len(),
            LayerTrain::Frozen => 0,
            LayerTrain::Full(inc) => inc.numel(),
            LayerTrain::Masked(upd) => upd.values().len(),
            LayerTrain::Lora(l) => l.down.numel() + l.up.numel(),
        }
    }
}

/// Per-layer attachment request for `attach_peft`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerSpec {
    Full,
    Frozen,
    Masked { p: f64, mode: MaskMode },
    Lora { rank: usize, alpha: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl MlpModel {
    /// Fresh model with He-style init, every layer directly trainable.
    pub fn new(dims: &[usize], activation: Activation, rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("model needs at least input and output dims"));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (in_dim, out_dim) = (w[0], w[1]);
            let scale = (2.0 / in_dim as f64).sqrt();
            let mut weight = DenseMatrix::zeros(out_dim, in_dim);
            for r in 0..out_dim {
                for c in 0..in_dim {
                    weight.set(r, c, scale * rng.normal());
                }
            }
            layers.push(Layer {
                weight,
                bias: vec![0.0; out_dim],
                train: LayerTrain::Base,
            });
        }
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Layer::in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    /// Activations per layer: `[inputs, hidden_1, ..., logits]`. Hidden
    /// layers apply the nonlinearity; the last layer stays linear.
    pub fn forward(&self, inputs: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input width {} does not match model input dim {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(inputs.clone());
        for (li, layer) in self.layers.iter().enumerate() {
            let w = layer.effective_weight();
            let prev = acts.last().unwrap();
            let mut z = affine(prev, &w, &layer.bias);
            if li + 1 < self.layers.len() {
                for v in z.as_mut_slice() {
                    *v = self.activation.apply(*v);
                }
            }
            acts.push(z);
        }
        Ok(acts)
    }

    pub fn logits(&self, inputs: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(self.forward(inputs)?.pop().unwrap())
    }

    pub fn trainable_len(&self) -> usize {
        self.layers.iter().map(Layer::trainable_len).sum()
    }

    /// Flattens all trainable parameters, layer by layer. Layout per layer:
    /// Base -> weight entries then bias; Full -> increment entries;
    /// Masked -> coordinate values; Lora -> down entries then up entries.
    pub fn trainable_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_len());
        for layer in &self.layers {
            match &layer.train {
                LayerTrain::Base => {
                    out.extend_from_slice(layer.weight.as_slice());
                    out.extend_from_slice(&layer.bias);
                }
                LayerTrain::Frozen => {}
                LayerTrain::Full(inc) => out.extend_from_slice(inc.as_slice()),
                LayerTrain::Masked(upd) => out.extend_from_slice(upd.values()),
                LayerTrain::Lora(l) => {
                    out.extend_from_slice(l.down.as_slice());
                    out.extend_from_slice(l.up.as_slice());
                }
            }
        }
        out
    }

    pub fn set_trainable_vector(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.trainable_len() {
            return Err(Error::invalid(format!(
                "trainable vector length {} does not match {}",
                v.len(),
                self.trainable_len()
            )));
        }
        let mut off = 0;
        for layer in &mut self.layers {
            match &mut layer.train {
                LayerTrain::Base => {
                    let wn = layer.weight.numel();
                    layer.weight.as_mut_slice().copy_from_slice(&v[off..off + wn]);
                    off += wn;
                    let bn = layer.bias.len();
                    layer.bias.copy_from_slice(&v[off..off + bn]);
                    off += bn;
                }
                LayerTrain::Frozen => {}
                LayerTrain::Full(inc) => {
                    let n = inc.numel();
                    inc.as_mut_slice().copy_from_slice(&v[off..off + n]);
                    off += n;
                }
                LayerTrain::Masked(upd) => {
                    let n = upd.values().len();
                    upd.values_mut().copy_from_slice(&v[off..off + n]);
                    off += n;
                }
                LayerTrain::Lora(l) => {
                    let dn = l.down.numel();
                    l.down.as_mut_slice().copy_from_slice(&v[off..off + dn]);
                    off += dn;
                    let un = l.up.numel();
                    l.up.as_mut_slice().copy_from_slice(&v[off..off + un]);
                    off += un;
                }
            }
        }
        Ok(())
    }
}

/// z[s] = W x[s] + b for a batch of row vectors.
pub(crate) fn affine(x: &DenseMatrix, w: &DenseMatrix, b: &[f64]) -> DenseMatrix {
    let batch = x.rows();
    let out_dim = w.rows();
    let mut z = DenseMatrix::zeros(batch, out_dim);
    for s in 0..batch {
        let xs = x.row(s);
        for o in 0..out_dim {
            z.set(s, o, crate::tensor::dot(w.row(o), xs) + b[o]);
        }
    }
    z
}

/// Freezes the base weights and installs zero-initialized increments per the
/// layer specs. The returned model's forward pass equals the input model's
/// exactly. Masked specs with the structured-columns mode draw whole-column
/// masks; biases are not trainable under any adapter.
pub fn attach_peft(model: &MlpModel, specs: &[LayerSpec], rng: &mut RngStream) -> Result<MlpModel> {
    if specs.len() != model.layers.len() {
        return Err(Error::invalid(format!(
            "{} specs for {} layers",
            specs.len(),
            model.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(model.layers.len());
    for (li, (layer, spec)) in model.layers.iter().zip(specs).enumerate() {
        // Base layers contribute their current weights; attached layers fold
        // their increment into the new frozen base.
        let weight = layer.effective_weight();
        let bias = layer.bias.clone();
        let shape = [weight.rows(), weight.cols()];
        let mut layer_rng = rng.substream(li as u64);
        let train = match *spec {
            LayerSpec::Frozen => LayerTrain::Frozen,
            LayerSpec::Full => LayerTrain::Full(DenseMatrix::zeros(shape[0], shape[1])),
            LayerSpec::Masked { p, mode } => {
                let mask = match mode {
                    MaskMode::StructuredColumns => Mask::gen_structured(&shape, p, &mut layer_rng)?,
                    _ => Mask::gen_random(&shape, p, mode, &mut layer_rng)?,
                };
                LayerTrain::Masked(SparseUpdate::new(mask))
            }
            LayerSpec::Lora { rank, alpha } => {
                LayerTrain::Lora(LoraAdapter::new(shape[0], shape[1], rank, alpha, &mut layer_rng)?)
            }
        };
        layers.push(Layer {
            weight,
            bias,
            train,
        });
    }
    Ok(MlpModel {
        layers,
        activation: model.activation,
    })
}
