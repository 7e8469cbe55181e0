use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;

/// Affine map `y = x·W + b` with `W` stored as `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    fn init(input: usize, output: usize, normal: &Normal<f64>, rng: &mut ChaCha8Rng) -> Self {
        Self {
            weight: Array2::from_shape_simple_fn((input, output), || normal.sample(rng)),
            bias: Array1::zeros(output),
        }
    }

    pub fn identity(size: usize) -> Self {
        Self {
            weight: Array2::eye(size),
            bias: Array1::zeros(size),
        }
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn forward_vec(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    pub fn backward(
        &self,
        x: ArrayView2<'_, f64>,
        dy: ArrayView2<'_, f64>,
        grad: &mut Dense,
    ) -> Array2<f64> {
        grad.weight += &x.t().dot(&dy);
        grad.bias += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.weight.t())
    }

    pub fn backward_vec(
        &self,
        x: ArrayView1<'_, f64>,
        dy: ArrayView1<'_, f64>,
        grad: &mut Dense,
    ) -> Array1<f64> {
        let outer = x
            .to_shape((x.len(), 1))
            .unwrap()
            .dot(&dy.to_shape((1, dy.len())).unwrap());
        grad.weight += &outer;
        grad.bias += &dy;
        self.weight.dot(&dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    fn new(size: usize) -> Self {
        Self {
            gamma: Array1::ones(size),
            beta: Array1::zeros(size),
        }
    }
}

/// One post-norm transformer encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub attn_out: Dense,
    pub attn_norm: LayerNorm,
    pub ff_in: Dense,
    pub ff_out: Dense,
    pub ff_norm: LayerNorm,
}

/// Every learnable tensor. The embedding table is tied: it embeds the input
/// tokens and scores the vocabulary in both prediction heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embedding: Array2<f64>,
    pub position: Array2<f64>,
    pub layers: Vec<EncoderLayer>,
    /// `H'_i = gelu(W1·H_i + b1)`
    pub mp_transform: Dense,
    /// Output linear of the multilingual head; its output is dotted with `e_k`.
    pub mp_output: Dense,
    /// `H̃ = W2·H' + b2`, applied row-wise to the exchanged representations.
    pub cp_exchange: Dense,
    /// `H̃'_i = gelu(W3·H̃_i + b3)`
    pub cp_transform: Dense,
    pub cp_output: Dense,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

impl ModelParams {
    /// Normal(0, init_std) weights, zero biases, unit layer-norm gains.
    /// With `identity_heads` the five head projections start at the identity.
    pub fn init(config: &ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, config.init_std).expect("valid init std");
        let (v, h, ff) = (config.vocab_size, config.hidden, config.ff_dim());
        let sample = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            Array2::from_shape_simple_fn((rows, cols), || normal.sample(rng))
        };
        let embedding = sample(v, h, &mut rng);
        let position = sample(config.m_max, h, &mut rng);
        let layers = (0..config.layers)
            .map(|_| EncoderLayer {
                query: Dense::init(h, h, &normal, &mut rng),
                key: Dense::init(h, h, &normal, &mut rng),
                value: Dense::init(h, h, &normal, &mut rng),
                attn_out: Dense::init(h, h, &normal, &mut rng),
                attn_norm: LayerNorm::new(h),
                ff_in: Dense::init(h, ff, &normal, &mut rng),
                ff_out: Dense::init(ff, h, &normal, &mut rng),
                ff_norm: LayerNorm::new(h),
            })
            .collect();
        let mut head = || {
            let random = Dense::init(h, h, &normal, &mut rng);
            if config.identity_heads {
                Dense::identity(h)
            } else {
                random
            }
        };
        Self {
            embedding,
            position,
            layers,
            mp_transform: head(),
            mp_output: head(),
            cp_exchange: head(),
            cp_transform: head(),
            cp_output: head(),
        }
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for (_, mut t) in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        fn dense<'a>(name: String, d: &'a Dense, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
            out.push((format!("{name}.weight"), d.weight.view().into_dyn()));
            out.push((format!("{name}.bias"), d.bias.view().into_dyn()));
        }
        let mut out = Vec::new();
        out.push(("embedding".to_string(), self.embedding.view().into_dyn()));
        out.push(("position".to_string(), self.position.view().into_dyn()));
        for (l, layer) in self.layers.iter().enumerate() {
            dense(format!("layer{l}.query"), &layer.query, &mut out);
            dense(format!("layer{l}.key"), &layer.key, &mut out);
            dense(format!("layer{l}.value"), &layer.value, &mut out);
            dense(format!("layer{l}.attn_out"), &layer.attn_out, &mut out);
            out.push((
                format!("layer{l}.attn_norm.gamma"),
                layer.attn_norm.gamma.view().into_dyn(),
            ));
            out.push((
                format!("layer{l}.attn_norm.beta"),
                layer.attn_norm.beta.view().into_dyn(),
            ));
            dense(format!("layer{l}.ff_in"), &layer.ff_in, &mut out);
            dense(format!("layer{l}.ff_out"), &layer.ff_out, &mut out);
            out.push((
                format!("layer{l}.ff_norm.gamma"),
                layer.ff_norm.gamma.view().into_dyn(),
            ));
            out.push((
                format!("layer{l}.ff_norm.beta"),
                layer.ff_norm.beta.view().into_dyn(),
            ));
        }
        dense("mp_transform".into(), &self.mp_transform, &mut out);
        dense("mp_output".into(), &self.mp_output, &mut out);
        dense("cp_exchange".into(), &self.cp_exchange, &mut out);
        dense("cp_transform".into(), &self.cp_transform, &mut out);
        dense("cp_output".into(), &self.cp_output, &mut out);
        out
    }

    /// Mutable counterpart of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        fn dense<'a>(
            name: String,
            d: &'a mut Dense,
            out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>,
        ) {
            out.push((format!("{name}.weight"), d.weight.view_mut().into_dyn()));
            out.push((format!("{name}.bias"), d.bias.view_mut().into_dyn()));
        }
        let mut out = Vec::new();
        let ModelParams {
            embedding,
            position,
            layers,
            mp_transform,
            mp_output,
            cp_exchange,
            cp_transform,
            cp_output,
        } = self;
        out.push(("embedding".to_string(), embedding.view_mut().into_dyn()));
        out.push(("position".to_string(), position.view_mut().into_dyn()));
        for (l, layer) in layers.iter_mut().enumerate() {
            let EncoderLayer {
                query,
                key,
                value,
                attn_out,
                attn_norm,
                ff_in,
                ff_out,
                ff_norm,
            } = layer;
            dense(format!("layer{l}.query"), query, &mut out);
            dense(format!("layer{l}.key"), key, &mut out);
            dense(format!("layer{l}.value"), value, &mut out);
            dense(format!("layer{l}.attn_out"), attn_out, &mut out);
            out.push((
                format!("layer{l}.attn_norm.gamma"),
                attn_norm.gamma.view_mut().into_dyn(),
            ));
            out.push((
                format!("layer{l}.attn_norm.beta"),
                attn_norm.beta.view_mut().into_dyn(),
            ));
            dense(format!("layer{l}.ff_in"), ff_in, &mut out);
            dense(format!("layer{l}.ff_out"), ff_out, &mut out);
            out.push((
                format!("layer{l}.ff_norm.gamma"),
                ff_norm.gamma.view_mut().into_dyn(),
            ));
            out.push((
                format!("layer{l}.ff_norm.beta"),
                ff_norm.beta.view_mut().into_dyn(),
            ));
        }
        dense("mp_transform".into(), mp_transform, &mut out);
        dense("mp_output".into(), mp_output, &mut out);
        dense("cp_exchange".into(), cp_exchange, &mut out);
        dense("cp_transform".into(), cp_transform, &mut out);
        dense("cp_output".into(), cp_output, &mut out);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, &b);
        }
    }
}
