use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1};

use super::params::Dense;
use super::{gelu, gelu_grad, Gradients, ModelParams};
use crate::error::{Error, Result};
use crate::exchange::{apply_exchange, ExchangeMatrix};

pub fn log_softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.mapv(|v| v - lse)
}

pub fn softmax(logits: ArrayView1<'_, f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let mut out = logits.mapv(|v| (v - max).exp());
    let total = out.sum();
    out /= total;
    out
}

/// Activations of one head evaluation at one position.
#[derive(Debug, Clone)]
pub struct HeadState {
    /// Row of `H` the head reads (the partner row for the cross-lingual head).
    pub input: Array1<f64>,
    /// `H̃_i`; only set by the cross-lingual head.
    pub exchanged: Option<Array1<f64>>,
    pub pre_activation: Array1<f64>,
    pub activation: Array1<f64>,
    /// Output of the head's linear layer, scored against every `e_k`.
    pub query: Array1<f64>,
    pub log_probs: Array1<f64>,
}

impl HeadState {
    pub fn probs(&self) -> Array1<f64> {
        self.log_probs.mapv(f64::exp)
    }
}

fn predict(
    input: Array1<f64>,
    exchanged: Option<Array1<f64>>,
    transform: &Dense,
    output: &Dense,
    embedding: &Array2<f64>,
) -> HeadState {
    let pre_activation = transform.forward_vec(exchanged.as_ref().unwrap_or(&input).view());
    let activation = pre_activation.mapv(gelu);
    let query = output.forward_vec(activation.view());
    let logits = embedding.dot(&query);
    HeadState {
        input,
        exchanged,
        pre_activation,
        activation,
        query,
        log_probs: log_softmax(logits.view()),
    }
}

/// Multilingual head at one position: `softmax_k(linear(gelu(W1·H_i + b1))·e_k)`.
pub fn mp_forward(h_i: ArrayView1<'_, f64>, params: &ModelParams) -> HeadState {
    predict(
        h_i.to_owned(),
        None,
        &params.mp_transform,
        &params.mp_output,
        &params.embedding,
    )
}

pub fn mp_distribution(h_i: ArrayView1<'_, f64>, params: &ModelParams) -> Array1<f64> {
    mp_forward(h_i, params).probs()
}

/// Cross-lingual head reading the exchanged row `(Aᵀ·H)_i = H_partner`.
pub fn cp_forward(h_partner: ArrayView1<'_, f64>, params: &ModelParams) -> HeadState {
    let exchanged = params.cp_exchange.forward_vec(h_partner);
    predict(
        h_partner.to_owned(),
        Some(exchanged),
        &params.cp_transform,
        &params.cp_output,
        &params.embedding,
    )
}

/// Full cross-lingual path at position `i`: `H' = Aᵀ·H`, `H̃ = W2·H' + b2`,
/// then the prediction layers on row `i`.
pub fn cp_distribution(
    h: ArrayView2<'_, f64>,
    a: &ExchangeMatrix,
    i: usize,
    params: &ModelParams,
) -> Result<Array1<f64>> {
    if !a.is_aligned(i) {
        return Err(Error::Unaligned(i));
    }
    let exchanged = apply_exchange(a, h)?;
    Ok(cp_forward(exchanged.row(i), params).probs())
}

/// Shared tail of both heads. Returns `∂L/∂(transform input)`.
#[allow(clippy::too_many_arguments)]
fn predict_backward(
    state: &HeadState,
    label: usize,
    scale: f64,
    transform: &Dense,
    output: &Dense,
    embedding: &Array2<f64>,
    grad_transform: &mut Dense,
    grad_output: &mut Dense,
    grad_embedding: &mut Array2<f64>,
) -> Array1<f64> {
    let mut d_logits = state.log_probs.mapv(|lp| lp.exp() * scale);
    d_logits[label] -= scale;
    for (mut row, &d) in grad_embedding.rows_mut().into_iter().zip(d_logits.iter()) {
        row.scaled_add(d, &state.query);
    }
    let d_query = embedding.t().dot(&d_logits);
    let d_act = output.backward_vec(state.activation.view(), d_query.view(), grad_output);
    let d_pre = d_act * &state.pre_activation.mapv(gelu_grad);
    let input = state.exchanged.as_ref().unwrap_or(&state.input);
    transform.backward_vec(input.view(), d_pre.view(), grad_transform)
}

/// Gradient of `-scale · log p(label)` for the multilingual head; the
/// `∂L/∂H_i` contribution is added to `d_h_i`.
pub fn mp_backward(
    state: &HeadState,
    label: u32,
    scale: f64,
    params: &ModelParams,
    grad: &mut Gradients,
    mut d_h_i: ArrayViewMut1<'_, f64>,
) {
    let d_input = predict_backward(
        state,
        label as usize,
        scale,
        &params.mp_transform,
        &params.mp_output,
        &params.embedding,
        &mut grad.mp_transform,
        &mut grad.mp_output,
        &mut grad.embedding,
    );
    d_h_i += &d_input;
}

/// Cross-lingual counterpart of [`mp_backward`]; the gradient flows to the
/// partner row `d_h_partner`.
pub fn cp_backward(
    state: &HeadState,
    label: u32,
    scale: f64,
    params: &ModelParams,
    grad: &mut Gradients,
    mut d_h_partner: ArrayViewMut1<'_, f64>,
) {
    let d_exchanged = predict_backward(
        state,
        label as usize,
        scale,
        &params.cp_transform,
        &params.cp_output,
        &params.embedding,
        &mut grad.cp_transform,
        &mut grad.cp_output,
        &mut grad.embedding,
    );
    let d_input = params.cp_exchange.backward_vec(
        state.input.view(),
        d_exchanged.view(),
        &mut grad.cp_exchange,
    );
    d_h_partner += &d_input;
}
