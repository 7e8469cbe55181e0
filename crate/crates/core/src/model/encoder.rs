use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};

use super::params::{EncoderLayer, LayerNorm};
use super::{gelu, gelu_grad, Gradients, ModelConfig, ModelParams};
use crate::corpus::TokenizedPair;
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-12;

struct NormState {
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
}

struct LayerState {
    input: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention probabilities, one `(len, len)` matrix per head.
    probs: Vec<Array2<f64>>,
    context: Array2<f64>,
    attn_norm: NormState,
    /// Output of the attention sublayer (input to the feed-forward block).
    mid: Array2<f64>,
    ff_pre: Array2<f64>,
    ff_act: Array2<f64>,
    ff_norm: NormState,
}

/// Cached activations of one encoder pass.
pub struct EncoderState {
    ids: Vec<u32>,
    layers: Vec<LayerState>,
    /// `H`, one row per input position.
    pub output: Array2<f64>,
}

fn layer_norm_forward(x: &Array2<f64>, norm: &LayerNorm) -> (Array2<f64>, NormState) {
    let h = x.ncols() as f64;
    let mut normalized = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in normalized.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / h;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / h;
        *s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let scale = *s;
        row.mapv_inplace(|v| v * scale);
    }
    let out = &normalized * &norm.gamma + &norm.beta;
    (
        out,
        NormState {
            normalized,
            inv_std,
        },
    )
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    state: &NormState,
    norm: &LayerNorm,
    grad: &mut LayerNorm,
) -> Array2<f64> {
    grad.gamma += &(dy * &state.normalized).sum_axis(Axis(0));
    grad.beta += &dy.sum_axis(Axis(0));
    let h = dy.ncols() as f64;
    let dxhat = dy * &norm.gamma;
    let mut dx = Array2::zeros(dy.raw_dim());
    for (((mut out, g), xh), &s) in dx
        .rows_mut()
        .into_iter()
        .zip(dxhat.rows())
        .zip(state.normalized.rows())
        .zip(state.inv_std.iter())
    {
        let mean_g = g.sum() / h;
        let mean_gx = g.dot(&xh) / h;
        Zip::from(&mut out)
            .and(&g)
            .and(&xh)
            .for_each(|o, &gi, &xi| *o = s * (gi - mean_g - xi * mean_gx));
    }
    dx
}

fn layer_forward(
    layer: &EncoderLayer,
    x: Array2<f64>,
    valid_len: usize,
    heads: usize,
) -> (Array2<f64>, LayerState) {
    let (len, hidden) = x.dim();
    let head_dim = hidden / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();
    let q = layer.query.forward(x.view());
    let k = layer.key.forward(x.view());
    let v = layer.value.forward(x.view());

    let mut context = Array2::zeros((len, hidden));
    let mut probs = Vec::with_capacity(heads);
    for head in 0..heads {
        let cols = s![.., head * head_dim..(head + 1) * head_dim];
        let mut p = q.slice(cols).dot(&k.slice(cols).t()) * scale;
        for mut row in p.rows_mut() {
            let max = row
                .slice(s![..valid_len])
                .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut total = 0.0;
            for (key, v) in row.iter_mut().enumerate() {
                if key < valid_len {
                    *v = (*v - max).exp();
                    total += *v;
                } else {
                    *v = 0.0;
                }
            }
            row.mapv_inplace(|v| v / total);
        }
        context.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
        probs.push(p);
    }

    let attn = layer.attn_out.forward(context.view());
    let (mid, attn_norm) = layer_norm_forward(&(&x + &attn), &layer.attn_norm);
    let ff_pre = layer.ff_in.forward(mid.view());
    let ff_act = ff_pre.mapv(gelu);
    let ff = layer.ff_out.forward(ff_act.view());
    let (out, ff_norm) = layer_norm_forward(&(&mid + &ff), &layer.ff_norm);

    let state = LayerState {
        input: x,
        q,
        k,
        v,
        probs,
        context,
        attn_norm,
        mid,
        ff_pre,
        ff_act,
        ff_norm,
    };
    (out, state)
}

fn layer_backward(
    layer: &EncoderLayer,
    state: &LayerState,
    d_out: &Array2<f64>,
    heads: usize,
    grad: &mut EncoderLayer,
) -> Array2<f64> {
    let (len, hidden) = state.input.dim();
    let head_dim = hidden / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    let d_sum2 = layer_norm_backward(d_out, &state.ff_norm, &layer.ff_norm, &mut grad.ff_norm);
    let d_act = layer
        .ff_out
        .backward(state.ff_act.view(), d_sum2.view(), &mut grad.ff_out);
    let d_pre = d_act * &state.ff_pre.mapv(gelu_grad);
    let mut d_mid = layer
        .ff_in
        .backward(state.mid.view(), d_pre.view(), &mut grad.ff_in);
    d_mid += &d_sum2;

    let d_sum1 = layer_norm_backward(
        &d_mid,
        &state.attn_norm,
        &layer.attn_norm,
        &mut grad.attn_norm,
    );
    let d_context =
        layer
            .attn_out
            .backward(state.context.view(), d_sum1.view(), &mut grad.attn_out);

    let mut dq = Array2::zeros((len, hidden));
    let mut dk = Array2::zeros((len, hidden));
    let mut dv = Array2::zeros((len, hidden));
    for (head, p) in state.probs.iter().enumerate() {
        let cols = s![.., head * head_dim..(head + 1) * head_dim];
        let dc = d_context.slice(cols);
        let dp = dc.dot(&state.v.slice(cols).t());
        dv.slice_mut(cols).assign(&p.t().dot(&dc));
        let mut ds = dp;
        for (mut ds_row, p_row) in ds.rows_mut().into_iter().zip(p.rows()) {
            let dot = ds_row.dot(&p_row);
            Zip::from(&mut ds_row)
                .and(&p_row)
                .for_each(|d, &pv| *d = pv * (*d - dot) * scale);
        }
        dq.slice_mut(cols).assign(&ds.dot(&state.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&state.q.slice(cols)));
    }

    let mut dx = d_sum1;
    dx += &layer
        .query
        .backward(state.input.view(), dq.view(), &mut grad.query);
    dx += &layer
        .key
        .backward(state.input.view(), dk.view(), &mut grad.key);
    dx += &layer
        .value
        .backward(state.input.view(), dv.view(), &mut grad.value);
    dx
}

/// Runs the encoder over `ids`. Keys at positions `>= valid_len` are masked
/// out of every attention distribution.
pub fn encoder_forward(
    ids: &[u32],
    valid_len: usize,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<EncoderState> {
    let hidden = params.embedding.ncols();
    if ids.len() > params.position.nrows() {
        return Err(Error::Dimension(format!(
            "{} positions exceed the position table of {}",
            ids.len(),
            params.position.nrows()
        )));
    }
    if valid_len == 0 || valid_len > ids.len() {
        return Err(Error::Dimension(format!(
            "valid length {valid_len} for a sequence of {}",
            ids.len()
        )));
    }
    let vocab = params.embedding.nrows();
    let mut x = Array2::zeros((ids.len(), hidden));
    for (pos, (&id, mut row)) in ids.iter().zip(x.rows_mut()).enumerate() {
        if id as usize >= vocab {
            return Err(Error::VocabMismatch(format!(
                "token id {id} at position {pos} outside a vocabulary of {vocab}"
            )));
        }
        row.assign(&params.embedding.row(id as usize));
        row += &params.position.row(pos);
    }
    let mut layers = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let (out, state) = layer_forward(layer, x, valid_len, config.heads);
        layers.push(state);
        x = out;
    }
    Ok(EncoderState {
        ids: ids.to_vec(),
        layers,
        output: x,
    })
}

/// Back-propagates `∂L/∂H` through the encoder, accumulating into `grad`
/// (including the input-lookup share of the embedding gradient).
pub fn encoder_backward(
    state: &EncoderState,
    d_output: ArrayView2<'_, f64>,
    params: &ModelParams,
    config: &ModelConfig,
    grad: &mut Gradients,
) {
    let mut dx = d_output.to_owned();
    for ((layer, layer_state), layer_grad) in params
        .layers
        .iter()
        .zip(&state.layers)
        .zip(grad.layers.iter_mut())
        .rev()
    {
        dx = layer_backward(layer, layer_state, &dx, config.heads, layer_grad);
    }
    for (pos, (&id, row)) in state.ids.iter().zip(dx.rows()).enumerate() {
        let mut e = grad.embedding.row_mut(id as usize);
        e += &row;
        let mut p = grad.position.row_mut(pos);
        p += &row;
    }
}

/// `H = Encoder(X)` over the full (padded) sequence.
pub fn forward_encoder(
    tok: &TokenizedPair,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Array2<f64>> {
    if tok.len() > config.m_max {
        return Err(Error::TooLong {
            len: tok.len(),
            max: config.m_max,
        });
    }
    Ok(encoder_forward(&tok.ids, tok.valid_len(), params, config)?.output)
}
