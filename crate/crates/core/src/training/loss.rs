use ndarray::Array2;

use super::masking::MaskedInput;
use crate::error::{Error, Result};
use crate::exchange::ExchangeMatrix;
use crate::model::{
    cp_backward, cp_forward, encoder_backward, encoder_forward, mp_backward, mp_forward, Gradients,
    ModelConfig, ModelParams,
};

/// One masked pair together with its exchange matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedEntry {
    pub masked: MaskedInput,
    pub exchange: ExchangeMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_mp: f64,
    pub l_cp: f64,
    pub total: f64,
    pub masked_count: usize,
    pub aligned_masked_count: usize,
}

/// Per-instance sums of negative log-likelihoods; the cross-lingual sum
/// only covers masked positions with an alignment partner.
fn instance_loss(
    entry: &MaskedEntry,
    params: &ModelParams,
    config: &ModelConfig,
    lambda: f64,
    backward: Option<(&mut Gradients, f64)>,
) -> Result<LossBreakdown> {
    let input = &entry.masked.input;
    let valid = input.valid_len();
    let state = encoder_forward(&input.ids[..valid], valid, params, config)?;
    let h = &state.output;

    let mut out = LossBreakdown::default();
    let mut d_h = backward.as_ref().map(|_| Array2::zeros(h.raw_dim()));
    let mut grads = backward;
    for &(pos, label) in &entry.masked.labels {
        let mp = mp_forward(h.row(pos), params);
        out.l_mp -= mp.log_probs[label as usize];
        out.masked_count += 1;
        if let (Some((g, scale)), Some(d_h)) = (grads.as_mut(), d_h.as_mut()) {
            mp_backward(&mp, label, *scale, params, g, d_h.row_mut(pos));
        }
        let Some(partner) = entry.exchange.partner(pos) else {
            continue;
        };
        let cp = cp_forward(h.row(partner), params);
        out.l_cp -= cp.log_probs[label as usize];
        out.aligned_masked_count += 1;
        if lambda != 0.0 {
            if let (Some((g, scale)), Some(d_h)) = (grads.as_mut(), d_h.as_mut()) {
                cp_backward(&cp, label, lambda * *scale, params, g, d_h.row_mut(partner));
            }
        }
    }
    if let (Some((g, _)), Some(d_h)) = (grads, d_h) {
        encoder_backward(&state, d_h.view(), params, config, g);
    }
    out.total = out.l_mp + lambda * out.l_cp;
    if !out.total.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(out)
}

/// `L = L_mp + λ·L_cp` for one masked pair.
pub fn compute_loss(
    entry: &MaskedEntry,
    params: &ModelParams,
    config: &ModelConfig,
    lambda: f64,
) -> Result<LossBreakdown> {
    instance_loss(entry, params, config, lambda, None)
}

/// Batch-mean loss and its exact gradient with respect to every parameter.
pub fn loss_and_gradients(
    batch: &[MaskedEntry],
    params: &ModelParams,
    config: &ModelConfig,
    lambda: f64,
) -> Result<(LossBreakdown, Gradients)> {
    let mut grads = params.zeros_like();
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut total = LossBreakdown::default();
    for entry in batch {
        let l = instance_loss(entry, params, config, lambda, Some((&mut grads, scale)))?;
        total.l_mp += l.l_mp * scale;
        total.l_cp += l.l_cp * scale;
        total.masked_count += l.masked_count;
        total.aligned_masked_count += l.aligned_masked_count;
    }
    total.total = total.l_mp + lambda * total.l_cp;
    Ok((total, grads))
}

/// Batch-mean loss without gradients.
pub fn batch_loss(
    batch: &[MaskedEntry],
    params: &ModelParams,
    config: &ModelConfig,
    lambda: f64,
) -> Result<LossBreakdown> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut total = LossBreakdown::default();
    for entry in batch {
        let l = compute_loss(entry, params, config, lambda)?;
        total.l_mp += l.l_mp * scale;
        total.l_cp += l.l_cp * scale;
        total.masked_count += l.masked_count;
        total.aligned_masked_count += l.aligned_masked_count;
    }
    total.total = total.l_mp + lambda * total.l_cp;
    Ok(total)
}
