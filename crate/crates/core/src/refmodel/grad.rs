// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reverse-mode gradient of the suffix map `h^(l) ↦ log π(y_t)`.
//!
//! Under causal masking the earlier positions never read the last one, so
//! with their layer-`l` states frozen they are constants for every later
//! block. The gradient only has to flow back through the last position's
//! path: its query, its own key/value, and the residual stream.

use serde::{Deserialize, Serialize};

use super::linalg::{add_assign, gelu_grad, l2_norm, layer_norm_backward, softmax};
use super::model::{forward_full, KeyValue, Model, StepCache, TokenSequence};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientVector {
    pub layer: usize,
    pub target: u32,
    pub grad: Vec<f64>,
    /// L2 norm of `grad` (the saliency score).
    pub norm: f64,
}

impl GradientVector {
    pub fn new(layer: usize, target: u32, grad: Vec<f64>) -> Self {
        let norm = l2_norm(&grad);
        Self {
            layer,
            target,
            grad,
            norm,
        }
    }
}

pub(crate) struct SuffixTape {
    /// Per executed block: the frozen context and the last-position cache.
    steps: Vec<(usize, Vec<KeyValue>, StepCache)>,
}

/// Runs blocks `layer..L` (0-based indices) for the last position.
pub(crate) fn suffix_forward(
    model: &Model,
    prefix: &[Vec<f64>],
    last: &[f64],
    layer: usize,
) -> (Vec<f64>, SuffixTape) {
    let heads = model.config.num_heads;
    let mut context = prefix.to_vec();
    let mut x = last.to_vec();
    let mut steps = Vec::with_capacity(model.num_layers() - layer);
    for index in layer..model.num_layers() {
        let block = &model.blocks[index];
        let kvs: Vec<KeyValue> = context.iter().map(|c| block.key_value(c)).collect();
        let (mut out, cache) = block.step(&x, &kvs, heads);
        model.config.precision.round_all(&mut out);
        if index + 1 < model.num_layers() {
            context = model.run_block(index, &context);
        }
        steps.push((index, kvs, cache));
        x = out;
    }
    (x, SuffixTape { steps })
}

/// Gradient of one block step with respect to its input, holding the
/// context keys/values fixed.
fn step_backward(
    model: &Model,
    index: usize,
    context: &[KeyValue],
    cache: &StepCache,
    grad_out: &[f64],
) -> Vec<f64> {
    let block = &model.blocks[index];
    let heads = model.config.num_heads;
    let dim = grad_out.len();
    let head_dim = dim / heads;
    let scale = 1.0 / (head_dim as f64).sqrt();

    // MLP branch: out = mid + proj(gelu(fc(LN2(mid))))
    let g_act = block.w_proj.right_mul(grad_out);
    let g_pre: Vec<f64> = g_act
        .iter()
        .zip(&cache.pre_act)
        .map(|(g, &u)| g * gelu_grad(u))
        .collect();
    let g_norm2 = block.w_fc.right_mul(&g_pre);
    let mut g_mid = grad_out.to_vec();
    add_assign(&mut g_mid, &layer_norm_backward(&cache.ln2, &block.ln2_gain, &g_norm2));

    // Attention branch: mid = x + W_o · mix
    let g_mix = block.w_o.right_mul(&g_mid);
    let mut g_query = vec![0.0; dim];
    let mut g_key = vec![0.0; dim];
    let mut g_value = vec![0.0; dim];
    let n_ctx = context.len();
    for h in 0..heads {
        let span = h * head_dim..(h + 1) * head_dim;
        let p = &cache.probs[h];
        let gm = &g_mix[span.clone()];
        let values = context
            .iter()
            .map(|kv| &kv.value[span.clone()])
            .chain(std::iter::once(&cache.own.value[span.clone()]));
        let g_p: Vec<f64> = values.map(|v| super::linalg::dot(gm, v)).collect();
        let weighted: f64 = p.iter().zip(&g_p).map(|(a, b)| a * b).sum();
        let g_scores: Vec<f64> = p.iter().zip(&g_p).map(|(a, b)| a * (b - weighted)).collect();

        let keys = context
            .iter()
            .map(|kv| &kv.key[span.clone()])
            .chain(std::iter::once(&cache.own.key[span.clone()]));
        for (gs, k) in g_scores.iter().zip(keys) {
            for (gq, kk) in g_query[span.clone()].iter_mut().zip(k) {
                *gq += scale * gs * kk;
            }
        }
        let q = &cache.query[span.clone()];
        for (gk, qq) in g_key[span.clone()].iter_mut().zip(q) {
            *gk = scale * g_scores[n_ctx] * qq;
        }
        for (gv, m) in g_value[span.clone()].iter_mut().zip(gm) {
            *gv = p[n_ctx] * m;
        }
    }
    let mut g_norm1 = block.w_q.right_mul(&g_query);
    add_assign(&mut g_norm1, &block.w_k.right_mul(&g_key));
    add_assign(&mut g_norm1, &block.w_v.right_mul(&g_value));

    let mut g_x = g_mid;
    add_assign(&mut g_x, &layer_norm_backward(&cache.ln1, &block.ln1_gain, &g_norm1));
    g_x
}

/// Gradient of `log π(target)` with respect to the last-position state at
/// `layer`, given all positions' states at that layer.
pub fn suffix_gradient_from_states(
    model: &Model,
    layer_states: &[Vec<f64>],
    replacement: &[f64],
    layer: usize,
    target: u32,
) -> Result<GradientVector, ModelError> {
    model.check_layer(layer)?;
    if target as usize >= model.vocab_size() {
        return Err(ModelError::TokenOutOfVocab {
            token: target,
            vocab: model.vocab_size(),
        });
    }
    let d = model.hidden_dim();
    if replacement.len() != d {
        return Err(ModelError::DimensionMismatch {
            expected: d,
            actual: replacement.len(),
        });
    }
    if layer_states.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let prefix = &layer_states[..layer_states.len() - 1];
    let (last, tape) = suffix_forward(model, prefix, replacement, layer);

    // Head: logπ_y = z_y - logsumexp(z), z = LN_f(h) · W_U
    let (logits, norm_cache) = model.head(&last);
    let probs = softmax(&logits);
    let mut g_logits: Vec<f64> = probs.iter().map(|p| -p).collect();
    g_logits[target as usize] += 1.0;
    let g_normed = model.unembedding.right_mul(&g_logits);
    let mut grad = layer_norm_backward(&norm_cache, &model.final_gain, &g_normed);

    for (index, context, cache) in tape.steps.iter().rev() {
        grad = step_backward(model, *index, context, cache, &grad);
    }
    Ok(GradientVector::new(layer, target, grad))
}

/// `∇_h log π(target | h)` at the last position of `layer` for `tokens`.
pub fn suffix_gradient(
    model: &Model,
    tokens: &TokenSequence,
    layer: usize,
    target: u32,
) -> Result<GradientVector, ModelError> {
    model.check_layer(layer)?;
    let full = forward_full(model, tokens)?;
    let states = &full.layers[layer];
    suffix_gradient_from_states(model, states, states.last().expect("non-empty"), layer, target)
}
