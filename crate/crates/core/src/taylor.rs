// SPDX-License-Identifier: MIT OR Apache-2.0

//! First-order expansion terms between two prompts and their per-layer
//! aggregation.
//!
//! The expansion point is always the first prompt of a pair (`h_0`); the
//! gradient is taken there. [`Direction::Symmetrized`] averages the two
//! expansion points and is an extension, not the default.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::refmodel::{
    forward_full, l2_norm, log_softmax, suffix_gradient_from_states, suffix_logprobs,
    FullTrace, GradientVector, LayerTrace, Model, ModelError, TokenSequence,
};
use crate::target::{Target, TargetKind};

#[derive(Debug, Error, PartialEq)]
pub enum TaylorError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("layer {layer} not present (traces have {available} hidden states)")]
    LayerMismatch { layer: usize, available: usize },
    #[error("hidden dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("token {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { token: u32, vocab: usize },
    #[error("traces have different vocabulary sizes: {a} vs {b}")]
    VocabMismatch { a: usize, b: usize },
    #[error("no prompt pairs to aggregate")]
    EmptyInput,
    #[error("gradient for layer {layer} is missing from trace {prompt_id}")]
    MissingGradient { prompt_id: String, layer: usize },
    #[error("layer counts differ across pairs: {a} vs {b}")]
    InconsistentDepth { a: usize, b: usize },
}

/// All expansion terms for one prompt pair at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostic {
    pub layer: usize,
    pub delta_h_norm: f64,
    pub grad_norm: f64,
    /// `gᵀ Δh`
    pub first_order: f64,
    /// `‖g‖ · ‖Δh‖`
    pub upper_bound: f64,
    /// `log π_B(y_t) − log π_A(y_t)`
    pub delta_logprob: f64,
    /// `Δ log π − gᵀ Δh`
    pub residual: f64,
    pub target: u32,
    pub target_kind: TargetKind,
}

impl PairDiagnostic {
    /// Assembles the diagnostic from a gradient at `h_a` and the two
    /// target log-probabilities.
    pub fn from_terms(
        layer: usize,
        grad: &[f64],
        h_a: &[f64],
        h_b: &[f64],
        logprob_a: f64,
        logprob_b: f64,
        target: Target,
    ) -> Self {
        let delta: Vec<f64> = h_b.iter().zip(h_a).map(|(b, a)| b - a).collect();
        let delta_h_norm = l2_norm(&delta);
        let grad_norm = l2_norm(grad);
        let first_order: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
        let delta_logprob = logprob_b - logprob_a;
        Self {
            layer,
            delta_h_norm,
            grad_norm,
            first_order,
            upper_bound: grad_norm * delta_h_norm,
            delta_logprob,
            residual: delta_logprob - first_order,
            target: target.token,
            target_kind: target.kind,
        }
    }
}

/// `h_B^(l) − h_A^(l)` at the last position and its L2 norm.
pub fn delta_h(a: &LayerTrace, b: &LayerTrace, layer: usize) -> Result<(Vec<f64>, f64), TaylorError> {
    let available = a.hidden.len().min(b.hidden.len());
    if layer >= available {
        return Err(TaylorError::LayerMismatch { layer, available });
    }
    let (ha, hb) = (&a.hidden[layer], &b.hidden[layer]);
    if ha.len() != hb.len() {
        return Err(TaylorError::DimensionMismatch {
            a: ha.len(),
            b: hb.len(),
        });
    }
    let delta: Vec<f64> = hb.iter().zip(ha).map(|(y, x)| y - x).collect();
    let norm = l2_norm(&delta);
    Ok((delta, norm))
}

/// `log π_B(y_t) − log π_A(y_t)`.
pub fn delta_logprob(a: &LayerTrace, b: &LayerTrace, target: u32) -> Result<f64, TaylorError> {
    if a.logprobs.len() != b.logprobs.len() {
        return Err(TaylorError::VocabMismatch {
            a: a.logprobs.len(),
            b: b.logprobs.len(),
        });
    }
    let t = target as usize;
    if t >= a.logprobs.len() {
        return Err(TaylorError::TokenOutOfVocab {
            token: target,
            vocab: a.logprobs.len(),
        });
    }
    Ok(b.logprobs[t] - a.logprobs[t])
}

fn target_logprob(full: &FullTrace, target: u32) -> f64 {
    log_softmax(&full.logits)[target as usize]
}

fn check_target(model: &Model, target: u32) -> Result<(), TaylorError> {
    if target as usize >= model.vocab_size() {
        return Err(TaylorError::TokenOutOfVocab {
            token: target,
            vocab: model.vocab_size(),
        });
    }
    Ok(())
}

fn gradient_at(model: &Model, full: &FullTrace, layer: usize, target: u32) -> Result<GradientVector, ModelError> {
    let states = &full.layers[layer];
    suffix_gradient_from_states(model, states, states.last().expect("non-empty"), layer, target)
}

/// Expansion terms for a real prompt pair at `layer`, expanding at prompt A.
pub fn pair_diagnostic(
    model: &Model,
    tokens_a: &TokenSequence,
    tokens_b: &TokenSequence,
    layer: usize,
    target: Target,
) -> Result<PairDiagnostic, TaylorError> {
    check_target(model, target.token)?;
    let full_a = forward_full(model, tokens_a)?;
    let full_b = forward_full(model, tokens_b)?;
    diagnostic_from_full(model, &full_a, &full_b, layer, target, Direction::FromFirst)
}

/// Which prompt(s) serve as the expansion point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Expand at the first prompt of the pair.
    #[default]
    FromFirst,
    /// Average the gradient terms of both expansion points (extension).
    Symmetrized,
}

fn diagnostic_from_full(
    model: &Model,
    full_a: &FullTrace,
    full_b: &FullTrace,
    layer: usize,
    target: Target,
    direction: Direction,
) -> Result<PairDiagnostic, TaylorError> {
    model.check_layer(layer)?;
    let h_a = full_a.last_hidden(layer);
    let h_b = full_b.last_hidden(layer);
    let lp_a = target_logprob(full_a, target.token);
    let lp_b = target_logprob(full_b, target.token);
    let g_a = gradient_at(model, full_a, layer, target.token)?;
    match direction {
        Direction::FromFirst => Ok(PairDiagnostic::from_terms(layer, &g_a.grad, h_a, h_b, lp_a, lp_b, target)),
        Direction::Symmetrized => {
            let g_b = gradient_at(model, full_b, layer, target.token)?;
            Ok(symmetrize(
                PairDiagnostic::from_terms(layer, &g_a.grad, h_a, h_b, lp_a, lp_b, target),
                PairDiagnostic::from_terms(layer, &g_b.grad, h_b, h_a, lp_b, lp_a, target),
            ))
        }
    }
}

/// Combines the A→B and B→A diagnostics, orienting both as A→B.
fn symmetrize(forward: PairDiagnostic, backward: PairDiagnostic) -> PairDiagnostic {
    // Seen from A, the reverse expansion's first-order term changes sign.
    let first_order = 0.5 * (forward.first_order - backward.first_order);
    PairDiagnostic {
        grad_norm: 0.5 * (forward.grad_norm + backward.grad_norm),
        first_order,
        upper_bound: 0.5 * (forward.upper_bound + backward.upper_bound),
        residual: forward.delta_logprob - first_order,
        ..forward
    }
}

/// Expansion terms when `h_1 = h_0 + Δh` is constructed directly at the last
/// position of prompt A (other positions unchanged).
pub fn synthetic_diagnostic(
    model: &Model,
    tokens: &TokenSequence,
    layer: usize,
    target: Target,
    delta: &[f64],
) -> Result<PairDiagnostic, TaylorError> {
    check_target(model, target.token)?;
    let full = forward_full(model, tokens)?;
    synthetic_from_full(model, &full, layer, target, delta)
}

pub(crate) fn synthetic_from_full(
    model: &Model,
    full: &FullTrace,
    layer: usize,
    target: Target,
    delta: &[f64],
) -> Result<PairDiagnostic, TaylorError> {
    model.check_layer(layer)?;
    let states = &full.layers[layer];
    let h0 = full.last_hidden(layer);
    if delta.len() != h0.len() {
        return Err(TaylorError::DimensionMismatch {
            a: h0.len(),
            b: delta.len(),
        });
    }
    let h1: Vec<f64> = h0.iter().zip(delta).map(|(a, d)| a + d).collect();
    let lp0 = suffix_logprobs(model, states, h0, layer)?[target.token as usize];
    let lp1 = suffix_logprobs(model, states, &h1, layer)?[target.token as usize];
    let g = gradient_at(model, full, layer, target.token)?;
    Ok(PairDiagnostic::from_terms(layer, &g.grad, h0, &h1, lp0, lp1, target))
}

/// Diagnostic from externally produced traces: `grad_a` must be the gradient
/// at trace A's `h^(layer)`.
pub fn diagnostic_from_traces(
    a: &LayerTrace,
    b: &LayerTrace,
    grad_a: &GradientVector,
    target: Target,
) -> Result<PairDiagnostic, TaylorError> {
    let layer = grad_a.layer;
    delta_h(a, b, layer)?;
    if grad_a.grad.len() != a.hidden[layer].len() {
        return Err(TaylorError::DimensionMismatch {
            a: a.hidden[layer].len(),
            b: grad_a.grad.len(),
        });
    }
    delta_logprob(a, b, target.token)?;
    let t = target.token as usize;
    Ok(PairDiagnostic::from_terms(
        layer,
        &grad_a.grad,
        &a.hidden[layer],
        &b.hidden[layer],
        a.logprobs[t],
        b.logprobs[t],
        target,
    ))
}

/// One prompt pair with its resolved target token.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPair {
    pub first: TokenSequence,
    pub second: TokenSequence,
    pub target: Target,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Sums in slice order so results do not depend on scheduling.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Aggregates of every diagnostic field at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub delta_h_norm: Stat,
    pub grad_norm: Stat,
    pub first_order: Stat,
    pub upper_bound: Stat,
    pub delta_logprob: Stat,
    pub abs_delta_logprob: Stat,
    pub residual: Stat,
}

impl LayerSummary {
    pub fn from_diagnostics(layer: usize, diags: &[&PairDiagnostic]) -> Self {
        let field = |f: fn(&PairDiagnostic) -> f64| Stat::of(&diags.iter().map(|d| f(d)).collect::<Vec<_>>());
        Self {
            layer,
            delta_h_norm: field(|d| d.delta_h_norm),
            grad_norm: field(|d| d.grad_norm),
            first_order: field(|d| d.first_order),
            upper_bound: field(|d| d.upper_bound),
            delta_logprob: field(|d| d.delta_logprob),
            abs_delta_logprob: field(|d| d.delta_logprob.abs()),
            residual: field(|d| d.residual),
        }
    }
}

/// Per-layer curves averaged over prompt pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub model_id: String,
    pub dataset_id: String,
    pub n_pairs: usize,
    /// One entry per layer `0..=L`.
    pub layers: Vec<LayerSummary>,
}

impl SensitivityReport {
    /// Aggregates `per_pair[p][l]` (pair-major) over pairs for every layer.
    pub fn from_diagnostics(
        model_id: impl Into<String>,
        dataset_id: impl Into<String>,
        per_pair: &[Vec<PairDiagnostic>],
    ) -> Result<Self, TaylorError> {
        let first = per_pair.first().ok_or(TaylorError::EmptyInput)?;
        let depth = first.len();
        if let Some(bad) = per_pair.iter().find(|p| p.len() != depth) {
            return Err(TaylorError::InconsistentDepth { a: depth, b: bad.len() });
        }
        let layers = (0..depth)
            .map(|l| {
                let column: Vec<&PairDiagnostic> = per_pair.iter().map(|p| &p[l]).collect();
                LayerSummary::from_diagnostics(column[0].layer, &column)
            })
            .collect();
        Ok(Self {
            model_id: model_id.into(),
            dataset_id: dataset_id.into(),
            n_pairs: per_pair.len(),
            layers,
        })
    }

    /// Mean upper bound over layers (uniform weighting).
    pub fn mean_upper_bound(&self) -> f64 {
        if self.layers.is_empty() {
            return 0.0;
        }
        self.layers.iter().map(|l| l.upper_bound.mean).sum::<f64>() / self.layers.len() as f64
    }
}

/// Diagnostics for every layer `0..=L` of one pair.
pub fn pair_profile(model: &Model, pair: &PromptPair, direction: Direction) -> Result<Vec<PairDiagnostic>, TaylorError> {
    check_target(model, pair.target.token)?;
    let full_a = forward_full(model, &pair.first)?;
    let full_b = forward_full(model, &pair.second)?;
    (0..=model.num_layers())
        .map(|l| diagnostic_from_full(model, &full_a, &full_b, l, pair.target, direction))
        .collect()
}

/// Per-layer aggregation of pair diagnostics on the reference model.
pub fn layer_profile(
    model: &Model,
    pairs: &[PromptPair],
    dataset_id: &str,
    direction: Direction,
) -> Result<SensitivityReport, TaylorError> {
    if pairs.is_empty() {
        return Err(TaylorError::EmptyInput);
    }
    let per_pair = pairs
        .iter()
        .map(|p| pair_profile(model, p, direction))
        .collect::<Result<Vec<_>, _>>()?;
    SensitivityReport::from_diagnostics(model.model_id(), dataset_id, &per_pair)
}

/// A pair of external traces; `first` must carry gradients for every layer.
#[derive(Debug, Clone)]
pub struct TracePair<'a> {
    pub first: &'a LayerTrace,
    pub first_gradients: &'a [GradientVector],
    pub second: &'a LayerTrace,
    pub target: Target,
}

/// Per-layer aggregation over externally supplied traces.
pub fn layer_profile_from_traces(pairs: &[TracePair<'_>], dataset_id: &str) -> Result<SensitivityReport, TaylorError> {
    let first = pairs.first().ok_or(TaylorError::EmptyInput)?;
    let per_pair = pairs
        .iter()
        .map(|p| {
            (0..p.first.hidden.len())
                .map(|l| {
                    let g = p
                        .first_gradients
                        .iter()
                        .find(|g| g.layer == l && g.target == p.target.token)
                        .ok_or_else(|| TaylorError::MissingGradient {
                            prompt_id: p.first.prompt_id.clone(),
                            layer: l,
                        })?;
                    diagnostic_from_traces(p.first, p.second, g, p.target)
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    SensitivityReport::from_diagnostics(first.first.model_id.clone(), dataset_id, &per_pair)
}
