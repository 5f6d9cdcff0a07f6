// SPDX-License-Identifier: MIT OR Apache-2.0

//! Overwrites the last-position state of prompt A at one layer with prompt
//! B's, finishes A's forward pass, and compares against B's natural output.

use serde::{Deserialize, Serialize};

use crate::refmodel::{forward_full, suffix_logprobs, FullTrace, Model, TokenSequence};
use crate::taylor::{PromptPair, TaylorError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringResult {
    pub layer: usize,
    /// `|log π_B − log π_A|` without intervention.
    pub baseline: f64,
    /// `|log π_B − log π_{A steered}|`.
    pub steered: f64,
    pub reduction: f64,
    pub target: u32,
    /// `‖h_{A steered} − h_B‖` at `layer`; zero by construction.
    pub residual_delta_h: f64,
}

/// Mean baseline and steered magnitudes over pairs at one depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringSummary {
    pub layer: usize,
    pub mean_baseline: f64,
    pub mean_steered: f64,
    pub n_pairs: usize,
}

impl SteeringSummary {
    pub fn reduction(&self) -> f64 {
        self.mean_baseline - self.mean_steered
    }
}

/// `⌈L/4⌉, ⌈L/2⌉, ⌈3L/4⌉`.
pub fn default_depths(num_layers: usize) -> Vec<usize> {
    [1, 2, 3].iter().map(|q| (q * num_layers).div_ceil(4)).collect()
}

fn steer_full(
    model: &Model,
    a: &FullTrace,
    b: &FullTrace,
    layer: usize,
    target: u32,
) -> Result<SteeringResult, TaylorError> {
    model.check_layer(layer)?;
    let t = target as usize;
    if t >= model.vocab_size() {
        return Err(TaylorError::TokenOutOfVocab {
            token: target,
            vocab: model.vocab_size(),
        });
    }
    let lp_a = crate::refmodel::log_softmax(&a.logits)[t];
    let lp_b = crate::refmodel::log_softmax(&b.logits)[t];
    let h_b = b.last_hidden(layer);

    let mut states = a.layers[layer].clone();
    *states.last_mut().expect("non-empty") = h_b.to_vec();
    let residual_delta_h = crate::refmodel::l2_norm(
        &states
            .last()
            .expect("non-empty")
            .iter()
            .zip(h_b)
            .map(|(x, y)| x - y)
            .collect::<Vec<_>>(),
    );
    let lp_steered = suffix_logprobs(model, &states, h_b, layer)?[t];

    let baseline = (lp_b - lp_a).abs();
    let steered = (lp_b - lp_steered).abs();
    Ok(SteeringResult {
        layer,
        baseline,
        steered,
        reduction: baseline - steered,
        target,
        residual_delta_h,
    })
}

pub fn steer(
    model: &Model,
    tokens_a: &TokenSequence,
    tokens_b: &TokenSequence,
    layer: usize,
    target: u32,
) -> Result<SteeringResult, TaylorError> {
    let a = forward_full(model, tokens_a)?;
    let b = forward_full(model, tokens_b)?;
    steer_full(model, &a, &b, layer, target)
}

/// Steers every pair (A = `first`, B = `second`) at every depth and averages
/// per depth, in the order of `layers`.
pub fn steering_sweep(model: &Model, pairs: &[PromptPair], layers: &[usize]) -> Result<Vec<SteeringSummary>, TaylorError> {
    if pairs.is_empty() {
        return Err(TaylorError::EmptyInput);
    }
    let mut sums = vec![(0.0, 0.0); layers.len()];
    for pair in pairs {
        let a = forward_full(model, &pair.first)?;
        let b = forward_full(model, &pair.second)?;
        for (slot, &layer) in sums.iter_mut().zip(layers) {
            let r = steer_full(model, &a, &b, layer, pair.target.token)?;
            slot.0 += r.baseline;
            slot.1 += r.steered;
        }
    }
    let n = pairs.len() as f64;
    Ok(layers
        .iter()
        .zip(sums)
        .map(|(&layer, (b, s))| SteeringSummary {
            layer,
            mean_baseline: b / n,
            mean_steered: s / n,
            n_pairs: pairs.len(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depths_round_up() {
        assert_eq!(default_depths(4), vec![1, 2, 3]);
        assert_eq!(default_depths(6), vec![2, 3, 5]);
        assert_eq!(default_depths(1), vec![1, 1, 1]);
        assert_eq!(default_depths(24), vec![6, 12, 18]);
    }
}
