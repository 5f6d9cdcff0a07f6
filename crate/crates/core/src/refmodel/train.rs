// SPDX-License-Identifier: MIT OR Apache-2.0

//! Fits the output head (final norm + unembedding) of a built model by
//! full-batch gradient descent on next-token cross-entropy. The blocks stay
//! at their seeded values, so `h^(L)` of each example is computed once.

use super::linalg::{layer_norm, softmax};
use super::model::{argmax_of, forward_full, Model, TokenSequence};
use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadFitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Fraction of examples whose argmax equals the target after fitting.
    pub accuracy: f64,
}

struct HeadGrads {
    loss: f64,
    unembedding: Vec<f64>,
    gain: Vec<f64>,
    bias: Vec<f64>,
}

fn head_grads(model: &Model, states: &[Vec<f64>], targets: &[u32]) -> HeadGrads {
    let d = model.hidden_dim();
    let v = model.vocab_size();
    let n = states.len() as f64;
    let mut out = HeadGrads {
        loss: 0.0,
        unembedding: vec![0.0; d * v],
        gain: vec![0.0; d],
        bias: vec![0.0; d],
    };
    for (h, &target) in states.iter().zip(targets) {
        let (normed, cache) = layer_norm(h, &model.final_gain, &model.final_bias);
        let logits = model.unembedding.left_mul(&normed);
        let mut g_logits = softmax(&logits);
        out.loss -= g_logits[target as usize].ln() / n;
        g_logits[target as usize] -= 1.0;
        for (i, &ni) in normed.iter().enumerate() {
            for (g, gl) in out.unembedding[i * v..(i + 1) * v].iter_mut().zip(&g_logits) {
                *g += ni * gl / n;
            }
        }
        let g_normed = model.unembedding.right_mul(&g_logits);
        for i in 0..d {
            out.gain[i] += g_normed[i] * cache.xhat[i] / n;
            out.bias[i] += g_normed[i] / n;
        }
    }
    out
}

pub fn fit_head(
    model: &Model,
    examples: &[(TokenSequence, u32)],
    steps: usize,
    learning_rate: f64,
) -> Result<(Model, HeadFitReport), ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if let Some(&(_, bad)) = examples.iter().find(|(_, t)| *t as usize >= model.vocab_size()) {
        return Err(ModelError::TokenOutOfVocab {
            token: bad,
            vocab: model.vocab_size(),
        });
    }
    let states: Vec<Vec<f64>> = examples
        .iter()
        .map(|(tokens, _)| {
            forward_full(model, tokens).map(|f| f.last_hidden(model.num_layers()).to_vec())
        })
        .collect::<Result<_, _>>()?;
    let targets: Vec<u32> = examples.iter().map(|(_, t)| *t).collect();

    let mut fitted = model.clone();
    let initial_loss = head_grads(&fitted, &states, &targets).loss;
    for _ in 0..steps {
        let g = head_grads(&fitted, &states, &targets);
        descend(&mut fitted.unembedding.data, &g.unembedding, learning_rate);
        descend(&mut fitted.final_gain, &g.gain, learning_rate);
        descend(&mut fitted.final_bias, &g.bias, learning_rate);
    }
    let prec = fitted.config.precision;
    prec.round_all(&mut fitted.unembedding.data);
    prec.round_all(&mut fitted.final_gain);
    prec.round_all(&mut fitted.final_bias);

    let final_loss = head_grads(&fitted, &states, &targets).loss;
    let correct = states
        .iter()
        .zip(&targets)
        .filter(|(h, &t)| argmax_of(&fitted.head(h).0) == t)
        .count();

    Ok((
        fitted,
        HeadFitReport {
            initial_loss,
            final_loss,
            accuracy: correct as f64 / states.len() as f64,
        },
    ))
}

fn descend(params: &mut [f64], grads: &[f64], lr: f64) {
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
}
