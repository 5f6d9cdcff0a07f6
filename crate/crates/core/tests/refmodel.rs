// SPDX-License-Identifier: MIT OR Apache-2.0

use promptlens::refmodel::{
    build_model, forward_full, forward_trace, layer_norm, softmax, suffix_gradient,
    suffix_logprob, Model, ModelConfig, ModelError, Precision,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(layers: usize, dim: usize, heads: usize, vocab: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        num_layers: layers,
        hidden_dim: dim,
        num_heads: heads,
        vocab_size: vocab,
        max_seq_len: 32,
        init_seed: seed,
        precision: Precision::F64,
    }
}

fn toy() -> Model {
    build_model(config(4, 32, 4, 64, 1)).unwrap()
}

fn random_tokens(rng: &mut ChaCha8Rng, model: &Model, len: usize) -> Vec<u32> {
    (0..len)
        .map(|_| rng.random_range(0..model.vocab_size() as u32))
        .collect()
}

/// Central difference of the suffix log-probability along coordinate `i`.
fn central_difference(model: &Model, states: &[Vec<f64>], layer: usize, target: u32, i: usize, step: f64) -> f64 {
    let h = states.last().unwrap();
    let mut plus = h.clone();
    let mut minus = h.clone();
    plus[i] += step;
    minus[i] -= step;
    let fp = suffix_logprob(model, states, &plus, layer, target).unwrap();
    let fm = suffix_logprob(model, states, &minus, layer, target).unwrap();
    (fp - fm) / (2.0 * step)
}

#[test]
fn same_seed_builds_identical_parameters() {
    let a = build_model(config(2, 8, 2, 16, 7)).unwrap();
    let b = build_model(config(2, 8, 2, 16, 7)).unwrap();
    assert_eq!(a.checksum(), b.checksum());
    let c = build_model(config(2, 8, 2, 16, 8)).unwrap();
    assert_ne!(a.checksum(), c.checksum());
}

#[test]
fn rejects_indivisible_heads() {
    let err = build_model(config(2, 7, 2, 16, 7)).unwrap_err();
    assert!(matches!(err, ModelError::InvalidConfig(_)));
}

#[test]
fn rejects_zero_dimensions_and_short_context() {
    assert!(build_model(config(0, 8, 2, 16, 1)).is_err());
    let mut c = config(1, 8, 2, 16, 1);
    c.max_seq_len = 1;
    assert!(build_model(c).is_err());
}

#[test]
fn golden_parameter_checksum() {
    let model = toy();
    let golden = include_str!("fixtures/toy_l4_d32_h4_v64_s1.sha256").trim();
    assert_eq!(model.checksum(), golden);
}

#[test]
fn rejects_bad_token_sequences() {
    let model = toy();
    assert_eq!(model.tokens(vec![]).unwrap_err(), ModelError::EmptySequence);
    assert!(matches!(
        model.tokens(vec![64]).unwrap_err(),
        ModelError::TokenOutOfVocab { token: 64, .. }
    ));
    assert!(matches!(
        model.tokens(vec![1; 33]).unwrap_err(),
        ModelError::SequenceTooLong { len: 33, max: 32 }
    ));
}

#[test]
fn logprobs_normalize() {
    let model = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for len in 1..10 {
        let tokens = model.tokens(random_tokens(&mut rng, &model, len)).unwrap();
        let trace = forward_trace(&model, &tokens, "p").unwrap();
        let total: f64 = trace.logprobs.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_eq!(trace.hidden.len(), 5);
    }
}

#[test]
fn f32_precision_normalizes_within_looser_tolerance() {
    let mut c = config(2, 16, 2, 32, 5);
    c.precision = Precision::F32;
    let model = build_model(c).unwrap();
    let trace = forward_trace(&model, &model.tokens(vec![1, 2, 3]).unwrap(), "p").unwrap();
    let total: f64 = trace.logprobs.iter().map(|v| v.exp()).sum();
    assert!((total - 1.0).abs() < 1e-5);
    assert!(trace.hidden[1].iter().all(|v| *v == (*v as f32) as f64));
}

#[test]
fn appending_a_token_leaves_earlier_positions_unchanged() {
    let model = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let base = random_tokens(&mut rng, &model, 7);
    let mut longer = base.clone();
    longer.push(5);
    let short = forward_full(&model, &model.tokens(base).unwrap()).unwrap();
    let long = forward_full(&model, &model.tokens(longer).unwrap()).unwrap();
    for (l, states) in short.layers.iter().enumerate() {
        for (t, h) in states.iter().enumerate() {
            for (x, y) in h.iter().zip(&long.layers[l][t]) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn forward_is_deterministic() {
    let model = toy();
    let tokens = model.tokens(vec![3, 1, 4, 1, 5]).unwrap();
    let a = forward_trace(&model, &tokens, "x").unwrap();
    let b = forward_trace(&model, &tokens, "x").unwrap();
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
}

#[test]
fn suffix_round_trips_at_every_layer() {
    let model = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let tokens = model.tokens(random_tokens(&mut rng, &model, 9)).unwrap();
    let full = forward_full(&model, &tokens).unwrap();
    let trace = forward_trace(&model, &tokens, "p").unwrap();
    for layer in 0..=model.num_layers() {
        let states = &full.layers[layer];
        for target in [0u32, 17, 63] {
            let lp = suffix_logprob(&model, states, states.last().unwrap(), layer, target).unwrap();
            assert!((lp - trace.logprobs[target as usize]).abs() < 1e-12, "layer {layer}");
        }
    }
}

#[test]
fn final_layer_suffix_reads_only_the_last_position() {
    let model = toy();
    let full = forward_full(&model, &model.tokens(vec![1, 2, 3, 4]).unwrap()).unwrap();
    let l = model.num_layers();
    let mut states = full.layers[l].clone();
    let h = states.last().unwrap().clone();
    let before = suffix_logprob(&model, &states, &h, l, 9).unwrap();
    for s in states.iter_mut().take(3) {
        s.iter_mut().for_each(|v| *v += 0.37);
    }
    let after = suffix_logprob(&model, &states, &h, l, 9).unwrap();
    assert_eq!(before, after);
}

#[test]
fn suffix_rejects_bad_arguments() {
    let model = toy();
    let full = forward_full(&model, &model.tokens(vec![1, 2]).unwrap()).unwrap();
    let states = &full.layers[0];
    assert!(matches!(
        suffix_logprob(&model, states, &states[1], 5, 0).unwrap_err(),
        ModelError::LayerOutOfRange { layer: 5, max: 4 }
    ));
    assert!(matches!(
        suffix_logprob(&model, states, &[0.0; 3], 0, 0).unwrap_err(),
        ModelError::DimensionMismatch { expected: 32, actual: 3 }
    ));
}

#[test]
fn gradient_matches_central_differences_on_every_layer() {
    let model = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let tokens = model.tokens(random_tokens(&mut rng, &model, 8)).unwrap();
    let full = forward_full(&model, &tokens).unwrap();
    let argmax = {
        let trace = forward_trace(&model, &tokens, "p").unwrap();
        trace.argmax()
    };
    for target in [argmax, rng.random_range(0..64)] {
        for layer in 0..=model.num_layers() {
            let g = suffix_gradient(&model, &tokens, layer, target).unwrap();
            let states = &full.layers[layer];
            for (i, gi) in g.grad.iter().enumerate() {
                if gi.abs() <= 1e-8 {
                    continue;
                }
                let fd = central_difference(&model, states, layer, target, i, 1e-4);
                let rel = (fd - gi).abs() / gi.abs();
                assert!(rel < 1e-5, "layer {layer} comp {i}: analytic {gi} fd {fd}");
            }
            assert!((g.norm - g.grad.iter().map(|v| v * v).sum::<f64>().sqrt()).abs() <= 1e-12 * g.norm.max(1.0));
        }
    }
}

#[test]
fn head_gradient_matches_closed_form() {
    // At layer L: ∇_h = LN'(h)ᵀ · W_U (e_y − π), with LN' the layer-norm
    // Jacobian written out explicitly.
    let model = toy();
    let tokens = model.tokens(vec![9, 8, 7, 6]).unwrap();
    let full = forward_full(&model, &tokens).unwrap();
    let l = model.num_layers();
    let h = full.last_hidden(l).to_vec();
    let target = 33u32;
    let d = h.len();

    let (normed, _) = layer_norm(&h, &model.final_gain, &model.final_bias);
    let logits: Vec<f64> = (0..model.vocab_size())
        .map(|v| (0..d).map(|i| normed[i] * model.unembedding.data[i * model.vocab_size() + v]).sum())
        .collect();
    let pi = softmax(&logits);
    let g_logits: Vec<f64> = (0..pi.len()).map(|v| f64::from(v as u32 == target) - pi[v]).collect();
    let g_normed: Vec<f64> = (0..d)
        .map(|i| (0..pi.len()).map(|v| model.unembedding.data[i * pi.len() + v] * g_logits[v]).sum())
        .collect();

    let n = d as f64;
    let mean = h.iter().sum::<f64>() / n;
    let var = h.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sigma = (var + 1e-5).sqrt();
    // J[j][i] = gain_j / sigma * (δ_ij − 1/n − xhat_j xhat_i / n)
    let xhat: Vec<f64> = h.iter().map(|x| (x - mean) / sigma).collect();
    let expected: Vec<f64> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| {
                    let delta = f64::from(i == j);
                    g_normed[j] * model.final_gain[j] / sigma * (delta - 1.0 / n - xhat[j] * xhat[i] / n)
                })
                .sum()
        })
        .collect();

    let g = suffix_gradient(&model, &tokens, l, target).unwrap();
    for (a, b) in g.grad.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
