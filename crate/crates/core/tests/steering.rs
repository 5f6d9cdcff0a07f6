// SPDX-License-Identifier: MIT OR Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use promptlens::refmodel::{build_model, Model, ModelConfig, Precision, TokenSequence};
use promptlens::steering::{default_depths, steer, steering_sweep};
use promptlens::target::Target;
use promptlens::taylor::{PromptPair, TaylorError};

fn toy() -> Model {
    build_model(ModelConfig {
        num_layers: 4,
        hidden_dim: 32,
        num_heads: 4,
        vocab_size: 64,
        max_seq_len: 32,
        init_seed: 3,
        precision: Precision::F64,
    })
    .unwrap()
}

fn random_pair(model: &Model, rng: &mut ChaCha8Rng) -> (TokenSequence, TokenSequence) {
    let mut gen = || {
        let len = rng.random_range(1..20);
        model.tokens((0..len).map(|_| rng.random_range(0..64)).collect()).unwrap()
    };
    (gen(), gen())
}

#[test]
fn final_layer_steering_is_exact() {
    let model = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let (a, b) = random_pair(&model, &mut rng);
        let r = steer(&model, &a, &b, 4, rng.random_range(0..64)).unwrap();
        assert!(r.steered < 1e-9, "{r:?}");
        assert_eq!(r.residual_delta_h, 0.0);
        assert!(r.baseline >= 0.0);
    }
}

#[test]
fn identical_prompts_have_nothing_to_steer() {
    let model = toy();
    let a = model.tokens(vec![4, 8, 15, 16, 23, 42]).unwrap();
    for l in 0..=4 {
        let r = steer(&model, &a, &a, l, 5).unwrap();
        assert_eq!((r.baseline, r.steered), (0.0, 0.0));
    }
}

#[test]
fn layer_zero_steering_only_swaps_the_last_embedding() {
    let model = toy();
    let a = model.tokens(vec![1, 2, 3]).unwrap();
    let b = model.tokens(vec![9, 9, 3]).unwrap();
    // Same last token and position: h^(0) agrees, so steering at 0 is a no-op.
    let r = steer(&model, &a, &b, 0, 6).unwrap();
    assert!((r.steered - r.baseline).abs() < 1e-12);
}

#[test]
fn sweep_averages_and_handles_duplicates() {
    let model = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (a, b) = random_pair(&model, &mut rng);
    let pair = PromptPair { first: a, second: b, target: Target::correct(12) };
    let depths = default_depths(4);
    let one = steering_sweep(&model, std::slice::from_ref(&pair), &depths).unwrap();
    let two = steering_sweep(&model, &[pair.clone(), pair.clone()], &depths).unwrap();
    for (x, y) in one.iter().zip(&two) {
        assert_eq!((x.mean_baseline, x.mean_steered), (y.mean_baseline, y.mean_steered));
        assert_eq!(y.n_pairs, 2);
    }
    let last = steering_sweep(&model, &[pair], &[4]).unwrap();
    assert!(last[0].mean_steered < 1e-9);
    assert_eq!(steering_sweep(&model, &[], &depths), Err(TaylorError::EmptyInput));
}
