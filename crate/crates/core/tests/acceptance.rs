// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance checks on the reference model. Prints one PASS/FAIL line per
//! criterion and exits nonzero if any fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use promptlens::dataset::{encode_prompt, toy_dataset};
use promptlens::metrics::{
    anova_contributions, bound_pss_fit, intra_class, pss, unit_distance, CorrectnessMatrix, FeatureSet, LogitTable,
};
use promptlens::perturb::{orthographic, replay, template_variants, typo, TemplateFamily};
use promptlens::refmodel::{
    build_model, fit_head, forward_full, suffix_gradient, suffix_gradient_from_states, suffix_logprob, GradientVector,
    Model, ModelConfig, Precision, TokenSequence, Tokenizer,
};
use promptlens::steering::{default_depths, steer, steering_sweep};
use promptlens::target::Target;
use promptlens::taylor::{pair_diagnostic, synthetic_diagnostic, PromptPair};
use promptlens::traceio::{decode_trace, encode_trace, TraceBundle, TraceIoError};

type Outcome = Result<String, String>;

fn toy(seed: u64) -> Model {
    build_model(ModelConfig {
        num_layers: 4,
        hidden_dim: 32,
        num_heads: 4,
        vocab_size: 64,
        max_seq_len: 32,
        init_seed: seed,
        precision: Precision::F64,
    })
    .unwrap()
}

fn random_tokens(model: &Model, rng: &mut ChaCha8Rng) -> TokenSequence {
    let len = rng.random_range(1..=24);
    model.tokens((0..len).map(|_| rng.random_range(0..64)).collect()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let model = toy(1);
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..4 {
        let tokens = random_tokens(&model, &mut rng);
        let full = forward_full(&model, &tokens).unwrap();
        let target = rng.random_range(0..64);
        for layer in 0..=4 {
            let states = &full.layers[layer];
            let g = suffix_gradient(&model, &tokens, layer, target).unwrap();
            for (i, &gi) in g.grad.iter().enumerate() {
                if gi.abs() <= 1e-8 {
                    continue;
                }
                let mut plus = states.last().unwrap().clone();
                let mut minus = plus.clone();
                plus[i] += 1e-4;
                minus[i] -= 1e-4;
                let fd = (suffix_logprob(&model, states, &plus, layer, target).unwrap()
                    - suffix_logprob(&model, states, &minus, layer, target).unwrap())
                    / 2e-4;
                worst = worst.max((fd - gi).abs() / gi.abs());
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-5 && secs < 10.0,
        format!("max relative error {worst:.2e} over {checked} components, {secs:.2} s"),
    )
}

fn residual_order() -> Outcome {
    let model = toy(2);
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let eps = [1e-1, 1e-2, 1e-3];
    let mut good = 0;
    let mut slopes = Vec::new();
    for _ in 0..100 {
        let tokens = random_tokens(&model, &mut rng);
        let layer = rng.random_range(0..=4);
        let target = rng.random_range(0..64);
        let full = forward_full(&model, &tokens).unwrap();
        let states = &full.layers[layer];
        let h0 = states.last().unwrap();
        let g = suffix_gradient_from_states(&model, states, h0, layer, target).unwrap();
        let lp0 = suffix_logprob(&model, states, h0, layer, target).unwrap();
        let mut u: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= n);
        let gu: f64 = g.grad.iter().zip(&u).map(|(a, b)| a * b).sum();
        let logs: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| {
                let h1: Vec<f64> = h0.iter().zip(&u).map(|(a, b)| a + e * b).collect();
                let lp1 = suffix_logprob(&model, states, &h1, layer, target).unwrap();
                (e.log10(), (lp1 - lp0 - e * gu).abs().log10())
            })
            .collect();
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        slopes.push(slope);
        if slope >= 1.9 {
            good += 1;
        }
    }
    slopes.sort_by(f64::total_cmp);
    check(good >= 95, format!("{good}/100 draws with slope >= 1.9 (median {:.3})", slopes[50]))
}

fn cauchy_schwarz() -> Outcome {
    let model = toy(3);
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let a = random_tokens(&model, &mut rng);
        let b = random_tokens(&model, &mut rng);
        let layer = rng.random_range(0..=4);
        let d = pair_diagnostic(&model, &a, &b, layer, Target::correct(rng.random_range(0..64))).unwrap();
        worst_gap = worst_gap.max(d.first_order.abs() - d.upper_bound);
    }
    let mut worst_rel = 0.0f64;
    for _ in 0..200 {
        let a = random_tokens(&model, &mut rng);
        let layer = rng.random_range(0..=4);
        let target = rng.random_range(0..64);
        let g = suffix_gradient(&model, &a, layer, target).unwrap();
        let c = rng.random_range(-2.0..2.0);
        let delta: Vec<f64> = g.grad.iter().map(|x| c * x).collect();
        let d = synthetic_diagnostic(&model, &a, layer, Target::correct(target), &delta).unwrap();
        if d.upper_bound > 0.0 {
            worst_rel = worst_rel.max((d.first_order.abs() - d.upper_bound).abs() / d.upper_bound);
        }
    }
    check(
        worst_gap <= 1e-9 && worst_rel <= 1e-9,
        format!("max |g.dh| - bound = {worst_gap:.2e} on 10000 pairs; colinear relative gap {worst_rel:.2e}"),
    )
}

/// Head fitted so every template variant of a toy item predicts its gold
/// letter.
fn trained_toy() -> (Model, Vec<PromptPair>, f64) {
    let tok = Tokenizer::builtin();
    let base = build_model(ModelConfig {
        num_layers: 4,
        hidden_dim: 32,
        num_heads: 4,
        vocab_size: tok.vocab_size(),
        max_seq_len: 128,
        init_seed: 7,
        precision: Precision::F64,
    })
    .unwrap();
    let templates = template_variants(TemplateFamily::Meaning12).unwrap();
    let items = toy_dataset();
    let mut examples = Vec::new();
    let mut pairs = Vec::new();
    for item in &items {
        let gold = tok.option_letter(item.answer_index).unwrap();
        let encoded: Vec<TokenSequence> = templates
            .iter()
            .map(|t| encode_prompt(&tok, &base, &item.render(t).unwrap()).unwrap())
            .collect();
        for seq in &encoded {
            examples.push((seq.clone(), gold));
        }
        for second in &encoded[1..6] {
            pairs.push(PromptPair { first: encoded[0].clone(), second: second.clone(), target: Target::correct(gold) });
        }
    }
    let (model, report) = fit_head(&base, &examples, 200, 0.5).unwrap();
    (model, pairs, report.accuracy)
}

fn steering() -> Outcome {
    let model = toy(4);
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let mut worst_final = 0.0f64;
    for _ in 0..200 {
        let a = random_tokens(&model, &mut rng);
        let b = random_tokens(&model, &mut rng);
        worst_final = worst_final.max(steer(&model, &a, &b, 4, rng.random_range(0..64)).unwrap().steered);
    }
    let (trained, pairs, accuracy) = trained_toy();
    let depths = default_depths(trained.num_layers());
    let sweep = steering_sweep(&trained, &pairs, &depths).unwrap();
    let reduced = sweep.iter().all(|s| s.mean_steered < s.mean_baseline);
    let detail: Vec<String> = sweep
        .iter()
        .map(|s| format!("l={} {:.4}->{:.4}", s.layer, s.mean_baseline, s.mean_steered))
        .collect();
    check(
        worst_final < 1e-9 && reduced && pairs.len() == 100,
        format!(
            "final layer max {worst_final:.1e}; trained toy (fit accuracy {accuracy:.2}, {} pairs) {}",
            pairs.len(),
            detail.join(", ")
        ),
    )
}

fn pss_by_pairs(rows: &[Vec<u8>]) -> f64 {
    let per: Vec<f64> = rows
        .iter()
        .map(|r| {
            let mut s = 0.0;
            let mut c = 0.0;
            for i in 0..r.len() {
                for j in i + 1..r.len() {
                    s += (r[i] as f64 - r[j] as f64).abs();
                    c += 1.0;
                }
            }
            s / c
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

fn pss_oracle() -> Outcome {
    let mut exhaustive = 0;
    let mut mismatches = 0;
    for n in 1..=2usize {
        for p in 2..=3usize {
            for bits in 0u32..(1 << (n * p)) {
                let rows: Vec<Vec<u8>> =
                    (0..n).map(|i| (0..p).map(|j| ((bits >> (i * p + j)) & 1) as u8).collect()).collect();
                if pss(&CorrectnessMatrix::from_rows(rows.clone()).unwrap()).pss != pss_by_pairs(&rows) {
                    mismatches += 1;
                }
                exhaustive += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..1000 {
        let n = rng.random_range(1..=4);
        let p = rng.random_range(2..=5);
        let rows: Vec<Vec<u8>> = (0..n).map(|_| (0..p).map(|_| rng.random_range(0..2)).collect()).collect();
        if pss(&CorrectnessMatrix::from_rows(rows.clone()).unwrap()).pss != pss_by_pairs(&rows) {
            mismatches += 1;
        }
    }
    let hand = [
        (vec![vec![1, 1, 1]], 0.0),
        (vec![vec![1, 0]], 1.0),
        (vec![vec![1, 0, 0]], 2.0 / 3.0),
    ]
    .into_iter()
    .all(|(rows, want)| pss(&CorrectnessMatrix::from_rows(rows).unwrap()).pss == want);
    check(
        mismatches == 0 && hand,
        format!("{exhaustive} exhaustive + 1000 random matrices, {mismatches} mismatches; hand values {hand}"),
    )
}

fn compactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut worst_identity = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..1000 {
        let dim = rng.random_range(2..16);
        let mut unit = || {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let (a, b) = (unit(), unit());
        let cos: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        worst_identity = worst_identity.max((unit_distance(&a, &b) - (2.0 - 2.0 * cos).max(0.0).sqrt()).abs());

        let c = unit();
        let labels: Vec<String> = ["p", "p", "p"].map(String::from).to_vec();
        let base = intra_class(&FeatureSet { vectors: vec![a.clone(), b.clone(), c.clone()], labels: labels.clone() })
            .unwrap()
            .intra;
        let s: Vec<f64> = (0..3).map(|_| rng.random_range(1e-3..1e3)).collect();
        let scaled = vec![
            a.iter().map(|x| x * s[0]).collect(),
            b.iter().map(|x| x * s[1]).collect(),
            c.iter().map(|x| x * s[2]).collect(),
        ];
        let other = intra_class(&FeatureSet { vectors: scaled, labels }).unwrap().intra;
        worst_scale = worst_scale.max((base - other).abs());
    }
    let pair = |a: Vec<f64>, b: Vec<f64>| {
        intra_class(&FeatureSet { vectors: vec![a, b], labels: vec!["c".into(), "c".into()] }).unwrap().intra
    };
    let trivial = pair(vec![1.0, 2.0], vec![1.0, 2.0]).abs() < 1e-9
        && (pair(vec![1.0, 0.0], vec![0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-9
        && (pair(vec![1.0, 0.0], vec![-1.0, 0.0]) - 2.0).abs() < 1e-9;
    check(
        worst_identity < 1e-9 && worst_scale < 1e-9 && trivial,
        format!("identity error {worst_identity:.1e}, rescaling error {worst_scale:.1e}, trivial cases {trivial}"),
    )
}

fn design_matrix_ss(rows: &[Vec<f64>]) -> [f64; 4] {
    let (nt, nq) = (rows.len(), rows[0].len());
    let n = nt * nq;
    let y = DVector::from_iterator(n, rows.iter().flatten().copied());
    let rss = |cols: usize| {
        let x = DMatrix::from_fn(n, cols, |r, c| {
            let (t, q) = (r / nq, r % nq);
            match c {
                0 => 1.0,
                c if c < nt => (t == c) as u8 as f64,
                c => (q == c - nt + 1) as u8 as f64,
            }
        });
        let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap();
        (&y - &x * beta).norm_squared()
    };
    let (r0, rt, rtq) = (rss(1), rss(nt), rss(nt + nq - 1));
    [r0 - rt, rt - rtq, rtq, r0]
}

fn anova() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut worst_identity = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for _ in 0..1000 {
        let nt = rng.random_range(2..=8);
        let nq = rng.random_range(2..=10);
        let rows: Vec<Vec<f64>> = (0..nt).map(|_| (0..nq).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let r = anova_contributions(&LogitTable::from_rows(rows.clone()).unwrap());
        worst_identity = worst_identity.max((r.ss_template + r.ss_question + r.ss_residual - r.ss_total).abs() / r.ss_total);
        let oracle = design_matrix_ss(&rows);
        for (got, want) in [r.ss_template, r.ss_question, r.ss_residual, r.ss_total].iter().zip(oracle) {
            worst_oracle = worst_oracle.max((got - want).abs() / r.ss_total);
        }
    }
    let a = [0.3, -1.2, 2.5, 0.0];
    let template_only: Vec<Vec<f64>> = a.iter().map(|&x| vec![x; 5]).collect();
    let share = anova_contributions(&LogitTable::from_rows(template_only).unwrap()).template_share;
    check(
        worst_identity < 1e-8 && worst_oracle < 1e-8 && (share - 1.0).abs() < 1e-9,
        format!(
            "identity error {worst_identity:.1e}, design-matrix error {worst_oracle:.1e}, template-only share {share}"
        ),
    )
}

fn letter_runs(s: &str) -> Vec<&str> {
    s.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()).collect()
}

fn perturbations() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(800);
    let vocab = ["answer", "the", "Question", "AI", "a", "of", "options", "café", "Please", "x", "respond"];
    let seps = [" ", " ", ". ", ", ", "\n ", ": ", " (", ") "];
    let mut failures = Vec::new();
    for run in 0..10_000u64 {
        let n = rng.random_range(0..20);
        let mut prompt = String::new();
        for _ in 0..n {
            prompt.push_str(vocab[rng.random_range(0..vocab.len())]);
            prompt.push_str(seps[rng.random_range(0..seps.len())]);
        }
        let k = rng.random_range(1..=4);
        let seed = rng.random::<u64>();

        let t = typo(&prompt, k, seed);
        let (before, after) = (letter_runs(&prompt), letter_runs(&t.text));
        let eligible = before.iter().filter(|w| w.chars().count() >= 3).count();
        let touched = before.iter().zip(&after).filter(|(a, b)| a != b).count();
        if before.len() != after.len() || touched != k.min(eligible) {
            failures.push(format!("run {run}: typo touched {touched}, expected {}", k.min(eligible)));
        }
        let o = orthographic(&prompt, k, seed);
        let letters = |s: &str| s.chars().filter(|c| c.is_alphabetic()).flat_map(char::to_lowercase).collect::<String>();
        if letters(&prompt) != letters(&o.text) {
            failures.push(format!("run {run}: orthographic changed letters"));
        }
        if replay(&prompt, &t.edit_log).ok().as_deref() != Some(t.text.as_str())
            || replay(&prompt, &o.edit_log).ok().as_deref() != Some(o.text.as_str())
        {
            failures.push(format!("run {run}: replay mismatch"));
        }
        if typo(&prompt, k, seed).text != t.text || orthographic(&prompt, k, seed).text != o.text {
            failures.push(format!("run {run}: nondeterministic"));
        }
    }
    check(
        failures.is_empty(),
        format!("10000 runs, {} failures{}", failures.len(), failures.first().map_or(String::new(), |f| format!(" ({f})"))),
    )
}

fn correlation() -> Outcome {
    let line: Vec<(f64, f64)> = (0..7).map(|i| (0.1 + 0.37 * i as f64, 2.0 * (0.1 + 0.37 * i as f64) + 1.0)).collect();
    let f = bound_pss_fit(&line).unwrap();
    let exact = (f.slope - 2.0).abs() < 1e-12 && (f.pearson_r - 1.0).abs() < 1e-12;
    // Coordinates are multiples of 1/64, so the covariance formula can be
    // evaluated exactly in integers: slope = (mΣab − ΣaΣb) / (mΣa² − (Σa)²).
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let ints: Vec<(i64, i64)> = (0..5).map(|_| (rng.random_range(-320..=320), rng.random_range(-320..=320))).collect();
        let m = ints.len() as i64;
        let (sa, sb) = (ints.iter().map(|p| p.0).sum::<i64>(), ints.iter().map(|p| p.1).sum::<i64>());
        let sab: i64 = ints.iter().map(|p| p.0 * p.1).sum();
        let saa: i64 = ints.iter().map(|p| p.0 * p.0).sum();
        let sbb: i64 = ints.iter().map(|p| p.1 * p.1).sum();
        let (num, dx, dy) = (m * sab - sa * sb, m * saa - sa * sa, m * sbb - sb * sb);
        if dx == 0 || dy == 0 {
            continue;
        }
        let pts: Vec<(f64, f64)> = ints.iter().map(|&(a, b)| (a as f64 / 64.0, b as f64 / 64.0)).collect();
        let f = bound_pss_fit(&pts).unwrap();
        let slope = num as f64 / dx as f64;
        let r = num as f64 / ((dx as i128 * dy as i128) as f64).sqrt();
        worst = worst.max((f.slope - slope).abs()).max((f.pearson_r - r).abs());
    }
    check(exact && worst < 1e-10, format!("exact line {exact}; covariance oracle max error {worst:.1e}"))
}

fn trace_round_trip() -> Outcome {
    let model = toy(5);
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut mismatches = 0;
    let mut detected = 0;
    for i in 0..100 {
        let tokens = random_tokens(&model, &mut rng);
        let trace = promptlens::refmodel::forward_trace(&model, &tokens, &format!("p{i}")).unwrap();
        let target = trace.argmax();
        let grads: Vec<GradientVector> =
            (0..=4).map(|l| suffix_gradient(&model, &tokens, l, target).unwrap()).collect();
        let bundle = TraceBundle::new(trace, grads, Precision::F64, "ids", "");
        let bytes = encode_trace(&bundle).unwrap();
        if decode_trace(&bytes).map(|b| b != bundle).unwrap_or(true) {
            mismatches += 1;
        }
        let cut = rng.random_range(0..bytes.len());
        if matches!(decode_trace(&bytes[..cut]), Err(TraceIoError::Checksum(_))) {
            detected += 1;
        }
    }
    check(
        mismatches == 0 && detected == 100,
        format!("100 round trips with {mismatches} mismatches; {detected}/100 truncations detected"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gradient oracle", gradient_oracle),
        ("taylor residual order", residual_order),
        ("cauchy-schwarz bound", cauchy_schwarz),
        ("steering exactness", steering),
        ("pss oracle", pss_oracle),
        ("compactness identities", compactness),
        ("anova decomposition", anova),
        ("perturbation properties", perturbations),
        ("correlation fit", correlation),
        ("trace round-trip", trace_round_trip),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
