// SPDX-License-Identifier: MIT OR Apache-2.0

//! Keyboard-level typos: one character event on each of `min(k, #eligible)`
//! distinct words.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::qwerty::qwerty_neighbors;
use super::{eligible_words, Edit, EditOp, PerturbKind, PerturbationSpec, Variant, WordSpan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypoOp {
    Insertion,
    Omission,
    Transposition,
    Substitution,
}

impl TypoOp {
    const ALL: [TypoOp; 4] = [Self::Insertion, Self::Omission, Self::Transposition, Self::Substitution];

    /// Character indices inside `chars` where this operation can apply.
    fn sites(self, chars: &[char]) -> Vec<usize> {
        let n = chars.len();
        match self {
            // Inserting at i copies the keyboard row of the preceding
            // character (or the first character at i = 0).
            Self::Insertion => (0..=n)
                .filter(|&i| !qwerty_neighbors(chars[i.saturating_sub(1)]).is_empty())
                .collect(),
            Self::Omission => (0..n).collect(),
            Self::Transposition => (0..n.saturating_sub(1)).filter(|&i| chars[i] != chars[i + 1]).collect(),
            Self::Substitution => (0..n).filter(|&i| !qwerty_neighbors(chars[i]).is_empty()).collect(),
        }
    }
}

/// Applies `op` at character `index` of `word`. `pick` chooses among the
/// QWERTY neighbours for insertion and substitution. Returns `None` when
/// the operation has no valid site there.
pub fn apply_typo_op(
    word: &WordSpan<'_>,
    op: TypoOp,
    index: usize,
    pick: impl FnOnce(&[char]) -> char,
) -> Option<Edit> {
    let chars: Vec<char> = word.text.chars().collect();
    if !op.sites(&chars).contains(&index) {
        return None;
    }
    let byte_at = |i: usize| word.start + chars[..i].iter().map(|c| c.len_utf8()).sum::<usize>();
    let edit = match op {
        TypoOp::Insertion => {
            let anchor = chars[index.saturating_sub(1)];
            Edit {
                op: EditOp::Insertion,
                position: byte_at(index),
                before: String::new(),
                after: pick(&qwerty_neighbors(anchor)).to_string(),
            }
        }
        TypoOp::Omission => Edit {
            op: EditOp::Omission,
            position: byte_at(index),
            before: chars[index].to_string(),
            after: String::new(),
        },
        TypoOp::Transposition => Edit {
            op: EditOp::Transposition,
            position: byte_at(index),
            before: [chars[index], chars[index + 1]].iter().collect(),
            after: [chars[index + 1], chars[index]].iter().collect(),
        },
        TypoOp::Substitution => Edit {
            op: EditOp::Substitution,
            position: byte_at(index),
            before: chars[index].to_string(),
            after: pick(&qwerty_neighbors(chars[index])).to_string(),
        },
    };
    Some(edit)
}

/// Typo variant of `prompt`, deterministic in `seed`.
pub fn typo(prompt: &str, k: usize, seed: u64) -> Variant {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = eligible_words(prompt);
    let count = k.min(words.len());
    let mut chosen: Vec<usize> = sample(&mut rng, words.len(), count).into_vec();
    // Right-to-left keeps every recorded byte offset valid for replay.
    chosen.sort_unstable_by(|a, b| b.cmp(a));

    let mut text = prompt.to_owned();
    let mut edit_log = Vec::with_capacity(count);
    for w in chosen {
        let word = &words[w];
        let chars: Vec<char> = word.text.chars().collect();
        let ops: Vec<TypoOp> = TypoOp::ALL
            .into_iter()
            .filter(|op| !op.sites(&chars).is_empty())
            .collect();
        let op = ops[rng.random_range(0..ops.len())];
        let sites = op.sites(&chars);
        let index = sites[rng.random_range(0..sites.len())];
        let edit = apply_typo_op(word, op, index, |options| options[rng.random_range(0..options.len())])
            .expect("site drawn from the valid set");
        let applied = edit.apply(&mut text);
        debug_assert!(applied);
        edit_log.push(edit);
    }

    Variant {
        spec: PerturbationSpec {
            kind: PerturbKind::Typo,
            k,
            seed,
            variant_index: 0,
        },
        text,
        edit_log,
        warning: None,
    }
}
