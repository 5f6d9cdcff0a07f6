// SPDX-License-Identifier: MIT OR Apache-2.0

//! Surface formatting perturbations that never touch the letter sequence
//! (ignoring case).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{alphabetic_runs, Edit, EditOp, PerturbKind, PerturbationSpec, Variant};

const PUNCTUATION: [char; 4] = [',', '.', ';', ':'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrthOp {
    DuplicateSpace,
    RemoveSpace,
    FlipCase,
    InsertPunctuation,
}

impl OrthOp {
    const ALL: [OrthOp; 4] = [Self::DuplicateSpace, Self::RemoveSpace, Self::FlipCase, Self::InsertPunctuation];

    /// Byte offsets where the operation applies in `text`.
    fn sites(self, text: &str) -> Vec<usize> {
        let bytes = text.as_bytes();
        match self {
            Self::DuplicateSpace => text.match_indices(' ').map(|(i, _)| i).collect(),
            // A period, one or more spaces, then an uppercase letter: the
            // space right after the period is removable.
            Self::RemoveSpace => text
                .match_indices(". ")
                .map(|(i, _)| i + 1)
                .filter(|&i| {
                    let rest = text[i..].trim_start_matches(' ');
                    rest.chars().next().is_some_and(char::is_uppercase)
                })
                .collect(),
            Self::FlipCase => alphabetic_runs(text)
                .iter()
                .flat_map(|w| w.start..w.end)
                .filter(|&i| bytes[i].is_ascii_alphabetic())
                .collect(),
            Self::InsertPunctuation => alphabetic_runs(text).iter().map(|w| w.end).collect(),
        }
    }
}

/// Applies `op` at byte `position` of `text`. `punct` selects the inserted
/// mark for [`OrthOp::InsertPunctuation`].
pub fn apply_orthographic_op(text: &str, op: OrthOp, position: usize, punct: char) -> Option<Edit> {
    if !op.sites(text).contains(&position) {
        return None;
    }
    Some(match op {
        OrthOp::DuplicateSpace => Edit {
            op: EditOp::DuplicateSpace,
            position,
            before: String::new(),
            after: " ".into(),
        },
        OrthOp::RemoveSpace => Edit {
            op: EditOp::RemoveSpace,
            position,
            before: " ".into(),
            after: String::new(),
        },
        OrthOp::FlipCase => {
            let c = text.as_bytes()[position] as char;
            let flipped = if c.is_ascii_uppercase() { c.to_ascii_lowercase() } else { c.to_ascii_uppercase() };
            Edit {
                op: EditOp::FlipCase,
                position,
                before: c.to_string(),
                after: flipped.to_string(),
            }
        }
        OrthOp::InsertPunctuation => Edit {
            op: EditOp::InsertPunctuation,
            position,
            before: String::new(),
            after: punct.to_string(),
        },
    })
}

/// Applies `k` orthographic perturbations drawn uniformly from the operations
/// that have a valid site in the current text. If none has a site the
/// remaining perturbations are skipped and `warning` is set.
pub fn orthographic(prompt: &str, k: usize, seed: u64) -> Variant {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = prompt.to_owned();
    let mut edit_log = Vec::with_capacity(k);
    let mut warning = None;
    for applied in 0..k {
        let candidates: Vec<(OrthOp, Vec<usize>)> = OrthOp::ALL
            .into_iter()
            .map(|op| (op, op.sites(&text)))
            .filter(|(_, sites)| !sites.is_empty())
            .collect();
        if candidates.is_empty() {
            warning = Some(format!("no valid site: applied {applied} of {k} perturbations"));
            break;
        }
        let (op, sites) = &candidates[rng.random_range(0..candidates.len())];
        let position = sites[rng.random_range(0..sites.len())];
        let punct = PUNCTUATION[rng.random_range(0..PUNCTUATION.len())];
        let edit = apply_orthographic_op(&text, *op, position, punct).expect("site drawn from the valid set");
        edit.apply(&mut text);
        edit_log.push(edit);
    }
    Variant {
        spec: PerturbationSpec {
            kind: PerturbKind::Orth,
            k,
            seed,
            variant_index: 0,
        },
        text,
        edit_log,
        warning,
    }
}
