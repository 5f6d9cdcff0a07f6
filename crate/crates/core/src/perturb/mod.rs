// SPDX-License-Identifier: MIT OR Apache-2.0

//! Meaning-preserving prompt variants.
//!
//! Template families come from fixed fixture texts; typo, orthographic and
//! paraphrase variants are generated from a seed prompt and always carry an
//! edit log that replays byte-exactly from the seed to the variant.

mod orth;
mod paraphrase;
mod qwerty;
mod templates;
mod typo;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use orth::{apply_orthographic_op, orthographic, OrthOp};
pub use paraphrase::{
    paraphrase, ClientError, HttpParaphraseClient, ParaphraseCache, ParaphraseClient,
    ParaphraseResponse, ReplacementPair, StubParaphraseClient, DEFAULT_MAX_RETRIES,
    PARAPHRASE_TOKEN_ENV, PARAPHRASE_URL_ENV,
};
pub use qwerty::{qwerty_neighbors, QWERTY_NEIGHBORS};
pub use templates::{render, template_variants, TemplateFamily, TemplateFixture};
pub use typo::{apply_typo_op, typo, TypoOp};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("unknown template family {0:?}")]
    UnknownFamily(String),
    #[error("unknown perturbation kind {0:?}")]
    UnknownKind(String),
    #[error("template {template} has {slots} option slots but {given} options were given")]
    SlotArityMismatch {
        template: String,
        slots: usize,
        given: usize,
    },
    #[error("variant index {index} out of range for family {family} ({available} fixtures)")]
    VariantOutOfRange {
        family: String,
        index: usize,
        available: usize,
    },
    #[error("severity k must be >= 1")]
    ZeroSeverity,
    #[error("edit {index} does not apply: expected {expected:?} at byte {position}")]
    ReplayMismatch {
        index: usize,
        position: usize,
        expected: String,
    },
    #[error("paraphrase client unreachable: {message}")]
    ClientUnreachable {
        message: String,
        last_raw: Option<String>,
    },
    #[error("paraphrase validation failed after {attempts} attempts: {reason}")]
    ValidationFailed {
        attempts: usize,
        reason: String,
        last_raw: String,
    },
    #[error("paraphrase cache: {0}")]
    Cache(String),
}

/// The seven modification types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbKind {
    First,
    Latter,
    Fewer,
    More,
    Typo,
    Orth,
    Para,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 7] = [
        Self::First,
        Self::Latter,
        Self::Fewer,
        Self::More,
        Self::Typo,
        Self::Orth,
        Self::Para,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::First => "first",
            Self::Latter => "latter",
            Self::Fewer => "fewer",
            Self::More => "more",
            Self::Typo => "typo",
            Self::Orth => "orth",
            Self::Para => "para",
        }
    }

    /// Template families are fixed fixture texts rather than generated edits.
    pub fn template_family(self) -> Option<TemplateFamily> {
        match self {
            Self::First => Some(TemplateFamily::First),
            Self::Latter => Some(TemplateFamily::Latter),
            Self::Fewer => Some(TemplateFamily::Fewer),
            Self::More => Some(TemplateFamily::More),
            _ => None,
        }
    }
}

impl FromStr for PerturbKind {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| PerturbError::UnknownKind(s.to_owned()))
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbKind,
    /// Severity for typo / orth / para.
    pub k: usize,
    pub seed: u64,
    /// Fixture index for the template families.
    pub variant_index: usize,
}

/// Character-level or word-level edit operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditOp {
    Insertion,
    Omission,
    Transposition,
    Substitution,
    DuplicateSpace,
    RemoveSpace,
    FlipCase,
    InsertPunctuation,
    ReplaceWord,
    ReplaceSpan,
}

/// `before` at byte `position` becomes `after`. Positions refer to the text
/// as it is when the edit is applied (edits replay in order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub op: EditOp,
    pub position: usize,
    pub before: String,
    pub after: String,
}

impl Edit {
    pub fn apply(&self, text: &mut String) -> bool {
        let end = self.position + self.before.len();
        if text.get(self.position..end) != Some(self.before.as_str()) {
            return false;
        }
        text.replace_range(self.position..end, &self.after);
        true
    }
}

/// Replays an edit log from `seed`.
pub fn replay(seed: &str, log: &[Edit]) -> Result<String, PerturbError> {
    let mut text = seed.to_owned();
    for (index, edit) in log.iter().enumerate() {
        if !edit.apply(&mut text) {
            return Err(PerturbError::ReplayMismatch {
                index,
                position: edit.position,
                expected: edit.before.clone(),
            });
        }
    }
    Ok(text)
}

/// Single-edit log turning `from` into `to` (common prefix/suffix trimmed).
pub fn diff_edit(from: &str, to: &str) -> Vec<Edit> {
    if from == to {
        return Vec::new();
    }
    let prefix = from
        .char_indices()
        .zip(to.chars())
        .find(|((_, a), b)| a != b)
        .map_or(from.len().min(to.len()), |((i, _), _)| i);
    let mut suffix = 0;
    for (a, b) in from[prefix..].chars().rev().zip(to[prefix..].chars().rev()) {
        if a != b {
            break;
        }
        suffix += a.len_utf8();
    }
    vec![Edit {
        op: EditOp::ReplaceSpan,
        position: prefix,
        before: from[prefix..from.len() - suffix].to_owned(),
        after: to[prefix..to.len() - suffix].to_owned(),
    }]
}

/// One generated or fixture variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub spec: PerturbationSpec,
    pub text: String,
    pub edit_log: Vec<Edit>,
    /// Set when the generator could not apply the requested perturbation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptVariantSet {
    pub seed_prompt: String,
    pub variants: Vec<Variant>,
}

impl PromptVariantSet {
    /// Checks that every edit log replays to its variant.
    pub fn verify(&self) -> Result<(), PerturbError> {
        for v in &self.variants {
            let replayed = replay(&self.seed_prompt, &v.edit_log)?;
            if replayed != v.text {
                return Err(PerturbError::ReplayMismatch {
                    index: v.edit_log.len(),
                    position: 0,
                    expected: v.text.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A maximal alphabetic run of at least three letters; `start..end` are
/// byte offsets into the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordSpan<'a> {
    pub start: usize,
    pub end: usize,
    pub text: &'a str,
}

/// Maximal alphabetic runs, of any length, in order.
pub(crate) fn alphabetic_runs(prompt: &str) -> Vec<WordSpan<'_>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in prompt.char_indices() {
        match (c.is_alphabetic(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push(WordSpan { start: s, end: i, text: &prompt[s..i] });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(WordSpan { start: s, end: prompt.len(), text: &prompt[s..] });
    }
    spans
}

/// Words eligible for typo and paraphrase edits.
pub fn eligible_words(prompt: &str) -> Vec<WordSpan<'_>> {
    alphabetic_runs(prompt)
        .into_iter()
        .filter(|w| w.text.chars().count() >= 3)
        .collect()
}

/// Builds one variant of `seed_prompt` for the requested spec. Template
/// kinds ignore the prompt and return the fixture text; paraphrases go
/// through `client` and `cache`.
pub fn generate(
    seed_prompt: &str,
    spec: &PerturbationSpec,
    paraphraser: Option<(&dyn ParaphraseClient, &ParaphraseCache)>,
) -> Result<Variant, PerturbError> {
    if let Some(family) = spec.kind.template_family() {
        let seed = template_variants(TemplateFamily::Seed)?.remove(0);
        let fixtures = template_variants(family)?;
        let fixture = fixtures.get(spec.variant_index).ok_or_else(|| PerturbError::VariantOutOfRange {
            family: family.as_str().to_owned(),
            index: spec.variant_index,
            available: fixtures.len(),
        })?;
        return Ok(Variant {
            spec: spec.clone(),
            text: fixture.text.clone(),
            edit_log: diff_edit(&seed.text, &fixture.text),
            warning: None,
        });
    }
    if spec.k == 0 {
        return Err(PerturbError::ZeroSeverity);
    }
    match spec.kind {
        PerturbKind::Typo => Ok(typo(seed_prompt, spec.k, spec.seed)),
        PerturbKind::Orth => Ok(orthographic(seed_prompt, spec.k, spec.seed)),
        PerturbKind::Para => {
            let (client, cache) = paraphraser.ok_or_else(|| PerturbError::ClientUnreachable {
                message: "no paraphrase client configured".into(),
                last_raw: None,
            })?;
            paraphrase(seed_prompt, spec.k, client, cache, DEFAULT_MAX_RETRIES)
        }
        _ => unreachable!("template kinds handled above"),
    }
}
