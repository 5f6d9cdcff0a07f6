// SPDX-License-Identifier: MIT OR Apache-2.0

//! Choice of the analyzed next token `y_t`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::refmodel::Tokenizer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Correct,
    Incorrect,
    Arbitrary,
}

impl TargetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Correct => "correct",
            TargetKind::Incorrect => "incorrect",
            TargetKind::Arbitrary => "arbitrary",
        }
    }
}

/// A resolved target token and how it was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub token: u32,
    pub kind: TargetKind,
}

impl Target {
    pub fn correct(token: u32) -> Self {
        Self {
            token,
            kind: TargetKind::Correct,
        }
    }
}

/// How to pick `y_t` for a multiple-choice item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetSelector {
    /// The gold option letter.
    #[default]
    Correct,
    /// A uniformly drawn wrong option letter (seeded per question).
    Incorrect,
    /// A uniformly drawn digit 0-9 (seeded per question).
    Number,
    /// A fixed vocabulary id.
    Token(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TargetError {
    #[error("unrecognized target selector {0:?} (expected correct, incorrect, number or token:ID)")]
    Parse(String),
    #[error("answer index {answer} out of range for {options} options")]
    AnswerOutOfRange { answer: usize, options: usize },
    #[error("need at least two options to draw an incorrect answer")]
    NoIncorrectOption,
    #[error("tokenizer has no token for {0}")]
    MissingToken(String),
}

impl FromStr for TargetSelector {
    type Err = TargetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "correct" => Ok(Self::Correct),
            "incorrect" => Ok(Self::Incorrect),
            "number" => Ok(Self::Number),
            other => other
                .strip_prefix("token:")
                .and_then(|id| id.parse().ok())
                .map(Self::Token)
                .ok_or_else(|| TargetError::Parse(other.to_owned())),
        }
    }
}

impl fmt::Display for TargetSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Correct => f.write_str("correct"),
            Self::Incorrect => f.write_str("incorrect"),
            Self::Number => f.write_str("number"),
            Self::Token(id) => write!(f, "token:{id}"),
        }
    }
}

impl TargetSelector {
    /// Resolves the selector for one question. Random choices depend only on
    /// `(seed, question_index)`, so every template of a question shares `y_t`.
    pub fn resolve(
        self,
        tokenizer: &Tokenizer,
        num_options: usize,
        answer_index: usize,
        seed: u64,
        question_index: usize,
    ) -> Result<Target, TargetError> {
        let options: Vec<u32> = (0..num_options)
            .map(|i| {
                tokenizer
                    .option_letter(i)
                    .ok_or_else(|| TargetError::MissingToken(format!("option {i}")))
            })
            .collect::<Result<_, _>>()?;
        let digits: Vec<u32> = (0..10).filter_map(|d| tokenizer.digit(d)).collect();
        self.resolve_ids(&options, &digits, answer_index, seed, question_index)
    }

    /// Same as [`resolve`](Self::resolve) for an external vocabulary given
    /// by the ids of its option letters and digits.
    pub fn resolve_ids(
        self,
        option_tokens: &[u32],
        digit_tokens: &[u32],
        answer_index: usize,
        seed: u64,
        question_index: usize,
    ) -> Result<Target, TargetError> {
        let num_options = option_tokens.len();
        if answer_index >= num_options {
            return Err(TargetError::AnswerOutOfRange {
                answer: answer_index,
                options: num_options,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (question_index as u64).wrapping_mul(0x9E37_79B9));
        match self {
            Self::Correct => Ok(Target::correct(option_tokens[answer_index])),
            Self::Incorrect => {
                if num_options < 2 {
                    return Err(TargetError::NoIncorrectOption);
                }
                let mut pick = rng.random_range(0..num_options - 1);
                if pick >= answer_index {
                    pick += 1;
                }
                Ok(Target {
                    token: option_tokens[pick],
                    kind: TargetKind::Incorrect,
                })
            }
            Self::Number => {
                if digit_tokens.is_empty() {
                    return Err(TargetError::MissingToken("digits".into()));
                }
                let d = rng.random_range(0..digit_tokens.len());
                Ok(Target {
                    token: digit_tokens[d],
                    kind: TargetKind::Arbitrary,
                })
            }
            Self::Token(token) => Ok(Target {
                token,
                kind: TargetKind::Arbitrary,
            }),
        }
    }
}
