// SPDX-License-Identifier: MIT OR Apache-2.0

//! Multiple-choice items (JSON lines) and prompt rendering.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::perturb::{render, PerturbError, TemplateFixture};
use crate::refmodel::{Model, ModelError, TokenSequence, Tokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqRecord {
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {options} options; templates take 4 or 5")]
    OptionCount { line: usize, options: usize },
    #[error("line {line}: answer_index {answer} out of range for {options} options")]
    AnswerOutOfRange { line: usize, answer: usize, options: usize },
    #[error("dataset is empty")]
    Empty,
}

impl McqRecord {
    fn check(&self, line: usize) -> Result<(), DatasetError> {
        if !(4..=5).contains(&self.options.len()) {
            return Err(DatasetError::OptionCount { line, options: self.options.len() });
        }
        if self.answer_index >= self.options.len() {
            return Err(DatasetError::AnswerOutOfRange {
                line,
                answer: self.answer_index,
                options: self.options.len(),
            });
        }
        Ok(())
    }

    /// Renders the item, switching to the five-option form when needed.
    pub fn render(&self, fixture: &TemplateFixture) -> Result<String, PerturbError> {
        if self.options.len() == 5 && fixture.option_slots() == 4 {
            render(&fixture.with_fifth_option(), &self.question, &self.options)
        } else {
            render(fixture, &self.question, &self.options)
        }
    }
}

/// Parses JSON lines; blank lines are skipped. Line numbers are 1-based.
pub fn parse_dataset(text: &str) -> Result<Vec<McqRecord>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: McqRecord = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        record.check(i + 1)?;
        out.push(record);
    }
    if out.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<McqRecord>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text)
}

const TOY: &[(&str, [&str; 4], usize)] = &[
    ("What color is the sky?", ["blue", "red", "green", "black"], 0),
    ("What color is the grass?", ["white", "green", "red", "blue"], 1),
    ("What color is snow?", ["black", "red", "white", "green"], 2),
    ("What color is fire?", ["blue", "green", "white", "red"], 3),
    ("Which animal can fly?", ["bird", "fish", "dog", "cat"], 0),
    ("Which animal can swim?", ["bird", "fish", "tree", "rock"], 1),
    ("What is hot?", ["ice", "snow", "fire", "rain"], 2),
    ("What is cold?", ["sun", "fire", "sand", "ice"], 3),
    ("What is in a cloud?", ["rain", "sand", "rock", "tree"], 0),
    ("What melts in the sun?", ["rock", "ice", "sand", "fish"], 1),
    ("Which is a planet?", ["sun", "moon", "earth", "star"], 2),
    ("What grows in the sand?", ["fish", "ice", "rock", "tree"], 3),
    ("What number of legs has a dog?", ["four", "two", "six", "ten"], 0),
    ("What number of wings has a bird?", ["four", "two", "six", "one"], 1),
    ("What is up at night?", ["sun", "sea", "moon", "grass"], 2),
    ("What is big?", ["cat", "fish", "flower", "planet"], 3),
    ("What has wings?", ["bird", "dog", "tree", "rock"], 0),
    ("What is in the sea?", ["sun", "fish", "star", "fire"], 1),
    ("Which is yellow?", ["night", "sea", "sun", "grass"], 2),
    ("What is dark?", ["day", "sun", "fire", "night"], 3),
];

/// Twenty small items over the built-in vocabulary.
pub fn toy_dataset() -> Vec<McqRecord> {
    TOY.iter()
        .map(|(q, options, answer)| McqRecord {
            question: (*q).to_owned(),
            options: options.iter().map(|o| (*o).to_owned()).collect(),
            answer_index: *answer,
        })
        .collect()
}

/// Encodes a prompt for `model`, keeping the rightmost `max_seq_len`
/// tokens. Fails if the tokenizer emits ids outside the model vocabulary.
pub fn encode_prompt(tokenizer: &Tokenizer, model: &Model, text: &str) -> Result<TokenSequence, ModelError> {
    TokenSequence::truncated_left(tokenizer.encode(text), &model.config)
}

/// Whether the highest-scoring option letter is the gold one. Ties resolve
/// to the earliest letter.
pub fn is_correct(scores: &[f64], option_tokens: &[u32], answer_index: usize) -> bool {
    let mut best = 0;
    for (i, &t) in option_tokens.iter().enumerate() {
        if scores[t as usize] > scores[option_tokens[best] as usize] {
            best = i;
        }
    }
    best == answer_index
}
