// SPDX-License-Identifier: MIT OR Apache-2.0

//! Whitespace + punctuation tokenizer over a fixed vocabulary.

use std::collections::HashMap;

const UNK: &str = "<unk>";

// Order is part of the tokenizer identity: ids are positions in this list.
const PUNCTUATION: &[&str] = &[".", ",", ":", ";", "?", "!", "(", ")", "'", "\"", "-", "/"];
const LETTERS: &[&str] = &["A", "B", "C", "D", "E"];
const DIGITS: &[&str] = &["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];
const TEMPLATE_WORDS: &[&str] = &[
    "You", "are", "a", "very", "helpful", "AI", "assistant", "Please", "please", "answer",
    "Answer", "the", "following", "question", "questions", "Question", "choose", "best",
    "option", "and", "respond", "only", "with", "of", "correct", "or", "Could", "you",
    "provide", "response", "to", "useful", "smart", "friendly", "suitable", "letter", "choice",
    "below", "carefully", "now", "address", "Address", "As", "an", "exceptionally",
    "resourceful", "I", "m", "at", "your", "service", "Artificial", "Intelligence",
    "Assistant", "by", "replying", "this", "is",
];
const CONTENT_WORDS: &[&str] = &[
    "what", "What", "which", "Which", "color", "sky", "sun", "grass", "water", "fire", "snow",
    "red", "blue", "green", "yellow", "white", "black", "hot", "cold", "big", "small",
    "animal", "dog", "cat", "bird", "fish", "tree", "flower", "number", "day", "night",
    "light", "dark", "up", "down", "can", "fly", "swim", "eat", "has", "have", "many", "legs",
    "wings", "grows", "in", "on", "most", "likely", "food", "sea", "sand", "rock", "ice",
    "melts", "boils", "falls", "rain", "cloud", "moon", "star", "planet", "earth", "one",
    "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vec<String>,
    index: HashMap<String, u32>,
}

impl Tokenizer {
    pub const BUILTIN_ID: &'static str = "builtin-words-v1";

    pub fn builtin() -> Self {
        let vocab: Vec<String> = std::iter::once(UNK)
            .chain(PUNCTUATION.iter().copied())
            .chain(LETTERS.iter().copied())
            .chain(DIGITS.iter().copied())
            .chain(TEMPLATE_WORDS.iter().copied())
            .chain(CONTENT_WORDS.iter().copied())
            .map(str::to_owned)
            .collect();
        let index = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        Self { vocab, index }
    }

    pub fn id(&self) -> &'static str {
        Self::BUILTIN_ID
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn unk(&self) -> u32 {
        0
    }

    pub fn token_id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn token_str(&self, id: u32) -> Option<&str> {
        self.vocab.get(id as usize).map(String::as_str)
    }

    /// Id of an option letter (`0 -> "A"`).
    pub fn option_letter(&self, option: usize) -> Option<u32> {
        LETTERS.get(option).and_then(|l| self.token_id(l))
    }

    pub fn digit(&self, d: usize) -> Option<u32> {
        DIGITS.get(d).and_then(|l| self.token_id(l))
    }

    /// Splits on whitespace, then into alphanumeric runs and single
    /// punctuation characters. Unknown pieces map to `<unk>` after a
    /// lowercase retry.
    pub fn pieces(text: &str) -> Vec<&str> {
        let mut out = Vec::new();
        for chunk in text.split_whitespace() {
            let mut start = None;
            for (i, c) in chunk.char_indices() {
                if c.is_alphanumeric() {
                    start.get_or_insert(i);
                } else {
                    if let Some(s) = start.take() {
                        out.push(&chunk[s..i]);
                    }
                    out.push(&chunk[i..i + c.len_utf8()]);
                }
            }
            if let Some(s) = start {
                out.push(&chunk[s..]);
            }
        }
        out
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        Self::pieces(text)
            .into_iter()
            .map(|p| {
                self.token_id(p)
                    .or_else(|| self.token_id(&p.to_lowercase()))
                    .unwrap_or(self.unk())
            })
            .collect()
    }
}
