// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt template fixtures and slot rendering.
//!
//! Templates use `{question}` and `{A}`..`{E}` slots. The 4-option texts are
//! transcribed verbatim; [`TemplateFixture::with_fifth_option`] derives the
//! 5-option form by repeating the separator used before `D.`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PerturbError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateFamily {
    /// Twelve meaning-preserving MCQ templates.
    Meaning12,
    /// The seed template the modification families derive from.
    Seed,
    First,
    Latter,
    Fewer,
    More,
}

impl TemplateFamily {
    pub const ALL: [TemplateFamily; 6] = [
        Self::Meaning12,
        Self::Seed,
        Self::First,
        Self::Latter,
        Self::Fewer,
        Self::More,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Meaning12 => "meaning12",
            Self::Seed => "seed",
            Self::First => "first",
            Self::Latter => "latter",
            Self::Fewer => "fewer",
            Self::More => "more",
        }
    }
}

impl FromStr for TemplateFamily {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| PerturbError::UnknownFamily(s.to_owned()))
    }
}

impl fmt::Display for TemplateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateFixture {
    pub template_id: String,
    pub family: TemplateFamily,
    pub text: String,
}

const OPTIONS4: &str = "A. {A} B. {B} C. {C} D. {D}";

const MEANING12: [&str; 12] = [
    "{question}\n A. {A}\n B. {B}\n C. {C}\n D. {D}\n Answer:",
    "Question:\n {question}\n A. {A}\n B. {B}\n C. {C}\n D. {D}\n Answer:",
    "Question:\n {question} A. {A} B. {B} C. {C} D. {D}\n Answer:",
    "Could you provide a response to the following question: {question} A. {A} B. {B} C. {C} D. {D}",
    "Please answer the following question:\n{question}\n A. {A}\n B. {B}\n C. {C}\n D. {D}",
    "Please address the following question:\n {question}\n A. {A}\n B. {B}\n C. {C}\n D. {D}\n Answer:",
    "You are a very helpful AI assistant. Please answer the following questions: {question} A. {A} B. {B} C. {C} D. {D}",
    "As an exceptionally resourceful AI assistant, I'm at your service. Address the questions below:\n {question}\n A. {A}\n B. {B}\n C. {C}\n D. {D}",
    "As a helpful Artificial Intelligence Assistant, please answer the following questions\n {question} A. {A}\n B. {B}\n C. {C}\n D. {D}",
    "Could you provide a response to the following question: {question} A. {A} B. {B} C. {C} D. {D}\n Answer the question by replying A, B, C or D.",
    "Please answer the following question:\n{question}\n A. {A}\n B. {B}\n C. {C}\n D. {D}\n Answer the question by replying A, B, C or D.",
    "Please address the following question:\n{question}\n A. {A}\n B. {B}\n C. {C}\n D. {D}\n Answer this question by replying A, B, C or D.",
];

const INTRO: &str = "You are a very helpful AI assistant. Please answer the following questions:\n Question: {question}\n ";

fn seed_text() -> String {
    format!(
        "{INTRO}{OPTIONS4}\n Please choose the best option and respond only with the option of the correct answer (A, B, C, or D).\n Answer:"
    )
}

fn first_text(adjective: &str) -> String {
    seed_text().replacen("very helpful", &format!("very {adjective}"), 1)
}

fn latter_text(variant: usize) -> String {
    let seed = seed_text();
    match variant {
        0 => seed.replacen("of the correct answer", "of the suitable answer", 1),
        1 => seed.replacen("with the option of", "with the letter of", 1),
        _ => seed.replacen("with the option of", "with the choice of", 1),
    }
}

fn instruction(adverb: &str) -> String {
    format!("Please choose the best option and respond only with the option of the answer (A, B, C, or D) {adverb}.")
}

fn fewer_text(adverb: &str) -> String {
    format!("{INTRO}{OPTIONS4}\n {}\n Answer:", instruction(adverb))
}

fn more_text(adverb: &str) -> String {
    format!("{}\n {INTRO}{OPTIONS4}\n Answer:", instruction(adverb))
}

/// Fixture texts for one family, in their canonical order.
pub fn template_variants(family: TemplateFamily) -> Result<Vec<TemplateFixture>, PerturbError> {
    let texts: Vec<String> = match family {
        TemplateFamily::Meaning12 => MEANING12.iter().map(|s| s.to_string()).collect(),
        TemplateFamily::Seed => vec![seed_text()],
        TemplateFamily::First => ["useful", "smart", "friendly"].map(first_text).to_vec(),
        TemplateFamily::Latter => (0..3).map(latter_text).collect(),
        TemplateFamily::Fewer => ["below", "carefully", "now"].map(fewer_text).to_vec(),
        TemplateFamily::More => ["below", "carefully", "now"].map(more_text).to_vec(),
    };
    Ok(texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| TemplateFixture {
            template_id: format!("{}-{}", family.as_str(), i + 1),
            family,
            text,
        })
        .collect())
}

#[derive(Debug, PartialEq)]
enum Segment<'a> {
    Literal(&'a str),
    Slot(&'a str),
}

fn is_slot_name(name: &str) -> bool {
    name == "question" || (name.len() == 1 && ('A'..='E').contains(&name.chars().next().unwrap_or(' ')))
}

fn parse(text: &str) -> Vec<Segment<'_>> {
    let mut segments = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        match rest[open..].find('}') {
            Some(len) if is_slot_name(&rest[open + 1..open + len]) => {
                if open > 0 {
                    segments.push(Segment::Literal(&rest[..open]));
                }
                segments.push(Segment::Slot(&rest[open + 1..open + len]));
                rest = &rest[open + len + 1..];
            }
            _ => {
                segments.push(Segment::Literal(&rest[..=open]));
                rest = &rest[open + 1..];
            }
        }
    }
    if !rest.is_empty() {
        segments.push(Segment::Literal(rest));
    }
    segments
}

impl TemplateFixture {
    /// Number of option slots (`{A}`..`{E}`) in the template.
    pub fn option_slots(&self) -> usize {
        let mut letters: Vec<&str> = parse(&self.text)
            .into_iter()
            .filter_map(|s| match s {
                Segment::Slot(name) if name != "question" => Some(name),
                _ => None,
            })
            .collect();
        letters.sort_unstable();
        letters.dedup();
        letters.len()
    }

    /// Five-option form for CommonSenseQA-style items: `E. {E}` is appended
    /// after `{D}` with the separator that precedes `D.`.
    pub fn with_fifth_option(&self) -> TemplateFixture {
        if self.option_slots() >= 5 {
            return self.clone();
        }
        let text = match (self.text.find("{C}"), self.text.find("D. {D}")) {
            (Some(c), Some(d)) => {
                let separator = &self.text[c + 3..d];
                let insert_at = d + "D. {D}".len();
                format!("{}{separator}E. {{E}}{}", &self.text[..insert_at], &self.text[insert_at..])
            }
            _ => self.text.clone(),
        };
        TemplateFixture {
            template_id: format!("{}-5opt", self.template_id),
            family: self.family,
            text,
        }
    }
}

/// Substitutes the question and options into the template in a single
/// pass, so slot-like text inside the inputs is never re-expanded.
pub fn render(fixture: &TemplateFixture, question: &str, options: &[String]) -> Result<String, PerturbError> {
    let slots = fixture.option_slots();
    if slots != options.len() {
        return Err(PerturbError::SlotArityMismatch {
            template: fixture.template_id.clone(),
            slots,
            given: options.len(),
        });
    }
    let mut out = String::with_capacity(fixture.text.len() + question.len() + 16 * options.len());
    for segment in parse(&fixture.text) {
        match segment {
            Segment::Literal(s) => out.push_str(s),
            Segment::Slot("question") => out.push_str(question),
            Segment::Slot(letter) => {
                let i = (letter.as_bytes()[0] - b'A') as usize;
                out.push_str(&options[i]);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("opt{i}")).collect()
    }

    #[test]
    fn prompt_one_ends_with_answer() {
        let t = &template_variants(TemplateFamily::Meaning12).unwrap()[0];
        let s = render(t, "Why?", &opts(4)).unwrap();
        assert!(s.ends_with("Answer:"));
        assert_eq!(s, "Why?\n A. opt0\n B. opt1\n C. opt2\n D. opt3\n Answer:");
    }

    #[test]
    fn arity_is_checked() {
        let t = &template_variants(TemplateFamily::Meaning12).unwrap()[3];
        assert!(matches!(
            render(t, "q", &opts(5)),
            Err(PerturbError::SlotArityMismatch { slots: 4, given: 5, .. })
        ));
    }

    #[test]
    fn empty_question_is_fine() {
        let t = &template_variants(TemplateFamily::Seed).unwrap()[0];
        let s = render(t, "", &opts(4)).unwrap();
        assert!(!s.contains('{'));
        assert!(s.contains("Question: \n"));
    }

    #[test]
    fn inputs_are_not_re_expanded() {
        let t = &template_variants(TemplateFamily::Meaning12).unwrap()[0];
        let s = render(t, "{A}", &opts(4)).unwrap();
        assert!(s.starts_with("{A}\n A. opt0"));
    }

    #[test]
    fn fifth_option_follows_separator() {
        for t in template_variants(TemplateFamily::Meaning12).unwrap() {
            let five = t.with_fifth_option();
            assert_eq!(five.option_slots(), 5, "{}", t.template_id);
            let s = render(&five, "q", &opts(5)).unwrap();
            assert!(!s.contains('{'));
            assert!(s.contains("D. opt3") && s.contains("E. opt4"));
        }
        let t = &template_variants(TemplateFamily::Meaning12).unwrap()[0];
        assert!(t.with_fifth_option().text.contains("D. {D}\n E. {E}\n Answer:"));
    }

    #[test]
    fn unknown_family() {
        assert!(matches!("bogus".parse::<TemplateFamily>(), Err(PerturbError::UnknownFamily(_))));
    }
}
