// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Binary correctness per question (rows) and prompt (columns).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessMatrix {
    pub question_ids: Vec<String>,
    pub prompt_ids: Vec<String>,
    values: Vec<Vec<u8>>,
}

impl CorrectnessMatrix {
    pub fn new(question_ids: Vec<String>, prompt_ids: Vec<String>, values: Vec<Vec<u8>>) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::NoQuestions);
        }
        let width = prompt_ids.len();
        if width < 2 {
            return Err(MetricsError::TooFewPrompts(width));
        }
        if question_ids.len() != values.len() {
            return Err(MetricsError::LabelCount {
                labels: question_ids.len(),
                vectors: values.len(),
            });
        }
        for (row, r) in values.iter().enumerate() {
            if r.len() != width {
                return Err(MetricsError::RaggedRow { row, len: r.len(), expected: width });
            }
            if let Some((col, &value)) = r.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(MetricsError::NotBinary { row, col, value });
            }
        }
        Ok(Self {
            question_ids,
            prompt_ids,
            values,
        })
    }

    /// Numbered ids `q0..`, `p0..`.
    pub fn from_rows(values: Vec<Vec<u8>>) -> Result<Self, MetricsError> {
        let width = values.first().map_or(0, Vec::len);
        let q = (0..values.len()).map(|i| format!("q{i}")).collect();
        let p = (0..width).map(|j| format!("p{j}")).collect();
        Self::new(q, p, values)
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PssReport {
    pub question_ids: Vec<String>,
    pub per_question: Vec<f64>,
    pub pss: f64,
}

/// Mean absolute pairwise correctness difference per question, averaged
/// over questions.
///
/// With `c` correct prompts out of `n`, the pair sum is `c * (n - c)`, so no
/// pair enumeration is needed.
pub fn pss(m: &CorrectnessMatrix) -> PssReport {
    let n = m.prompt_ids.len() as f64;
    let pairs = n * (n - 1.0) / 2.0;
    let per_question: Vec<f64> = m
        .values
        .iter()
        .map(|row| {
            let c = row.iter().map(|&v| v as f64).sum::<f64>();
            c * (n - c) / pairs
        })
        .collect();
    let pss = per_question.iter().sum::<f64>() / per_question.len() as f64;
    PssReport {
        question_ids: m.question_ids.clone(),
        per_question,
        pss,
    }
}
