// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Logits of the target token, one row per template and one column per
/// question. Every cell must be present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitTable {
    pub template_ids: Vec<String>,
    pub question_ids: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl LogitTable {
    pub fn new(template_ids: Vec<String>, question_ids: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        if values.len() != template_ids.len() {
            return Err(MetricsError::Unbalanced(format!(
                "{} template ids but {} rows",
                template_ids.len(),
                values.len()
            )));
        }
        for (t, row) in values.iter().enumerate() {
            if row.len() != question_ids.len() {
                return Err(MetricsError::Unbalanced(format!(
                    "template row {t} has {} cells, expected {}",
                    row.len(),
                    question_ids.len()
                )));
            }
            if let Some(q) = row.iter().position(|v| !v.is_finite()) {
                return Err(MetricsError::NonFinite(format!("cell ({t}, {q})")));
            }
        }
        if template_ids.len() < 2 {
            return Err(MetricsError::TooFewLevels { factor: "template", levels: template_ids.len() });
        }
        if question_ids.len() < 2 {
            return Err(MetricsError::TooFewLevels { factor: "question", levels: question_ids.len() });
        }
        Ok(Self {
            template_ids,
            question_ids,
            values,
        })
    }

    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        let width = values.first().map_or(0, Vec::len);
        let t = (0..values.len()).map(|i| format!("t{i}")).collect();
        let q = (0..width).map(|j| format!("q{j}")).collect();
        Self::new(t, q, values)
    }

    /// Builds a table from sparse `(template, question, value)` cells.
    /// Missing or repeated cells are an unbalanced design.
    pub fn from_cells(cells: &[(String, String, f64)]) -> Result<Self, MetricsError> {
        let mut templates: Vec<String> = Vec::new();
        let mut questions: Vec<String> = Vec::new();
        for (t, q, _) in cells {
            if !templates.contains(t) {
                templates.push(t.clone());
            }
            if !questions.contains(q) {
                questions.push(q.clone());
            }
        }
        let mut grid = vec![vec![None; questions.len()]; templates.len()];
        for (t, q, v) in cells {
            let ti = templates.iter().position(|x| x == t).expect("collected above");
            let qi = questions.iter().position(|x| x == q).expect("collected above");
            if grid[ti][qi].replace(*v).is_some() {
                return Err(MetricsError::Unbalanced(format!("duplicate cell ({t}, {q})")));
            }
        }
        let mut values = Vec::with_capacity(templates.len());
        for (ti, row) in grid.into_iter().enumerate() {
            let mut r = Vec::with_capacity(row.len());
            for (qi, cell) in row.into_iter().enumerate() {
                r.push(cell.ok_or_else(|| {
                    MetricsError::Unbalanced(format!("missing cell ({}, {})", templates[ti], questions[qi]))
                })?);
            }
            values.push(r);
        }
        Self::new(templates, questions, values)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaReport {
    pub ss_template: f64,
    pub ss_question: f64,
    pub ss_residual: f64,
    pub ss_total: f64,
    pub template_share: f64,
    pub question_share: f64,
    pub residual_share: f64,
    /// Set when the table is constant; all shares are then 0.
    pub degenerate: bool,
}

/// Two-way additive decomposition of a balanced table.
///
/// For a balanced crossing the OLS fit with template and question dummies
/// reduces to grand mean plus row and column effects, and sequential and
/// partial sums of squares coincide.
pub fn anova_contributions(table: &LogitTable) -> AnovaReport {
    let rows = &table.values;
    let (nt, nq) = (rows.len(), rows[0].len());
    let n = (nt * nq) as f64;
    let grand = rows.iter().flatten().sum::<f64>() / n;
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / nq as f64).collect();
    let col_means: Vec<f64> = (0..nq)
        .map(|q| rows.iter().map(|r| r[q]).sum::<f64>() / nt as f64)
        .collect();

    let ss_template = nq as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_question = nt as f64 * col_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_total = 0.0;
    let mut ss_residual = 0.0;
    for (t, r) in rows.iter().enumerate() {
        for (q, &y) in r.iter().enumerate() {
            ss_total += (y - grand).powi(2);
            ss_residual += (y - row_means[t] - col_means[q] + grand).powi(2);
        }
    }

    let degenerate = ss_total == 0.0;
    let share = |ss: f64| if degenerate { 0.0 } else { ss / ss_total };
    AnovaReport {
        ss_template,
        ss_question,
        ss_residual,
        ss_total,
        template_share: share(ss_template),
        question_share: share(ss_question),
        residual_share: share(ss_residual),
        degenerate,
    }
}
