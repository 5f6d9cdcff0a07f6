// SPDX-License-Identifier: MIT OR Apache-2.0

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::TraceIoError;
use crate::metrics::{AnovaReport, LineFit, PssReport};
use crate::steering::SteeringSummary;
use crate::taylor::SensitivityReport;

/// `question_id` of the final row of a PSS report, holding the mean.
pub const PSS_SUMMARY_ID: &str = "PSS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    LayerProfile,
    Steering,
    Anova,
    Pss,
    Corr,
}

impl ReportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::LayerProfile => "layer_profile",
            Self::Steering => "steering",
            Self::Anova => "anova",
            Self::Pss => "pss",
            Self::Corr => "corr",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::LayerProfile => &[
                "layer",
                "mean_dh",
                "std_dh",
                "mean_grad",
                "mean_bound",
                "mean_dlogpi",
                "mean_residual",
                "n_pairs",
            ],
            Self::Steering => &["depth", "mean_baseline", "mean_steered"],
            Self::Anova => &["factor", "SS", "share"],
            Self::Pss => &["question_id", "S_i"],
            Self::Corr => &["slope", "intercept", "pearson_r", "n_points"],
        }
    }
}

impl FromStr for ReportKind {
    type Err = TraceIoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::LayerProfile, Self::Steering, Self::Anova, Self::Pss, Self::Corr]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TraceIoError::Report(format!("unknown report kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    LayerProfile(&'a SensitivityReport),
    Steering(&'a [SteeringSummary]),
    Anova(&'a AnovaReport),
    Pss(&'a PssReport),
    Corr(&'a LineFit),
}

impl Report<'_> {
    pub fn kind(&self) -> ReportKind {
        match self {
            Self::LayerProfile(_) => ReportKind::LayerProfile,
            Self::Steering(_) => ReportKind::Steering,
            Self::Anova(_) => ReportKind::Anova,
            Self::Pss(_) => ReportKind::Pss,
            Self::Corr(_) => ReportKind::Corr,
        }
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let f = |v: f64| format!("{v}");
        match self {
            Self::LayerProfile(r) => r
                .layers
                .iter()
                .map(|l| {
                    vec![
                        l.layer.to_string(),
                        f(l.delta_h_norm.mean),
                        f(l.delta_h_norm.std),
                        f(l.grad_norm.mean),
                        f(l.upper_bound.mean),
                        f(l.abs_delta_logprob.mean),
                        f(l.residual.mean),
                        r.n_pairs.to_string(),
                    ]
                })
                .collect(),
            Self::Steering(rows) => rows
                .iter()
                .map(|s| vec![s.layer.to_string(), f(s.mean_baseline), f(s.mean_steered)])
                .collect(),
            Self::Anova(a) => {
                let total_share = if a.degenerate { 0.0 } else { 1.0 };
                vec![
                    vec!["template".into(), f(a.ss_template), f(a.template_share)],
                    vec!["question".into(), f(a.ss_question), f(a.question_share)],
                    vec!["residual".into(), f(a.ss_residual), f(a.residual_share)],
                    vec!["total".into(), f(a.ss_total), f(total_share)],
                ]
            }
            Self::Pss(p) => p
                .question_ids
                .iter()
                .zip(&p.per_question)
                .map(|(q, s)| vec![q.clone(), f(*s)])
                .chain(std::iter::once(vec![PSS_SUMMARY_ID.into(), f(p.pss)]))
                .collect(),
            Self::Corr(c) => vec![vec![f(c.slope), f(c.intercept), f(c.pearson_r), c.n.to_string()]],
        }
    }
}

/// Writes the CSV with a header row; floats use the shortest representation
/// that parses back to the same value.
pub fn write_report(report: Report<'_>, out: impl Write) -> Result<(), TraceIoError> {
    let rows = report.rows();
    let kind = report.kind();
    let numeric_from = match kind {
        ReportKind::Anova | ReportKind::Pss => 1,
        _ => 0,
    };
    for (i, row) in rows.iter().enumerate() {
        for (cell, column) in row.iter().zip(kind.columns()).skip(numeric_from) {
            if cell.parse::<f64>().map_or(true, |v| !v.is_finite()) {
                return Err(TraceIoError::NonFinite(format!("{} row {i} column {column}", kind.as_str())));
            }
        }
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(kind.columns())?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_report(report: Report<'_>, path: impl AsRef<Path>) -> Result<(), TraceIoError> {
    write_report(report, File::create(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfileRow {
    pub layer: usize,
    pub mean_dh: f64,
    pub std_dh: f64,
    pub mean_grad: f64,
    pub mean_bound: f64,
    pub mean_dlogpi: f64,
    pub mean_residual: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteeringRow {
    pub depth: usize,
    pub mean_baseline: f64,
    pub mean_steered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub factor: String,
    #[serde(rename = "SS")]
    pub ss: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PssRow {
    pub question_id: String,
    #[serde(rename = "S_i")]
    pub s_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrRow {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    pub n_points: usize,
}

fn read_rows<T: DeserializeOwned>(kind: ReportKind, input: impl Read) -> Result<Vec<T>, TraceIoError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != kind.columns() {
        return Err(TraceIoError::Report(format!(
            "{} header {:?} does not match {:?}",
            kind.as_str(),
            header,
            kind.columns()
        )));
    }
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

pub fn read_layer_profile(input: impl Read) -> Result<Vec<LayerProfileRow>, TraceIoError> {
    read_rows(ReportKind::LayerProfile, input)
}

pub fn read_steering(input: impl Read) -> Result<Vec<SteeringRow>, TraceIoError> {
    read_rows(ReportKind::Steering, input)
}

pub fn read_anova(input: impl Read) -> Result<Vec<AnovaRow>, TraceIoError> {
    read_rows(ReportKind::Anova, input)
}

/// Rows in file order; the last row is the [`PSS_SUMMARY_ID`] summary.
pub fn read_pss(input: impl Read) -> Result<Vec<PssRow>, TraceIoError> {
    let rows: Vec<PssRow> = read_rows(ReportKind::Pss, input)?;
    match rows.last() {
        Some(last) if last.question_id == PSS_SUMMARY_ID => Ok(rows),
        _ => Err(TraceIoError::Report("pss report lacks its summary row".into())),
    }
}

pub fn read_corr(input: impl Read) -> Result<Vec<CorrRow>, TraceIoError> {
    read_rows(ReportKind::Corr, input)
}
