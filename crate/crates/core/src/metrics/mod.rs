// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sensitivity scores, feature compactness, variance decomposition and the
//! bound/score line fit.

mod anova;
mod compactness;
mod fit;
mod pss;

pub use anova::{anova_contributions, AnovaReport, LogitTable};
pub use compactness::{intra_class, unit_distance, CompactnessReport, FeatureSet};
pub use fit::{bound_pss_fit, LineFit};
pub use pss::{pss, CorrectnessMatrix, PssReport};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("need at least two prompts per question, got {0}")]
    TooFewPrompts(usize),
    #[error("correctness matrix has no questions")]
    NoQuestions,
    #[error("row {row} has {len} entries, expected {expected}")]
    RaggedRow { row: usize, len: usize, expected: usize },
    #[error("correctness entry {value} at ({row}, {col}) is not 0 or 1")]
    NotBinary { row: usize, col: usize, value: u8 },
    #[error("vector {index} is zero and cannot be normalized")]
    ZeroVector { index: usize },
    #[error("vector {index} has dimension {len}, expected {expected}")]
    DimensionMismatch { index: usize, len: usize, expected: usize },
    #[error("class {label} has {count} member(s); at least two are needed")]
    SingletonClass { label: String, count: usize },
    #[error("feature set is empty")]
    EmptyFeatures,
    #[error("labels ({labels}) and vectors ({vectors}) differ in length")]
    LabelCount { labels: usize, vectors: usize },
    #[error("unbalanced table: {0}")]
    Unbalanced(String),
    #[error("factor {factor} needs at least two levels, got {levels}")]
    TooFewLevels { factor: &'static str, levels: usize },
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("x values have zero variance")]
    ZeroVariance,
}
