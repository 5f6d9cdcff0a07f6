// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary trace container and CSV report files. Byte layouts are described
//! in `docs/formats.md`.

mod report;
mod trace;

pub use report::{
    export_report, read_anova, read_corr, read_layer_profile, read_pss, read_steering, write_report, AnovaRow,
    CorrRow, LayerProfileRow, PssRow, Report, ReportKind, SteeringRow, PSS_SUMMARY_ID,
};
pub use trace::{
    decode_trace, encode_trace, fnv1a64, read_trace, write_trace, TraceBundle, TraceHeader, FORMAT_VERSION, MAGIC,
};

#[derive(Debug, thiserror::Error)]
pub enum TraceIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"PSTR\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum failure: {0}")]
    Checksum(String),
    #[error("dimension inconsistency: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid header: {0}")]
    Header(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid report: {0}")]
    Report(String),
}
