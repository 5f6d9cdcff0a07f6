// SPDX-License-Identifier: MIT OR Apache-2.0

//! First-order sensitivity analysis of language-model outputs under
//! meaning-preserving prompt changes.
//!
//! For two prompts whose last-position hidden states at layer `l` are `h_0`
//! and `h_1`, the change in target log-probability expands as
//!
//! ```text
//! Δ log π(y_t) = ∇_h log π(y_t | h_0)ᵀ Δh + O(‖Δh‖²)
//! |gᵀ Δh| ≤ ‖g‖ · ‖Δh‖
//! ```
//!
//! The crate computes every term of that expansion on a deterministic
//! reference transformer ([`refmodel`]) or on traces exported from real
//! models ([`traceio`]), generates prompt variants ([`perturb`]), and
//! provides the aggregate metrics used to study them ([`metrics`],
//! [`steering`]).

pub mod dataset;
pub mod metrics;
pub mod perturb;
pub mod plot;
pub mod refmodel;
pub mod steering;
pub mod target;
pub mod taylor;
pub mod traceio;
