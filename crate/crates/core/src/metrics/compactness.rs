// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::refmodel::l2_norm;

/// Labelled feature vectors of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactnessReport {
    /// `(label, mean pairwise distance)` in label order.
    pub per_class: Vec<(String, f64)>,
    pub intra: f64,
}

/// Euclidean distance between the normalized vectors, in `[0, 2]`.
pub fn unit_distance(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (l2_norm(a), l2_norm(b));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / na - y / nb).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Mean pairwise distance of normalized same-class vectors, averaged over
/// classes.
pub fn intra_class(fs: &FeatureSet) -> Result<CompactnessReport, MetricsError> {
    if fs.vectors.is_empty() {
        return Err(MetricsError::EmptyFeatures);
    }
    if fs.labels.len() != fs.vectors.len() {
        return Err(MetricsError::LabelCount {
            labels: fs.labels.len(),
            vectors: fs.vectors.len(),
        });
    }
    let dim = fs.vectors[0].len();
    let mut normalized = Vec::with_capacity(fs.vectors.len());
    for (index, v) in fs.vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(MetricsError::DimensionMismatch { index, len: v.len(), expected: dim });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(MetricsError::NonFinite(format!("vector {index}")));
        }
        let n = l2_norm(v);
        if n == 0.0 {
            return Err(MetricsError::ZeroVector { index });
        }
        normalized.push(v.iter().map(|x| x / n).collect::<Vec<_>>());
    }

    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in fs.labels.iter().enumerate() {
        classes.entry(label).or_default().push(i);
    }
    let mut per_class = Vec::with_capacity(classes.len());
    for (label, members) in &classes {
        if members.len() < 2 {
            return Err(MetricsError::SingletonClass {
                label: (*label).to_owned(),
                count: members.len(),
            });
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let d = normalized[i]
                    .iter()
                    .zip(&normalized[j])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                sum += d;
                count += 1;
            }
        }
        per_class.push(((*label).to_owned(), sum / count as f64));
    }
    let intra = per_class.iter().map(|(_, d)| d).sum::<f64>() / per_class.len() as f64;
    Ok(CompactnessReport { per_class, intra })
}
