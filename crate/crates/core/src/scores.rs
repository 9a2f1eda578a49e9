//! Per-article label scores, the common currency between models,
//! thresholding, ensembling and evaluation.

use std::collections::{BTreeMap, BTreeSet};

/// Dense label index into a [`crate::corpus::LabelVocabulary`].
pub type LabelId = u32;

/// Map from label to a model-specific real score.
///
/// Ordered so that iteration, serialization and float accumulation are
/// deterministic.
pub type LabelScores = BTreeMap<LabelId, f64>;

/// Labels whose score is strictly above `threshold`.
pub fn predict_above(scores: &LabelScores, threshold: f64) -> BTreeSet<LabelId> {
    scores
        .iter()
        .filter(|(_, &s)| s > threshold)
        .map(|(&l, _)| l)
        .collect()
}
