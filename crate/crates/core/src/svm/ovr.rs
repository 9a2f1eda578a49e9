//! One-vs-rest linear SVM over sparse tf-idf features.
//!
//! One independent binary classifier per label with at least
//! `min_label_frequency` positive training articles. Scores are signed
//! distances to the decision hyper-plane, `(w.x + b) / ||w||`, so the
//! recall-oriented `plane_shift` threshold is comparable across labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelVocabulary;
use crate::features::SparseVector;
use crate::io::{BinReader, BinWriter};
use crate::scores::{predict_above, LabelId, LabelScores};
use crate::svm::dcd::{self, DcdConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Regularization strength.
    pub c: f64,
    /// Labels below this training frequency are not trained.
    pub min_label_frequency: u32,
    /// Decision-plane translation along w, in units of signed distance.
    /// Negative values trade precision for recall.
    pub plane_shift: f64,
    /// Maximum solver passes over the data per label.
    pub max_iterations: usize,
    /// Projected-gradient violation below which the solver stops.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            min_label_frequency: 20,
            plane_shift: -0.3,
            max_iterations: 1000,
            tolerance: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LinearClassifier {
    w: SparseVector,
    bias: f64,
    w_norm: f64,
}

impl LinearClassifier {
    fn new(w: SparseVector, bias: f64) -> Self {
        let w_norm = w.l2_norm();
        Self { w, bias, w_norm }
    }

    fn signed_distance(&self, x: &SparseVector) -> f64 {
        (self.w.dot(x) + self.bias) / self.w_norm.max(1e-12)
    }
}

/// Trained one-vs-rest model.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmOvrModel {
    feature_dim: u32,
    plane_shift: f64,
    classifiers: BTreeMap<LabelId, LinearClassifier>,
}

const MAGIC: &[u8; 4] = b"XSVM";
const VERSION: u32 = 1;

impl SvmOvrModel {
    /// Assemble a model from explicit per-label hyper-planes.
    pub fn from_classifiers(
        feature_dim: u32,
        plane_shift: f64,
        parts: impl IntoIterator<Item = (LabelId, SparseVector, f64)>,
    ) -> Self {
        let classifiers = parts
            .into_iter()
            .map(|(l, w, b)| (l, LinearClassifier::new(w, b)))
            .collect();
        Self {
            feature_dim,
            plane_shift,
            classifiers,
        }
    }

    pub fn trained_labels(&self) -> BTreeSet<LabelId> {
        self.classifiers.keys().copied().collect()
    }

    pub fn plane_shift(&self) -> f64 {
        self.plane_shift
    }

    pub fn feature_dim(&self) -> u32 {
        self.feature_dim
    }

    /// Signed distance to each trained label's hyper-plane. Untrained
    /// labels are omitted (they are never predicted).
    pub fn score(&self, x: &SparseVector) -> LabelScores {
        self.classifiers
            .iter()
            .map(|(&label, clf)| (label, clf.signed_distance(x)))
            .collect()
    }

    /// Labels whose signed distance is strictly above the plane shift.
    pub fn predict(&self, x: &SparseVector) -> BTreeSet<LabelId> {
        predict_above(&self.score(x), self.plane_shift)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?));
        w.magic(MAGIC, VERSION)?;
        w.u32(self.feature_dim)?;
        w.f64(self.plane_shift)?;
        w.u32(self.classifiers.len() as u32)?;
        for (&label, clf) in &self.classifiers {
            w.u32(label)?;
            w.f64(clf.bias)?;
            w.u32(clf.w.nnz() as u32)?;
            for (idx, weight) in clf.w.iter() {
                w.u32(idx)?;
                w.f64(weight)?;
            }
        }
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?));
        r.expect_magic(MAGIC, VERSION)?;
        let feature_dim = r.u32()?;
        let plane_shift = r.f64()?;
        let n = r.u32()?;
        let mut classifiers = BTreeMap::new();
        for _ in 0..n {
            let label = r.u32()?;
            let bias = r.f64()?;
            let nnz = r.u32()?;
            let mut entries = Vec::with_capacity(nnz as usize);
            for _ in 0..nnz {
                let idx = r.u32()?;
                let weight = r.f64()?;
                entries.push((idx, weight));
            }
            classifiers.insert(
                label,
                LinearClassifier::new(SparseVector::from_entries(entries), bias),
            );
        }
        Ok(Self {
            feature_dim,
            plane_shift,
            classifiers,
        })
    }
}

impl LinearClassifier {
    fn new_from_dense(weights: &[f64], bias: f64) -> Self {
        let entries: Vec<(u32, f64)> = weights
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i as u32, v))
            .collect();
        Self::new(SparseVector::from_entries(entries), bias)
    }
}

/// Train one binary classifier per sufficiently frequent label.
///
/// `train` pairs each article's feature vector with its gold label-id set.
/// Label frequencies are counted on this training set; labels with fewer
/// than `min_label_frequency` positives, or with no negatives, are skipped.
pub fn train_ovr(
    train: &[(SparseVector, BTreeSet<LabelId>)],
    vocab: &LabelVocabulary,
    feature_dim: u32,
    cfg: &SvmConfig,
) -> Result<SvmOvrModel> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty SVM training set".into()));
    }
    if cfg.c <= 0.0 {
        return Err(Error::Config(format!("SVM C must be positive, got {}", cfg.c)));
    }
    if cfg.min_label_frequency < 1 {
        return Err(Error::Config("min_label_frequency must be >= 1".into()));
    }

    let n_labels = vocab.num_labels();
    let mut positives: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
    for (i, (_, gold)) in train.iter().enumerate() {
        for &label in gold {
            positives[label as usize].push(i);
        }
    }

    let mut retained: Vec<LabelId> = Vec::new();
    for (label, pos) in positives.iter().enumerate() {
        let freq = pos.len() as u32;
        if freq < cfg.min_label_frequency {
            continue;
        }
        if pos.len() == train.len() {
            log::warn!(
                "label {} is positive in every training article; skipping",
                vocab.code(label as LabelId)
            );
            continue;
        }
        retained.push(label as LabelId);
    }

    let xs: Vec<SparseVector> = train.iter().map(|(x, _)| x.clone()).collect();

    let trained: Vec<(LabelId, LinearClassifier)> = retained
        .par_iter()
        .map(|&label| {
            let mut ys = vec![-1.0; xs.len()];
            for &i in &positives[label as usize] {
                ys[i] = 1.0;
            }
            let dcd_cfg = DcdConfig {
                c: cfg.c,
                tolerance: cfg.tolerance,
                max_epochs: cfg.max_iterations,
                seed: cfg
                    .seed
                    .wrapping_add(u64::from(label).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
                bias: true,
            };
            let sol = dcd::solve(&xs, &ys, feature_dim as usize, &dcd_cfg);
            (label, LinearClassifier::new_from_dense(&sol.weights, sol.bias))
        })
        .collect();

    Ok(SvmOvrModel {
        feature_dim,
        plane_shift: cfg.plane_shift,
        classifiers: trained.into_iter().collect(),
    })
}
