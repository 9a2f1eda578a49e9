//! Pairwise ranking SVM over the three individual models' scores.
//!
//! Per (article, candidate label) the feature vector is the three
//! min-max-normalized model scores, their pairwise products and their full
//! product. Candidates come from the union of the models' predictions at
//! thresholds calibrated so that each model proposes roughly twice as many
//! labels as the gold average. Training reduces ranking to classification
//! on (relevant - irrelevant) difference vectors and reuses the squared
//! hinge coordinate descent solver, bias-free.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::SparseVector;
use crate::io::{BinReader, BinWriter};
use crate::metrics::{micro_prf, PredictionPair};
use crate::scores::{predict_above, LabelId, LabelScores};
use crate::svm::dcd::{self, DcdConfig};
use crate::{Error, Result};

pub const N_FEATURES: usize = 7;

/// Which individual model a score came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelSlot {
    Svm = 0,
    Knn = 1,
    Decoder = 2,
}

const SLOTS: [ModelSlot; 3] = [ModelSlot::Svm, ModelSlot::Knn, ModelSlot::Decoder];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    pub c: f64,
    pub decision_threshold: f64,
    /// Most (relevant, irrelevant) pairs kept per article.
    pub pair_cap: usize,
    pub seed: u64,
    pub tune_interval: (f64, f64),
    pub tune_steps: usize,
    /// Calibration target band as multiples of the mean gold-set size.
    pub calibration_band: (f64, f64),
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            c: 0.1,
            decision_threshold: -0.0233,
            pair_cap: 50,
            seed: 0,
            tune_interval: (-0.5, 0.5),
            tune_steps: 201,
            calibration_band: (1.9, 2.1),
        }
    }
}

/// Raw per-article scores from the three individual models, aligned by
/// article position.
#[derive(Debug, Clone, Default)]
pub struct ModelScoreBatch {
    pub svm: Vec<LabelScores>,
    pub knn: Vec<LabelScores>,
    pub decoder: Vec<LabelScores>,
}

impl ModelScoreBatch {
    pub fn len(&self) -> usize {
        self.svm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.svm.is_empty()
    }

    fn slot(&self, slot: ModelSlot) -> &[LabelScores] {
        match slot {
            ModelSlot::Svm => &self.svm,
            ModelSlot::Knn => &self.knn,
            ModelSlot::Decoder => &self.decoder,
        }
    }
}

/// Per-model candidate-generation thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedThresholds {
    pub svm: f64,
    pub knn: f64,
    pub decoder: f64,
}

impl CalibratedThresholds {
    fn get(&self, slot: ModelSlot) -> f64 {
        match slot {
            ModelSlot::Svm => self.svm,
            ModelSlot::Knn => self.knn,
            ModelSlot::Decoder => self.decoder,
        }
    }
}

fn mean_predicted(scores: &[LabelScores], threshold: f64) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let total: usize = scores
        .iter()
        .map(|s| s.values().filter(|&&v| v > threshold).count())
        .sum();
    total as f64 / scores.len() as f64
}

/// Binary-search one model's threshold until the mean number of predicted
/// labels per article falls inside `band x mean_gold`. When even the
/// minimal threshold cannot reach the band, the minimal threshold is used
/// (with a warning) — the model simply cannot propose enough candidates.
pub fn calibrate_threshold(scores: &[LabelScores], mean_gold: f64, band: (f64, f64)) -> f64 {
    let lo_target = band.0 * mean_gold;
    let hi_target = band.1 * mean_gold;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in scores {
        for &v in s.values() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() {
        log::warn!("calibration: no scores at all; keeping threshold 0");
        return 0.0;
    }
    let mut lo = lo - 1.0;
    let mut hi = hi + 1.0;
    if mean_predicted(scores, lo) < lo_target {
        log::warn!(
            "calibration: even the minimal threshold yields {:.2} mean predictions (target {:.2}); using it",
            mean_predicted(scores, lo),
            lo_target
        );
        return lo;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let m = mean_predicted(scores, mid);
        if m > hi_target {
            lo = mid; // too many predictions: raise the threshold
        } else if m < lo_target {
            hi = mid;
        } else {
            return mid;
        }
    }
    log::warn!(
        "calibration: binary search ended outside the band at {:.2} mean predictions",
        mean_predicted(scores, mid)
    );
    mid
}

/// Calibrate all three models on the same article batch.
pub fn calibrate(batch: &ModelScoreBatch, mean_gold: f64, band: (f64, f64)) -> CalibratedThresholds {
    CalibratedThresholds {
        svm: calibrate_threshold(&batch.svm, mean_gold, band),
        knn: calibrate_threshold(&batch.knn, mean_gold, band),
        decoder: calibrate_threshold(&batch.decoder, mean_gold, band),
    }
}

/// Per-article candidate sets: union of the three models' predictions at
/// their calibrated thresholds.
pub fn candidate_sets(
    batch: &ModelScoreBatch,
    thresholds: &CalibratedThresholds,
) -> Vec<BTreeSet<LabelId>> {
    (0..batch.len())
        .map(|i| {
            let mut set = BTreeSet::new();
            for slot in SLOTS {
                set.extend(predict_above(&batch.slot(slot)[i], thresholds.get(slot)));
            }
            set
        })
        .collect()
}

/// Min-max normalize scores over the batch's candidate pool: `(s - min) /
/// (max - min)`, all 0.5 when the pool is constant. Candidates missing a
/// model's score get 0.
fn normalize_slot(
    scores: &[LabelScores],
    candidates: &[BTreeSet<LabelId>],
) -> (Vec<BTreeMap<LabelId, f64>>, (f64, f64)) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for (s, cands) in scores.iter().zip(candidates) {
        for label in cands {
            if let Some(&v) = s.get(label) {
                min = min.min(v);
                max = max.max(v);
            }
        }
    }
    if !min.is_finite() {
        // no candidate has a score from this model
        return (vec![BTreeMap::new(); scores.len()], (0.0, 0.0));
    }
    let span = max - min;
    let normalized = scores
        .iter()
        .zip(candidates)
        .map(|(s, cands)| {
            cands
                .iter()
                .filter_map(|label| {
                    s.get(label).map(|&v| {
                        let n = if span == 0.0 { 0.5 } else { (v - min) / span };
                        (*label, n)
                    })
                })
                .collect()
        })
        .collect();
    (normalized, (min, max))
}

/// The 7 ranking features from a normalized score triplet:
/// the scores themselves, the pairwise products, the full product.
pub fn build_features(s_svm: f64, s_knn: f64, s_dec: f64) -> [f64; N_FEATURES] {
    [
        s_svm,
        s_knn,
        s_dec,
        s_svm * s_knn,
        s_svm * s_dec,
        s_knn * s_dec,
        s_svm * s_knn * s_dec,
    ]
}

/// Feature rows for one article batch, plus the normalization statistics
/// that produced them.
#[derive(Debug, Clone)]
pub struct FeatureBatch {
    /// Per article: (candidate label, features).
    pub rows: Vec<Vec<(LabelId, [f64; N_FEATURES])>>,
    /// Per model slot: (min, max) over the batch's candidate pool.
    pub norm_stats: [(f64, f64); 3],
}

/// Normalize the batch and assemble candidate feature vectors.
pub fn build_feature_batch(
    batch: &ModelScoreBatch,
    candidates: &[BTreeSet<LabelId>],
) -> FeatureBatch {
    let (svm_n, svm_stats) = normalize_slot(&batch.svm, candidates);
    let (knn_n, knn_stats) = normalize_slot(&batch.knn, candidates);
    let (dec_n, dec_stats) = normalize_slot(&batch.decoder, candidates);
    let rows = candidates
        .iter()
        .enumerate()
        .map(|(i, cands)| {
            cands
                .iter()
                .map(|&label| {
                    let s = build_features(
                        svm_n[i].get(&label).copied().unwrap_or(0.0),
                        knn_n[i].get(&label).copied().unwrap_or(0.0),
                        dec_n[i].get(&label).copied().unwrap_or(0.0),
                    );
                    (label, s)
                })
                .collect()
        })
        .collect();
    FeatureBatch {
        rows,
        norm_stats: [svm_stats, knn_stats, dec_stats],
    }
}

/// Trained ranking model plus everything prediction needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RankModel {
    pub weights: [f64; N_FEATURES],
    pub decision_threshold: f64,
    pub c: f64,
    pub calibrated: CalibratedThresholds,
    /// Normalization statistics of the training batch, kept for audit.
    pub train_norm_stats: [(f64, f64); 3],
}

impl RankModel {
    pub fn rank_score(&self, features: &[f64; N_FEATURES]) -> f64 {
        self.weights
            .iter()
            .zip(features)
            .map(|(&w, &f)| w * f)
            .sum()
    }

    /// Candidates whose rank score is strictly above the decision
    /// threshold.
    pub fn predict_article(
        &self,
        row: &[(LabelId, [f64; N_FEATURES])],
    ) -> BTreeSet<LabelId> {
        row.iter()
            .filter(|(_, f)| self.rank_score(f) > self.decision_threshold)
            .map(|&(l, _)| l)
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?));
        w.magic(b"XRNK", 1)?;
        for weight in &self.weights {
            w.f64(*weight)?;
        }
        w.f64(self.decision_threshold)?;
        w.f64(self.c)?;
        w.f64(self.calibrated.svm)?;
        w.f64(self.calibrated.knn)?;
        w.f64(self.calibrated.decoder)?;
        for (lo, hi) in &self.train_norm_stats {
            w.f64(*lo)?;
            w.f64(*hi)?;
        }
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?));
        r.expect_magic(b"XRNK", 1)?;
        let mut weights = [0.0; N_FEATURES];
        for w in &mut weights {
            *w = r.f64()?;
        }
        let decision_threshold = r.f64()?;
        let c = r.f64()?;
        let calibrated = CalibratedThresholds {
            svm: r.f64()?,
            knn: r.f64()?,
            decoder: r.f64()?,
        };
        let mut train_norm_stats = [(0.0, 0.0); 3];
        for s in &mut train_norm_stats {
            s.0 = r.f64()?;
            s.1 = r.f64()?;
        }
        Ok(Self {
            weights,
            decision_threshold,
            c,
            calibrated,
            train_norm_stats,
        })
    }
}

/// Train the pairwise ranker on a feature batch with known gold sets.
///
/// Articles lacking either a relevant or an irrelevant candidate contribute
/// no pairs; per article at most `pair_cap` pairs are kept, sampled
/// uniformly without replacement under the seed.
pub fn train_rank(
    features: &FeatureBatch,
    gold: &[BTreeSet<LabelId>],
    calibrated: CalibratedThresholds,
    cfg: &RankConfig,
) -> Result<RankModel> {
    if features.rows.len() != gold.len() {
        return Err(Error::InvalidInput(
            "feature rows and gold sets must align".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut diffs: Vec<SparseVector> = Vec::new();
    for (row, gold_set) in features.rows.iter().zip(gold) {
        let relevant: Vec<&[f64; N_FEATURES]> = row
            .iter()
            .filter(|(l, _)| gold_set.contains(l))
            .map(|(_, f)| f)
            .collect();
        let irrelevant: Vec<&[f64; N_FEATURES]> = row
            .iter()
            .filter(|(l, _)| !gold_set.contains(l))
            .map(|(_, f)| f)
            .collect();
        if relevant.is_empty() || irrelevant.is_empty() {
            continue;
        }
        let total = relevant.len() * irrelevant.len();
        let picks: Vec<usize> = if total <= cfg.pair_cap {
            (0..total).collect()
        } else {
            // partial Fisher-Yates over pair indices
            let mut pool: Vec<usize> = (0..total).collect();
            for i in 0..cfg.pair_cap {
                let j = rng.gen_range(i..total);
                pool.swap(i, j);
            }
            pool.truncate(cfg.pair_cap);
            pool.sort_unstable();
            pool
        };
        for k in picks {
            let f_pos = relevant[k / irrelevant.len()];
            let f_neg = irrelevant[k % irrelevant.len()];
            let entries: Vec<(u32, f64)> = (0..N_FEATURES)
                .map(|j| (j as u32, f_pos[j] - f_neg[j]))
                .collect();
            diffs.push(SparseVector::from_entries(entries));
        }
    }
    let weights = if diffs.is_empty() {
        log::warn!("rank training produced no pairs; weights stay zero");
        [0.0; N_FEATURES]
    } else {
        let ys = vec![1.0; diffs.len()];
        let dcd_cfg = DcdConfig {
            c: cfg.c,
            tolerance: 1e-8,
            max_epochs: 5000,
            seed: cfg.seed,
            bias: false,
        };
        let sol = dcd::solve(&diffs, &ys, N_FEATURES, &dcd_cfg);
        let mut w = [0.0; N_FEATURES];
        w.copy_from_slice(&sol.weights);
        w
    };
    Ok(RankModel {
        weights,
        decision_threshold: cfg.decision_threshold,
        c: cfg.c,
        calibrated,
        train_norm_stats: features.norm_stats,
    })
}

/// Rank scores per candidate, aligned with the feature batch rows.
pub fn rank_scores(model: &RankModel, features: &FeatureBatch) -> Vec<Vec<(LabelId, f64)>> {
    features
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|(l, f)| (*l, model.rank_score(f)))
                .collect()
        })
        .collect()
}

/// Grid-search the decision threshold maximizing micro-F1 on a dev batch.
/// Ties resolve to the smaller threshold (higher recall).
pub fn tune_threshold(
    scored: &[Vec<(LabelId, f64)>],
    gold: &[BTreeSet<LabelId>],
    interval: (f64, f64),
    steps: usize,
) -> Result<f64> {
    if scored.is_empty() || gold.is_empty() {
        return Err(Error::InvalidInput("empty dev set for threshold tuning".into()));
    }
    if steps < 2 || interval.1 <= interval.0 {
        return Err(Error::Config("need an increasing interval and >= 2 grid points".into()));
    }
    let mut best_threshold = interval.0;
    let mut best_f1 = f64::NEG_INFINITY;
    for i in 0..steps {
        let t = interval.0 + (interval.1 - interval.0) * i as f64 / (steps - 1) as f64;
        let pairs: Vec<PredictionPair<LabelId>> = scored
            .iter()
            .zip(gold)
            .map(|(row, g)| {
                let predicted = row
                    .iter()
                    .filter(|(_, s)| *s > t)
                    .map(|&(l, _)| l)
                    .collect();
                PredictionPair::new(predicted, g.clone())
            })
            .collect();
        let f1 = micro_prf(&pairs)?.f1;
        if f1 > best_f1 {
            best_f1 = f1;
            best_threshold = t;
        }
    }
    Ok(best_threshold)
}

/// Predictions at an explicit threshold, aligned with the scored rows.
pub fn predict_from_scores(
    scored: &[Vec<(LabelId, f64)>],
    threshold: f64,
) -> Vec<BTreeSet<LabelId>> {
    scored
        .iter()
        .map(|row| {
            row.iter()
                .filter(|(_, s)| *s > threshold)
                .map(|&(l, _)| l)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(pairs: &[(LabelId, f64)]) -> LabelScores {
        pairs.iter().copied().collect()
    }

    #[test]
    fn feature_vector_products() {
        assert_eq!(
            build_features(1.0, 1.0, 1.0),
            [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]
        );
        let f = build_features(0.5, 0.0, 0.8);
        assert_eq!(f, [0.5, 0.0, 0.8, 0.0, 0.4, 0.0, 0.0]);
        // any zero component zeroes the full product
        assert_eq!(build_features(0.9, 0.7, 0.0)[6], 0.0);
    }

    #[test]
    fn products_recomputable_from_first_three() {
        let f = build_features(0.3, 0.6, 0.9);
        assert_eq!(f[3], f[0] * f[1]);
        assert_eq!(f[4], f[0] * f[2]);
        assert_eq!(f[5], f[1] * f[2]);
        assert_eq!(f[6], f[0] * f[1] * f[2]);
    }

    #[test]
    fn minmax_normalization_examples() {
        let batch = vec![scores(&[(0, 0.0), (1, 5.0), (2, 10.0)])];
        let candidates = vec![[0, 1, 2].into_iter().collect::<BTreeSet<LabelId>>()];
        let (normalized, stats) = normalize_slot(&batch, &candidates);
        assert_eq!(stats, (0.0, 10.0));
        assert_eq!(normalized[0][&0], 0.0);
        assert_eq!(normalized[0][&1], 0.5);
        assert_eq!(normalized[0][&2], 1.0);
    }

    #[test]
    fn constant_scores_normalize_to_half() {
        let batch = vec![scores(&[(0, 3.0), (1, 3.0)])];
        let candidates = vec![[0, 1].into_iter().collect::<BTreeSet<LabelId>>()];
        let (normalized, _) = normalize_slot(&batch, &candidates);
        assert_eq!(normalized[0][&0], 0.5);
        assert_eq!(normalized[0][&1], 0.5);
    }

    #[test]
    fn normalized_output_stays_in_unit_interval() {
        let batch = vec![
            scores(&[(0, -4.0), (1, 2.0)]),
            scores(&[(0, 7.5), (2, 0.1)]),
        ];
        let candidates: Vec<BTreeSet<LabelId>> = vec![
            [0, 1].into_iter().collect(),
            [0, 2].into_iter().collect(),
        ];
        let (normalized, _) = normalize_slot(&batch, &candidates);
        for row in &normalized {
            for &v in row.values() {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    fn artificial_batch(per_article: &[&[(LabelId, f64)]]) -> Vec<LabelScores> {
        per_article.iter().map(|p| scores(p)).collect()
    }

    #[test]
    fn calibration_reaches_double_gold_band() {
        // 4 articles, mean gold 2 -> target mean predicted in [3.8, 4.2]
        let svm: Vec<LabelScores> = artificial_batch(&[
            &[(0, 0.9), (1, 0.8), (2, 0.7), (3, 0.6), (4, 0.5), (5, 0.4)],
            &[(0, 0.85), (1, 0.75), (2, 0.65), (3, 0.55), (4, 0.45), (5, 0.35)],
            &[(0, 0.95), (1, 0.7), (2, 0.6), (3, 0.5), (4, 0.3), (5, 0.2)],
            &[(0, 0.88), (1, 0.77), (2, 0.66), (3, 0.44), (4, 0.33), (5, 0.22)],
        ]);
        let t = calibrate_threshold(&svm, 2.0, (1.9, 2.1));
        let m = mean_predicted(&svm, t);
        assert!((3.8..=4.2).contains(&m), "mean predicted {m}");
    }

    #[test]
    fn calibration_fixed_point_when_already_at_target() {
        let svm = artificial_batch(&[&[(0, 1.0), (1, 0.9)], &[(0, 1.0), (1, 0.8)]]);
        // mean gold 1 -> target 2 predictions per article; any threshold
        // below 0.8 works and the search must land in the band
        let t = calibrate_threshold(&svm, 1.0, (1.9, 2.1));
        assert!((mean_predicted(&svm, t) - 2.0).abs() < 0.11);
    }

    #[test]
    fn unreachable_target_falls_back_to_minimal_threshold() {
        // a single scoreable label per article cannot reach 2x gold of 2
        let svm = artificial_batch(&[&[(0, 0.5)], &[(1, 0.6)]]);
        let t = calibrate_threshold(&svm, 2.0, (1.9, 2.1));
        assert!((mean_predicted(&svm, t) - 1.0).abs() < 1e-12);
        assert!(t < 0.5);
    }

    #[test]
    fn lowering_a_threshold_never_shrinks_the_candidate_union() {
        let batch = ModelScoreBatch {
            svm: artificial_batch(&[&[(0, 0.9), (1, 0.2)]]),
            knn: artificial_batch(&[&[(1, 0.5)]]),
            decoder: artificial_batch(&[&[(2, 0.7)]]),
        };
        let t1 = CalibratedThresholds {
            svm: 0.5,
            knn: 0.4,
            decoder: 0.6,
        };
        let mut t2 = t1;
        t2.svm = 0.1;
        let c1 = candidate_sets(&batch, &t1);
        let c2 = candidate_sets(&batch, &t2);
        assert!(c1[0].is_subset(&c2[0]));
    }

    #[test]
    fn rank_training_1d_separable_sign() {
        // relevant candidates have higher svm score; weight 0 must be positive
        let rows = vec![vec![
            (0 as LabelId, build_features(0.9, 0.0, 0.0)),
            (1, build_features(0.1, 0.0, 0.0)),
        ]];
        let features = FeatureBatch {
            rows,
            norm_stats: [(0.0, 1.0); 3],
        };
        let gold: Vec<BTreeSet<LabelId>> = vec![[0].into_iter().collect()];
        let cal = CalibratedThresholds {
            svm: 0.0,
            knn: 0.0,
            decoder: 0.0,
        };
        let model = train_rank(&features, &gold, cal, &RankConfig::default()).unwrap();
        assert!(model.weights[0] > 0.0);
        assert_eq!(model.c, 0.1);
        assert_eq!(model.decision_threshold, -0.0233);
    }

    #[test]
    fn swapping_pair_direction_with_negated_sign_leaves_objective_unchanged() {
        // (f+, f-) with label +1 equals (f-, f+) with label -1 as difference
        // vectors; both yield the same solver problem.
        let f_pos = build_features(0.8, 0.6, 0.7);
        let f_neg = build_features(0.2, 0.1, 0.3);
        let fwd: Vec<(u32, f64)> = (0..N_FEATURES)
            .map(|j| (j as u32, f_pos[j] - f_neg[j]))
            .collect();
        let rev: Vec<(u32, f64)> = (0..N_FEATURES)
            .map(|j| (j as u32, f_neg[j] - f_pos[j]))
            .collect();
        let cfg = DcdConfig {
            c: 0.1,
            bias: false,
            tolerance: 1e-10,
            max_epochs: 10000,
            seed: 3,
        };
        let a = dcd::solve(
            &[SparseVector::from_entries(fwd)],
            &[1.0],
            N_FEATURES,
            &cfg,
        );
        let b = dcd::solve(
            &[SparseVector::from_entries(rev)],
            &[-1.0],
            N_FEATURES,
            &cfg,
        );
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_features_yield_zero_weights_and_threshold_rules() {
        let f = build_features(0.5, 0.5, 0.5);
        let rows = vec![vec![(0 as LabelId, f), (1, f)]];
        let features = FeatureBatch {
            rows: rows.clone(),
            norm_stats: [(0.0, 1.0); 3],
        };
        let gold: Vec<BTreeSet<LabelId>> = vec![[0].into_iter().collect()];
        let cal = CalibratedThresholds {
            svm: 0.0,
            knn: 0.0,
            decoder: 0.0,
        };
        // all difference vectors are zero -> the dual never moves
        let model = train_rank(&features, &gold, cal, &RankConfig::default()).unwrap();
        assert_eq!(model.weights, [0.0; N_FEATURES]);
        // prediction then follows the threshold sign only
        let mut m = model.clone();
        m.decision_threshold = -0.1;
        assert_eq!(m.predict_article(&rows[0]).len(), 2);
        m.decision_threshold = 0.1;
        assert!(m.predict_article(&rows[0]).is_empty());
    }

    #[test]
    fn predict_monotone_in_decision_threshold() {
        let rows = vec![
            (0 as LabelId, build_features(0.9, 0.8, 0.7)),
            (1, build_features(0.4, 0.3, 0.2)),
            (2, build_features(0.1, 0.0, 0.1)),
        ];
        let model = RankModel {
            weights: [1.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
            decision_threshold: 0.0,
            c: 0.1,
            calibrated: CalibratedThresholds {
                svm: 0.0,
                knn: 0.0,
                decoder: 0.0,
            },
            train_norm_stats: [(0.0, 1.0); 3],
        };
        let mut strict = model.clone();
        strict.decision_threshold = 1.0;
        let loose_set = model.predict_article(&rows);
        let strict_set = strict.predict_article(&rows);
        assert!(strict_set.is_subset(&loose_set));
        // +infinity threshold predicts nothing
        let mut inf = model.clone();
        inf.decision_threshold = f64::INFINITY;
        assert!(inf.predict_article(&rows).is_empty());
    }

    #[test]
    fn tune_threshold_contract() {
        // candidate 0 is gold with score 0.3; candidate 1 is not, score -0.2
        let scored = vec![vec![(0 as LabelId, 0.3), (1, -0.2)]];
        let gold: Vec<BTreeSet<LabelId>> = vec![[0].into_iter().collect()];
        let t = tune_threshold(&scored, &gold, (-0.5, 0.5), 201).unwrap();
        // any threshold in [-0.2, 0.3) gives perfect F1; ties resolve low
        assert!(t >= -0.2 && t < 0.3);
        let preds = predict_from_scores(&scored, t);
        assert_eq!(preds[0], gold[0]);
        // degenerate dev set where every threshold scores the same:
        // the interval minimum wins
        let scored_const = vec![vec![(0 as LabelId, 1.0)]];
        let t_min = tune_threshold(&scored_const, &gold, (-0.5, 0.5), 11).unwrap();
        assert_eq!(t_min, -0.5);
        // empty dev set is an error
        assert!(tune_threshold(&[], &gold, (-0.5, 0.5), 11).is_err());
    }

    #[test]
    fn ensemble_prediction_contained_in_candidates() {
        let batch = ModelScoreBatch {
            svm: artificial_batch(&[&[(0, 0.9), (1, -0.5)]]),
            knn: artificial_batch(&[&[(2, 0.8)]]),
            decoder: artificial_batch(&[&[(0, 0.6)]]),
        };
        let thresholds = CalibratedThresholds {
            svm: 0.0,
            knn: 0.5,
            decoder: 0.5,
        };
        let candidates = candidate_sets(&batch, &thresholds);
        let features = build_feature_batch(&batch, &candidates);
        let model = RankModel {
            weights: [1.0; N_FEATURES],
            decision_threshold: -1.0,
            c: 0.1,
            calibrated: thresholds,
            train_norm_stats: features.norm_stats,
        };
        let predicted = model.predict_article(&features.rows[0]);
        assert!(predicted.iter().all(|l| candidates[0].contains(l)));
        // no candidates -> empty prediction
        assert!(model.predict_article(&[]).is_empty());
    }

    #[test]
    fn rank_model_roundtrip() {
        let model = RankModel {
            weights: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            decision_threshold: -0.0233,
            c: 0.1,
            calibrated: CalibratedThresholds {
                svm: -0.12,
                knn: 0.07,
                decoder: 0.51,
            },
            train_norm_stats: [(-1.0, 2.0), (0.0, 1.0), (0.2, 0.9)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rank.bin");
        model.save(&path).unwrap();
        assert_eq!(RankModel::load(&path).unwrap(), model);
    }
}
