//! Micro, macro and example-based precision/recall/F1 for multi-label
//! predictions.
//!
//! Degenerate-case conventions, applied uniformly and unit-tested:
//! 0/0 ratios are 0, except an article with empty gold and empty prediction
//! which counts as perfect (1, 1, 1). The macro average runs over labels
//! that appear in gold or predictions on the evaluated set, not the whole
//! vocabulary; the report header states this.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One evaluated article: what the model said and what the annotators said.
#[derive(Debug, Clone)]
pub struct PredictionPair<T: Ord> {
    pub predicted: BTreeSet<T>,
    pub gold: BTreeSet<T>,
}

impl<T: Ord> PredictionPair<T> {
    pub fn new(predicted: BTreeSet<T>, gold: BTreeSet<T>) -> Self {
        Self { predicted, gold }
    }
}

/// Precision, recall, F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn check_nonempty<T: Ord>(pairs: &[PredictionPair<T>]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput(
            "cannot evaluate an empty prediction set collection".into(),
        ));
    }
    Ok(())
}

/// Micro average: TP/FP/FN pooled over all (article, label) pairs.
pub fn micro_prf<T: Ord>(pairs: &[PredictionPair<T>]) -> Result<Prf> {
    check_nonempty(pairs)?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for pair in pairs {
        tp += pair.predicted.intersection(&pair.gold).count() as u64;
        fp += pair.predicted.difference(&pair.gold).count() as u64;
        fn_ += pair.gold.difference(&pair.predicted).count() as u64;
    }
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    Ok(Prf {
        precision: p,
        recall: r,
        f1: f1_of(p, r),
    })
}

/// Macro average over labels occurring in gold or predictions; MaF1 is the
/// mean of per-label F1 values, not the F1 of the means.
pub fn macro_prf<T: Ord + Clone>(pairs: &[PredictionPair<T>]) -> Result<Prf> {
    check_nonempty(pairs)?;
    let mut per_label: BTreeMap<&T, (u64, u64, u64)> = BTreeMap::new();
    for pair in pairs {
        for label in pair.predicted.intersection(&pair.gold) {
            per_label.entry(label).or_default().0 += 1;
        }
        for label in pair.predicted.difference(&pair.gold) {
            per_label.entry(label).or_default().1 += 1;
        }
        for label in pair.gold.difference(&pair.predicted) {
            per_label.entry(label).or_default().2 += 1;
        }
    }
    if per_label.is_empty() {
        return Ok(Prf {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        });
    }
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for (_, &(tp, fp, fn_)) in &per_label {
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        sp += p;
        sr += r;
        sf += f1_of(p, r);
    }
    let l = per_label.len() as f64;
    Ok(Prf {
        precision: sp / l,
        recall: sr / l,
        f1: sf / l,
    })
}

/// Example-based average: per-article P/R/F1, then the mean over articles.
/// An article with empty gold and empty prediction scores (1, 1, 1).
pub fn example_prf<T: Ord>(pairs: &[PredictionPair<T>]) -> Result<Prf> {
    check_nonempty(pairs)?;
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for pair in pairs {
        if pair.gold.is_empty() && pair.predicted.is_empty() {
            sp += 1.0;
            sr += 1.0;
            sf += 1.0;
            continue;
        }
        let tp = pair.predicted.intersection(&pair.gold).count() as u64;
        let p = ratio(tp, pair.predicted.len() as u64);
        let r = ratio(tp, pair.gold.len() as u64);
        sp += p;
        sr += r;
        sf += f1_of(p, r);
    }
    let n = pairs.len() as f64;
    Ok(Prf {
        precision: sp / n,
        recall: sr / n,
        f1: sf / n,
    })
}

/// The nine-metric report: micro / macro / example-based P, R, F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub micro: Prf,
    #[serde(rename = "macro")]
    pub macro_: Prf,
    pub example: Prf,
}

impl MetricsReport {
    pub fn compute<T: Ord + Clone>(pairs: &[PredictionPair<T>]) -> Result<Self> {
        Ok(Self {
            micro: micro_prf(pairs)?,
            macro_: macro_prf(pairs)?,
            example: example_prf(pairs)?,
        })
    }

    /// Plain-text table with one row per metric.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("# macro averages run over labels present in gold or predictions\n");
        out.push_str(&format!("uF1   {:.4}\n", self.micro.f1));
        out.push_str(&format!("uP    {:.4}\n", self.micro.precision));
        out.push_str(&format!("uR    {:.4}\n", self.micro.recall));
        out.push_str(&format!("MaF1  {:.4}\n", self.macro_.f1));
        out.push_str(&format!("MaP   {:.4}\n", self.macro_.precision));
        out.push_str(&format!("MaR   {:.4}\n", self.macro_.recall));
        out.push_str(&format!("EbF1  {:.4}\n", self.example.f1));
        out.push_str(&format!("EbP   {:.4}\n", self.example.precision));
        out.push_str(&format!("EbR   {:.4}\n", self.example.recall));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn fixture() -> Vec<PredictionPair<String>> {
        // gold {a,b}/{a}, pred {a}/{a,c}
        vec![
            PredictionPair::new(set(&["a"]), set(&["a", "b"])),
            PredictionPair::new(set(&["a", "c"]), set(&["a"])),
        ]
    }

    #[test]
    fn micro_on_fixture_is_two_thirds() {
        let m = micro_prf(&fixture()).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn micro_perfect_and_disjoint() {
        let perfect = vec![PredictionPair::new(set(&["a", "b"]), set(&["a", "b"]))];
        assert_eq!(
            micro_prf(&perfect).unwrap(),
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
        let disjoint = vec![PredictionPair::new(set(&["x"]), set(&["y"]))];
        assert_eq!(
            micro_prf(&disjoint).unwrap(),
            Prf {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0
            }
        );
    }

    #[test]
    fn macro_on_fixture_matches_per_label_table() {
        // a: P=1 R=1 F=1; b: P=0 R=0 F=0; c: P=0 R=0 F=0
        let m = macro_prf(&fixture()).unwrap();
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn macro_spurious_label_dilutes_by_one_over_l() {
        // single perfect label, plus one label predicted but never gold
        let pairs = vec![PredictionPair::new(set(&["a", "z"]), set(&["a"]))];
        let m = macro_prf(&pairs).unwrap();
        assert!((m.precision - 0.5).abs() < 1e-15); // (1 + 0) / 2
    }

    #[test]
    fn macro_single_perfect_label() {
        let pairs = vec![PredictionPair::new(set(&["a"]), set(&["a"]))];
        assert_eq!(
            macro_prf(&pairs).unwrap(),
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn example_on_fixture_matches_hand_average() {
        // art1: P=1, R=1/2, F=2/3; art2: P=1/2, R=1, F=2/3
        let m = example_prf(&fixture()).unwrap();
        assert!((m.precision - 0.75).abs() < 1e-15);
        assert!((m.recall - 0.75).abs() < 1e-15);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn example_empty_prediction_on_nonempty_gold_is_zero() {
        let pairs = vec![PredictionPair::new(set(&[]), set(&["a"]))];
        assert_eq!(
            example_prf(&pairs).unwrap(),
            Prf {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0
            }
        );
    }

    #[test]
    fn example_empty_empty_is_perfect() {
        let pairs = vec![PredictionPair::new(set(&[]), set(&[]))];
        assert_eq!(
            example_prf(&pairs).unwrap(),
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
    }

    #[test]
    fn empty_collection_is_an_error() {
        let pairs: Vec<PredictionPair<String>> = Vec::new();
        assert!(micro_prf(&pairs).is_err());
        assert!(macro_prf(&pairs).is_err());
        assert!(example_prf(&pairs).is_err());
    }

    #[test]
    fn adding_a_correct_prediction_never_decreases_micro_recall() {
        let base = fixture();
        let before = micro_prf(&base).unwrap();
        let mut more = fixture();
        more[0].predicted.insert("b".into()); // b is gold for article 0
        let after = micro_prf(&more).unwrap();
        assert!(after.recall >= before.recall);
    }

    #[test]
    fn adding_an_incorrect_prediction_never_increases_micro_precision() {
        let base = fixture();
        let before = micro_prf(&base).unwrap();
        let mut more = fixture();
        more[1].predicted.insert("zz".into());
        let after = micro_prf(&more).unwrap();
        assert!(after.precision <= before.precision);
    }

    #[test]
    fn report_table_has_nine_metric_rows() {
        let report = MetricsReport::compute(&fixture()).unwrap();
        let table = report.to_table();
        assert_eq!(table.lines().count(), 10); // header + 9 rows
        for key in ["uF1", "uP", "uR", "MaF1", "MaP", "MaR", "EbF1", "EbP", "EbR"] {
            assert!(table.lines().any(|l| l.starts_with(key)), "missing {key}");
        }
    }
}
