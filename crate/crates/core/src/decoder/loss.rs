//! Binary cross-entropy on logits and the two sequence losses.

use crate::scores::LabelId;
use crate::{Error, Result};

/// Per-element stabilized BCE-with-logits: `max(x,0) - x*y + ln(1+e^{-|x|})`.
pub(crate) fn bce_elem(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

/// Mean over dimensions of the stabilized binary cross-entropy.
/// Targets must be in {0, 1}.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(logits.len(), targets.len(), "dimension mismatch");
    assert!(!logits.is_empty(), "empty logits");
    let sum: f64 = logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| bce_elem(x, y))
        .sum();
    sum / logits.len() as f64
}

/// Mean BCE against a one-hot target without materializing it.
pub(crate) fn bce_one_hot(logits: &[f64], hot: LabelId) -> f64 {
    let sum: f64 = logits
        .iter()
        .enumerate()
        .map(|(j, &x)| bce_elem(x, if j == hot as usize { 1.0 } else { 0.0 }))
        .sum();
    sum / logits.len() as f64
}

/// Element-wise maximum of per-step logits. First step wins ties; the
/// winning step index per dimension is returned for gradient routing.
pub(crate) fn aggregate_max(step_logits: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
    let dims = step_logits[0].len();
    let mut agg = step_logits[0].clone();
    let mut arg = vec![0usize; dims];
    for (t, logits) in step_logits.iter().enumerate().skip(1) {
        for j in 0..dims {
            if logits[j] > agg[j] {
                agg[j] = logits[j];
                arg[j] = t;
            }
        }
    }
    (agg, arg)
}

/// Bag-of-labels loss: BCE between the element-wise max of the trace's step
/// logits and the gold multi-hot vector (stop bit set to 1). Order-invariant
/// because the max is.
pub fn loss_boll(step_logits: &[Vec<f64>], targets: &[f64]) -> Result<f64> {
    if step_logits.is_empty() {
        return Err(Error::InvalidInput("BOLL needs a non-empty trace".into()));
    }
    let (agg, _) = aggregate_max(step_logits);
    Ok(bce_with_logits(&agg, targets))
}

/// Iterative label loss: sum over time steps of the BCE between that step's
/// logits and the one-hot gold label for the step (teacher forcing).
pub fn loss_ill(step_logits: &[Vec<f64>], step_targets: &[LabelId]) -> Result<f64> {
    if step_logits.len() != step_targets.len() {
        return Err(Error::InvalidInput(format!(
            "ILL needs one target per step: {} steps, {} targets",
            step_logits.len(),
            step_targets.len()
        )));
    }
    if step_logits.is_empty() {
        return Err(Error::InvalidInput("ILL needs a non-empty trace".into()));
    }
    Ok(step_logits
        .iter()
        .zip(step_targets)
        .map(|(logits, &hot)| bce_one_hot(logits, hot))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        let l = bce_with_logits(&[0.0], &[1.0]);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let l0 = bce_with_logits(&[0.0], &[0.0]);
        assert!((l0 - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_saturated_correct_logit_is_tiny_without_overflow() {
        let l = bce_with_logits(&[40.0], &[1.0]);
        assert!(l.is_finite());
        assert!(l < 1e-15);
        let l = bce_with_logits(&[-745.0], &[0.0]);
        assert!(l.is_finite());
        assert!(l < 1e-15);
    }

    #[test]
    fn bce_matches_naive_formula() {
        // The naive loss -[y ln(s) + (1-y) ln(1-s)] evaluated with each
        // probability as its own fraction of e^{-x}: no cancellation, so
        // plain f64 keeps it well past the 1e-9 tolerance everywhere.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let x: f64 = rng.gen_range(-30.0..30.0);
            let y = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            let sigma = 1.0 / (1.0 + (-x).exp());
            let one_minus_sigma = (-x).exp() / (1.0 + (-x).exp());
            let naive = -(y * sigma.ln() + (1.0 - y) * one_minus_sigma.ln());
            let stable = bce_with_logits(&[x], &[y]);
            assert!((naive - stable).abs() < 1e-9, "x={x} y={y}");
        }
    }

    #[test]
    fn boll_single_step_reduces_to_bce() {
        let logits = vec![vec![1.0, -2.0, 0.5]];
        let targets = vec![1.0, 0.0, 1.0];
        let boll = loss_boll(&logits, &targets).unwrap();
        let bce = bce_with_logits(&logits[0], &targets);
        assert_eq!(boll, bce);
    }

    #[test]
    fn boll_invariant_under_step_permutation() {
        let a = vec![vec![1.0, -2.0], vec![-0.5, 3.0], vec![0.1, 0.1]];
        let mut b = a.clone();
        b.swap(0, 2);
        b.swap(1, 2);
        let targets = vec![1.0, 0.0];
        assert_eq!(
            loss_boll(&a, &targets).unwrap(),
            loss_boll(&b, &targets).unwrap()
        );
    }

    #[test]
    fn boll_empty_trace_is_an_error() {
        assert!(loss_boll(&[], &[1.0]).is_err());
    }

    #[test]
    fn boll_matches_brute_force_aggregate_then_bce() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let t = rng.gen_range(1..5);
            let d = rng.gen_range(1..6);
            let steps: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect();
            let targets: Vec<f64> = (0..d).map(|_| f64::from(rng.gen_range(0..2))).collect();
            let mut agg = vec![f64::MIN; d];
            for s in &steps {
                for j in 0..d {
                    agg[j] = agg[j].max(s[j]);
                }
            }
            let expected = bce_with_logits(&agg, &targets);
            assert_eq!(loss_boll(&steps, &targets).unwrap(), expected);
        }
    }

    #[test]
    fn ill_perfect_logits_give_near_zero_loss() {
        // one-hot targets [1, 0] with +-40 logits in the right places
        let steps = vec![vec![40.0, -40.0, -40.0], vec![-40.0, -40.0, 40.0]];
        let l = loss_ill(&steps, &[0, 2]).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn ill_is_order_sensitive() {
        let steps = vec![vec![5.0, -5.0], vec![-5.0, 5.0]];
        let in_order = loss_ill(&steps, &[0, 1]).unwrap();
        let swapped = loss_ill(&steps, &[1, 0]).unwrap();
        assert!(in_order < swapped);
        assert_ne!(in_order, swapped);
    }

    #[test]
    fn ill_matches_step_by_step_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let t = rng.gen_range(1..5);
            let d = rng.gen_range(2..6);
            let steps: Vec<Vec<f64>> = (0..t)
                .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
                .collect();
            let targets: Vec<LabelId> = (0..t).map(|_| rng.gen_range(0..d as u32)).collect();
            let mut expected = 0.0;
            for (s, &hot) in steps.iter().zip(&targets) {
                let one_hot: Vec<f64> = (0..d)
                    .map(|j| if j as u32 == hot { 1.0 } else { 0.0 })
                    .collect();
                expected += bce_with_logits(s, &one_hot);
            }
            let got = loss_ill(&steps, &targets).unwrap();
            assert!((got - expected).abs() < 1e-12);
        }
    }
}
