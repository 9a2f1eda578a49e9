//! Brute-force reference implementations for the test suites.
//!
//! Everything here recomputes results from first principles — dense math,
//! full enumeration, finite differences — independently of the optimized
//! code paths it checks. Shared data types come from the core crate; the
//! computations do not.

use std::collections::BTreeSet;

use xmlc_core::features::SparseVector;

/// Central-difference gradient of `f` at `params`.
pub fn central_diff_grad(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    eps: f64,
) -> Vec<f64> {
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let up = f(&work);
        work[i] = orig - eps;
        let down = f(&work);
        work[i] = orig;
        grad.push((up - down) / (2.0 * eps));
    }
    grad
}

/// Worst elementwise relative error between two gradients, with a floor on
/// the denominator so near-zero entries compare absolutely.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Dense dot product of sparse vectors, the slow way.
pub fn dense_dot(a: &SparseVector, b: &SparseVector, dim: usize) -> f64 {
    let mut da = vec![0.0; dim];
    let mut db = vec![0.0; dim];
    for (i, w) in a.iter() {
        da[i as usize] = w;
    }
    for (i, w) in b.iter() {
        db[i as usize] = w;
    }
    da.iter().zip(&db).map(|(x, y)| x * y).sum()
}

/// Primal squared-hinge SVM objective with a regularized bias, matching
/// constant-1 feature augmentation:
/// `1/2 (||w||^2 + b^2) + C sum max(0, 1 - y (w.x + b))^2`.
pub fn svm_primal_objective(
    w: &[f64],
    b: f64,
    xs: &[Vec<f64>],
    ys: &[f64],
    c: f64,
) -> f64 {
    let reg = 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b);
    let loss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let margin = y * (x.iter().zip(w).map(|(xi, wi)| xi * wi).sum::<f64>() + b);
            (1.0 - margin).max(0.0).powi(2)
        })
        .sum();
    reg + c * loss
}

/// Brute-force primal minimizer: gradient descent with backtracking line
/// search on the smooth squared-hinge objective. Dense, slow, and
/// independent of the dual solver it checks.
pub fn svm_primal_minimize(
    xs: &[Vec<f64>],
    ys: &[f64],
    c: f64,
    iterations: usize,
) -> (Vec<f64>, f64) {
    let dim = xs.first().map_or(0, Vec::len);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut step = 1.0;
    for _ in 0..iterations {
        // gradient of the objective
        let mut gw = w.clone();
        let mut gb = b;
        for (x, &y) in xs.iter().zip(ys) {
            let margin = y * (x.iter().zip(&w).map(|(xi, wi)| xi * wi).sum::<f64>() + b);
            let slack = 1.0 - margin;
            if slack > 0.0 {
                let coeff = -2.0 * c * slack * y;
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += coeff * xi;
                }
                gb += coeff;
            }
        }
        let gnorm2: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        if gnorm2 < 1e-24 {
            break;
        }
        // backtracking line search on the true objective
        let f0 = svm_primal_objective(&w, b, xs, ys, c);
        step *= 2.0;
        loop {
            let wt: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
            let bt = b - step * gb;
            let ft = svm_primal_objective(&wt, bt, xs, ys, c);
            if ft <= f0 - 0.25 * step * gnorm2 {
                w = wt;
                b = bt;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                return (w, b);
            }
        }
    }
    (w, b)
}

/// Tokenized document for the dense BM25 oracle.
pub struct DenseDoc {
    /// One token list per field.
    pub fields: Vec<Vec<String>>,
}

/// Dense BM25 recomputation: walks every document for every query term.
/// Field weights, k1 and b match the production parameterization; document
/// frequency is per field.
pub fn dense_bm25(
    docs: &[DenseDoc],
    query: &[String],
    doc: usize,
    field_weights: &[f64],
    k1: f64,
    b: f64,
) -> f64 {
    let n = docs.len() as f64;
    let n_fields = field_weights.len();
    let mut total = 0.0;
    for field in 0..n_fields {
        let lens: Vec<usize> = docs.iter().map(|d| d.fields[field].len()).collect();
        let avg_len = lens.iter().sum::<usize>() as f64 / docs.len() as f64;
        if avg_len == 0.0 {
            continue;
        }
        let mut field_score = 0.0;
        for term in query {
            let df = docs
                .iter()
                .filter(|d| d.fields[field].iter().any(|t| t == term))
                .count() as f64;
            if df == 0.0 {
                continue;
            }
            let tf = docs[doc].fields[field].iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = 1.0 - b + b * lens[doc] as f64 / avg_len;
            field_score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
        total += field_weights[field] * field_score;
    }
    total
}

/// Confusion counts pooled over all (article, label) pairs.
pub fn pooled_confusion<T: Ord>(
    pairs: &[(BTreeSet<T>, BTreeSet<T>)],
) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (predicted, gold) in pairs {
        for p in predicted {
            if gold.contains(p) {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        for g in gold {
            if !predicted.contains(g) {
                fn_ += 1;
            }
        }
    }
    (tp, fp, fn_)
}

fn prf_from_counts(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let p = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let r = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Micro precision/recall/F1 recomputed from pooled counts.
pub fn brute_micro<T: Ord>(pairs: &[(BTreeSet<T>, BTreeSet<T>)]) -> (f64, f64, f64) {
    let (tp, fp, fn_) = pooled_confusion(pairs);
    prf_from_counts(tp, fp, fn_)
}

/// Macro average over labels present in gold or predictions.
pub fn brute_macro<T: Ord + Clone>(pairs: &[(BTreeSet<T>, BTreeSet<T>)]) -> (f64, f64, f64) {
    let mut labels: BTreeSet<T> = BTreeSet::new();
    for (predicted, gold) in pairs {
        labels.extend(predicted.iter().cloned());
        labels.extend(gold.iter().cloned());
    }
    if labels.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for label in &labels {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for (predicted, gold) in pairs {
            match (predicted.contains(label), gold.contains(label)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let (p, r, f1) = prf_from_counts(tp, fp, fn_);
        sp += p;
        sr += r;
        sf += f1;
    }
    let l = labels.len() as f64;
    (sp / l, sr / l, sf / l)
}

/// Example-based average with the empty/empty = perfect convention.
pub fn brute_example<T: Ord>(pairs: &[(BTreeSet<T>, BTreeSet<T>)]) -> (f64, f64, f64) {
    let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
    for (predicted, gold) in pairs {
        if predicted.is_empty() && gold.is_empty() {
            sp += 1.0;
            sr += 1.0;
            sf += 1.0;
            continue;
        }
        let tp = predicted.intersection(gold).count() as u64;
        let (p, r, f1) = prf_from_counts(
            tp,
            predicted.len() as u64 - tp,
            gold.len() as u64 - tp,
        );
        sp += p;
        sr += r;
        sf += f1;
    }
    let n = pairs.len() as f64;
    (sp / n, sr / n, sf / n)
}
