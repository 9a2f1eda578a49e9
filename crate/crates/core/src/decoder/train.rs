//! Mini-batch training for the decoder heads.
//!
//! Plain SGD with linear warmup and linear decay, inverted dropout on the
//! encoder output, and a sampled finite-difference gradient check on the
//! first batch of every run. Fully deterministic under a fixed seed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, LabelVocabulary};
use crate::features::TermVocabulary;
use crate::scores::LabelId;
use crate::{Error, Result};

use super::model::{DecoderConfig, DecoderModel, FreqOrder, HeadKind, LossKind};
use super::net::{DecoderExample, DecoderInput, DecoderTask};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Steps of linear warmup before the linear decay begins.
    pub warmup_steps: usize,
    /// Dropout probability on the encoder output.
    pub dropout: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 2e-5,
            warmup_steps: 4000,
            dropout: 0.1,
            epochs: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// (global step, mean batch loss) per update.
    pub loss_log: Vec<(usize, f64)>,
    /// Worst relative error seen by the first-batch gradient check.
    pub grad_check_max_rel_err: f64,
}

/// Gold labels sorted into the decoding order by the strict
/// (frequency, label id) key, stop label appended.
pub fn gold_sequence(
    gold: &[LabelId],
    order: FreqOrder,
    freqs: &[u32],
    stop: LabelId,
) -> Vec<LabelId> {
    let mut seq: Vec<LabelId> = gold.to_vec();
    seq.sort_unstable_by_key(|&l| (freqs[l as usize], l));
    if order == FreqOrder::Descending {
        seq.reverse();
    }
    seq.push(stop);
    seq
}

fn lr_at(step: usize, total: usize, cfg: &TrainConfig) -> f64 {
    let base = cfg.learning_rate;
    if cfg.warmup_steps > 0 && step <= cfg.warmup_steps {
        return base * step as f64 / cfg.warmup_steps as f64;
    }
    if total > cfg.warmup_steps {
        let remaining = (total - step) as f64;
        let span = (total - cfg.warmup_steps) as f64;
        base * (remaining / span).max(0.0)
    } else {
        base
    }
}

struct PreparedArticle {
    token_ids: Vec<u32>,
    gold: Vec<LabelId>,
    multi_hot: Vec<f64>,
}

fn prepare(
    articles: &[Article],
    model: &DecoderModel,
    vocab: &LabelVocabulary,
) -> Result<Vec<PreparedArticle>> {
    let n_out = model.label_count() + 1;
    let stop_bit = match (model.config.head, model.config.loss) {
        // the GRU bag loss trains the stop unit on every article
        (HeadKind::Gru, LossKind::Boll) => 1.0,
        _ => 0.0,
    };
    articles
        .iter()
        .map(|a| {
            let gold: Vec<LabelId> = vocab.gold_ids(a)?.into_iter().collect();
            let mut multi_hot = vec![0.0; n_out];
            for &l in &gold {
                multi_hot[l as usize] = 1.0;
            }
            multi_hot[n_out - 1] = stop_bit;
            Ok(PreparedArticle {
                token_ids: model.token_ids(a),
                gold,
                multi_hot,
            })
        })
        .collect()
}

fn make_example(
    model: &DecoderModel,
    prep: &PreparedArticle,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> DecoderExample {
    let dropout_mask = if dropout > 0.0 {
        let keep = 1.0 / (1.0 - dropout);
        Some(
            (0..model.config.embedding_dim)
                .map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep })
                .collect(),
        )
    } else {
        None
    };

    let task = match (model.config.head, model.config.loss) {
        (HeadKind::Linear | HeadKind::LabelAttention, _) => DecoderTask::MultiHot {
            targets: prep.multi_hot.clone(),
        },
        (HeadKind::Gru, LossKind::Boll) => {
            // free-running decode fixes the decisions for this update
            let mut e = super::net::embed_tokens(&model.layout, &model.params, &prep.token_ids);
            if let Some(mask) = &dropout_mask {
                for (ei, &m) in e.iter_mut().zip(mask) {
                    *ei *= m;
                }
            }
            let trace = super::decode::decode_greedy(model, &e, model.config.max_steps);
            DecoderTask::SequenceBag {
                inputs: trace.input_sequence(),
                targets: prep.multi_hot.clone(),
            }
        }
        (HeadKind::Gru, LossKind::Ill) => {
            let seq = gold_sequence(
                &prep.gold,
                model.config.order,
                model.label_freqs(),
                model.stop_label(),
            );
            let mut inputs = vec![DecoderInput::Start];
            for &l in seq.iter().take(seq.len() - 1) {
                inputs.push(DecoderInput::Label(l));
            }
            DecoderTask::SequenceSteps {
                inputs,
                step_targets: seq,
            }
        }
    };
    DecoderExample {
        token_ids: prep.token_ids.clone(),
        dropout_mask,
        task,
    }
}

/// Sampled central-difference check of the analytic batch gradient.
fn check_first_batch(
    model: &DecoderModel,
    examples: &[DecoderExample],
    grad: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    const SAMPLES: usize = 24;
    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-3;
    let mut params = model.params.to_vec();
    let batch_loss = |params: &[f64], layout, cfg| -> f64 {
        examples
            .iter()
            .map(|ex| super::net::example_loss(cfg, layout, params, ex))
            .sum::<f64>()
            / examples.len() as f64
    };
    let mut worst = 0.0f64;
    for _ in 0..SAMPLES {
        let i = rng.gen_range(0..params.len());
        let orig = params[i];
        params[i] = orig + EPS;
        let up = batch_loss(&params, &model.layout, &model.config);
        params[i] = orig - EPS;
        let down = batch_loss(&params, &model.layout, &model.config);
        params[i] = orig;
        let fd = (up - down) / (2.0 * EPS);
        let analytic = grad[i];
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-4);
        worst = worst.max(rel);
        if rel > TOL {
            return Err(Error::GradientCheck(format!(
                "coordinate {i}: analytic {analytic:.3e} vs finite difference {fd:.3e} (rel {rel:.3e})"
            )));
        }
    }
    Ok(worst)
}

/// Train a decoder from scratch on the given articles.
pub fn train_decoder(
    articles: &[Article],
    term_vocab: &TermVocabulary,
    label_vocab: &LabelVocabulary,
    dcfg: &DecoderConfig,
    tcfg: &TrainConfig,
) -> Result<(DecoderModel, TrainReport)> {
    if articles.is_empty() {
        return Err(Error::InvalidInput("empty decoder training set".into()));
    }
    if tcfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&tcfg.dropout) {
        return Err(Error::Config(format!(
            "dropout must lie in [0, 1), got {}",
            tcfg.dropout
        )));
    }

    let mut model = DecoderModel::new(dcfg.clone(), term_vocab.clone(), label_vocab, tcfg.seed);
    let prepared = prepare(articles, &model, label_vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed.wrapping_add(0x5EED));

    let steps_per_epoch = prepared.len().div_ceil(tcfg.batch_size);
    let total_steps = steps_per_epoch * tcfg.epochs;
    let mut loss_log = Vec::with_capacity(total_steps);
    let mut grad = vec![0.0; model.param_count()];
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut step = 0usize;
    let mut grad_check_max_rel_err = 0.0;

    for _epoch in 0..tcfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            step += 1;
            let examples: Vec<DecoderExample> = chunk
                .iter()
                .map(|&i| make_example(&model, &prepared[i], tcfg.dropout, &mut rng))
                .collect();

            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            for ex in &examples {
                batch_loss += model.example_loss_and_grad(ex, &mut grad);
            }
            let inv = 1.0 / examples.len() as f64;
            batch_loss *= inv;
            grad.iter_mut().for_each(|g| *g *= inv);

            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at step {step} (lr {})",
                    lr_at(step, total_steps, tcfg)
                )));
            }
            if step == 1 {
                grad_check_max_rel_err = check_first_batch(&model, &examples, &grad, &mut rng)?;
            }

            let lr = lr_at(step, total_steps, tcfg);
            for (p, g) in model.params_mut().iter_mut().zip(&grad) {
                *p -= lr * g;
            }
            if model.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite parameter after step {step}"
                )));
            }
            loss_log.push((step, batch_loss));
        }
    }

    Ok((
        model,
        TrainReport {
            loss_log,
            grad_check_max_rel_err,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gold_sequence_orders_by_frequency_key_and_appends_stop() {
        let freqs = vec![10, 3, 10, 7];
        // ascending: (3,1), (7,3), (10,0), (10,2)
        assert_eq!(
            gold_sequence(&[0, 1, 2, 3], FreqOrder::Ascending, &freqs, 4),
            vec![1, 3, 0, 2, 4]
        );
        // descending reverses the key order
        assert_eq!(
            gold_sequence(&[0, 1, 2, 3], FreqOrder::Descending, &freqs, 4),
            vec![2, 0, 3, 1, 4]
        );
    }

    #[test]
    fn empty_gold_sequence_is_stop_only() {
        assert_eq!(gold_sequence(&[], FreqOrder::Ascending, &[5], 1), vec![1]);
    }

    #[test]
    fn lr_schedule_warms_up_then_decays_linearly() {
        let cfg = TrainConfig {
            learning_rate: 1.0,
            warmup_steps: 10,
            ..TrainConfig::default()
        };
        assert!((lr_at(5, 100, &cfg) - 0.5).abs() < 1e-12);
        assert!((lr_at(10, 100, &cfg) - 1.0).abs() < 1e-12);
        assert!((lr_at(55, 100, &cfg) - 0.5).abs() < 1e-12);
        assert_eq!(lr_at(100, 100, &cfg), 0.0);
    }

    #[test]
    fn lr_schedule_without_warmup_is_pure_decay() {
        let cfg = TrainConfig {
            learning_rate: 2.0,
            warmup_steps: 0,
            ..TrainConfig::default()
        };
        assert!((lr_at(1, 4, &cfg) - 1.5).abs() < 1e-12);
        assert!((lr_at(4, 4, &cfg) - 0.0).abs() < 1e-12);
    }
}
