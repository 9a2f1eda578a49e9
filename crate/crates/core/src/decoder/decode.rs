//! Greedy sequential decoding with frequency masking and a visited-set
//! guard.

use crate::scores::LabelId;

use super::model::{DecoderModel, FreqOrder};
use super::net::{self, DecoderInput};

/// Stand-in for minus infinity when disallowing a label.
pub const MASK_SENTINEL: f64 = -1e30;

/// One decoding step: raw logits and the decision taken on them.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub logits: Vec<f64>,
    pub predicted: LabelId,
}

/// A decoded label sequence. Ends at the stop label or at the step bound.
#[derive(Debug, Clone)]
pub struct DecoderTrace {
    pub steps: Vec<TraceStep>,
    /// Whether the stop label terminated the trace (as opposed to the
    /// step bound).
    pub stopped: bool,
}

impl DecoderTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Predicted labels in decoding order, stop excluded.
    pub fn predicted_labels(&self) -> Vec<LabelId> {
        let stop = self
            .steps
            .first()
            .map(|s| s.logits.len() as LabelId - 1)
            .unwrap_or(0);
        self.steps
            .iter()
            .map(|s| s.predicted)
            .filter(|&l| l != stop)
            .collect()
    }

    /// The GRU input sequence that produced this trace: start symbol, then
    /// each decision but the last.
    pub fn input_sequence(&self) -> Vec<DecoderInput> {
        let mut inputs = vec![DecoderInput::Start];
        for step in self.steps.iter().take(self.steps.len().saturating_sub(1)) {
            inputs.push(DecoderInput::Label(step.predicted));
        }
        inputs
    }
}

/// Restrict `logits` to labels strictly after `prev` in the configured
/// frequency order. Labels compare by the lexicographic key
/// (frequency, label id), which makes the order strict and total; the stop
/// label is always allowed. Disallowed entries become [`MASK_SENTINEL`].
pub fn mask_logits(logits: &mut [f64], prev: LabelId, order: FreqOrder, freqs: &[u32]) {
    let stop = logits.len() - 1;
    let prev_key = (freqs[prev as usize], prev);
    for (i, logit) in logits.iter_mut().enumerate().take(stop) {
        let key = (freqs[i], i as LabelId);
        let allowed = match order {
            FreqOrder::Descending => key < prev_key,
            FreqOrder::Ascending => key > prev_key,
        };
        if !allowed {
            *logit = MASK_SENTINEL;
        }
    }
}

/// Argmax with ties resolved to the smallest index.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Greedy decode: at each step take the argmax over the step logits after
/// applying the visited-set guard (always) and frequency masking (when
/// configured). The recorded logits stay raw.
pub(crate) fn decode_greedy(model: &DecoderModel, e: &[f64], max_steps: usize) -> DecoderTrace {
    let layout = &model.layout;
    let stop = model.stop_label();
    let mut visited: Vec<bool> = vec![false; layout.n_out];
    let mut steps: Vec<TraceStep> = Vec::new();
    let mut h = net::initial_hidden(layout, &model.params, e);
    let mut prev: Option<LabelId> = None;
    let mut stopped = false;

    for _ in 0..max_steps {
        let input = match prev {
            None => DecoderInput::Start,
            Some(l) => DecoderInput::Label(l),
        };
        let step = net::gru_step(layout, &model.params, e, input, &h);
        h = step.h.clone();

        let mut decision = step.logits.clone();
        if model.config.masked {
            if let Some(p) = prev {
                mask_logits(&mut decision, p, model.config.order, &model.label_freqs);
            }
        }
        for (i, v) in visited.iter().enumerate() {
            if *v {
                decision[i] = MASK_SENTINEL;
            }
        }
        let predicted = argmax(&decision) as LabelId;
        steps.push(TraceStep {
            logits: step.logits,
            predicted,
        });
        if predicted == stop {
            stopped = true;
            break;
        }
        visited[predicted as usize] = true;
        prev = Some(predicted);
    }
    DecoderTrace { steps, stopped }
}
