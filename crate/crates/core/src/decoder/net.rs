//! Forward and backward passes for every head/loss combination.
//!
//! A [`DecoderExample`] freezes everything discrete about one training
//! example — token ids, the dropout mask, and for the GRU the sequence of
//! previous-label inputs — so the loss is a smooth function of the
//! parameters and central finite differences are a valid oracle for the
//! analytic gradients computed here.
//!
//! The sequence losses consume the raw per-step logits. Frequency masking
//! and the visited-set guard constrain only the decoding decisions: masked
//! entries are replaced by a sentinel for the argmax, which would carry no
//! gradient anyway, so training the raw logits keeps the loss surface
//! smooth for every configuration.

use crate::scores::LabelId;

use super::linalg::{matvec, matvec_t_acc, outer_acc, sigmoid};
use super::loss::{aggregate_max, bce_one_hot, bce_with_logits};
use super::model::{DecoderConfig, HeadKind, Layout};

/// Label fed to the GRU at one step: the start symbol at t = 0, afterwards
/// the previous prediction (free running) or the previous gold label
/// (teacher forcing).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderInput {
    Start,
    Label(LabelId),
}

/// What the example trains: a multi-hot target through the configured flat
/// head, or a label sequence through the GRU under one of the two losses.
#[derive(Debug, Clone)]
pub enum DecoderTask {
    /// Linear or label-attention head against a multi-hot target
    /// (length = labels + stop).
    MultiHot { targets: Vec<f64> },
    /// GRU + bag-of-labels loss: fixed decisions, multi-hot target with the
    /// stop bit set.
    SequenceBag {
        inputs: Vec<DecoderInput>,
        targets: Vec<f64>,
    },
    /// GRU + iterative loss: teacher-forced inputs, one-hot target per step.
    SequenceSteps {
        inputs: Vec<DecoderInput>,
        step_targets: Vec<LabelId>,
    },
}

#[derive(Debug, Clone)]
pub struct DecoderExample {
    pub token_ids: Vec<u32>,
    /// Inverted-dropout mask over the encoder output: entries are 0 or
    /// 1/(1-p). `None` disables dropout.
    pub dropout_mask: Option<Vec<f64>>,
    pub task: DecoderTask,
}

/// Mean of term-embedding rows; zero vector when no tokens are in
/// vocabulary.
pub(crate) fn embed_tokens(layout: &Layout, params: &[f64], token_ids: &[u32]) -> Vec<f64> {
    let d = layout.emb_dim;
    let mut e = vec![0.0; d];
    if token_ids.is_empty() {
        return e;
    }
    let base = layout.term_emb.start;
    for &t in token_ids {
        let row = &params[base + t as usize * d..][..d];
        for (ei, &v) in e.iter_mut().zip(row) {
            *ei += v;
        }
    }
    let inv = 1.0 / token_ids.len() as f64;
    for ei in &mut e {
        *ei *= inv;
    }
    e
}

fn apply_dropout(e: &mut [f64], mask: Option<&Vec<f64>>) {
    if let Some(m) = mask {
        for (ei, &mi) in e.iter_mut().zip(m) {
            *ei *= mi;
        }
    }
}

/// logits = W e + b.
pub(crate) fn head_linear(layout: &Layout, params: &[f64], e: &[f64]) -> Vec<f64> {
    let mut logits = params[layout.b_out.clone()].to_vec();
    let w = &params[layout.w_out.clone()];
    for (r, logit) in logits.iter_mut().enumerate() {
        let row = &w[r * layout.out_in_dim..(r + 1) * layout.out_in_dim];
        *logit += row.iter().zip(e).map(|(&wi, &ei)| wi * ei).sum::<f64>();
    }
    logits
}

pub(crate) struct AttnCache {
    pub weights: Vec<f64>,
    pub h: Vec<f64>,
}

/// Attention head: query = e, keys = values = label embedding rows,
/// residual connection, then the output projection.
pub(crate) fn head_attention(layout: &Layout, params: &[f64], e: &[f64]) -> (Vec<f64>, AttnCache) {
    let d = layout.emb_dim;
    let n = layout.n_out;
    let labels = &params[layout.label_emb.clone().expect("attention head has label embeddings")];
    let scale = 1.0 / (d as f64).sqrt();

    let mut scores = vec![0.0; n];
    for i in 0..n {
        let row = &labels[i * d..(i + 1) * d];
        scores[i] = row.iter().zip(e).map(|(&k, &q)| k * q).sum::<f64>() * scale;
    }
    // softmax, max-shifted
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    let mut h = e.to_vec();
    for i in 0..n {
        let a = weights[i];
        if a == 0.0 {
            continue;
        }
        let row = &labels[i * d..(i + 1) * d];
        for (o, &v) in h.iter_mut().zip(row) {
            *o += a * v;
        }
    }
    let logits = head_linear(layout, params, &h);
    (logits, AttnCache { weights, h })
}

pub(crate) struct GruStep {
    pub input: DecoderInput,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub logits: Vec<f64>,
}

pub(crate) struct GruCache {
    pub h0: Vec<f64>,
    pub steps: Vec<GruStep>,
}

fn label_embedding<'a>(layout: &Layout, params: &'a [f64], input: DecoderInput) -> &'a [f64] {
    let d = layout.emb_dim;
    match input {
        DecoderInput::Start => {
            let r = layout.start_emb.clone().expect("GRU head has a start embedding");
            &params[r]
        }
        DecoderInput::Label(l) => {
            let r = layout.label_emb.clone().expect("GRU head has label embeddings");
            &params[r.start + l as usize * d..][..d]
        }
    }
}

/// Initial hidden state: the embedding, projected when dimensions differ.
pub(crate) fn initial_hidden(layout: &Layout, params: &[f64], e: &[f64]) -> Vec<f64> {
    match &layout.proj {
        Some(p) => {
            let mut h0 = vec![0.0; layout.hidden_dim];
            matvec(&params[p.clone()], layout.hidden_dim, layout.emb_dim, e, &mut h0);
            h0
        }
        None => e.to_vec(),
    }
}

/// One GRU cell evaluation plus the output projection.
pub(crate) fn gru_step(
    layout: &Layout,
    params: &[f64],
    e: &[f64],
    input: DecoderInput,
    h_prev: &[f64],
) -> GruStep {
    let h = layout.hidden_dim;
    let g = layout.gates.as_ref().expect("GRU head has gate parameters");
    let l_in = label_embedding(layout, params, input);
    let mut x = Vec::with_capacity(layout.input_dim);
    x.extend_from_slice(e);
    x.extend_from_slice(l_in);

    let mut pre_z = params[g.bz.clone()].to_vec();
    let mut tmp = vec![0.0; h];
    matvec(&params[g.wz.clone()], h, layout.input_dim, &x, &mut tmp);
    for (a, b) in pre_z.iter_mut().zip(&tmp) {
        *a += b;
    }
    matvec(&params[g.uz.clone()], h, h, h_prev, &mut tmp);
    for (a, b) in pre_z.iter_mut().zip(&tmp) {
        *a += b;
    }
    let z: Vec<f64> = pre_z.iter().map(|&v| sigmoid(v)).collect();

    let mut pre_r = params[g.br.clone()].to_vec();
    matvec(&params[g.wr.clone()], h, layout.input_dim, &x, &mut tmp);
    for (a, b) in pre_r.iter_mut().zip(&tmp) {
        *a += b;
    }
    matvec(&params[g.ur.clone()], h, h, h_prev, &mut tmp);
    for (a, b) in pre_r.iter_mut().zip(&tmp) {
        *a += b;
    }
    let r: Vec<f64> = pre_r.iter().map(|&v| sigmoid(v)).collect();

    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(&ri, &hi)| ri * hi).collect();
    let mut pre_c = params[g.bc.clone()].to_vec();
    matvec(&params[g.wc.clone()], h, layout.input_dim, &x, &mut tmp);
    for (a, b) in pre_c.iter_mut().zip(&tmp) {
        *a += b;
    }
    matvec(&params[g.uc.clone()], h, h, &rh, &mut tmp);
    for (a, b) in pre_c.iter_mut().zip(&tmp) {
        *a += b;
    }
    let c: Vec<f64> = pre_c.iter().map(|&v| v.tanh()).collect();

    // h_t = (1 - z) . h_prev + z . c
    let h_new: Vec<f64> = z
        .iter()
        .zip(&c)
        .zip(h_prev)
        .map(|((&zi, &ci), &hi)| (1.0 - zi) * hi + zi * ci)
        .collect();
    let logits = head_linear(layout, params, &h_new);
    GruStep {
        input,
        x,
        z,
        r,
        c,
        h: h_new,
        logits,
    }
}

pub(crate) fn gru_forward(
    layout: &Layout,
    params: &[f64],
    e: &[f64],
    inputs: &[DecoderInput],
) -> GruCache {
    let h0 = initial_hidden(layout, params, e);
    let mut steps: Vec<GruStep> = Vec::with_capacity(inputs.len());
    for &input in inputs {
        let h_prev = steps.last().map_or(h0.as_slice(), |s| s.h.as_slice());
        steps.push(gru_step(layout, params, e, input, h_prev));
    }
    GruCache { h0, steps }
}

/// Loss value only (used by training logs and finite-difference oracles).
pub(crate) fn example_loss(
    cfg: &DecoderConfig,
    layout: &Layout,
    params: &[f64],
    ex: &DecoderExample,
) -> f64 {
    let mut e = embed_tokens(layout, params, &ex.token_ids);
    apply_dropout(&mut e, ex.dropout_mask.as_ref());
    match &ex.task {
        DecoderTask::MultiHot { targets } => {
            let logits = match cfg.head {
                HeadKind::Linear => head_linear(layout, params, &e),
                HeadKind::LabelAttention => head_attention(layout, params, &e).0,
                HeadKind::Gru => panic!("MultiHot task is for the flat heads"),
            };
            bce_with_logits(&logits, targets)
        }
        DecoderTask::SequenceBag { inputs, targets } => {
            let cache = gru_forward(layout, params, &e, inputs);
            let step_logits: Vec<Vec<f64>> =
                cache.steps.iter().map(|s| s.logits.clone()).collect();
            let (agg, _) = aggregate_max(&step_logits);
            bce_with_logits(&agg, targets)
        }
        DecoderTask::SequenceSteps {
            inputs,
            step_targets,
        } => {
            let cache = gru_forward(layout, params, &e, inputs);
            cache
                .steps
                .iter()
                .zip(step_targets)
                .map(|(s, &hot)| bce_one_hot(&s.logits, hot))
                .sum()
        }
    }
}

/// Loss plus analytic gradient accumulated into `grad`.
pub(crate) fn example_loss_and_grad(
    cfg: &DecoderConfig,
    layout: &Layout,
    params: &[f64],
    ex: &DecoderExample,
    grad: &mut [f64],
) -> f64 {
    debug_assert_eq!(grad.len(), layout.total);
    let mut e = embed_tokens(layout, params, &ex.token_ids);
    apply_dropout(&mut e, ex.dropout_mask.as_ref());
    let n_out = layout.n_out;
    let inv_d = 1.0 / n_out as f64;

    // de accumulates d(loss)/d(dropped embedding)
    let mut de = vec![0.0; layout.emb_dim];
    let loss = match &ex.task {
        DecoderTask::MultiHot { targets } => match cfg.head {
            HeadKind::Linear => {
                let logits = head_linear(layout, params, &e);
                let loss = bce_with_logits(&logits, targets);
                let dlogits: Vec<f64> = logits
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| (sigmoid(x) - y) * inv_d)
                    .collect();
                backprop_out(layout, params, &dlogits, &e, grad, &mut de);
                loss
            }
            HeadKind::LabelAttention => {
                let (logits, cache) = head_attention(layout, params, &e);
                let loss = bce_with_logits(&logits, targets);
                let dlogits: Vec<f64> = logits
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| (sigmoid(x) - y) * inv_d)
                    .collect();
                backprop_attention(layout, params, &dlogits, &e, &cache, grad, &mut de);
                loss
            }
            HeadKind::Gru => panic!("MultiHot task is for the flat heads"),
        },
        DecoderTask::SequenceBag { inputs, targets } => {
            let cache = gru_forward(layout, params, &e, inputs);
            let step_logits: Vec<Vec<f64>> =
                cache.steps.iter().map(|s| s.logits.clone()).collect();
            let (agg, argmax) = aggregate_max(&step_logits);
            let loss = bce_with_logits(&agg, targets);
            // route d(loss)/d(agg_j) to the step where the max came from
            let mut dlogits: Vec<Vec<f64>> = vec![vec![0.0; n_out]; cache.steps.len()];
            for j in 0..n_out {
                dlogits[argmax[j]][j] = (sigmoid(agg[j]) - targets[j]) * inv_d;
            }
            backprop_gru(layout, params, &cache, &dlogits, &e, grad, &mut de);
            loss
        }
        DecoderTask::SequenceSteps {
            inputs,
            step_targets,
        } => {
            let cache = gru_forward(layout, params, &e, inputs);
            let mut loss = 0.0;
            let mut dlogits: Vec<Vec<f64>> = Vec::with_capacity(cache.steps.len());
            for (step, &hot) in cache.steps.iter().zip(step_targets) {
                loss += bce_one_hot(&step.logits, hot);
                dlogits.push(
                    step.logits
                        .iter()
                        .enumerate()
                        .map(|(j, &x)| {
                            let y = if j == hot as usize { 1.0 } else { 0.0 };
                            (sigmoid(x) - y) * inv_d
                        })
                        .collect(),
                );
            }
            backprop_gru(layout, params, &cache, &dlogits, &e, grad, &mut de);
            loss
        }
    };

    // de -> (dropout) -> term embedding rows
    if let Some(mask) = &ex.dropout_mask {
        for (d, &m) in de.iter_mut().zip(mask) {
            *d *= m;
        }
    }
    if !ex.token_ids.is_empty() {
        let inv_n = 1.0 / ex.token_ids.len() as f64;
        let base = layout.term_emb.start;
        let d = layout.emb_dim;
        for &t in &ex.token_ids {
            let row = &mut grad[base + t as usize * d..][..d];
            for (g, &v) in row.iter_mut().zip(&de) {
                *g += v * inv_n;
            }
        }
    }
    loss
}

/// Output projection backward: accumulates dW_out, db_out and d(input).
fn backprop_out(
    layout: &Layout,
    params: &[f64],
    dlogits: &[f64],
    input: &[f64],
    grad: &mut [f64],
    dinput: &mut [f64],
) {
    outer_acc(&mut grad[layout.w_out.clone()], dlogits, input);
    for (g, &d) in grad[layout.b_out.clone()].iter_mut().zip(dlogits) {
        *g += d;
    }
    matvec_t_acc(
        &params[layout.w_out.clone()],
        layout.n_out,
        layout.out_in_dim,
        dlogits,
        dinput,
    );
}

fn backprop_attention(
    layout: &Layout,
    params: &[f64],
    dlogits: &[f64],
    e: &[f64],
    cache: &AttnCache,
    grad: &mut [f64],
    de: &mut [f64],
) {
    let d = layout.emb_dim;
    let n = layout.n_out;
    let label_range = layout.label_emb.clone().expect("attention head");
    let labels = &params[label_range.clone()];
    let scale = 1.0 / (d as f64).sqrt();

    // logits = W h + b with h = e + attn_out
    let mut dh = vec![0.0; d];
    backprop_out(layout, params, dlogits, &cache.h, grad, &mut dh);
    for (dei, &dhi) in de.iter_mut().zip(&dh) {
        *dei += dhi; // residual path
    }
    // attn_out = sum_i a_i * v_i, v_i = label row i
    let da: Vec<f64> = (0..n)
        .map(|i| {
            let row = &labels[i * d..(i + 1) * d];
            row.iter().zip(&dh).map(|(&v, &g)| v * g).sum::<f64>()
        })
        .collect();
    {
        let glabels = &mut grad[label_range.clone()];
        for i in 0..n {
            let a = cache.weights[i];
            if a == 0.0 {
                continue;
            }
            let row = &mut glabels[i * d..(i + 1) * d];
            for (g, &dhi) in row.iter_mut().zip(&dh) {
                *g += a * dhi;
            }
        }
    }
    // softmax backward: ds_i = a_i (da_i - sum_j a_j da_j)
    let dot: f64 = cache.weights.iter().zip(&da).map(|(&a, &g)| a * g).sum();
    let ds: Vec<f64> = cache
        .weights
        .iter()
        .zip(&da)
        .map(|(&a, &g)| a * (g - dot))
        .collect();
    // s_i = (q . k_i) * scale with q = e, k_i = label row i
    let glabels = &mut grad[label_range];
    for i in 0..n {
        let dsi = ds[i] * scale;
        if dsi == 0.0 {
            continue;
        }
        let krow = &labels[i * d..(i + 1) * d];
        for (dei, &k) in de.iter_mut().zip(krow) {
            *dei += dsi * k;
        }
        let grow = &mut glabels[i * d..(i + 1) * d];
        for (g, &q) in grow.iter_mut().zip(e) {
            *g += dsi * q;
        }
    }
}

/// Backpropagation through time for the GRU, including the output
/// projection at every step and the initial-hidden projection.
fn backprop_gru(
    layout: &Layout,
    params: &[f64],
    cache: &GruCache,
    dlogits: &[Vec<f64>],
    e: &[f64],
    grad: &mut [f64],
    de: &mut [f64],
) {
    let h = layout.hidden_dim;
    let d = layout.emb_dim;
    let g = layout.gates.as_ref().expect("GRU head");
    let t_len = cache.steps.len();

    let mut dh_next = vec![0.0; h];
    let mut tmp_uc = vec![0.0; h];
    for t in (0..t_len).rev() {
        let step = &cache.steps[t];
        let h_prev = if t == 0 {
            cache.h0.as_slice()
        } else {
            cache.steps[t - 1].h.as_slice()
        };

        let mut dh = dh_next.clone();
        backprop_out(layout, params, &dlogits[t], &step.h, grad, &mut dh);

        // h_t = (1 - z) . h_prev + z . c
        let dz: Vec<f64> = dh
            .iter()
            .zip(&step.c)
            .zip(h_prev)
            .map(|((&dhi, &ci), &hi)| dhi * (ci - hi))
            .collect();
        let dpz: Vec<f64> = dz
            .iter()
            .zip(&step.z)
            .map(|(&dzi, &zi)| dzi * zi * (1.0 - zi))
            .collect();
        let dc: Vec<f64> = dh.iter().zip(&step.z).map(|(&dhi, &zi)| dhi * zi).collect();
        let dpc: Vec<f64> = dc
            .iter()
            .zip(&step.c)
            .map(|(&dci, &ci)| dci * (1.0 - ci * ci))
            .collect();

        tmp_uc.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_acc(&params[g.uc.clone()], h, h, &dpc, &mut tmp_uc);
        let dr: Vec<f64> = tmp_uc.iter().zip(h_prev).map(|(&u, &hi)| u * hi).collect();
        let dpr: Vec<f64> = dr
            .iter()
            .zip(&step.r)
            .map(|(&dri, &ri)| dri * ri * (1.0 - ri))
            .collect();

        // d h_prev
        let mut dh_prev: Vec<f64> = dh
            .iter()
            .zip(&step.z)
            .map(|(&dhi, &zi)| dhi * (1.0 - zi))
            .collect();
        matvec_t_acc(&params[g.uz.clone()], h, h, &dpz, &mut dh_prev);
        matvec_t_acc(&params[g.ur.clone()], h, h, &dpr, &mut dh_prev);
        for ((dhp, &r), &u) in dh_prev.iter_mut().zip(&step.r).zip(&tmp_uc) {
            *dhp += r * u;
        }

        // parameter gradients
        let rh: Vec<f64> = step.r.iter().zip(h_prev).map(|(&ri, &hi)| ri * hi).collect();
        outer_acc(&mut grad[g.wz.clone()], &dpz, &step.x);
        outer_acc(&mut grad[g.uz.clone()], &dpz, h_prev);
        for (gb, &v) in grad[g.bz.clone()].iter_mut().zip(&dpz) {
            *gb += v;
        }
        outer_acc(&mut grad[g.wr.clone()], &dpr, &step.x);
        outer_acc(&mut grad[g.ur.clone()], &dpr, h_prev);
        for (gb, &v) in grad[g.br.clone()].iter_mut().zip(&dpr) {
            *gb += v;
        }
        outer_acc(&mut grad[g.wc.clone()], &dpc, &step.x);
        outer_acc(&mut grad[g.uc.clone()], &dpc, &rh);
        for (gb, &v) in grad[g.bc.clone()].iter_mut().zip(&dpc) {
            *gb += v;
        }

        // d x_t -> split into encoder embedding and label-input embedding
        let mut dx = vec![0.0; layout.input_dim];
        matvec_t_acc(&params[g.wz.clone()], h, layout.input_dim, &dpz, &mut dx);
        matvec_t_acc(&params[g.wr.clone()], h, layout.input_dim, &dpr, &mut dx);
        matvec_t_acc(&params[g.wc.clone()], h, layout.input_dim, &dpc, &mut dx);
        for (dei, &v) in de.iter_mut().zip(&dx[..d]) {
            *dei += v;
        }
        match step.input {
            DecoderInput::Start => {
                let r = layout.start_emb.clone().expect("GRU head");
                for (gr, &v) in grad[r].iter_mut().zip(&dx[d..]) {
                    *gr += v;
                }
            }
            DecoderInput::Label(l) => {
                let r = layout.label_emb.clone().expect("GRU head");
                let row = &mut grad[r.start + l as usize * d..][..d];
                for (gr, &v) in row.iter_mut().zip(&dx[d..]) {
                    *gr += v;
                }
            }
        }
        dh_next = dh_prev;
    }

    // initial hidden: h0 = P e (or e directly)
    match &layout.proj {
        Some(p) => {
            outer_acc(&mut grad[p.clone()], &dh_next, e);
            matvec_t_acc(&params[p.clone()], h, d, &dh_next, de);
        }
        None => {
            for (dei, &v) in de.iter_mut().zip(&dh_next) {
                *dei += v;
            }
        }
    }
}
