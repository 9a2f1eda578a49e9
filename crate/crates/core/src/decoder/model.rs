//! Decoder model: configuration, parameter storage and persistence.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, LabelVocabulary};
use crate::features::{tokenize, FeatureConfig, TermVocabulary};
use crate::io::{BinReader, BinWriter};
use crate::scores::{LabelId, LabelScores};
use crate::{Error, Result};

use super::decode::DecoderTrace;
use super::linalg::sigmoid;
use super::net;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Linear,
    LabelAttention,
    Gru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Boll,
    Ill,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqOrder {
    Ascending,
    Descending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub head: HeadKind,
    pub loss: LossKind,
    pub order: FreqOrder,
    pub masked: bool,
    /// Hard bound on sequential decoding length.
    pub max_steps: usize,
    /// Sigmoid threshold for the linear and label-attention heads.
    pub predict_threshold: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            hidden_dim: 64,
            head: HeadKind::Gru,
            loss: LossKind::Boll,
            order: FreqOrder::Ascending,
            masked: false,
            max_steps: 30,
            predict_threshold: 0.5,
        }
    }
}

/// Offsets of each parameter block within the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub n_terms: usize,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    /// Real labels + stop.
    pub n_out: usize,
    /// GRU input: encoder embedding concatenated with a label embedding.
    pub input_dim: usize,
    /// Input dimension of the output projection (head-dependent).
    pub out_in_dim: usize,
    pub term_emb: Range<usize>,
    pub label_emb: Option<Range<usize>>,
    pub start_emb: Option<Range<usize>>,
    pub proj: Option<Range<usize>>,
    pub gates: Option<GateRanges>,
    pub w_out: Range<usize>,
    pub b_out: Range<usize>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct GateRanges {
    pub wz: Range<usize>,
    pub uz: Range<usize>,
    pub bz: Range<usize>,
    pub wr: Range<usize>,
    pub ur: Range<usize>,
    pub br: Range<usize>,
    pub wc: Range<usize>,
    pub uc: Range<usize>,
    pub bc: Range<usize>,
}

impl Layout {
    pub fn new(cfg: &DecoderConfig, n_terms: usize, n_labels: usize) -> Self {
        let d = cfg.embedding_dim;
        let h = cfg.hidden_dim;
        let n_out = n_labels + 1;
        let input_dim = 2 * d;
        let mut cursor = 0usize;
        let mut alloc = |len: usize| {
            let r = cursor..cursor + len;
            cursor += len;
            r
        };

        let term_emb = alloc(n_terms * d);
        let (label_emb, start_emb, proj, gates);
        match cfg.head {
            HeadKind::Linear => {
                label_emb = None;
                start_emb = None;
                proj = None;
                gates = None;
            }
            HeadKind::LabelAttention => {
                label_emb = Some(alloc(n_out * d));
                start_emb = None;
                proj = None;
                gates = None;
            }
            HeadKind::Gru => {
                label_emb = Some(alloc(n_out * d));
                start_emb = Some(alloc(d));
                proj = if d != h { Some(alloc(h * d)) } else { None };
                gates = Some(GateRanges {
                    wz: alloc(h * input_dim),
                    uz: alloc(h * h),
                    bz: alloc(h),
                    wr: alloc(h * input_dim),
                    ur: alloc(h * h),
                    br: alloc(h),
                    wc: alloc(h * input_dim),
                    uc: alloc(h * h),
                    bc: alloc(h),
                });
            }
        }
        let out_in_dim = match cfg.head {
            HeadKind::Linear | HeadKind::LabelAttention => d,
            HeadKind::Gru => h,
        };
        let w_out = alloc(n_out * out_in_dim);
        let b_out = alloc(n_out);
        Self {
            n_terms,
            emb_dim: d,
            hidden_dim: h,
            n_out,
            input_dim,
            out_in_dim,
            term_emb,
            label_emb,
            start_emb,
            proj,
            gates,
            w_out,
            b_out,
            total: cursor,
        }
    }
}

/// Trained (or freshly initialized) decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    pub(crate) config: DecoderConfig,
    pub(crate) term_vocab: TermVocabulary,
    pub(crate) label_codes: Vec<String>,
    pub(crate) label_freqs: Vec<u32>,
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f64>,
}

const MAGIC: &[u8; 4] = b"XDEC";
const VERSION: u32 = 1;

impl DecoderModel {
    /// Fresh model with seeded initialization. Label embeddings start from
    /// the bag-of-embeddings encoding of each label's descriptor and
    /// synonyms; labels with no in-vocabulary descriptor tokens keep their
    /// random rows.
    pub fn new(
        config: DecoderConfig,
        term_vocab: TermVocabulary,
        label_vocab: &LabelVocabulary,
        seed: u64,
    ) -> Self {
        let n_labels = label_vocab.num_labels();
        let layout = Layout::new(&config, term_vocab.len(), n_labels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];

        let fill = |range: &Range<usize>, scale: f64, rng: &mut ChaCha8Rng, p: &mut [f64]| {
            for v in &mut p[range.clone()] {
                *v = rng.gen_range(-scale..scale);
            }
        };
        fill(&layout.term_emb, 0.1, &mut rng, &mut params);
        if let Some(r) = &layout.label_emb {
            fill(r, 0.1, &mut rng, &mut params);
        }
        if let Some(r) = &layout.start_emb {
            fill(r, 0.1, &mut rng, &mut params);
        }
        if let Some(r) = &layout.proj {
            let scale = 1.0 / (layout.emb_dim as f64).sqrt();
            fill(r, scale, &mut rng, &mut params);
        }
        if let Some(g) = &layout.gates {
            let in_scale = 1.0 / (layout.input_dim as f64).sqrt();
            let h_scale = 1.0 / (layout.hidden_dim as f64).sqrt();
            for r in [&g.wz, &g.wr, &g.wc] {
                fill(r, in_scale, &mut rng, &mut params);
            }
            for r in [&g.uz, &g.ur, &g.uc] {
                fill(r, h_scale, &mut rng, &mut params);
            }
            // gate biases start at zero
        }
        let out_scale = 1.0 / (layout.out_in_dim as f64).sqrt();
        fill(&layout.w_out, out_scale, &mut rng, &mut params);

        let mut model = Self {
            config,
            term_vocab,
            label_codes: label_vocab
                .real_entries()
                .iter()
                .map(|e| e.code.clone())
                .collect(),
            label_freqs: label_vocab.frequencies().to_vec(),
            layout,
            params,
        };
        model.init_label_embeddings(label_vocab);
        model
    }

    fn init_label_embeddings(&mut self, label_vocab: &LabelVocabulary) {
        let Some(label_range) = self.layout.label_emb.clone() else {
            return;
        };
        let d = self.layout.emb_dim;
        for (i, entry) in label_vocab.real_entries().iter().enumerate() {
            let mut tokens = tokenize(&entry.descriptor);
            for syn in &entry.synonyms {
                tokens.extend(tokenize(syn));
            }
            let ids: Vec<u32> = tokens
                .iter()
                .filter_map(|t| self.term_vocab.index_of(t))
                .collect();
            if ids.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; d];
            for &id in &ids {
                let row = &self.params
                    [self.layout.term_emb.start + id as usize * d..][..d];
                for (m, &v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= ids.len() as f64;
            }
            let dst = label_range.start + i * d;
            self.params[dst..dst + d].copy_from_slice(&mean);
        }
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn term_vocab(&self) -> &TermVocabulary {
        &self.term_vocab
    }

    /// Number of real labels (stop excluded).
    pub fn label_count(&self) -> usize {
        self.label_codes.len()
    }

    pub fn stop_label(&self) -> LabelId {
        self.label_count() as LabelId
    }

    pub fn label_freqs(&self) -> &[u32] {
        &self.label_freqs
    }

    pub fn label_code(&self, id: LabelId) -> &str {
        &self.label_codes[id as usize]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// In-vocabulary term ids of the article's title+abstract tokens.
    pub fn token_ids(&self, article: &Article) -> Vec<u32> {
        let mut tokens = tokenize(&article.title);
        tokens.extend(tokenize(&article.abstract_text));
        tokens
            .iter()
            .filter_map(|t| self.term_vocab.index_of(t))
            .collect()
    }

    /// Bag-of-embeddings encoding: mean of term embedding rows, zero vector
    /// when no token is in vocabulary.
    pub fn encode(&self, article: &Article) -> Vec<f64> {
        net::embed_tokens(&self.layout, &self.params, &self.token_ids(article))
    }

    /// Linear head: `W e + b`.
    pub fn forward_linear(&self, embedding: &[f64]) -> Vec<f64> {
        net::head_linear(&self.layout, &self.params, embedding)
    }

    /// Label-attention head: softmax(q K^T / sqrt(d)) V with residual, then
    /// the output projection.
    pub fn forward_label_attention(&self, embedding: &[f64]) -> Vec<f64> {
        net::head_attention(&self.layout, &self.params, embedding).0
    }

    /// Greedy sequential decode from an explicit embedding (GRU head).
    pub fn decode_from_embedding(&self, embedding: &[f64], max_steps: usize) -> Result<DecoderTrace> {
        if self.config.head != HeadKind::Gru {
            return Err(Error::Config(
                "sequential decoding requires the GRU head".into(),
            ));
        }
        Ok(super::decode::decode_greedy(self, embedding, max_steps))
    }

    /// Greedy sequential decode of an article under the configured bound.
    pub fn decode(&self, article: &Article) -> Result<DecoderTrace> {
        let e = self.encode(article);
        self.decode_from_embedding(&e, self.config.max_steps)
    }

    /// Per-label scores in (0, 1): sigmoid of the head logits; for the GRU
    /// head the per-label maximum logit over the decoded trace. The stop
    /// label is excluded.
    pub fn score(&self, article: &Article) -> Result<LabelScores> {
        let n = self.label_count();
        let logits = match self.config.head {
            HeadKind::Linear => self.forward_linear(&self.encode(article)),
            HeadKind::LabelAttention => self.forward_label_attention(&self.encode(article)),
            HeadKind::Gru => {
                let trace = self.decode(article)?;
                let mut max = vec![f64::NEG_INFINITY; n + 1];
                for step in &trace.steps {
                    for (j, &x) in step.logits.iter().enumerate() {
                        if x > max[j] {
                            max[j] = x;
                        }
                    }
                }
                max
            }
        };
        Ok((0..n)
            .map(|j| (j as LabelId, sigmoid(logits[j])))
            .collect())
    }

    /// Predicted label set. Thresholded sigmoid scores for the linear and
    /// attention heads; the decoded trace membership for the GRU head.
    pub fn predict(&self, article: &Article) -> Result<BTreeSet<LabelId>> {
        match self.config.head {
            HeadKind::Linear | HeadKind::LabelAttention => {
                let scores = self.score(article)?;
                Ok(crate::scores::predict_above(
                    &scores,
                    self.config.predict_threshold,
                ))
            }
            HeadKind::Gru => {
                let trace = self.decode(article)?;
                Ok(trace.predicted_labels().into_iter().collect())
            }
        }
    }

    /// Loss of one example under the configured head (value only).
    pub fn example_loss(&self, example: &net::DecoderExample) -> f64 {
        net::example_loss(&self.config, &self.layout, &self.params, example)
    }

    /// Loss plus analytic gradient accumulated into `grad` (same layout as
    /// the parameter vector).
    pub fn example_loss_and_grad(&self, example: &net::DecoderExample, grad: &mut [f64]) -> f64 {
        net::example_loss_and_grad(&self.config, &self.layout, &self.params, example, grad)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?));
        w.magic(MAGIC, VERSION)?;
        w.u8(match self.config.head {
            HeadKind::Linear => 0,
            HeadKind::LabelAttention => 1,
            HeadKind::Gru => 2,
        })?;
        w.u8(match self.config.loss {
            LossKind::Boll => 0,
            LossKind::Ill => 1,
        })?;
        w.u8(match self.config.order {
            FreqOrder::Ascending => 0,
            FreqOrder::Descending => 1,
        })?;
        w.u8(u8::from(self.config.masked))?;
        w.u32(self.config.embedding_dim as u32)?;
        w.u32(self.config.hidden_dim as u32)?;
        w.u32(self.config.max_steps as u32)?;
        w.f64(self.config.predict_threshold)?;

        let recipe = self.term_vocab.recipe();
        w.u32(self.term_vocab.total_documents())?;
        w.u32(recipe.min_df)?;
        w.f64(recipe.max_df_ratio)?;
        w.u8(u8::from(recipe.include_title))?;
        w.u32(recipe.ngram_order as u32)?;
        w.u32(self.term_vocab.len() as u32)?;
        for i in 0..self.term_vocab.len() as u32 {
            w.str(self.term_vocab.term(i))?;
            w.u32(self.term_vocab.df(i))?;
        }

        w.u32(self.label_codes.len() as u32)?;
        for (code, &freq) in self.label_codes.iter().zip(&self.label_freqs) {
            w.str(code)?;
            w.u32(freq)?;
        }
        w.f64_slice(&self.params)?;
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?));
        r.expect_magic(MAGIC, VERSION)?;
        let head = match r.u8()? {
            0 => HeadKind::Linear,
            1 => HeadKind::LabelAttention,
            2 => HeadKind::Gru,
            other => return Err(Error::Format(format!("unknown head kind {other}"))),
        };
        let loss = match r.u8()? {
            0 => LossKind::Boll,
            1 => LossKind::Ill,
            other => return Err(Error::Format(format!("unknown loss kind {other}"))),
        };
        let order = match r.u8()? {
            0 => FreqOrder::Ascending,
            1 => FreqOrder::Descending,
            other => return Err(Error::Format(format!("unknown order {other}"))),
        };
        let masked = r.u8()? != 0;
        let embedding_dim = r.u32()? as usize;
        let hidden_dim = r.u32()? as usize;
        let max_steps = r.u32()? as usize;
        let predict_threshold = r.f64()?;
        let config = DecoderConfig {
            embedding_dim,
            hidden_dim,
            head,
            loss,
            order,
            masked,
            max_steps,
            predict_threshold,
        };

        let total_documents = r.u32()?;
        let recipe = FeatureConfig {
            min_df: r.u32()?,
            max_df_ratio: r.f64()?,
            include_title: r.u8()? != 0,
            ngram_order: r.u32()? as usize,
        };
        let n_terms = r.u32()? as usize;
        let mut terms = Vec::with_capacity(n_terms);
        let mut dfs = Vec::with_capacity(n_terms);
        for _ in 0..n_terms {
            terms.push(r.str()?);
            dfs.push(r.u32()?);
        }
        let term_vocab = TermVocabulary::from_parts(terms, dfs, total_documents, recipe);

        let n_labels = r.u32()? as usize;
        let mut label_codes = Vec::with_capacity(n_labels);
        let mut label_freqs = Vec::with_capacity(n_labels);
        for _ in 0..n_labels {
            label_codes.push(r.str()?);
            label_freqs.push(r.u32()?);
        }
        let params = r.f64_vec()?;
        let layout = Layout::new(&config, n_terms, n_labels);
        if params.len() != layout.total {
            return Err(Error::Format(format!(
                "parameter count {} does not match layout {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Self {
            config,
            term_vocab,
            label_codes,
            label_freqs,
            layout,
            params,
        })
    }
}
