//! Tokenization, term vocabulary construction and sparse tf-idf features.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Article;
use crate::{Error, Result};

/// Controls the token stream and document-frequency filtering used to build
/// the term vocabulary; the resulting vocabulary remembers the recipe so
/// feature extraction at prediction time matches training exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Minimum number of documents a term must occur in.
    pub min_df: u32,
    /// Maximum fraction of documents a term may occur in.
    pub max_df_ratio: f64,
    /// Include title tokens next to the abstract.
    pub include_title: bool,
    /// 1 = unigrams, 2 = unigrams + bigrams, ...
    pub ngram_order: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            min_df: 1,
            max_df_ratio: 1.0,
            include_title: true,
            ngram_order: 1,
        }
    }
}

/// Unicode-aware tokenizer: lowercase, split on non-alphanumeric, drop
/// tokens shorter than 2 characters. Digits count as token characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut cur_chars = 0usize;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                cur.push(lc);
                cur_chars += 1;
            }
        } else if cur_chars > 0 {
            if cur_chars >= 2 {
                tokens.push(std::mem::take(&mut cur));
            } else {
                cur.clear();
            }
            cur_chars = 0;
        }
    }
    if cur_chars >= 2 {
        tokens.push(cur);
    }
    tokens
}

/// Token stream of an article under `cfg`: unigrams plus higher-order
/// n-grams (joined with a space), per field so n-grams never cross the
/// title/abstract boundary.
pub fn term_stream(article: &Article, cfg: &FeatureConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut push_field = |text: &str| {
        let toks = tokenize(text);
        for n in 1..=cfg.ngram_order.max(1) {
            if toks.len() < n {
                continue;
            }
            for w in toks.windows(n) {
                out.push(w.join(" "));
            }
        }
    };
    if cfg.include_title {
        push_field(&article.title);
    }
    push_field(&article.abstract_text);
    out
}

/// Term vocabulary with dense indices and per-term document frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct TermVocabulary {
    terms: Vec<String>,
    document_frequency: Vec<u32>,
    lookup: HashMap<String, u32>,
    total_documents: u32,
    recipe: FeatureConfig,
}

impl TermVocabulary {
    /// Build from a corpus: a term is retained iff
    /// `min_df <= df(term)` and `df(term)/N <= max_df_ratio`.
    /// Indices are assigned by descending df, ties broken lexicographically.
    pub fn build(articles: &[Article], cfg: &FeatureConfig) -> Result<Self> {
        if articles.is_empty() {
            return Err(Error::InvalidInput(
                "cannot build a term vocabulary from an empty corpus".into(),
            ));
        }
        let n = articles.len() as u32;
        let mut df: HashMap<String, u32> = HashMap::new();
        for article in articles {
            let mut terms = term_stream(article, cfg);
            terms.sort_unstable();
            terms.dedup();
            for t in terms {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, u32)> = df
            .into_iter()
            .filter(|(_, d)| *d >= cfg.min_df && f64::from(*d) / f64::from(n) <= cfg.max_df_ratio)
            .collect();
        if kept.is_empty() {
            return Err(Error::EmptyTermVocabulary);
        }
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut terms = Vec::with_capacity(kept.len());
        let mut dfs = Vec::with_capacity(kept.len());
        for (t, d) in kept {
            terms.push(t);
            dfs.push(d);
        }
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self {
            terms,
            document_frequency: dfs,
            lookup,
            total_documents: n,
            recipe: cfg.clone(),
        })
    }

    /// Reassemble from stored fields (artifact loading).
    pub(crate) fn from_parts(
        terms: Vec<String>,
        document_frequency: Vec<u32>,
        total_documents: u32,
        recipe: FeatureConfig,
    ) -> Self {
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            terms,
            document_frequency,
            lookup,
            total_documents,
            recipe,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn total_documents(&self) -> u32 {
        self.total_documents
    }

    pub fn recipe(&self) -> &FeatureConfig {
        &self.recipe
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.lookup.get(term).copied()
    }

    pub fn term(&self, index: u32) -> &str {
        &self.terms[index as usize]
    }

    pub fn df(&self, index: u32) -> u32 {
        self.document_frequency[index as usize]
    }

    /// Smoothed inverse document frequency: `ln((1+N)/(1+df)) + 1`.
    pub fn idf(&self, index: u32) -> f64 {
        let n = f64::from(self.total_documents);
        let df = f64::from(self.df(index));
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Write as TSV (term, index, df). A single `#` metadata line carries
    /// the document count and stream recipe needed to reload for scoring.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "#docs={}\tngram={}\tinclude_title={}\n",
            self.total_documents, self.recipe.ngram_order, self.recipe.include_title
        ));
        for (i, term) in self.terms.iter().enumerate() {
            out.push_str(&format!("{term}\t{i}\t{}\n", self.document_frequency[i]));
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load_tsv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let path_str = path.display().to_string();
        let mut lines = text.lines().enumerate();
        let (_, meta) = lines.next().ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            line: 1,
            message: "empty term vocabulary file".into(),
        })?;
        let mut total_documents = None;
        let mut recipe = FeatureConfig::default();
        if let Some(rest) = meta.strip_prefix('#') {
            for field in rest.split('\t') {
                match field.split_once('=') {
                    Some(("docs", v)) => total_documents = v.parse().ok(),
                    Some(("ngram", v)) => recipe.ngram_order = v.parse().unwrap_or(1),
                    Some(("include_title", v)) => {
                        recipe.include_title = v.parse().unwrap_or(true)
                    }
                    _ => {}
                }
            }
        }
        let total_documents = total_documents.ok_or_else(|| Error::Parse {
            path: path_str.clone(),
            line: 1,
            message: "missing #docs metadata line".into(),
        })?;

        let mut rows: Vec<(String, u32, u32)> = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let term = cols.next().unwrap_or_default().to_string();
            let index: u32 = cols
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path_str.clone(),
                    line: idx + 1,
                    message: "expected columns term<TAB>index<TAB>df".into(),
                })?;
            let df: u32 = cols
                .next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path_str.clone(),
                    line: idx + 1,
                    message: "expected columns term<TAB>index<TAB>df".into(),
                })?;
            rows.push((term, index, df));
        }
        rows.sort_unstable_by_key(|r| r.1);
        for (expect, row) in rows.iter().enumerate() {
            if row.1 as usize != expect {
                return Err(Error::Format(format!(
                    "term vocabulary indices are not dense at {}",
                    row.1
                )));
            }
        }
        let terms: Vec<String> = rows.iter().map(|r| r.0.clone()).collect();
        let dfs: Vec<u32> = rows.iter().map(|r| r.2).collect();
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self {
            terms,
            document_frequency: dfs,
            lookup,
            total_documents,
            recipe,
        })
    }
}

/// Sparse vector over term indices: strictly increasing indices, no stored
/// zeros.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector(Vec<(u32, f64)>);

impl SparseVector {
    /// Build from unordered entries; duplicates are summed, zeros dropped.
    pub fn from_entries(mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_unstable_by_key(|e| e.0);
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => out.push((i, w)),
            }
        }
        out.retain(|e| e.1 != 0.0);
        Self(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.0.iter().copied()
    }

    pub fn nnz(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut a, mut b) = (self.0.iter().peekable(), other.0.iter().peekable());
        let mut acc = 0.0;
        while let (Some(&&(ia, wa)), Some(&&(ib, wb))) = (a.peek(), b.peek()) {
            match ia.cmp(&ib) {
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
                std::cmp::Ordering::Equal => {
                    acc += wa * wb;
                    a.next();
                    b.next();
                }
            }
        }
        acc
    }

    /// Dot product against a dense weight vector.
    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.0
            .iter()
            .map(|&(i, w)| w * dense.get(i as usize).copied().unwrap_or(0.0))
            .sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.0.iter().map(|&(_, w)| w * w).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.0 {
            e.1 *= factor;
        }
    }
}

/// Raw (unnormalized) tf-idf weights of an article.
fn tfidf_raw(article: &Article, vocab: &TermVocabulary) -> Vec<(u32, f64)> {
    let mut counts: HashMap<u32, u32> = HashMap::new();
    for term in term_stream(article, vocab.recipe()) {
        if let Some(idx) = vocab.index_of(&term) {
            *counts.entry(idx).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .map(|(idx, tf)| (idx, f64::from(tf) * vocab.idf(idx)))
        .collect()
}

/// L2-normalized tf-idf feature vector. Out-of-vocabulary terms are
/// ignored; an article with no in-vocabulary terms yields an empty vector.
pub fn tfidf(article: &Article, vocab: &TermVocabulary) -> SparseVector {
    let mut v = SparseVector::from_entries(tfidf_raw(article, vocab));
    let norm = v.l2_norm();
    if norm > 0.0 {
        v.scale(1.0 / norm);
    }
    v
}
