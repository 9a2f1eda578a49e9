//! Okapi BM25 over a three-field inverted index (abstract, title, gold-label
//! text), plus k-NN label score aggregation.
//!
//! A query retrieves the top-k indexed articles by BM25; each neighbour's
//! score is normalized by the best score (`alpha` in (0, 1]) and each label
//! collects the alpha of the neighbours that carry it. Dividing by the alpha
//! total bounds label scores to [0, 1], which is what a fixed decision
//! threshold needs.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, LabelVocabulary};
use crate::features::tokenize;
use crate::io::{BinReader, BinWriter};
use crate::scores::{predict_above, LabelId, LabelScores};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Abstract = 0,
    Title = 1,
    LabelText = 2,
}

const FIELDS: [Field; 3] = [Field::Abstract, Field::Title, Field::LabelText];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    /// Term-frequency saturation.
    pub k1: f64,
    /// Length normalization strength.
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldWeights {
    pub abstract_text: f64,
    pub title: f64,
    pub label_text: f64,
}

impl Default for FieldWeights {
    fn default() -> Self {
        Self {
            abstract_text: 1.0,
            title: 1.0,
            label_text: 0.5,
        }
    }
}

impl FieldWeights {
    fn get(&self, field: Field) -> f64 {
        match field {
            Field::Abstract => self.abstract_text,
            Field::Title => self.title,
            Field::LabelText => self.label_text,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KnnConfig {
    /// Number of neighbours to retrieve.
    pub k: usize,
    /// Labels scoring strictly above this are predicted.
    pub label_threshold: f64,
    pub field_weights: FieldWeights,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 40,
            label_threshold: 0.24,
            field_weights: FieldWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FieldIndex {
    /// Terms sorted ascending; parallel postings sorted by doc id.
    terms: Vec<String>,
    postings: Vec<Vec<(u32, u32)>>,
    lookup: HashMap<String, u32>,
    doc_len: Vec<u32>,
    avg_len: f64,
}

impl FieldIndex {
    fn from_token_lists(docs: &[Vec<String>]) -> Self {
        let mut map: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        for (doc_id, tokens) in docs.iter().enumerate() {
            doc_len.push(tokens.len() as u32);
            let mut counts: HashMap<&str, u32> = HashMap::new();
            for t in tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                map.entry(term.to_string())
                    .or_default()
                    .push((doc_id as u32, tf));
            }
        }
        let mut terms: Vec<String> = map.keys().cloned().collect();
        terms.sort_unstable();
        let mut postings = Vec::with_capacity(terms.len());
        for term in &terms {
            let mut list = map.remove(term).unwrap();
            list.sort_unstable_by_key(|e| e.0);
            postings.push(list);
        }
        let lookup = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let total: u64 = doc_len.iter().map(|&l| u64::from(l)).sum();
        let avg_len = if doc_len.is_empty() {
            0.0
        } else {
            total as f64 / doc_len.len() as f64
        };
        Self {
            terms,
            postings,
            lookup,
            doc_len,
            avg_len,
        }
    }

    fn df(&self, term_idx: u32) -> u32 {
        self.postings[term_idx as usize].len() as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
struct DocEntry {
    id: String,
    gold: Vec<LabelId>,
}

/// Immutable searchable index over a training collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    params: Bm25Params,
    label_codes: Vec<String>,
    docs: Vec<DocEntry>,
    fields: [FieldIndex; 3],
}

/// Gold-label text of an article: descriptors and synonyms of every gold
/// label, in label-code order.
fn label_text(article: &Article, vocab: &LabelVocabulary) -> Result<String> {
    let mut parts = Vec::new();
    for code in &article.gold_labels {
        let id = vocab
            .label_id(code)
            .filter(|&id| id != vocab.stop_label())
            .ok_or_else(|| Error::UnknownLabels(vec![code.clone()]))?;
        let entry = vocab.entry(id);
        parts.push(entry.descriptor.clone());
        parts.extend(entry.synonyms.iter().cloned());
    }
    Ok(parts.join(" "))
}

/// Build the index over articles with gold labels.
pub fn build_index(
    articles: &[Article],
    vocab: &LabelVocabulary,
    params: Bm25Params,
) -> Result<Bm25Index> {
    if articles.is_empty() {
        return Err(Error::InvalidInput("cannot index an empty collection".into()));
    }
    let mut abstracts = Vec::with_capacity(articles.len());
    let mut titles = Vec::with_capacity(articles.len());
    let mut label_texts = Vec::with_capacity(articles.len());
    let mut docs = Vec::with_capacity(articles.len());
    for article in articles {
        if article.gold_labels.is_empty() {
            return Err(Error::InvalidInput(format!(
                "article `{}` has no gold labels; the index requires them",
                article.id
            )));
        }
        let gold = vocab.gold_ids(article)?;
        abstracts.push(tokenize(&article.abstract_text));
        titles.push(tokenize(&article.title));
        label_texts.push(tokenize(&label_text(article, vocab)?));
        docs.push(DocEntry {
            id: article.id.clone(),
            gold: gold.into_iter().collect(),
        });
    }
    Ok(Bm25Index {
        params,
        label_codes: vocab.real_entries().iter().map(|e| e.code.clone()).collect(),
        docs,
        fields: [
            FieldIndex::from_token_lists(&abstracts),
            FieldIndex::from_token_lists(&titles),
            FieldIndex::from_token_lists(&label_texts),
        ],
    })
}

/// A retrieved neighbour: index-internal doc position and BM25 score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievedDoc {
    pub doc: u32,
    pub score: f64,
}

/// Eq. `Score(i) = sum_j alpha_j * beta_ji / sum_j alpha_j` with binary
/// beta (gold membership) and alpha normalized by the best neighbour score.
pub fn aggregate_neighbor_labels(neighbors: &[(f64, &[LabelId])]) -> LabelScores {
    let mut scores = LabelScores::new();
    if neighbors.is_empty() {
        return scores;
    }
    let top = neighbors
        .iter()
        .map(|(s, _)| *s)
        .fold(f64::MIN, f64::max);
    if top <= 0.0 {
        return scores;
    }
    let mut alpha_sum = 0.0;
    for (s, gold) in neighbors {
        let alpha = s / top;
        alpha_sum += alpha;
        for &label in *gold {
            *scores.entry(label).or_insert(0.0) += alpha;
        }
    }
    for v in scores.values_mut() {
        *v /= alpha_sum;
    }
    scores
}

impl Bm25Index {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_id(&self, doc: u32) -> &str {
        &self.docs[doc as usize].id
    }

    pub fn gold_of(&self, doc: u32) -> &[LabelId] {
        &self.docs[doc as usize].gold
    }

    pub fn field_len(&self, field: Field, doc: u32) -> u32 {
        self.fields[field as usize].doc_len[doc as usize]
    }

    fn idf(&self, df: u32) -> f64 {
        let n = self.docs.len() as f64;
        let df = f64::from(df);
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn tf_saturation(&self, tf: u32, len: u32, avg_len: f64) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - self.params.b + self.params.b * f64::from(len) / avg_len;
        tf * (self.params.k1 + 1.0) / (tf + self.params.k1 * norm)
    }

    /// BM25 score of one document for a query, summed over weighted fields.
    /// Unknown query terms contribute zero.
    pub fn bm25_score(&self, query: &[String], doc: u32, weights: &FieldWeights) -> f64 {
        let mut total = 0.0;
        for field in FIELDS {
            let fi = &self.fields[field as usize];
            if fi.avg_len == 0.0 {
                continue;
            }
            let mut field_score = 0.0;
            for term in query {
                let Some(&t) = fi.lookup.get(term) else {
                    continue;
                };
                let postings = &fi.postings[t as usize];
                let Ok(pos) = postings.binary_search_by_key(&doc, |e| e.0) else {
                    continue;
                };
                let tf = postings[pos].1;
                field_score += self.idf(fi.df(t))
                    * self.tf_saturation(tf, fi.doc_len[doc as usize], fi.avg_len);
            }
            total += weights.get(field) * field_score;
        }
        total
    }

    /// BM25 score by external document id.
    pub fn bm25_score_by_id(
        &self,
        query: &[String],
        doc_id: &str,
        weights: &FieldWeights,
    ) -> Option<f64> {
        let doc = self.docs.iter().position(|d| d.id == doc_id)? as u32;
        Some(self.bm25_score(query, doc, weights))
    }

    /// All documents matching at least one query term, with their scores.
    /// Deterministic: per-document accumulation runs field-major then in
    /// query order, exactly like [`Self::bm25_score`].
    fn score_all(&self, query: &[String], weights: &FieldWeights) -> Vec<RetrievedDoc> {
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for field in FIELDS {
            let fi = &self.fields[field as usize];
            if fi.avg_len == 0.0 {
                continue;
            }
            let weight = weights.get(field);
            if weight == 0.0 {
                continue;
            }
            for term in query {
                let Some(&t) = fi.lookup.get(term) else {
                    continue;
                };
                let idf = self.idf(fi.df(t));
                for &(doc, tf) in &fi.postings[t as usize] {
                    let sat = self.tf_saturation(tf, fi.doc_len[doc as usize], fi.avg_len);
                    *acc.entry(doc).or_insert(0.0) += weight * idf * sat;
                }
            }
        }
        acc.into_iter()
            .map(|(doc, score)| RetrievedDoc { doc, score })
            .collect()
    }

    /// Top-k retrieval via a bounded min-heap. Ordering: score descending,
    /// then doc id ascending.
    pub fn retrieve(&self, query: &[String], k: usize, weights: &FieldWeights) -> Vec<RetrievedDoc> {
        let scored = self.score_all(query, weights);
        top_k_heap(scored, k)
    }

    fn query_tokens(article: &Article) -> Vec<String> {
        let mut q = tokenize(&article.title);
        q.extend(tokenize(&article.abstract_text));
        q
    }

    /// Label scores for a query article per the k-NN aggregation.
    pub fn knn_labels(&self, article: &Article, cfg: &KnnConfig) -> LabelScores {
        let mut k = cfg.k.max(1);
        if k > self.docs.len() {
            log::warn!(
                "k = {k} exceeds the {} indexed documents; clamping",
                self.docs.len()
            );
            k = self.docs.len();
        }
        let query = Self::query_tokens(article);
        if query.is_empty() {
            return LabelScores::new();
        }
        let top = self.retrieve(&query, k, &cfg.field_weights);
        let neighbors: Vec<(f64, &[LabelId])> = top
            .iter()
            .map(|r| (r.score, self.gold_of(r.doc)))
            .collect();
        aggregate_neighbor_labels(&neighbors)
    }

    /// Labels scoring strictly above the configured threshold.
    pub fn predict(&self, article: &Article, cfg: &KnnConfig) -> BTreeSet<LabelId> {
        predict_above(&self.knn_labels(article, cfg), cfg.label_threshold)
    }

    pub fn label_code(&self, label: LabelId) -> &str {
        &self.label_codes[label as usize]
    }

    pub fn num_labels(&self) -> usize {
        self.label_codes.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BinWriter::new(BufWriter::new(File::create(path)?));
        w.magic(b"XBMI", 1)?;
        w.f64(self.params.k1)?;
        w.f64(self.params.b)?;
        w.u32(self.label_codes.len() as u32)?;
        for code in &self.label_codes {
            w.str(code)?;
        }
        w.u32(self.docs.len() as u32)?;
        for doc in &self.docs {
            w.str(&doc.id)?;
            w.u32(doc.gold.len() as u32)?;
            for &l in &doc.gold {
                w.u32(l)?;
            }
        }
        for field in &self.fields {
            w.u32(field.terms.len() as u32)?;
            for (term, postings) in field.terms.iter().zip(&field.postings) {
                w.str(term)?;
                w.u32(postings.len() as u32)?;
                for &(doc, tf) in postings {
                    w.u32(doc)?;
                    w.u32(tf)?;
                }
            }
            w.u32(field.doc_len.len() as u32)?;
            for &l in &field.doc_len {
                w.u32(l)?;
            }
            w.f64(field.avg_len)?;
        }
        w.finish()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BinReader::new(BufReader::new(File::open(path)?));
        r.expect_magic(b"XBMI", 1)?;
        let params = Bm25Params {
            k1: r.f64()?,
            b: r.f64()?,
        };
        let n_codes = r.u32()? as usize;
        let mut label_codes = Vec::with_capacity(n_codes);
        for _ in 0..n_codes {
            label_codes.push(r.str()?);
        }
        let n_docs = r.u32()? as usize;
        let mut docs = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            let id = r.str()?;
            let n_gold = r.u32()? as usize;
            let mut gold = Vec::with_capacity(n_gold);
            for _ in 0..n_gold {
                gold.push(r.u32()?);
            }
            docs.push(DocEntry { id, gold });
        }
        let mut fields = Vec::with_capacity(3);
        for _ in 0..3 {
            let n_terms = r.u32()? as usize;
            let mut terms = Vec::with_capacity(n_terms);
            let mut postings = Vec::with_capacity(n_terms);
            for _ in 0..n_terms {
                terms.push(r.str()?);
                let n_post = r.u32()? as usize;
                let mut list = Vec::with_capacity(n_post);
                for _ in 0..n_post {
                    let doc = r.u32()?;
                    let tf = r.u32()?;
                    list.push((doc, tf));
                }
                postings.push(list);
            }
            let n_len = r.u32()? as usize;
            let mut doc_len = Vec::with_capacity(n_len);
            for _ in 0..n_len {
                doc_len.push(r.u32()?);
            }
            let avg_len = r.f64()?;
            let lookup = terms
                .iter()
                .enumerate()
                .map(|(i, t)| (t.clone(), i as u32))
                .collect();
            fields.push(FieldIndex {
                terms,
                postings,
                lookup,
                doc_len,
                avg_len,
            });
        }
        let fields: [FieldIndex; 3] = fields
            .try_into()
            .map_err(|_| Error::Format("expected exactly 3 field blocks".into()))?;
        Ok(Self {
            params,
            label_codes,
            docs,
            fields,
        })
    }
}

/// Worse-first comparison for heap eviction: lower score first, higher doc
/// id first on ties. The survivors match a full sort by (score desc, doc asc).
fn is_worse(a: &RetrievedDoc, b: &RetrievedDoc) -> bool {
    a.score < b.score || (a.score == b.score && a.doc > b.doc)
}

fn top_k_heap(scored: Vec<RetrievedDoc>, k: usize) -> Vec<RetrievedDoc> {
    if k == 0 {
        return Vec::new();
    }
    // Bounded selection without a full sort: keep the current worst at
    // position 0 of a small vector-backed heap.
    let mut heap: Vec<RetrievedDoc> = Vec::with_capacity(k);
    for cand in scored {
        if heap.len() < k {
            heap.push(cand);
            let mut i = heap.len() - 1;
            while i > 0 {
                let parent = (i - 1) / 2;
                if is_worse(&heap[i], &heap[parent]) {
                    heap.swap(i, parent);
                    i = parent;
                } else {
                    break;
                }
            }
        } else if is_worse(&heap[0], &cand) {
            heap[0] = cand;
            let mut i = 0;
            loop {
                let (l, r) = (2 * i + 1, 2 * i + 2);
                let mut worst = i;
                if l < heap.len() && is_worse(&heap[l], &heap[worst]) {
                    worst = l;
                }
                if r < heap.len() && is_worse(&heap[r], &heap[worst]) {
                    worst = r;
                }
                if worst == i {
                    break;
                }
                heap.swap(i, worst);
                i = worst;
            }
        }
    }
    heap.sort_unstable_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then_with(|| a.doc.cmp(&b.doc))
    });
    heap
}
