//! Article collections, the label vocabulary and dataset splits.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scores::LabelId;
use crate::{Error, Result};

/// Reserved code for the synthetic stop label, always the last vocabulary
/// entry.
pub const STOP_CODE: &str = "__STOP__";

/// One document: the unit of classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstractText", default)]
    pub abstract_text: String,
    #[serde(rename = "decsCodes", default, skip_serializing_if = "BTreeSet::is_empty")]
    pub gold_labels: BTreeSet<String>,
}

/// Load a JSONL collection: one object per line with fields
/// `id`, `title`, `abstractText` and optional `decsCodes`.
pub fn load_articles(path: &Path) -> Result<Vec<Article>> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();
    let mut articles = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path_str.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if article.id.is_empty() {
            return Err(Error::Parse {
                path: path_str.clone(),
                line: idx + 1,
                message: "article id is empty".into(),
            });
        }
        if !seen.insert(article.id.clone()) {
            return Err(Error::DuplicateArticleId(article.id));
        }
        articles.push(article);
    }
    Ok(articles)
}

/// Write a collection as JSONL, one article per line.
pub fn save_articles(path: &Path, articles: &[Article]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for article in articles {
        let line = serde_json::to_string(article)
            .map_err(|e| Error::Format(format!("article serialization: {e}")))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// One label: code, human-readable descriptor and optional synonyms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelEntry {
    pub code: String,
    pub descriptor: String,
    pub synonyms: Vec<String>,
}

/// The label space. Real labels come first in file order; a synthetic stop
/// label ([`STOP_CODE`]) is always appended as the final entry, so the
/// decoder output space is `num_labels() + 1` without a parallel indexing
/// scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    entries: Vec<LabelEntry>,
    lookup: HashMap<String, LabelId>,
    frequencies: Vec<u32>,
}

impl LabelVocabulary {
    /// Build from real-label entries; the stop label is appended here.
    pub fn from_entries(entries: Vec<LabelEntry>) -> Result<Self> {
        let mut all = entries;
        all.push(LabelEntry {
            code: STOP_CODE.into(),
            descriptor: STOP_CODE.into(),
            synonyms: Vec::new(),
        });
        let mut lookup = HashMap::with_capacity(all.len());
        for (i, e) in all.iter().enumerate() {
            if lookup.insert(e.code.clone(), i as LabelId).is_some() {
                return Err(Error::DuplicateLabelCode(e.code.clone()));
            }
        }
        let frequencies = vec![0; all.len()];
        Ok(Self {
            entries: all,
            lookup,
            frequencies,
        })
    }

    /// Parse a TSV file with columns code, descriptor, pipe-separated
    /// synonyms (no header row). Frequencies are zero until counted.
    pub fn load_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let path_str = path.display().to_string();
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let code = cols.next().unwrap_or_default().trim().to_string();
            if code.is_empty() {
                return Err(Error::Parse {
                    path: path_str.clone(),
                    line: idx + 1,
                    message: "empty label code".into(),
                });
            }
            let mut descriptor = cols.next().unwrap_or_default().trim().to_string();
            if descriptor.is_empty() {
                log::warn!("{path_str}:{}: empty descriptor for {code}, using the code", idx + 1);
                descriptor = code.clone();
            }
            let synonyms: Vec<String> = cols
                .next()
                .unwrap_or_default()
                .split('|')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            entries.push(LabelEntry {
                code,
                descriptor,
                synonyms,
            });
        }
        Self::from_entries(entries)
    }

    /// Write as TSV, dropping the synthetic stop entry.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in self.real_entries() {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                e.code,
                e.descriptor,
                e.synonyms.join("|")
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    /// Number of real labels (stop excluded).
    pub fn num_labels(&self) -> usize {
        self.entries.len() - 1
    }

    /// Full size including the stop label.
    pub fn num_with_stop(&self) -> usize {
        self.entries.len()
    }

    pub fn stop_label(&self) -> LabelId {
        self.num_labels() as LabelId
    }

    pub fn label_id(&self, code: &str) -> Option<LabelId> {
        self.lookup.get(code).copied()
    }

    pub fn entry(&self, id: LabelId) -> &LabelEntry {
        &self.entries[id as usize]
    }

    pub fn code(&self, id: LabelId) -> &str {
        &self.entries[id as usize].code
    }

    /// Real entries in index order (stop excluded).
    pub fn real_entries(&self) -> &[LabelEntry] {
        &self.entries[..self.num_labels()]
    }

    pub fn frequency(&self, id: LabelId) -> u32 {
        self.frequencies[id as usize]
    }

    /// Frequencies of real labels in index order.
    pub fn frequencies(&self) -> &[u32] {
        &self.frequencies[..self.num_labels()]
    }

    /// Recount label frequencies over a training collection:
    /// `frequency(c) = |{a : c in a.gold_labels}|`. The stop label stays 0.
    /// Unknown codes in any gold set are an error listing them all.
    pub fn count_frequencies(&self, articles: &[Article]) -> Result<LabelVocabulary> {
        let mut freqs = vec![0u32; self.entries.len()];
        let mut unknown: BTreeSet<String> = BTreeSet::new();
        for article in articles {
            for code in &article.gold_labels {
                match self.lookup.get(code) {
                    Some(&id) if id != self.stop_label() => freqs[id as usize] += 1,
                    _ => {
                        unknown.insert(code.clone());
                    }
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownLabels(unknown.into_iter().collect()));
        }
        let mut out = self.clone();
        out.frequencies = freqs;
        Ok(out)
    }

    /// Map an article's gold codes to dense label ids.
    pub fn gold_ids(&self, article: &Article) -> Result<BTreeSet<LabelId>> {
        let mut out = BTreeSet::new();
        let mut unknown = BTreeSet::new();
        for code in &article.gold_labels {
            match self.label_id(code) {
                Some(id) if id != self.stop_label() => {
                    out.insert(id);
                }
                _ => {
                    unknown.insert(code.clone());
                }
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownLabels(unknown.into_iter().collect()));
        }
        Ok(out)
    }
}

/// Mean gold-set size over a collection.
pub fn mean_gold_size(articles: &[Article]) -> f64 {
    if articles.is_empty() {
        return 0.0;
    }
    let total: usize = articles.iter().map(|a| a.gold_labels.len()).sum();
    total as f64 / articles.len() as f64
}

/// A train/holdout partition of a collection.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Article>,
    pub holdout: Vec<Article>,
    pub seed: u64,
}

/// Deterministically split a collection. The holdout gets
/// `floor(fraction * N)` articles, at least 1; membership is decided by a
/// seeded shuffle and both sides keep the original corpus order.
pub fn split(articles: Vec<Article>, holdout_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let n = articles.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 articles to split, got {n}"
        )));
    }
    let holdout_size = ((holdout_fraction * n as f64).floor() as usize).max(1);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut in_holdout = vec![false; n];
    for &i in indices.iter().take(holdout_size) {
        in_holdout[i] = true;
    }
    let mut train = Vec::with_capacity(n - holdout_size);
    let mut holdout = Vec::with_capacity(holdout_size);
    for (i, article) in articles.into_iter().enumerate() {
        if in_holdout[i] {
            holdout.push(article);
        } else {
            train.push(article);
        }
    }
    Ok(DatasetSplit {
        train,
        holdout,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_lines(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        std::fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    #[test]
    fn load_articles_maps_fields() {
        let (_d, path) = write_lines(&[
            r#"{"id":"a1","title":"t","abstractText":"x","decsCodes":["D1"]}"#,
        ]);
        let arts = load_articles(&path).unwrap();
        assert_eq!(arts.len(), 1);
        assert_eq!(arts[0].id, "a1");
        assert_eq!(arts[0].title, "t");
        assert_eq!(arts[0].abstract_text, "x");
        assert!(arts[0].gold_labels.contains("D1"));
    }

    #[test]
    fn missing_decs_codes_means_empty_gold() {
        let (_d, path) = write_lines(&[r#"{"id":"a1","title":"t","abstractText":"x"}"#]);
        let arts = load_articles(&path).unwrap();
        assert!(arts[0].gold_labels.is_empty());
    }

    #[test]
    fn duplicate_id_is_an_error_naming_it() {
        let (_d, path) = write_lines(&[
            r#"{"id":"a1","title":"t","abstractText":"x"}"#,
            r#"{"id":"a1","title":"u","abstractText":"y"}"#,
        ]);
        match load_articles(&path) {
            Err(Error::DuplicateArticleId(id)) => assert_eq!(id, "a1"),
            other => panic!("expected duplicate-id error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_error_names_line_number() {
        let (_d, path) = write_lines(&[
            r#"{"id":"a1","title":"t","abstractText":"x"}"#,
            r#"{"id": BROKEN"#,
        ]);
        match load_articles(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn article_roundtrip_preserves_everything() {
        let arts = vec![
            Article {
                id: "a1".into(),
                title: "título".into(),
                abstract_text: "texto largo".into(),
                gold_labels: ["D1", "D2"].iter().map(|s| s.to_string()).collect(),
            },
            Article {
                id: "a2".into(),
                title: String::new(),
                abstract_text: "sin etiquetas".into(),
                gold_labels: BTreeSet::new(),
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("round.jsonl");
        save_articles(&path, &arts).unwrap();
        let loaded = load_articles(&path).unwrap();
        assert_eq!(arts, loaded);
    }

    fn vocab_file(lines: &[&str]) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        std::fs::write(&path, lines.join("\n")).unwrap();
        (dir, path)
    }

    #[test]
    fn vocabulary_parses_rows_and_appends_stop() {
        let (_d, path) = vocab_file(&["D1\tadulto\tadult person|grown-up", "D2\tniño\t"]);
        let vocab = LabelVocabulary::load_tsv(&path).unwrap();
        assert_eq!(vocab.num_labels(), 2);
        assert_eq!(vocab.num_with_stop(), 3);
        let e = vocab.entry(vocab.label_id("D1").unwrap());
        assert_eq!(e.descriptor, "adulto");
        assert_eq!(e.synonyms, vec!["adult person", "grown-up"]);
        assert_eq!(vocab.entry(vocab.label_id("D2").unwrap()).synonyms.len(), 0);
        assert_eq!(vocab.code(vocab.stop_label()), STOP_CODE);
    }

    #[test]
    fn vocabulary_duplicate_code_is_error() {
        let (_d, path) = vocab_file(&["D1\tuno\t", "D1\tdos\t"]);
        assert!(matches!(
            LabelVocabulary::load_tsv(&path),
            Err(Error::DuplicateLabelCode(_))
        ));
    }

    #[test]
    fn vocabulary_empty_descriptor_falls_back_to_code() {
        let (_d, path) = vocab_file(&["D1\t\tsyn"]);
        let vocab = LabelVocabulary::load_tsv(&path).unwrap();
        assert_eq!(vocab.entry(0).descriptor, "D1");
    }

    fn article_with(id: &str, codes: &[&str]) -> Article {
        Article {
            id: id.into(),
            title: String::new(),
            abstract_text: String::new(),
            gold_labels: codes.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn frequencies_count_carrying_articles() {
        let vocab = LabelVocabulary::from_entries(vec![
            LabelEntry {
                code: "D1".into(),
                descriptor: "uno".into(),
                synonyms: vec![],
            },
            LabelEntry {
                code: "D2".into(),
                descriptor: "dos".into(),
                synonyms: vec![],
            },
        ])
        .unwrap();
        let arts = vec![
            article_with("a", &["D1"]),
            article_with("b", &["D1", "D2"]),
            article_with("c", &[]),
        ];
        let counted = vocab.count_frequencies(&arts).unwrap();
        assert_eq!(counted.frequency(counted.label_id("D1").unwrap()), 2);
        assert_eq!(counted.frequency(counted.label_id("D2").unwrap()), 1);
        assert_eq!(counted.frequency(counted.stop_label()), 0);
        // mean gold size by hand: (1 + 2 + 0) / 3
        assert!((mean_gold_size(&arts) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_gold_code_is_error_listing_it() {
        let vocab = LabelVocabulary::from_entries(vec![LabelEntry {
            code: "D1".into(),
            descriptor: "uno".into(),
            synonyms: vec![],
        }])
        .unwrap();
        let arts = vec![article_with("a", &["D9"])];
        match vocab.count_frequencies(&arts) {
            Err(Error::UnknownLabels(codes)) => assert_eq!(codes, vec!["D9".to_string()]),
            other => panic!("expected unknown-labels error, got {other:?}"),
        }
    }

    #[test]
    fn stop_code_never_valid_in_gold() {
        let vocab = LabelVocabulary::from_entries(vec![LabelEntry {
            code: "D1".into(),
            descriptor: "uno".into(),
            synonyms: vec![],
        }])
        .unwrap();
        let arts = vec![article_with("a", &[STOP_CODE])];
        assert!(vocab.count_frequencies(&arts).is_err());
    }

    fn numbered_articles(n: usize) -> Vec<Article> {
        (0..n)
            .map(|i| article_with(&format!("a{i}"), &[]))
            .collect()
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let s1 = split(numbered_articles(100), 0.05, 7).unwrap();
        let s2 = split(numbered_articles(100), 0.05, 7).unwrap();
        assert_eq!(s1.train.len(), 95);
        assert_eq!(s1.holdout.len(), 5);
        let ids1: Vec<&str> = s1.holdout.iter().map(|a| a.id.as_str()).collect();
        let ids2: Vec<&str> = s2.holdout.iter().map(|a| a.id.as_str()).collect();
        assert_eq!(ids1, ids2);
        let mut all: Vec<&str> = s1
            .train
            .iter()
            .chain(s1.holdout.iter())
            .map(|a| a.id.as_str())
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn split_rounding_floor_with_minimum_one() {
        let s = split(numbered_articles(3), 0.5, 1).unwrap();
        assert_eq!(s.train.len(), 2);
        assert_eq!(s.holdout.len(), 1);
        // floor would give 0 here; the minimum kicks in
        let s = split(numbered_articles(10), 0.05, 1).unwrap();
        assert_eq!(s.holdout.len(), 1);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        assert!(split(numbered_articles(10), 0.0, 1).is_err());
        assert!(split(numbered_articles(10), 1.0, 1).is_err());
        assert!(split(numbered_articles(1), 0.5, 1).is_err());
    }

    #[test]
    fn different_seeds_differ() {
        let a = split(numbered_articles(50), 0.2, 1).unwrap();
        let b = split(numbered_articles(50), 0.2, 2).unwrap();
        let ids_a: Vec<&str> = a.holdout.iter().map(|x| x.id.as_str()).collect();
        let ids_b: Vec<&str> = b.holdout.iter().map(|x| x.id.as_str()).collect();
        assert_ne!(ids_a, ids_b);
    }
}
