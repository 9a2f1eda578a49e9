//! Extreme multi-label text classification toolkit.
//!
//! Four classifier families over a shared corpus/feature layer:
//!
//! - [`svm`] — one-vs-rest linear SVM with squared-hinge loss, solved by dual
//!   coordinate descent, with a post-training decision-plane shift.
//! - [`search`] — inverted index with Okapi BM25 retrieval and k-NN label
//!   score propagation over neighbour gold labels.
//! - [`decoder`] — neural label decoder over a bag-of-embeddings document
//!   encoder: linear head, label-attention head, and a GRU that predicts
//!   labels sequentially in frequency order until a stop label.
//! - [`ensemble`] — pairwise ranking SVM over the three models' normalized
//!   scores and their products.
//!
//! [`metrics`] provides micro/macro/example-based precision, recall and F1.
//! [`synth`] generates self-validating synthetic corpora for end-to-end runs.
//! Everything is deterministic under a fixed seed.

pub mod corpus;
pub mod decoder;
pub mod ensemble;
pub mod features;
mod io;
pub mod metrics;
pub mod scores;
pub mod search;
pub mod svm;
pub mod synth;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate article id `{0}`")]
    DuplicateArticleId(String),
    #[error("duplicate label code `{0}`")]
    DuplicateLabelCode(String),
    #[error("unknown label codes: {}", .0.join(", "))]
    UnknownLabels(Vec<String>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("term vocabulary is empty after document-frequency filtering")]
    EmptyTermVocabulary,
    #[error("artifact format error: {0}")]
    Format(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("gradient check failed: {0}")]
    GradientCheck(String),
    #[error(
        "id mismatch between predictions and gold: missing in gold: [{}]; missing in predictions: [{}]",
        .missing_in_gold.join(", "),
        .missing_in_predictions.join(", ")
    )]
    IdMismatch {
        missing_in_gold: Vec<String>,
        missing_in_predictions: Vec<String>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
