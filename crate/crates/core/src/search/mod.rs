//! Inverted-index search with Okapi BM25 and k-NN label propagation.

mod bm25;

pub use bm25::{
    aggregate_neighbor_labels, build_index, Bm25Index, Bm25Params, Field, FieldWeights,
    KnnConfig, RetrievedDoc,
};
