//! Text normalization, inverted indexing and BM25 ranking.

mod bm25;
mod tokenize;

pub use bm25::{build_index, build_index_from, retrieve, retrieve_with_stats, Bm25Params, CollectionStats, InvertedIndex, Posting};
pub use tokenize::{stem, tokenize, STOP_WORDS};
