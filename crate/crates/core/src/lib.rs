//! Estimating the group composition of ranked search results when item
//! group labels are unknown.
//!
//! A probabilistic classifier is trained once on labeled documents. At query
//! time the same query is issued against a labeled correction pool, and the
//! retrieved labeled items are used to learn a per-query correction (ACC,
//! PACC or KDEy) that is then applied to the classifier's outputs on the
//! unlabeled ranking. Fairness metrics (rKL, rND) computed from the
//! estimated prevalences are compared against ground truth by the benchmark
//! protocol.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod fairness;
pub mod pmc;
pub mod protocol;
pub mod quantify;
pub mod retrieval;
pub mod simplex;
pub mod stats;

pub use corpus::{prevalence_of, read_queries, read_unlabeled_jsonl, write_queries, Corpus, Document, GroupTable, Query, RankedList};
pub use error::{Error, Result};
pub use simplex::{project_to_simplex, PosteriorMatrix, PrevalenceVector};
