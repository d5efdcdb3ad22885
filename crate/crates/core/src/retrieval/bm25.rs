use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, RankedEntry, RankedList};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid("BM25 parameters", format!("k1={} b={}", self.k1, self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Collection-level statistics entering the BM25 formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectionStats {
    pub doc_count: usize,
    pub avg_doc_length: f64,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    postings: HashMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    // position of each document in ascending id order, for tie-breaking
    id_rank: Vec<u32>,
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn stats(&self) -> CollectionStats {
        CollectionStats {
            doc_count: self.doc_count(),
            avg_doc_length: self.avg_doc_length,
        }
    }
}

pub fn build_index(corpus: &Corpus) -> Result<InvertedIndex> {
    build_index_from(&corpus.documents)
}

/// Indexes any document sequence; ranked entries refer to positions in it.
pub fn build_index_from<'a, I>(docs: I) -> Result<InvertedIndex>
where
    I: IntoIterator<Item = &'a Document>,
{
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    let mut doc_lengths = Vec::new();
    let mut ids: Vec<&str> = Vec::new();
    let mut tf: HashMap<&str, u32> = HashMap::new();
    for (i, doc) in docs.into_iter().enumerate() {
        tf.clear();
        for t in &doc.tokens {
            *tf.entry(t.as_str()).or_default() += 1;
        }
        // sorted so posting construction does not depend on hash order
        let mut terms: Vec<(&str, u32)> = tf.iter().map(|(t, c)| (*t, *c)).collect();
        terms.sort_unstable();
        for (t, c) in terms {
            postings.entry(t.to_string()).or_default().push(Posting {
                doc: i as u32,
                tf: c,
            });
        }
        doc_lengths.push(doc.tokens.len() as u32);
        ids.push(&doc.id);
    }
    if doc_lengths.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let total: u64 = doc_lengths.iter().map(|&l| l as u64).sum();
    let avg_doc_length = total as f64 / doc_lengths.len() as f64;

    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(ids[b]));
    let mut id_rank = vec![0u32; ids.len()];
    for (rank, &doc) in order.iter().enumerate() {
        id_rank[doc] = rank as u32;
    }

    Ok(InvertedIndex {
        postings,
        doc_lengths,
        avg_doc_length,
        id_rank,
    })
}

/// Lucene-style IDF, non-negative for every document frequency.
pub fn idf(doc_count: usize, df: usize) -> f64 {
    let n = doc_count as f64;
    let df = df as f64;
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

/// Top-`top_k` BM25 ranking of `query` over `index`.
pub fn retrieve(index: &InvertedIndex, query: &[String], top_k: usize, params: Bm25Params) -> RankedList {
    retrieve_with_stats(index, query, top_k, params, index.stats())
}

/// As [`retrieve`], with collection statistics supplied by the caller.
pub fn retrieve_with_stats(
    index: &InvertedIndex,
    query: &[String],
    top_k: usize,
    params: Bm25Params,
    stats: CollectionStats,
) -> RankedList {
    let mut terms: Vec<&str> = query.iter().map(String::as_str).collect();
    terms.sort_unstable();
    terms.dedup();

    let mut scores: HashMap<u32, f64> = HashMap::new();
    for term in terms {
        let postings = index.postings(term);
        if postings.is_empty() {
            continue;
        }
        let w = idf(stats.doc_count, postings.len());
        for p in postings {
            let tf = p.tf as f64;
            let len = index.doc_lengths[p.doc as usize] as f64;
            let norm = params.k1 * (1.0 - params.b + params.b * len / stats.avg_doc_length);
            *scores.entry(p.doc).or_default() += w * tf * (params.k1 + 1.0) / (tf + norm);
        }
    }

    let mut entries: Vec<RankedEntry> = scores
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .map(|(doc, score)| RankedEntry {
            doc: doc as usize,
            score,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| index.id_rank[a.doc].cmp(&index.id_rank[b.doc]))
    });
    entries.truncate(top_k);
    RankedList {
        query_id: String::new(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, GroupTable};

    fn corpus(texts: &[&str]) -> Corpus {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| {
                Document::new(
                    format!("d{i:03}"),
                    t.split_whitespace().map(String::from).collect(),
                    Some(0),
                )
            })
            .collect();
        Corpus::new(docs, GroupTable::from_names(["a", "b"]), "g").unwrap()
    }

    fn q(terms: &[&str]) -> Vec<String> {
        terms.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn build_small_index() {
        let idx = build_index(&corpus(&["cat cat", "dog"])).unwrap();
        assert_eq!(idx.postings("cat"), &[Posting { doc: 0, tf: 2 }]);
        assert_eq!(idx.postings("dog"), &[Posting { doc: 1, tf: 1 }]);
        assert_eq!(idx.doc_lengths(), &[2, 1]);
        assert_eq!(idx.avg_doc_length(), 1.5);
    }

    #[test]
    fn degenerate_indexes() {
        let idx = build_index(&corpus(&[""])).unwrap();
        assert_eq!(idx.doc_count(), 1);
        assert_eq!(idx.term_count(), 0);

        let idx = build_index(&corpus(&["x y", "x y", "x y"])).unwrap();
        assert_eq!(idx.postings("x").len(), 3);
        assert_eq!(idx.postings("y").len(), 3);

        let empty = corpus(&["x"]).with_documents(vec![]);
        assert!(build_index(&empty).is_err());
    }

    #[test]
    fn tf_sums_to_length() {
        let c = corpus(&["a b a c", "c c", "b"]);
        let idx = build_index(&c).unwrap();
        let mut per_doc = vec![0u32; 3];
        for t in ["a", "b", "c"] {
            for p in idx.postings(t) {
                per_doc[p.doc as usize] += p.tf;
            }
        }
        assert_eq!(per_doc, idx.doc_lengths());
    }

    #[test]
    fn single_document_score() {
        let idx = build_index(&corpus(&["cat"])).unwrap();
        let r = retrieve(&idx, &q(&["cat"]), 10, Bm25Params::default());
        assert_eq!(r.entries.len(), 1);
        // idf = ln(0.5/1.5 + 1) = ln(4/3); tf part = 2.2 / (1 + 1.2) = 1
        assert!((r.entries[0].score - 0.287_682_072_451_780_9).abs() < 1e-15);
    }

    #[test]
    fn no_match_is_empty() {
        let idx = build_index(&corpus(&["cat", "dog"])).unwrap();
        assert!(retrieve(&idx, &q(&["bird"]), 10, Bm25Params::default()).is_empty());
    }

    #[test]
    fn higher_tf_ranks_first() {
        let idx = build_index(&corpus(&["cat x", "cat cat", "y z"])).unwrap();
        let r = retrieve(&idx, &q(&["cat"]), 10, Bm25Params::default());
        assert_eq!(r.doc_indices(), vec![1, 0]);
        r.check_invariants().unwrap();
    }

    #[test]
    fn ties_broken_by_id() {
        let docs = vec![
            Document::new("zeta", vec!["cat".into()], Some(0)),
            Document::new("alpha", vec!["cat".into()], Some(0)),
        ];
        let c = Corpus::new(docs, GroupTable::from_names(["a", "b"]), "g").unwrap();
        let idx = build_index(&c).unwrap();
        let r = retrieve(&idx, &q(&["cat"]), 10, Bm25Params::default());
        assert_eq!(r.doc_indices(), vec![1, 0]);
    }

    #[test]
    fn top_k_truncates() {
        let idx = build_index(&corpus(&["cat", "cat cat", "cat dog", "dog"])).unwrap();
        let r = retrieve(&idx, &q(&["cat"]), 2, Bm25Params::default());
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn irrelevant_document_leaves_scores_unchanged_at_fixed_stats() {
        let base = corpus(&["cat dog", "cat cat fish", "dog bird"]);
        let idx = build_index(&base).unwrap();
        let mut docs = base.documents.clone();
        docs.push(Document::new("d999", vec!["zebra".into(), "lion".into()], Some(0)));
        let idx2 = build_index(&base.with_documents(docs)).unwrap();
        let query = q(&["cat", "dog"]);
        let a = retrieve(&idx, &query, 10, Bm25Params::default());
        let b = retrieve_with_stats(&idx2, &query, 10, Bm25Params::default(), idx.stats());
        assert_eq!(a, b);
    }
}
