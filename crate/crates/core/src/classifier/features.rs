use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

/// Sparse tf-idf vector; indices strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
    }
}

/// Vocabulary and idf weights fitted on the classifier's training documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VectorizerRepr", into = "VectorizerRepr")]
pub struct Vectorizer {
    terms: Vec<String>,
    idf: Vec<f64>,
    lookup: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VectorizerRepr {
    terms: Vec<String>,
    idf: Vec<f64>,
}

impl From<VectorizerRepr> for Vectorizer {
    fn from(r: VectorizerRepr) -> Self {
        Self::from_parts(r.terms, r.idf)
    }
}

impl From<Vectorizer> for VectorizerRepr {
    fn from(v: Vectorizer) -> Self {
        Self {
            terms: v.terms,
            idf: v.idf,
        }
    }
}

impl Vectorizer {
    /// Keeps terms occurring at least `min_count` times overall; idf is the
    /// smoothed `ln((1 + N) / (1 + df)) + 1`.
    pub fn fit<'a, I>(docs: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
        let mut n_docs = 0usize;
        for tokens in docs {
            n_docs += 1;
            let mut seen = HashSet::new();
            for t in tokens {
                let e = counts.entry(t.as_str()).or_default();
                e.0 += 1;
                if seen.insert(t.as_str()) {
                    e.1 += 1;
                }
            }
        }
        let mut terms = Vec::new();
        let mut idf = Vec::new();
        for (t, (count, df)) in counts {
            if count >= min_count {
                terms.push(t.to_string());
                idf.push(((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0);
            }
        }
        Self::from_parts(terms, idf)
    }

    pub fn from_parts(terms: Vec<String>, idf: Vec<f64>) -> Self {
        let lookup = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { terms, idf, lookup }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.lookup.get(term).copied()
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// L2-normalized tf-idf; out-of-vocabulary terms are dropped.
    pub fn featurize(&self, tokens: &[String]) -> FeatureVector {
        let mut tf: BTreeMap<u32, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(i) = self.index_of(t) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(u32, f64)> = tf.into_iter().map(|(i, c)| (i, c * self.idf[i as usize])).collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            entries.iter_mut().for_each(|(_, w)| *w /= norm);
        }
        FeatureVector { entries }
    }
}
