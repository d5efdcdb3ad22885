//! Desk-scale stand-in for a large labeled collection: unigram topic-model
//! documents carrying a group attribute and a per-topic relevance flag.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, GroupTable, Query};
use crate::error::{Error, Result};
use crate::simplex::check_simplex;

/// Share of a document's tokens drawn from each vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureWeights {
    pub background: f64,
    pub group: f64,
    pub topic: f64,
}

impl MixtureWeights {
    fn validate(&self, what: &'static str) -> Result<()> {
        let parts = [self.background, self.group, self.topic];
        if parts.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || ((parts.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(what, "weights must be non-negative and sum to 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    /// Defaults to `g0`, `g1`, ...
    pub group_names: Option<Vec<String>>,
    pub group_priors: Vec<f64>,
    pub topic_count: usize,
    /// Size of the unlabeled pool and of the correction pool left after the
    /// classifier's draw.
    pub docs_per_pool: usize,
    /// Extra labeled documents per group, reserved for the classifier.
    pub labeled_extra_per_group: usize,
    pub background_vocab: usize,
    pub group_vocab: usize,
    pub topic_vocab: usize,
    /// Inclusive token-count range.
    pub doc_length: [usize; 2],
    pub mixture: MixtureWeights,
    pub relevant_mixture: MixtureWeights,
    /// Per-group multiplier on the topic share; defaults to a ramp from 0.8
    /// (first group) to 1.4 (last group).
    pub topic_focus: Option<Vec<f64>>,
    pub relevance_rate: f64,
    /// Per-group multiplier on `relevance_rate`; defaults to all ones.
    pub group_relevance: Option<Vec<f64>>,
    /// `topic_count x n`; row `t` weighs the groups writing about topic `t`.
    pub affinity: Option<Vec<Vec<f64>>>,
    /// When `affinity` is absent, each row mixes the uniform vector with a
    /// random point of the simplex at this weight.
    pub affinity_strength: f64,
    pub query_terms: usize,
    /// Appends a mid-frequency background term to every query, which pads
    /// rankings with off-topic documents.
    pub query_background_term: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            group_names: None,
            group_priors: vec![0.55, 0.25, 0.15, 0.05],
            topic_count: 50,
            docs_per_pool: 40_000,
            labeled_extra_per_group: 500,
            background_vocab: 2000,
            group_vocab: 150,
            topic_vocab: 40,
            doc_length: [30, 70],
            mixture: MixtureWeights {
                background: 0.79,
                group: 0.06,
                topic: 0.15,
            },
            relevant_mixture: MixtureWeights {
                background: 0.54,
                group: 0.06,
                topic: 0.40,
            },
            topic_focus: None,
            relevance_rate: 0.3,
            group_relevance: None,
            affinity: None,
            affinity_strength: 0.25,
            query_terms: 3,
            query_background_term: false,
        }
    }
}

const QUERY_BACKGROUND_RANK: usize = 50;

impl SyntheticSpec {
    pub fn class_count(&self) -> usize {
        self.group_priors.len()
    }

    pub fn labeled_size(&self) -> usize {
        self.docs_per_pool + self.class_count() * self.labeled_extra_per_group
    }

    pub fn group_names(&self) -> Vec<String> {
        match &self.group_names {
            Some(v) => v.clone(),
            None => (0..self.class_count()).map(|g| format!("g{g}")).collect(),
        }
    }

    pub fn topic_focus(&self) -> Vec<f64> {
        let n = self.class_count();
        match &self.topic_focus {
            Some(v) => v.clone(),
            None if n < 2 => vec![1.0; n],
            None => (0..n).map(|g| 0.8 + 0.6 * g as f64 / (n - 1) as f64).collect(),
        }
    }

    pub fn group_relevance(&self) -> Vec<f64> {
        self.group_relevance.clone().unwrap_or_else(|| vec![1.0; self.class_count()])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.class_count();
        let bad = |detail: String| Err(Error::invalid("synthetic spec", detail));
        if n < 2 {
            return bad("at least two groups are required".into());
        }
        check_simplex(&self.group_priors).map_err(|e| Error::invalid("group_priors", e.to_string()))?;
        let names = self.group_names();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if names.len() != n || sorted.len() != n || names.iter().any(|s| s.is_empty()) {
            return bad(format!("need {n} distinct non-empty group names"));
        }
        if self.topic_count == 0 {
            return bad("topic_count must be positive".into());
        }
        if self.docs_per_pool < 10 * n * self.topic_count {
            return bad(format!(
                "docs_per_pool {} is below 10 x groups x topics = {}",
                self.docs_per_pool,
                10 * n * self.topic_count
            ));
        }
        if self.query_terms == 0 || self.topic_vocab < 2 * self.query_terms {
            return bad("topic_vocab must hold two disjoint sets of query terms".into());
        }
        if self.background_vocab < 3 * QUERY_BACKGROUND_RANK || self.group_vocab == 0 {
            return bad(format!(
                "background_vocab must be at least {} and group_vocab positive",
                3 * QUERY_BACKGROUND_RANK
            ));
        }
        let [lo, hi] = self.doc_length;
        if lo == 0 || lo > hi {
            return bad(format!("doc_length [{lo}, {hi}] is not a valid range"));
        }
        self.mixture.validate("mixture")?;
        self.relevant_mixture.validate("relevant_mixture")?;
        let focus = self.topic_focus();
        if focus.len() != n || focus.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
            return bad(format!("topic_focus needs {n} non-negative values"));
        }
        let max_focus = focus.iter().copied().fold(0.0, f64::max);
        for m in [&self.mixture, &self.relevant_mixture] {
            if m.topic * max_focus + m.group > 1.0 + 1e-12 {
                return bad("topic share times topic_focus leaves no room for the background".into());
            }
        }
        let rel = self.group_relevance();
        if rel.len() != n || rel.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad(format!("group_relevance needs {n} non-negative values"));
        }
        if !(0.0..=1.0).contains(&self.relevance_rate) || rel.iter().any(|r| r * self.relevance_rate > 1.0) {
            return bad("relevance probabilities must lie in [0, 1]".into());
        }
        if let Some(a) = &self.affinity {
            if a.len() != self.topic_count {
                return bad(format!("affinity has {} rows for {} topics", a.len(), self.topic_count));
            }
            for (t, row) in a.iter().enumerate() {
                if row.len() != n {
                    return bad(format!("affinity row {t} has {} entries, expected {n}", row.len()));
                }
                check_simplex(row).map_err(|e| Error::invalid("affinity", format!("row {t}: {e}")))?;
            }
            for g in 0..n {
                if self.group_priors[g] > 0.0 && a.iter().all(|row| row[g] == 0.0) {
                    return bad(format!("group {g} has no topic to write about"));
                }
            }
        } else if !(0.0..=1.0).contains(&self.affinity_strength) {
            return bad("affinity_strength must lie in [0, 1]".into());
        }
        Ok(())
    }
}

pub fn background_term(rank: usize) -> String {
    format!("bg{rank:04}")
}

pub fn group_term(group: usize, rank: usize) -> String {
    format!("gr{group}w{rank:03}")
}

pub fn topic_term(topic: usize, rank: usize) -> String {
    format!("tp{topic:02}w{rank:03}")
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub labeled: Corpus,
    pub unlabeled: Corpus,
    /// One evaluation query per topic.
    pub queries: Vec<Query>,
    /// One held-out query per topic, built from different terms.
    pub validation_queries: Vec<Query>,
    pub affinity: Vec<Vec<f64>>,
}

struct Vocab {
    terms: Vec<String>,
    dist: WeightedIndex<f64>,
}

impl Vocab {
    fn zipf(terms: Vec<String>) -> Self {
        let dist = WeightedIndex::new((0..terms.len()).map(|r| 1.0 / (r + 1) as f64)).expect("non-empty vocabulary");
        Self { terms, dist }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> String {
        self.terms[self.dist.sample(rng)].clone()
    }
}

fn random_simplex_point(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -rng.gen_range(f64::EPSILON..1.0f64).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let n = spec.class_count();
    let t_count = spec.topic_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let affinity = match &spec.affinity {
        Some(a) => a.clone(),
        None => {
            let s = spec.affinity_strength;
            (0..t_count)
                .map(|_| {
                    random_simplex_point(&mut rng, n)
                        .into_iter()
                        .map(|r| (1.0 - s) / n as f64 + s * r)
                        .collect()
                })
                .collect()
        }
    };

    let background = Vocab::zipf((0..spec.background_vocab).map(background_term).collect());
    let group_vocabs: Vec<Vocab> = (0..n)
        .map(|g| Vocab::zipf((0..spec.group_vocab).map(|r| group_term(g, r)).collect()))
        .collect();
    let topic_vocabs: Vec<Vocab> = (0..t_count)
        .map(|t| Vocab::zipf((0..spec.topic_vocab).map(|r| topic_term(t, r)).collect()))
        .collect();

    let names = spec.group_names();
    let table = GroupTable::from_names(names.iter());
    let label_of: Vec<usize> = names.iter().map(|s| table.index_of(s).expect("name in table")).collect();

    let group_dist = WeightedIndex::new(&spec.group_priors).map_err(|e| Error::invalid("group_priors", e.to_string()))?;
    // a group with zero prior may have no topic; it is never drawn
    let topic_given_group: Vec<Option<WeightedIndex<f64>>> = (0..n)
        .map(|g| WeightedIndex::new(affinity.iter().map(|row| row[g])).ok())
        .collect();
    let focus = spec.topic_focus();
    let relevance: Vec<f64> = spec.group_relevance().iter().map(|r| r * spec.relevance_rate).collect();

    let make_doc = |id: String, rng: &mut ChaCha8Rng| -> Document {
        let g = group_dist.sample(rng);
        let t = topic_given_group[g].as_ref().expect("drawn group has topics").sample(rng);
        let relevant = rng.gen_bool(relevance[g]);
        let len = rng.gen_range(spec.doc_length[0]..=spec.doc_length[1]);
        let mix = if relevant { &spec.relevant_mixture } else { &spec.mixture };
        let topic_share = mix.topic * focus[g];
        let group_share = mix.group;
        let tokens = (0..len)
            .map(|_| {
                let u: f64 = rng.gen();
                if u < topic_share {
                    topic_vocabs[t].sample(rng)
                } else if u < topic_share + group_share {
                    group_vocabs[g].sample(rng)
                } else {
                    background.sample(rng)
                }
            })
            .collect();
        let mut doc = Document::new(id, tokens, Some(label_of[g]));
        doc.relevant = Some(relevant);
        doc
    };

    let labeled_docs: Vec<Document> = (0..spec.labeled_size())
        .map(|i| make_doc(format!("l{i:06}"), &mut rng))
        .collect();
    let unlabeled_docs: Vec<Document> = (0..spec.docs_per_pool)
        .map(|i| make_doc(format!("u{i:06}"), &mut rng))
        .collect();

    let k = spec.query_terms;
    let query = |id: String, t: usize, ranks: std::ops::Range<usize>, bg: usize| {
        let mut terms: Vec<String> = ranks.map(|r| topic_term(t, r)).collect();
        if spec.query_background_term {
            terms.push(background_term(bg));
        }
        Query { id, text: terms.join(" ") }
    };
    let queries = (0..t_count)
        .map(|t| query(format!("q{t:03}"), t, 0..k, QUERY_BACKGROUND_RANK + (7 * t) % QUERY_BACKGROUND_RANK))
        .collect();
    let validation_queries = (0..t_count)
        .map(|t| {
            query(
                format!("v{t:03}"),
                t,
                k..2 * k,
                2 * QUERY_BACKGROUND_RANK + (7 * t) % QUERY_BACKGROUND_RANK,
            )
        })
        .collect();

    Ok(SyntheticData {
        labeled: Corpus::new(labeled_docs, table.clone(), "group")?,
        unlabeled: Corpus::new(unlabeled_docs, table, "group")?,
        queries,
        validation_queries,
        affinity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{build_index, retrieve, tokenize, Bm25Params};

    pub(crate) fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            topic_count: 5,
            docs_per_pool: 400,
            labeled_extra_per_group: 20,
            background_vocab: 300,
            group_vocab: 30,
            topic_vocab: 10,
            ..Default::default()
        }
    }

    #[test]
    fn sizes_and_ids() {
        let spec = small_spec();
        let data = generate_synthetic(&spec, 1).unwrap();
        assert_eq!(data.labeled.len(), 480);
        assert_eq!(data.unlabeled.len(), 400);
        assert_eq!(data.queries.len(), 5);
        assert_eq!(data.validation_queries.len(), 5);
        assert!(data.labeled.is_fully_labeled() && data.unlabeled.is_fully_labeled());
        assert!(data.labeled.documents.iter().all(|d| d.id.starts_with('l') && d.relevant.is_some()));
        assert!(data.unlabeled.documents.iter().all(|d| d.id.starts_with('u')));
        for d in &data.unlabeled.documents {
            assert!((30..=70).contains(&d.tokens.len()));
        }
        assert_eq!(data.queries[2].text, "tp02w000 tp02w001 tp02w002");
        assert_eq!(data.validation_queries[2].text, "tp02w003 tp02w004 tp02w005");
    }

    #[test]
    fn vocabulary_survives_tokenization() {
        for t in [background_term(7), group_term(3, 12), topic_term(49, 39)] {
            assert_eq!(tokenize(&t), vec![t.clone()]);
        }
    }

    #[test]
    fn same_seed_same_corpora() {
        let spec = small_spec();
        let bytes = |seed| {
            let d = generate_synthetic(&spec, seed).unwrap();
            let mut out = Vec::new();
            d.labeled.write_jsonl(&mut out).unwrap();
            d.unlabeled.write_jsonl(&mut out).unwrap();
            out
        };
        assert_eq!(bytes(5), bytes(5));
        assert_ne!(bytes(5), bytes(6));
    }

    #[test]
    fn invalid_specs() {
        let cases = [
            SyntheticSpec {
                group_priors: vec![0.5, 0.6],
                ..small_spec()
            },
            SyntheticSpec {
                group_priors: vec![1.0],
                ..small_spec()
            },
            SyntheticSpec {
                docs_per_pool: 100,
                ..small_spec()
            },
            SyntheticSpec {
                affinity: Some(vec![vec![0.5, 0.5, 0.0, 0.0]; 4]),
                ..small_spec()
            },
            SyntheticSpec {
                affinity: Some(vec![vec![1.0, 0.0, 0.0, 0.0]; 5]),
                ..small_spec()
            },
            SyntheticSpec {
                topic_focus: Some(vec![5.0; 4]),
                ..small_spec()
            },
            SyntheticSpec {
                group_names: Some(vec!["a".into(), "a".into(), "b".into(), "c".into()]),
                ..small_spec()
            },
            SyntheticSpec {
                doc_length: [10, 5],
                ..small_spec()
            },
            SyntheticSpec {
                relevance_rate: 0.6,
                group_relevance: Some(vec![2.0; 4]),
                ..small_spec()
            },
        ];
        for spec in cases {
            assert!(generate_synthetic(&spec, 0).is_err(), "{spec:?}");
        }
    }

    #[test]
    fn custom_group_names_map_to_sorted_indices() {
        let spec = SyntheticSpec {
            group_names: Some(vec!["z".into(), "a".into()]),
            group_priors: vec![0.9, 0.1],
            ..small_spec()
        };
        let data = generate_synthetic(&spec, 3).unwrap();
        assert_eq!(data.labeled.groups.names(), &["a".to_string(), "z".to_string()]);
        let p = data.labeled.labels().unwrap();
        let share_z = p.iter().filter(|&&y| y == 1).count() as f64 / p.len() as f64;
        assert!(share_z > 0.8, "{share_z}");
    }

    fn top_k_shares(data: &SyntheticData, query: &Query, k: usize) -> Vec<f64> {
        let index = build_index(&data.unlabeled).unwrap();
        let ranked = retrieve(&index, &tokenize(&query.text), k, Bm25Params::default());
        assert_eq!(ranked.len(), k);
        let mut shares = vec![0.0; data.unlabeled.groups.len()];
        for e in &ranked.entries {
            shares[data.unlabeled.documents[e.doc].group.unwrap()] += 1.0 / k as f64;
        }
        shares
    }

    #[test]
    fn uniform_affinity_retrieves_at_prior_rates() {
        let spec = SyntheticSpec {
            topic_count: 8,
            docs_per_pool: 8000,
            affinity: Some(vec![vec![0.25; 4]; 8]),
            topic_focus: Some(vec![1.0; 4]),
            ..Default::default()
        };
        let data = generate_synthetic(&spec, 11).unwrap();
        let k = 200;
        for q in &data.queries {
            let shares = top_k_shares(&data, q, k);
            for (p, prior) in shares.iter().zip(&spec.group_priors) {
                let sigma = (prior * (1.0 - prior) / k as f64).sqrt();
                assert!((p - prior).abs() <= 3.0 * sigma, "{}: {shares:?}", q.id);
            }
        }
    }

    #[test]
    fn concentrated_affinity_pins_the_topic_group() {
        let mut affinity = vec![vec![0.0; 4]; 4];
        for (t, row) in affinity.iter_mut().enumerate() {
            row[t] = 1.0;
        }
        let spec = SyntheticSpec {
            topic_count: 4,
            docs_per_pool: 4000,
            affinity: Some(affinity),
            ..Default::default()
        };
        let data = generate_synthetic(&spec, 2).unwrap();
        for (t, q) in data.queries.iter().enumerate() {
            let shares = top_k_shares(&data, q, 50);
            assert!((shares[t] - 1.0).abs() < 1e-12, "{}: {shares:?}", q.id);
        }
    }
}
