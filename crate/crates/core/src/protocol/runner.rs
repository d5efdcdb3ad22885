use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::BufReader;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Bandwidth, DataSource, Method, PoolSize, ProtocolConfig};
use super::report::{
    significance_marker, BandwidthRow, ClassifierSummary, ErrorSummary, FairnessReport, MethodEstimate, MethodSummary,
    Metric, PairTest, PoolReport, QueryRecord, ReportMetadata, SelectionRow, TargetSource, TimingRow,
};
use super::sampling::{draw_per_group_indices, pool_permutation, undersample_indices};
use super::synthetic::generate_synthetic;
use crate::classifier::{cross_val_posteriors, default_grid, select_model, train, LogisticModel};
use crate::corpus::{prevalence_of, read_queries, Corpus, Document, Query};
use crate::error::{Error, Result};
use crate::fairness::{mean, rae, rkl, rnd, std_dev, CutoffSchedule, DistributionsAtK};
use crate::pmc::{estimate_pmc_rates, pmc_b_correct, pmc_d_correct, PmcRates, RateSource};
use crate::quantify::{
    acc_estimate, classify_and_count, fit_correction_with_fallback, fit_naive, kdey_densities, kdey_from_densities,
    naive_estimate, pacc_estimate, select_kdey_bandwidth, CorrectionModel, GlobalCorrection, QuantifierKind,
    ValidationQuery,
};
use crate::retrieval::{build_index, build_index_from, retrieve, tokenize, Bm25Params, InvertedIndex};
use crate::simplex::{PosteriorMatrix, PrevalenceVector};
use crate::stats::wilcoxon_signed_rank;

/// Cutoff used when choosing the KDE bandwidth.
pub const BANDWIDTH_SELECTION_CUTOFF: usize = 100;

/// Anything that maps a token sequence to a posterior over the groups.
pub trait Classifier: Sync {
    fn class_count(&self) -> usize;
    fn posterior(&self, tokens: &[String]) -> Vec<f64>;
}

impl Classifier for LogisticModel {
    fn class_count(&self) -> usize {
        self.class_count
    }

    fn posterior(&self, tokens: &[String]) -> Vec<f64> {
        self.posterior_of(&self.featurize(tokens))
    }
}

/// Corpora and queries for one benchmark run.
#[derive(Debug, Clone)]
pub struct ProtocolData {
    /// Labeled documents; split into the classifier's sample and the
    /// correction pool.
    pub labeled: Corpus,
    /// The test pool. Its labels are read only to score the estimates.
    pub unlabeled: Corpus,
    pub queries: Vec<Query>,
    /// Held-out queries for bandwidth selection.
    pub validation_queries: Vec<Query>,
}

impl ProtocolData {
    pub fn new(labeled: Corpus, unlabeled: Corpus, queries: Vec<Query>, validation_queries: Vec<Query>) -> Result<Self> {
        if labeled.groups != unlabeled.groups {
            return Err(Error::invalid("corpora", "labeled and unlabeled pools use different group tables"));
        }
        if !labeled.is_fully_labeled() {
            return Err(Error::invalid("labeled pool", "every document needs a group"));
        }
        if !unlabeled.is_fully_labeled() {
            return Err(Error::invalid(
                "unlabeled pool",
                "evaluation needs the ground-truth group of every test document",
            ));
        }
        let ids: HashSet<&str> = labeled.documents.iter().map(|d| d.id.as_str()).collect();
        if let Some(d) = unlabeled.documents.iter().find(|d| ids.contains(d.id.as_str())) {
            return Err(Error::invalid("corpora", format!("document {:?} is in both pools", d.id)));
        }
        if queries.is_empty() {
            return Err(Error::Empty("query set"));
        }
        Ok(Self {
            labeled,
            unlabeled,
            queries,
            validation_queries,
        })
    }

    /// Generates or reads the corpora named by the config, binarizing them
    /// when asked.
    pub fn load(config: &ProtocolConfig) -> Result<Self> {
        let (mut labeled, mut unlabeled, queries, validation) = match &config.data {
            DataSource::Synthetic(spec) => {
                let d = generate_synthetic(spec, config.seed)?;
                (d.labeled, d.unlabeled, d.queries, d.validation_queries)
            }
            DataSource::Files {
                labeled,
                unlabeled,
                queries,
                validation_queries,
            } => {
                let l = Corpus::read_jsonl(BufReader::new(File::open(labeled)?), None)?;
                let u = Corpus::read_jsonl(BufReader::new(File::open(unlabeled)?), Some(&l.groups))?;
                let q = read_queries(BufReader::new(File::open(queries)?))?;
                let v = match validation_queries {
                    Some(p) => read_queries(BufReader::new(File::open(p)?))?,
                    None => Vec::new(),
                };
                (l, u, q, v)
            }
        };
        if let Some(positive) = &config.binarize {
            labeled = labeled.binarize(positive)?;
            unlabeled = unlabeled.binarize(positive)?;
        }
        Self::new(labeled, unlabeled, queries, validation)
    }
}

/// Independent seed for one random stream of a run.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.gen()
}

const STREAM_CLASSIFIER_DRAW: u64 = 1;
const STREAM_FOLDS: u64 = 2;
const STREAM_POOLS: u64 = 3;

fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

fn posteriors_of(classifier: &dyn Classifier, docs: &[&Document]) -> Result<PosteriorMatrix> {
    let rows = par_map(docs, |d| classifier.posterior(&d.tokens));
    let mut m = PosteriorMatrix::with_capacity(classifier.class_count(), rows.len());
    for r in &rows {
        m.push(r)?;
    }
    Ok(m)
}

/// Run log lines, mirrored to the `log` facade.
#[derive(Default)]
struct RunLog(Vec<String>);

impl RunLog {
    fn info(&mut self, line: String) {
        log::info!("{line}");
        self.0.push(line);
    }

    fn warn(&mut self, line: String) {
        log::warn!("{line}");
        self.0.push(format!("warning: {line}"));
    }
}

/// The labeled correction pool seen through one size of the sweep.
struct Pool<'a> {
    label: String,
    /// Positions into the labeled corpus.
    members: Vec<usize>,
    index: InvertedIndex,
    labeled: &'a Corpus,
}

impl<'a> Pool<'a> {
    fn new(label: String, members: Vec<usize>, labeled: &'a Corpus) -> Result<Self> {
        let index = build_index_from(members.iter().map(|&i| &labeled.documents[i]))?;
        Ok(Self {
            label,
            members,
            index,
            labeled,
        })
    }

    /// `L_q`: the top of the pool's ranking, keeping at most `cap` of the
    /// best-scored members of each group. Positions into the labeled corpus.
    fn correction_sample(&self, query: &[String], depth: usize, cap: usize, params: Bm25Params, n: usize) -> Vec<usize> {
        let ranked = retrieve(&self.index, query, depth, params);
        let mut counts = vec![0usize; n];
        let mut out = Vec::new();
        for e in &ranked.entries {
            let i = self.members[e.doc];
            let g = self.labeled.documents[i].group.expect("labeled pool");
            if counts[g] < cap {
                counts[g] += 1;
                out.push(i);
            }
        }
        out
    }
}

/// Ground truth of one query over the test pool.
struct QueryTruth {
    id: String,
    /// Ranked test-pool positions.
    ranked: Vec<usize>,
    bag_sizes: BTreeMap<usize, usize>,
    dists: DistributionsAtK,
    rkl: f64,
    rnd: Option<f64>,
}

/// State shared by every query of a run.
struct Shared<'a> {
    config: &'a ProtocolConfig,
    n: usize,
    methods: Vec<Method>,
    schedule: &'a CutoffSchedule,
    target: PrevalenceVector,
    global: GlobalCorrection,
    fallback_prevalence: PrevalenceVector,
    pmc_base: Option<PmcRates>,
    bandwidth: Option<f64>,
    test_posteriors: PosteriorMatrix,
    labeled_posteriors: Vec<Option<Vec<f64>>>,
    labeled: &'a Corpus,
}

struct QueryOutcome {
    record: QueryRecord,
    timings: Vec<TimingRow>,
    log: Vec<String>,
}

fn millis(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Shared<'_> {
    fn correction_data(&self, sample: &[usize]) -> Result<(PosteriorMatrix, Vec<usize>)> {
        let mut post = PosteriorMatrix::with_capacity(self.n, sample.len());
        let mut labels = Vec::with_capacity(sample.len());
        for &i in sample {
            post.push(self.labeled_posteriors[i].as_deref().expect("correction pool posterior"))?;
            labels.push(self.labeled.documents[i].group.expect("labeled pool"));
        }
        Ok((post, labels))
    }

    fn evaluate(&self, pool: &Pool, truth: &QueryTruth, query: &[String]) -> Result<QueryOutcome> {
        let n = self.n;
        let cutoffs = self.schedule.cutoffs();
        let sample = pool.correction_sample(
            query,
            self.config.retrieval_depth,
            self.config.lq_cap_per_group,
            self.config.bm25,
            n,
        );
        let (lq_post, lq_labels) = self.correction_data(&sample)?;
        let mut counts = vec![0usize; n];
        lq_labels.iter().for_each(|&y| counts[y] += 1);
        let missing: Vec<usize> = (0..n).filter(|&g| counts[g] == 0).collect();

        let mut log = Vec::new();
        let prefix = format!("pool {} query {}", pool.label, truth.id);
        for &g in &missing {
            log.push(format!(
                "{prefix}: group {:?} absent from the correction sample; corrections use the global estimate",
                self.labeled.groups.name(g)
            ));
        }

        let bag = self.test_posteriors.select(&truth.ranked);
        let preds = bag.argmax();
        let sizes: Vec<usize> = cutoffs.iter().map(|k| truth.bag_sizes[k]).collect();

        let mut estimates = Vec::with_capacity(self.methods.len());
        let mut timings = Vec::with_capacity(self.methods.len());
        let mut cc_dists: Option<DistributionsAtK> = None;

        for &method in &self.methods {
            let Some(kind) = method.quantifier() else { continue };
            let t_learn = Instant::now();
            let model = match kind {
                QuantifierKind::Naive if lq_labels.is_empty() => None,
                QuantifierKind::Naive => Some(fit_naive(&lq_labels, cutoffs, n)?),
                QuantifierKind::Cc => None,
                _ => Some(fit_correction_with_fallback(kind, &lq_post, &lq_labels, self.bandwidth, &self.global)?.0),
            };
            let learn_ms = millis(t_learn);

            let t_predict = Instant::now();
            let mut dists = DistributionsAtK::new();
            match (kind, &model) {
                (QuantifierKind::Naive, Some(m)) => {
                    for &k in cutoffs {
                        dists.insert(k, naive_estimate(m, k)?);
                    }
                }
                (QuantifierKind::Naive, None) => {
                    log.push(format!("{prefix}: empty correction sample; naive reports the classifier sample's prevalence"));
                    for &k in cutoffs {
                        dists.insert(k, self.fallback_prevalence.clone());
                    }
                }
                (QuantifierKind::Cc, _) => {
                    for (&k, &m) in cutoffs.iter().zip(&sizes) {
                        dists.insert(k, classify_and_count(&preds[..m], n)?);
                    }
                }
                (QuantifierKind::Acc, Some(model)) => {
                    for (&k, &m) in cutoffs.iter().zip(&sizes) {
                        let est = match acc_estimate(model, &preds[..m]) {
                            Ok(e) => e,
                            Err(Error::UninformativeRates) => {
                                let global = CorrectionModel::Acc {
                                    rates: self.global.crisp_rates().to_vec(),
                                };
                                match acc_estimate(&global, &preds[..m]) {
                                    Ok(e) => {
                                        log.push(format!("{prefix} k={k}: uninformative query rates; acc uses global rates"));
                                        e
                                    }
                                    Err(Error::UninformativeRates) => {
                                        log.push(format!("{prefix} k={k}: uninformative rates; acc reports cc"));
                                        classify_and_count(&preds[..m], n)?
                                    }
                                    Err(e) => return Err(e),
                                }
                            }
                            Err(e) => return Err(e),
                        };
                        dists.insert(k, est);
                    }
                }
                (QuantifierKind::Pacc, Some(model)) => {
                    for (&k, &m) in cutoffs.iter().zip(&sizes) {
                        dists.insert(k, pacc_estimate(model, &bag.prefix(m))?);
                    }
                }
                (QuantifierKind::Kdey, Some(model)) => {
                    let d = kdey_densities(model, &bag)?;
                    for (&k, &m) in cutoffs.iter().zip(&sizes) {
                        dists.insert(k, kdey_from_densities(&d[..m * n], n)?.point);
                    }
                }
                _ => unreachable!("every quantifier has a model"),
            }
            let predict_ms = millis(t_predict) / cutoffs.len() as f64;

            let mut rae_at = BTreeMap::new();
            for (&k, &m) in cutoffs.iter().zip(&sizes) {
                rae_at.insert(k, rae(&truth.dists[&k], &dists[&k], m)?);
            }
            let est_rkl = rkl(&dists, &self.target, self.schedule)?;
            let est_rnd = if n == 2 {
                Some(rnd(&dists, &self.target, self.schedule)?)
            } else {
                None
            };
            if kind == QuantifierKind::Cc {
                cc_dists = Some(dists.clone());
            }
            estimates.push(MethodEstimate {
                method,
                prevalence: dists.into_iter().map(|(k, p)| (k, p.into_vec())).collect(),
                rae: rae_at,
                rkl: Some(est_rkl),
                rnd: est_rnd,
            });
            timings.push(TimingRow {
                pool_size: pool.label.clone(),
                query_id: truth.id.clone(),
                method,
                learn_ms,
                predict_ms,
            });
        }

        if self.methods.iter().any(|m| m.is_pmc()) {
            let proxy_dists = match cc_dists {
                Some(d) => d,
                None => cutoffs
                    .iter()
                    .zip(&sizes)
                    .map(|(&k, &m)| Ok((k, classify_and_count(&preds[..m], n)?)))
                    .collect::<Result<_>>()?,
            };
            let proxy = rnd(&proxy_dists, &self.target, self.schedule)?;
            let base = self.pmc_base.expect("binary run has base rates");
            for &method in self.methods.iter().filter(|m| m.is_pmc()) {
                let t_learn = Instant::now();
                let rates = match method {
                    Method::PmcBPlus | Method::PmcDPlus => {
                        match estimate_pmc_rates(&lq_labels, &lq_post.argmax(), RateSource::QueryBiased) {
                            Ok(r) => r,
                            Err(e) => {
                                log.push(format!("{prefix}: {method} falls back to the training-set rates ({e})"));
                                base
                            }
                        }
                    }
                    _ => base,
                };
                let learn_ms = millis(t_learn);
                let t_predict = Instant::now();
                let corrected = match method {
                    Method::PmcB | Method::PmcBPlus => pmc_b_correct(proxy, &rates),
                    _ => pmc_d_correct(proxy, &rates),
                };
                let predict_ms = millis(t_predict);
                let value = match corrected {
                    Ok(v) => v,
                    Err(Error::DegeneratePmc) => {
                        log.push(format!("{prefix}: {method} denominator is degenerate; reporting the proxy score"));
                        proxy
                    }
                    Err(e) => return Err(e),
                };
                estimates.push(MethodEstimate {
                    method,
                    prevalence: BTreeMap::new(),
                    rae: BTreeMap::new(),
                    rkl: None,
                    rnd: Some(value),
                });
                timings.push(TimingRow {
                    pool_size: pool.label.clone(),
                    query_id: truth.id.clone(),
                    method,
                    learn_ms,
                    predict_ms,
                });
            }
        }

        Ok(QueryOutcome {
            record: QueryRecord {
                query_id: truth.id.clone(),
                true_rkl: truth.rkl,
                true_rnd: truth.rnd,
                bag_sizes: truth.bag_sizes.clone(),
                true_prevalence: truth.dists.iter().map(|(k, p)| (*k, p.as_slice().to_vec())).collect(),
                correction_counts: counts,
                fallback_groups: missing,
                estimates,
            },
            timings,
            log,
        })
    }
}

/// Runs the benchmark, training the group classifier on a per-group draw
/// from the labeled pool.
pub fn run_protocol(config: &ProtocolConfig, data: &ProtocolData) -> Result<FairnessReport> {
    run(config, data, None)
}

/// As [`run_protocol`] with a ready-made classifier. The per-group draw
/// still leaves the labeled pool and supplies the global fallback rates.
pub fn run_protocol_with_classifier(
    config: &ProtocolConfig,
    data: &ProtocolData,
    classifier: &dyn Classifier,
) -> Result<FairnessReport> {
    run(config, data, Some(classifier))
}

fn resolve_pool_sizes(sizes: &[PoolSize], available: usize) -> Result<Vec<(String, usize)>> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for &s in sizes {
        let count = match s {
            PoolSize::Full => available,
            PoolSize::Count(c) if c > available => {
                return Err(Error::invalid(
                    "pool size",
                    format!("{s} exceeds the {available} labeled documents left for correction"),
                ))
            }
            PoolSize::Count(c) => c,
        };
        if !out.iter().any(|(_, c)| *c == count) {
            out.push((s.to_string(), count));
        }
    }
    out.sort_by_key(|(_, c)| *c);
    Ok(out)
}

fn run(config: &ProtocolConfig, data: &ProtocolData, fixed: Option<&dyn Classifier>) -> Result<FairnessReport> {
    config.validate()?;
    let labeled = &data.labeled;
    let unlabeled = &data.unlabeled;
    let n = labeled.class_count;
    let methods = config.methods_for(n)?;
    let schedule = &config.cutoffs;
    let mut log = RunLog::default();
    log.info(format!(
        "seed {}; {} labeled, {} test documents, {} groups, {} queries",
        config.seed,
        labeled.len(),
        unlabeled.len(),
        n,
        data.queries.len()
    ));

    // classifier sample, removed from the labeled pool
    let draw = draw_per_group_indices(
        labeled,
        config.classifier_docs_per_group,
        derive_seed(config.seed, STREAM_CLASSIFIER_DRAW),
    )?;
    for &(g, have) in &draw.shortfalls {
        log.warn(format!(
            "group {:?} has only {have} labeled documents for the classifier sample",
            labeled.groups.name(g)
        ));
    }
    let phi_docs: Vec<Document> = draw.drawn.iter().map(|&i| labeled.documents[i].clone()).collect();
    let phi_labels: Vec<usize> = phi_docs.iter().map(|d| d.group.expect("labeled")).collect();

    let trained;
    let (classifier, summary, phi_posteriors): (&dyn Classifier, ClassifierSummary, PosteriorMatrix) = match fixed {
        Some(c) => {
            if c.class_count() != n {
                return Err(Error::Dimension(format!(
                    "classifier has {} classes, data has {n}",
                    c.class_count()
                )));
            }
            let refs: Vec<&Document> = phi_docs.iter().collect();
            let post = posteriors_of(c, &refs)?;
            let summary = ClassifierSummary {
                hyper_params: None,
                cv_accuracy: None,
                training_documents: 0,
                selection_table: Vec::new(),
            };
            (c, summary, post)
        }
        None => {
            let grid = config.classifier_grid.clone().unwrap_or_else(default_grid);
            let fold_seed = derive_seed(config.seed, STREAM_FOLDS);
            let outcome = select_model(&phi_docs, n, &grid, fold_seed)?;
            log.info(format!(
                "classifier: C={} weighting={:?} cv accuracy {:.4} on {} documents",
                outcome.best.c,
                outcome.best.class_weighting,
                outcome.best_accuracy,
                phi_docs.len()
            ));
            trained = train(&phi_docs, n, outcome.best)?;
            let oof = cross_val_posteriors(&phi_docs, n, outcome.best, fold_seed)?;
            let summary = ClassifierSummary {
                hyper_params: Some(outcome.best),
                cv_accuracy: Some(outcome.best_accuracy),
                training_documents: phi_docs.len(),
                selection_table: outcome
                    .table
                    .iter()
                    .map(|&(hyper_params, accuracy)| SelectionRow { hyper_params, accuracy })
                    .collect(),
            };
            (&trained as &dyn Classifier, summary, oof)
        }
    };
    let global = GlobalCorrection::new(&phi_posteriors, &phi_labels)?;
    let pmc_base = if n == 2 && methods.iter().any(|m| m.is_pmc()) {
        Some(estimate_pmc_rates(
            &phi_labels,
            &phi_posteriors.argmax(),
            RateSource::ClassifierTrainingSet,
        )?)
    } else {
        None
    };
    let fallback_prevalence = prevalence_of(phi_docs.iter(), n)?;

    // posteriors see tokens only
    let test_refs: Vec<&Document> = unlabeled.documents.iter().collect();
    let test_posteriors = posteriors_of(classifier, &test_refs)?;
    let remaining_refs: Vec<&Document> = draw.remaining.iter().map(|&i| &labeled.documents[i]).collect();
    let remaining_post = posteriors_of(classifier, &remaining_refs)?;
    let mut labeled_posteriors = vec![None; labeled.len()];
    for (r, &i) in draw.remaining.iter().enumerate() {
        labeled_posteriors[i] = Some(remaining_post.row(r).to_vec());
    }

    let relevant: Vec<&Document> = unlabeled.documents.iter().filter(|d| d.relevant == Some(true)).collect();
    let (target, target_source) = if relevant.is_empty() {
        log.info("no relevance flags in the test pool; target is the group distribution of all test documents".into());
        (prevalence_of(unlabeled.documents.iter(), n)?, TargetSource::AllDocuments)
    } else {
        (prevalence_of(relevant.iter().copied(), n)?, TargetSource::RelevantDocuments)
    };

    let test_index = build_index(unlabeled)?;
    let query_tokens: Vec<Vec<String>> = data.queries.iter().map(|q| tokenize(&q.text)).collect();
    let rankings = par_map(&query_tokens, |t| retrieve(&test_index, t, config.retrieval_depth, config.bm25));
    let mut truths = Vec::new();
    let mut skipped = Vec::new();
    for ((q, tokens), ranked) in data.queries.iter().zip(&query_tokens).zip(rankings) {
        if ranked.is_empty() {
            log.warn(format!("query {} retrieves no test documents; skipped", q.id));
            skipped.push(q.id.clone());
            continue;
        }
        let ranked: Vec<usize> = ranked.doc_indices();
        let mut dists = DistributionsAtK::new();
        let mut bag_sizes = BTreeMap::new();
        for &k in schedule.cutoffs() {
            let m = k.min(ranked.len());
            bag_sizes.insert(k, m);
            dists.insert(k, prevalence_of(ranked[..m].iter().map(|&i| &unlabeled.documents[i]), n)?);
        }
        truths.push((
            QueryTruth {
                id: q.id.clone(),
                ranked,
                rkl: rkl(&dists, &target, schedule)?,
                rnd: if n == 2 { Some(rnd(&dists, &target, schedule)?) } else { None },
                bag_sizes,
                dists,
            },
            tokens.clone(),
        ));
    }
    if truths.is_empty() {
        return Err(Error::invalid("queries", "no query retrieves any test document"));
    }

    let sizes = resolve_pool_sizes(&config.pool_sizes, draw.remaining.len())?;
    let perm = pool_permutation(draw.remaining.len(), derive_seed(config.seed, STREAM_POOLS));
    let make_pool = |label: &str, size: usize| -> Result<Pool> {
        let members: Vec<usize> = undersample_indices(&perm, size)?
            .into_iter()
            .map(|p| draw.remaining[p])
            .collect();
        Pool::new(label.to_string(), members, labeled)
    };

    let mut shared = Shared {
        config,
        n,
        methods: methods.clone(),
        schedule,
        target,
        global,
        fallback_prevalence,
        pmc_base,
        bandwidth: None,
        test_posteriors,
        labeled_posteriors,
        labeled,
    };

    let mut bandwidth_table = Vec::new();
    if methods.contains(&Method::Kdey) {
        let h = match config.kdey_bandwidth {
            Bandwidth::Fixed(h) => h,
            Bandwidth::Auto => {
                let (label, size) = sizes.last().expect("non-empty sweep");
                let pool = make_pool(label, *size)?;
                let (h, table) = select_bandwidth(&shared, &pool, data, &test_index, &mut log)?;
                bandwidth_table = table;
                h
            }
        };
        log.info(format!("kdey bandwidth {h}"));
        shared.bandwidth = Some(h);
    }

    let mut pools = Vec::with_capacity(sizes.len());
    let mut timings = Vec::new();
    for (label, size) in &sizes {
        let pool = make_pool(label, *size)?;
        log.info(format!("pool {label}: {size} documents"));
        let outcomes = par_map(&truths, |(truth, tokens)| shared.evaluate(&pool, truth, tokens));
        let mut records = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let o = o?;
            o.log.into_iter().for_each(|l| log.info(l));
            timings.extend(o.timings);
            records.push(o.record);
        }
        let (summaries, significance) = aggregate(&records, &methods, schedule)?;
        pools.push(PoolReport {
            pool_size: label.clone(),
            documents: *size,
            methods: summaries,
            significance,
            queries: records,
        });
    }

    Ok(FairnessReport {
        metadata: ReportMetadata {
            seed: config.seed,
            class_count: n,
            attribute_name: labeled.attribute_name.clone(),
            group_names: labeled.groups.names().to_vec(),
            target: shared.target.as_slice().to_vec(),
            target_source,
            methods,
            cutoffs: schedule.cutoffs().to_vec(),
            retrieval_depth: config.retrieval_depth,
            lq_cap_per_group: config.lq_cap_per_group,
            classifier_docs_per_group: config.classifier_docs_per_group,
            classifier: summary,
            kdey_bandwidth: shared.bandwidth,
            bandwidth_table,
            queries: truths.len(),
            skipped_queries: skipped,
        },
        pools,
        timings,
        log: log.0,
    })
}

fn select_bandwidth(
    shared: &Shared,
    pool: &Pool,
    data: &ProtocolData,
    test_index: &InvertedIndex,
    log: &mut RunLog,
) -> Result<(f64, Vec<BandwidthRow>)> {
    if data.validation_queries.is_empty() {
        return Err(Error::invalid(
            "kdey_bandwidth",
            "automatic selection needs validation queries; supply some or set a fixed bandwidth",
        ));
    }
    let config = shared.config;
    let n = shared.n;
    let mut queries = Vec::new();
    for q in &data.validation_queries {
        let tokens = tokenize(&q.text);
        let ranked = retrieve(test_index, &tokens, BANDWIDTH_SELECTION_CUTOFF, config.bm25).doc_indices();
        if ranked.is_empty() {
            log.warn(format!("validation query {} retrieves no test documents; skipped", q.id));
            continue;
        }
        let sample = pool.correction_sample(&tokens, config.retrieval_depth, config.lq_cap_per_group, config.bm25, n);
        let (post, labels) = shared.correction_data(&sample)?;
        if (0..n).any(|g| !labels.contains(&g)) {
            log.warn(format!("validation query {} misses a group in its correction sample; skipped", q.id));
            continue;
        }
        queries.push(ValidationQuery {
            correction_posteriors: post,
            correction_labels: labels,
            test_posteriors: shared.test_posteriors.select(&ranked),
            true_prevalence: prevalence_of(ranked.iter().map(|&i| &data.unlabeled.documents[i]), n)?,
        });
    }
    let (h, table) = select_kdey_bandwidth(&queries, &config.bandwidth_candidates)?;
    log.info(format!(
        "bandwidth selection on {} validation queries at pool {}",
        queries.len(),
        pool.label
    ));
    Ok((
        h,
        table
            .into_iter()
            .map(|(bandwidth, mean_rae)| BandwidthRow { bandwidth, mean_rae })
            .collect(),
    ))
}

fn metric_errors(records: &[QueryRecord], method: Method, metric: Metric) -> Option<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let e = r.estimate(method)?;
            match metric {
                Metric::Rkl => Some((r.true_rkl - e.rkl?).abs()),
                Metric::Rnd => Some((r.true_rnd? - e.rnd?).abs()),
            }
        })
        .collect()
}

fn aggregate(
    records: &[QueryRecord],
    methods: &[Method],
    schedule: &CutoffSchedule,
) -> Result<(Vec<MethodSummary>, Vec<PairTest>)> {
    let mut summaries: Vec<MethodSummary> = methods
        .iter()
        .map(|&method| {
            let mut mean_rae = BTreeMap::new();
            if !method.is_pmc() && !records.is_empty() {
                for &k in schedule.cutoffs() {
                    let v: Vec<f64> = records
                        .iter()
                        .filter_map(|r| r.estimate(method).and_then(|e| e.rae.get(&k).copied()))
                        .collect();
                    mean_rae.insert(k, mean(&v));
                }
            }
            let all = (!mean_rae.is_empty()).then(|| mean_rae.values().sum::<f64>() / mean_rae.len() as f64);
            MethodSummary {
                method,
                ae_rkl: None,
                ae_rnd: None,
                mean_rae,
                mean_rae_all_cutoffs: all,
            }
        })
        .collect();

    let mut tests = Vec::new();
    for metric in [Metric::Rkl, Metric::Rnd] {
        let errors: Vec<(Method, Vec<f64>)> = methods
            .iter()
            .filter_map(|&m| metric_errors(records, m, metric).map(|e| (m, e)))
            .filter(|(_, e)| !e.is_empty())
            .collect();
        let Some(best) = errors
            .iter()
            .min_by(|a, b| mean(&a.1).total_cmp(&mean(&b.1)))
            .map(|(m, _)| *m)
        else {
            continue;
        };
        let best_errors = &errors.iter().find(|(m, _)| *m == best).expect("best is listed").1;
        for (m, e) in &errors {
            let p = if *m == best {
                None
            } else {
                wilcoxon_signed_rank(best_errors, e).ok().map(|w| w.p_value)
            };
            let s = ErrorSummary {
                mean: mean(e),
                std: std_dev(e),
                best: *m == best,
                p_value_vs_best: p,
                marker: if *m == best { String::new() } else { significance_marker(p).to_string() },
            };
            let slot = summaries.iter_mut().find(|s| s.method == *m).expect("method summary");
            match metric {
                Metric::Rkl => slot.ae_rkl = Some(s),
                Metric::Rnd => slot.ae_rnd = Some(s),
            }
        }
        for (i, (a, ea)) in errors.iter().enumerate() {
            for (b, eb) in &errors[i + 1..] {
                let w = wilcoxon_signed_rank(ea, eb).ok();
                tests.push(PairTest {
                    metric,
                    a: *a,
                    b: *b,
                    statistic: w.as_ref().map(|w| w.statistic),
                    p_value: w.map(|w| w.p_value),
                });
            }
        }
    }
    Ok((summaries, tests))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream() {
        let a = derive_seed(7, 1);
        assert_eq!(a, derive_seed(7, 1));
        assert_ne!(a, derive_seed(7, 2));
        assert_ne!(a, derive_seed(8, 1));
    }

    #[test]
    fn pool_size_resolution() {
        let s = resolve_pool_sizes(&[PoolSize::Full, PoolSize::Count(10), PoolSize::Count(100)], 100).unwrap();
        assert_eq!(s, vec![("10".to_string(), 10), ("full".to_string(), 100)]);
        assert!(resolve_pool_sizes(&[PoolSize::Count(101)], 100).is_err());
    }
}
