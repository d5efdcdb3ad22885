use qfe_core::classifier::{ClassWeighting, ClassifierHyperParams};
use qfe_core::protocol::report::DETERMINISTIC_FILES;
use qfe_core::protocol::{
    generate_synthetic, run_protocol, run_protocol_with_classifier, Classifier, Method, PoolSize, ProtocolConfig,
    ProtocolData, SyntheticSpec,
};
use qfe_core::{Corpus, Query};

fn small_spec(groups: usize) -> SyntheticSpec {
    let priors = match groups {
        3 => vec![0.5, 0.3, 0.2],
        _ => vec![0.55, 0.25, 0.15, 0.05],
    };
    SyntheticSpec {
        group_priors: priors,
        topic_count: 8,
        docs_per_pool: 4000,
        labeled_extra_per_group: 100,
        ..Default::default()
    }
}

fn small_config(spec: SyntheticSpec, seed: u64) -> ProtocolConfig {
    ProtocolConfig {
        seed,
        classifier_docs_per_group: 60,
        pool_sizes: vec![PoolSize::Count(2000), PoolSize::Full],
        cutoffs: vec![10, 20, 50, 100].try_into().unwrap(),
        retrieval_depth: 200,
        bandwidth_candidates: vec![0.03, 0.1],
        classifier_grid: Some(vec![ClassifierHyperParams::new(1.0, ClassWeighting::Balanced)]),
        data: qfe_core::protocol::DataSource::Synthetic(spec),
        ..ProtocolConfig::default()
    }
}

/// Reads the group straight off a `marker{g}` token.
struct Oracle(usize);

impl Classifier for Oracle {
    fn class_count(&self) -> usize {
        self.0
    }

    fn posterior(&self, tokens: &[String]) -> Vec<f64> {
        let g = tokens
            .iter()
            .find_map(|t| t.strip_prefix("marker").and_then(|g| g.parse::<usize>().ok()))
            .expect("marked document");
        (0..self.0).map(|j| if j == g { 1.0 } else { 0.0 }).collect()
    }
}

fn mark(corpus: &mut Corpus) {
    for d in &mut corpus.documents {
        d.tokens.push(format!("marker{}", d.group.unwrap()));
    }
}

#[test]
fn perfect_classifier_makes_acc_exact() {
    let spec = small_spec(4);
    let config = ProtocolConfig {
        methods: Some(vec![Method::Cc, Method::Acc, Method::Pacc]),
        ..small_config(spec.clone(), 5)
    };
    let mut data = generate_synthetic(&spec, 5).unwrap();
    mark(&mut data.labeled);
    mark(&mut data.unlabeled);
    let data = ProtocolData::new(data.labeled, data.unlabeled, data.queries, data.validation_queries).unwrap();
    let report = run_protocol_with_classifier(&config, &data, &Oracle(4)).unwrap();
    for pool in &report.pools {
        for m in [Method::Cc, Method::Acc, Method::Pacc] {
            let s = pool.summary(m).unwrap();
            let ae = s.ae_rkl.as_ref().unwrap().mean;
            assert!(ae < 1e-4, "{} {m:?}: {ae}", pool.pool_size);
            assert!(s.mean_rae.values().all(|&r| r < 1e-6), "{} {m:?}: {:?}", pool.pool_size, s.mean_rae);
        }
    }
}

/// Uniform posteriors; only Naive runs, so they are never used.
struct Blind(usize);

impl Classifier for Blind {
    fn class_count(&self) -> usize {
        self.0
    }

    fn posterior(&self, _: &[String]) -> Vec<f64> {
        vec![1.0 / self.0 as f64; self.0]
    }
}

#[test]
fn naive_is_near_exact_when_the_correction_pool_mirrors_the_test_pool() {
    let spec = small_spec(4);
    let config = ProtocolConfig {
        classifier_docs_per_group: 1,
        lq_cap_per_group: 1000,
        retrieval_depth: 1000,
        cutoffs: vec![100, 500, 1000].try_into().unwrap(),
        pool_sizes: vec![PoolSize::Full],
        methods: Some(vec![Method::Naive]),
        ..small_config(spec.clone(), 2)
    };
    let generated = generate_synthetic(&spec, 2).unwrap();
    let unlabeled = generated.unlabeled;
    let mirror: Vec<_> = unlabeled
        .documents
        .iter()
        .map(|d| {
            let mut c = d.clone();
            c.id = format!("l{}", &d.id[1..]);
            c
        })
        .collect();
    let labeled = unlabeled.with_documents(mirror);
    let data = ProtocolData::new(labeled, unlabeled, generated.queries, Vec::new()).unwrap();
    let report = run_protocol_with_classifier(&config, &data, &Blind(4)).unwrap();
    let rae = &report.pools[0].summary(Method::Naive).unwrap().mean_rae;
    // only the classifier draw separates the two pools
    assert!(rae.values().all(|&r| r < 0.01), "{rae:?}");
}

#[test]
fn three_group_run_is_reproducible() {
    let config = ProtocolConfig {
        methods: Some(vec![Method::Naive, Method::Cc, Method::Pacc, Method::Kdey]),
        ..small_config(small_spec(3), 7)
    };
    let run = || {
        let data = ProtocolData::load(&config).unwrap();
        let report = run_protocol(&config, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        report.write_dir(dir.path()).unwrap();
        let files: Vec<Vec<u8>> = DETERMINISTIC_FILES
            .iter()
            .map(|f| std::fs::read(dir.path().join(f)).unwrap())
            .collect();
        (report, files)
    };
    let (a, fa) = run();
    let (b, fb) = run();
    assert_eq!(fa, fb);
    assert_eq!(a.pools, b.pools);
    assert_eq!(a.metadata.class_count, 3);
    assert_eq!(a.pools[0].queries.len(), 8);
    // rND is binary-only
    assert!(a.pools[0].methods.iter().all(|m| m.ae_rnd.is_none()));
}

#[test]
fn binary_run_includes_rnd_and_pmc() {
    let spec = SyntheticSpec {
        group_priors: vec![0.7, 0.3],
        ..small_spec(2)
    };
    let config = small_config(spec, 4);
    let data = ProtocolData::load(&config).unwrap();
    let report = run_protocol(&config, &data).unwrap();
    let pool = &report.pools[0];
    for m in Method::ALL {
        let s = pool.summary(m).unwrap_or_else(|| panic!("{m:?} missing"));
        assert!(s.ae_rnd.is_some(), "{m:?}");
        assert_eq!(s.ae_rkl.is_some(), !m.is_pmc(), "{m:?}");
    }
}

#[test]
fn query_without_hits_is_skipped() {
    let spec = small_spec(4);
    let config = ProtocolConfig {
        methods: Some(vec![Method::Cc]),
        ..small_config(spec.clone(), 1)
    };
    let generated = generate_synthetic(&spec, 1).unwrap();
    let mut queries = generated.queries;
    queries.push(Query {
        id: "nohits".into(),
        text: "zzzunseen".into(),
    });
    let data = ProtocolData::new(generated.labeled, generated.unlabeled, queries, generated.validation_queries).unwrap();
    let report = run_protocol(&config, &data).unwrap();
    assert_eq!(report.metadata.skipped_queries, vec!["nohits".to_string()]);
    assert!(report.log.iter().any(|l| l.contains("nohits")));
    assert!(report.pools.iter().all(|p| p.queries.len() == 8));
}

#[test]
fn overlapping_pools_are_rejected() {
    let generated = generate_synthetic(&small_spec(4), 3).unwrap();
    let unlabeled = generated.unlabeled;
    let mut docs = generated.labeled.documents.clone();
    docs[0].id = unlabeled.documents[0].id.clone();
    let labeled = generated.labeled.with_documents(docs);
    assert!(ProtocolData::new(labeled, unlabeled, generated.queries, Vec::new()).is_err());
}
