use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use log::{info, warn};
use serde_json::json;

use qfe_core::classifier::{read_model, select_model, train as train_model, write_model, ClassWeighting, ClassifierHyperParams, ModelFile};
use qfe_core::fairness::{rkl, rnd, CutoffSchedule, DistributionsAtK};
use qfe_core::protocol::{generate_synthetic, run_protocol, FairnessReport, Method, PoolSize, ProtocolConfig, ProtocolData, SyntheticSpec};
use qfe_core::quantify::{fit_correction_with_fallback, fit_naive, naive_estimate, GlobalCorrection, QuantifierKind};
use qfe_core::retrieval::{build_index, retrieve, tokenize, Bm25Params};
use qfe_core::{read_unlabeled_jsonl, write_queries, Corpus, GroupTable, PrevalenceVector};

use crate::args::{BenchmarkArgs, EstimateArgs, GenerateArgs, ReportArgs, TrainArgs};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Input { path: String, source: io::Error },
    #[error(transparent)]
    Core(#[from] qfe_core::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Input { .. } => 2,
            CliError::Core(qfe_core::Error::Io(e)) if e.kind() == io::ErrorKind::NotFound => 2,
            CliError::Core(e) if e.is_input_error() => 2,
            CliError::Core(_) | CliError::Io(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Input {
        path: path.display().to_string(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Input {
        path: path.display().to_string(),
        source,
    })
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(qfe_core::Error::from)?;
    writeln!(out)?;
    Ok(())
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    let spec: SyntheticSpec = match &args.spec {
        Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?,
        None => SyntheticSpec::default(),
    };
    let parent = args.out.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(p) = parent {
        if !p.is_dir() {
            return Err(CliError::Usage(format!("parent directory {} does not exist", p.display())));
        }
    }
    if !args.out.is_dir() {
        fs::create_dir(&args.out)?;
    }
    let data = generate_synthetic(&spec, args.seed)?;
    info!(
        "generated {} labeled and {} unlabeled documents, {} queries",
        data.labeled.len(),
        data.unlabeled.len(),
        data.queries.len()
    );
    let create = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(args.out.join(name))?)) };
    data.labeled.write_jsonl(create("L.jsonl")?)?;
    data.unlabeled.write_jsonl(create("U.jsonl")?)?;
    write_queries(&data.queries, create("queries.tsv")?)?;
    write_queries(&data.validation_queries, create("validation_queries.tsv")?)?;
    print_json(&json!({
        "out": args.out.display().to_string(),
        "labeled": data.labeled.len(),
        "unlabeled": data.unlabeled.len(),
        "queries": data.queries.len(),
        "validation_queries": data.validation_queries.len(),
        "group_names": data.labeled.groups.names(),
    }))
}

fn parse_weighting(s: &str) -> Result<ClassWeighting> {
    match s {
        "none" => Ok(ClassWeighting::None),
        "balanced" => Ok(ClassWeighting::Balanced),
        other => Err(CliError::Usage(format!("unknown class weighting {other:?} (expected none or balanced)"))),
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    let corpus = Corpus::read_jsonl(open(&args.corpus)?, None)?;
    if !corpus.is_fully_labeled() {
        return Err(CliError::Usage(format!("{}: every document needs a group", args.corpus.display())));
    }
    let weightings = args.weightings.iter().map(|w| parse_weighting(w)).collect::<Result<Vec<_>>>()?;
    let mut grid = Vec::new();
    for &c in &args.c_values {
        if !(c > 0.0 && c.is_finite()) {
            return Err(CliError::Usage(format!("C must be positive and finite, got {c}")));
        }
        for &w in &weightings {
            grid.push(ClassifierHyperParams::new(c, w));
        }
    }
    let n = corpus.groups.len();
    info!("selecting among {} settings on {} documents", grid.len(), corpus.len());
    let outcome = select_model(&corpus.documents, n, &grid, args.seed)?;
    let model = train_model(&corpus.documents, n, outcome.best)?;
    let file = ModelFile::new(model, &corpus, &corpus.documents, Some(outcome.best_accuracy));
    write_model(&file, BufWriter::new(File::create(&args.model_out)?))?;
    let table: Vec<_> = outcome
        .table
        .iter()
        .map(|(hp, acc)| json!({"c": hp.c, "class_weighting": hp.class_weighting, "cv_accuracy": acc}))
        .collect();
    print_json(&json!({
        "model": args.model_out.display().to_string(),
        "group_names": file.group_names,
        "best": {"c": outcome.best.c, "class_weighting": outcome.best.class_weighting},
        "cv_accuracy": outcome.best_accuracy,
        "grid": table,
    }))
}

pub fn estimate(args: EstimateArgs) -> Result<()> {
    let kind: QuantifierKind = match args.method.parse::<Method>() {
        Ok(m) if m.is_pmc() => {
            return Err(CliError::Usage(format!(
                "{} needs ground-truth rates and is only available in `qfe benchmark`",
                m.name()
            )))
        }
        Ok(m) => m.quantifier().expect("non-PMC method"),
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    let file = read_model(open(&args.model)?)?;
    let groups = GroupTable::from_names(file.group_names.iter().cloned());
    let n = groups.len();
    let schedule = CutoffSchedule::new(args.cutoffs.clone())?;
    if args.target.len() != n {
        return Err(CliError::Usage(format!("--target has {} values for {n} groups", args.target.len())));
    }
    let target = PrevalenceVector::new(args.target.clone())?;

    let needs_correction = kind != QuantifierKind::Cc;
    let needs_ranking = kind != QuantifierKind::Naive;
    if !needs_correction && args.correction.is_some() {
        warn!("cc does not use a correction pool; ignoring --correction");
    }
    if !needs_ranking && args.ranking.is_some() {
        warn!("naive reads prevalences from the correction pool; ignoring --ranking");
    }
    let ranking_posteriors = match (&args.ranking, needs_ranking) {
        (Some(p), true) => {
            let docs = read_unlabeled_jsonl(open(p)?)?;
            Some(file.model.posteriors(docs.iter().map(|d| d.tokens.as_slice())))
        }
        (None, true) => return Err(CliError::Usage(format!("{kind} needs --ranking"))),
        (_, false) => None,
    };

    let mut fallback = Vec::new();
    let mut correction_size = None;
    let model = if needs_correction {
        let path = args
            .correction
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{kind} needs --correction")))?;
        let pool = Corpus::read_jsonl(open(path)?, Some(&groups))?;
        let labels = pool.labels()?;
        let index = build_index(&pool)?;
        let ranked = retrieve(&index, &tokenize(&args.query), args.depth, Bm25Params::default());
        let mut counts = vec![0usize; n];
        let mut sample = Vec::new();
        for e in &ranked.entries {
            let g = labels[e.doc];
            if counts[g] < args.cap_per_group {
                counts[g] += 1;
                sample.push(e.doc);
            }
        }
        if sample.is_empty() {
            return Err(CliError::Usage("the query retrieves no documents from the correction pool".into()));
        }
        correction_size = Some(sample.len());
        let sample_labels: Vec<usize> = sample.iter().map(|&i| labels[i]).collect();
        if kind == QuantifierKind::Naive {
            fit_naive(&sample_labels, schedule.cutoffs(), n)?
        } else {
            let all = file.model.posteriors(pool.documents.iter().map(|d| d.tokens.as_slice()));
            let global = GlobalCorrection::new(&all, &labels)?;
            let post = all.select(&sample);
            let bandwidth = (kind == QuantifierKind::Kdey).then_some(args.bandwidth);
            let (model, missing) = fit_correction_with_fallback(kind, &post, &sample_labels, bandwidth, &global)?;
            for &g in &missing {
                warn!("group {} absent from the retrieved correction sample; using pool-wide rates", groups.name(g));
            }
            fallback = missing;
            model
        }
    } else {
        qfe_core::quantify::fit_correction(kind, &qfe_core::PosteriorMatrix::new(n), &[], None)?
    };

    let mut dists = DistributionsAtK::new();
    for &k in schedule.cutoffs() {
        let p = match &ranking_posteriors {
            None => naive_estimate(&model, k)?,
            Some(post) => {
                if k > post.rows() {
                    warn!("ranking has {} documents; k={k} uses all of them", post.rows());
                }
                model.estimate(&post.prefix(k))?
            }
        };
        dists.insert(k, p);
    }
    let estimates: BTreeMap<String, BTreeMap<&str, f64>> = dists
        .iter()
        .map(|(k, p)| {
            let by_group = groups.names().iter().map(String::as_str).zip(p.as_slice().iter().copied()).collect();
            (k.to_string(), by_group)
        })
        .collect();
    let rnd_value = if n == 2 { Some(rnd(&dists, &target, &schedule)?) } else { None };
    print_json(&json!({
        "method": kind.name(),
        "query": args.query,
        "group_names": groups.names(),
        "correction_sample_size": correction_size,
        "fallback_groups": fallback.iter().map(|&g| groups.name(g)).collect::<Vec<_>>(),
        "estimates": estimates,
        "rkl": rkl(&dists, &target, &schedule)?,
        "rnd": rnd_value,
    }))
}

pub fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => ProtocolConfig::from_toml(&read_text(p)?)?,
        None => ProtocolConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(names) = &args.methods {
        let methods = names
            .iter()
            .map(|s| s.parse::<Method>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        config.methods = Some(methods);
    }
    if let Some(cutoffs) = &args.cutoffs {
        config.cutoffs = CutoffSchedule::new(cutoffs.clone())?;
    }
    if let Some(sizes) = &args.pool_sizes {
        config.pool_sizes = sizes
            .iter()
            .map(|s| s.parse::<PoolSize>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
    }
    config.validate()?;
    let data = ProtocolData::load(&config)?;
    info!(
        "loaded {} labeled and {} unlabeled documents, {} queries",
        data.labeled.len(),
        data.unlabeled.len(),
        data.queries.len()
    );
    let report = run_protocol(&config, &data)?;
    report.write_dir(&args.out)?;
    info!("wrote report to {}", args.out.display());
    print_json(&report.summary_json())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let path = args.input.join(qfe_core::protocol::report::REPORT_JSON);
    if !path.is_file() {
        return Err(CliError::Usage(format!("{} not found", path.display())));
    }
    let report = FairnessReport::read_json(&args.input)?;
    if args.text {
        eprint!("{}", report.render_tables());
    }
    print_json(&report.summary_json())
}
