//! Benchmark report: per-query records, per-method aggregates, significance
//! tests, and the files written to an output directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::Method;
use crate::classifier::ClassifierHyperParams;
use crate::error::Result;

pub const REPORT_JSON: &str = "report.json";
pub const RAE_CSV: &str = "rae.csv";
pub const AE_CSV: &str = "fairness_ae.csv";
pub const TIMINGS_CSV: &str = "timings.csv";
pub const RUN_LOG: &str = "run.log";

/// Files whose bytes depend only on config, corpora and seed.
pub const DETERMINISTIC_FILES: [&str; 4] = [REPORT_JSON, RAE_CSV, AE_CSV, RUN_LOG];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rkl,
    Rnd,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rkl => "rkl",
            Metric::Rnd => "rnd",
        }
    }
}

/// Which documents define the target distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSource {
    RelevantDocuments,
    AllDocuments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSummary {
    /// Absent when a ready-made classifier was supplied.
    pub hyper_params: Option<ClassifierHyperParams>,
    pub cv_accuracy: Option<f64>,
    pub training_documents: usize,
    pub selection_table: Vec<SelectionRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub hyper_params: ClassifierHyperParams,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub bandwidth: f64,
    pub mean_rae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seed: u64,
    pub class_count: usize,
    pub attribute_name: String,
    pub group_names: Vec<String>,
    pub target: Vec<f64>,
    pub target_source: TargetSource,
    pub methods: Vec<Method>,
    pub cutoffs: Vec<usize>,
    pub retrieval_depth: usize,
    pub lq_cap_per_group: usize,
    pub classifier_docs_per_group: usize,
    pub classifier: ClassifierSummary,
    pub kdey_bandwidth: Option<f64>,
    pub bandwidth_table: Vec<BandwidthRow>,
    pub queries: usize,
    pub skipped_queries: Vec<String>,
}

/// One method's estimates for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEstimate {
    pub method: Method,
    /// Per-cutoff prevalence estimates; empty for the PMC methods.
    pub prevalence: BTreeMap<usize, Vec<f64>>,
    pub rae: BTreeMap<usize, f64>,
    pub rkl: Option<f64>,
    pub rnd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    pub true_rkl: f64,
    pub true_rnd: Option<f64>,
    pub bag_sizes: BTreeMap<usize, usize>,
    pub true_prevalence: BTreeMap<usize, Vec<f64>>,
    /// Per-group sizes of the capped correction sample.
    pub correction_counts: Vec<usize>,
    /// Groups absent from the correction sample.
    pub fallback_groups: Vec<usize>,
    pub estimates: Vec<MethodEstimate>,
}

impl QueryRecord {
    pub fn estimate(&self, method: Method) -> Option<&MethodEstimate> {
        self.estimates.iter().find(|e| e.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub std: f64,
    pub best: bool,
    /// Wilcoxon p-value against the best method; absent for the best and
    /// when the test is undefined.
    pub p_value_vs_best: Option<f64>,
    pub marker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub ae_rkl: Option<ErrorSummary>,
    pub ae_rnd: Option<ErrorSummary>,
    pub mean_rae: BTreeMap<usize, f64>,
    pub mean_rae_all_cutoffs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub metric: Metric,
    pub a: Method,
    pub b: Method,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolReport {
    pub pool_size: String,
    pub documents: usize,
    pub methods: Vec<MethodSummary>,
    pub significance: Vec<PairTest>,
    pub queries: Vec<QueryRecord>,
}

impl PoolReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub pool_size: String,
    pub query_id: String,
    pub method: Method,
    pub learn_ms: f64,
    /// Mean per cutoff.
    pub predict_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub metadata: ReportMetadata,
    pub pools: Vec<PoolReport>,
    /// Wall-clock measurements; kept out of `report.json` so that file is
    /// reproducible.
    #[serde(skip)]
    pub timings: Vec<TimingRow>,
    #[serde(skip)]
    pub log: Vec<String>,
}

/// Marker for a method compared against the best one: empty when the
/// difference is significant at 0.001, `†` at 0.01, `‡` otherwise.
pub fn significance_marker(p_value: Option<f64>) -> &'static str {
    match p_value {
        Some(p) if p <= 0.001 => "",
        Some(p) if p < 0.01 => "\u{2020}",
        _ => "\u{2021}",
    }
}

impl FairnessReport {
    pub fn pool(&self, label: &str) -> Option<&PoolReport> {
        self.pools.iter().find(|p| p.pool_size == label)
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        fs::write(dir.join(REPORT_JSON), json)?;
        self.write_rae_csv(fs::File::create(dir.join(RAE_CSV))?)?;
        self.write_ae_csv(fs::File::create(dir.join(AE_CSV))?)?;
        self.write_timings_csv(fs::File::create(dir.join(TIMINGS_CSV))?)?;
        let mut log = fs::File::create(dir.join(RUN_LOG))?;
        for line in &self.log {
            writeln!(log, "{line}")?;
        }
        Ok(())
    }

    pub fn read_json(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(REPORT_JSON))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// One row per pool x query x method x cutoff.
    pub fn write_rae_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["pool_size", "query_id", "method", "k", "bag_size", "rae"])?;
        for pool in &self.pools {
            for q in &pool.queries {
                for e in &q.estimates {
                    for (k, v) in &e.rae {
                        out.write_record([
                            pool.pool_size.as_str(),
                            &q.query_id,
                            e.method.name(),
                            &k.to_string(),
                            &q.bag_sizes[k].to_string(),
                            &v.to_string(),
                        ])?;
                    }
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    /// One row per pool x method x metric.
    pub fn write_ae_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["pool_size", "method", "metric", "mean_ae", "std_ae", "best", "p_value_vs_best", "marker"])?;
        for pool in &self.pools {
            for m in &pool.methods {
                for (metric, s) in [(Metric::Rkl, &m.ae_rkl), (Metric::Rnd, &m.ae_rnd)] {
                    let Some(s) = s else { continue };
                    out.write_record([
                        pool.pool_size.as_str(),
                        m.method.name(),
                        metric.name(),
                        &s.mean.to_string(),
                        &s.std.to_string(),
                        &s.best.to_string(),
                        &s.p_value_vs_best.map(|p| p.to_string()).unwrap_or_default(),
                        &s.marker,
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_timings_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["pool_size", "query_id", "method", "learn_ms", "predict_ms"])?;
        for t in &self.timings {
            out.write_record([
                t.pool_size.as_str(),
                &t.query_id,
                t.method.name(),
                &format!("{:.6}", t.learn_ms),
                &format!("{:.6}", t.predict_ms),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Compact per-pool table of method aggregates, for printing.
    pub fn summary_json(&self) -> serde_json::Value {
        let pools: Vec<serde_json::Value> = self
            .pools
            .iter()
            .map(|p| {
                let methods: serde_json::Map<String, serde_json::Value> = p
                    .methods
                    .iter()
                    .map(|m| {
                        let cell = |s: &Option<ErrorSummary>| {
                            s.as_ref().map(|s| format!("{:.4} \u{b1} {:.4}{}", s.mean, s.std, s.marker))
                        };
                        (
                            m.method.name().to_string(),
                            serde_json::json!({
                                "ae_rkl": cell(&m.ae_rkl),
                                "ae_rnd": cell(&m.ae_rnd),
                                "mean_rae": m.mean_rae,
                            }),
                        )
                    })
                    .collect();
                serde_json::json!({"pool_size": p.pool_size, "queries": p.queries.len(), "methods": methods})
            })
            .collect();
        serde_json::json!({
            "class_count": self.metadata.class_count,
            "group_names": self.metadata.group_names,
            "pools": pools,
        })
    }

    /// Plain-text tables: one block per pool, one row per method.
    pub fn render_tables(&self) -> String {
        let mut s = String::new();
        let cutoffs = &self.metadata.cutoffs;
        for p in &self.pools {
            let _ = writeln!(s, "pool {} ({} documents, {} queries)", p.pool_size, p.documents, p.queries.len());
            let _ = write!(s, "{:<9} {:>22} {:>22}", "method", "AE(rKL)", "AE(rND)");
            for k in cutoffs {
                let _ = write!(s, " {:>9}", format!("RAE@{k}"));
            }
            s.push('\n');
            for m in &p.methods {
                let cell = |e: &Option<ErrorSummary>| match e {
                    Some(e) => format!("{}{:.4}\u{b1}{:.4}{}", if e.best { "*" } else { "" }, e.mean, e.std, e.marker),
                    None => "-".to_string(),
                };
                let _ = write!(s, "{:<9} {:>22} {:>22}", m.method.label(), cell(&m.ae_rkl), cell(&m.ae_rnd));
                for k in cutoffs {
                    match m.mean_rae.get(k) {
                        Some(v) => {
                            let _ = write!(s, " {v:>9.4}");
                        }
                        None => {
                            let _ = write!(s, " {:>9}", "-");
                        }
                    }
                }
                s.push('\n');
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markers() {
        assert_eq!(significance_marker(Some(1e-5)), "");
        assert_eq!(significance_marker(Some(0.001)), "");
        assert_eq!(significance_marker(Some(0.005)), "\u{2020}");
        assert_eq!(significance_marker(Some(0.01)), "\u{2021}");
        assert_eq!(significance_marker(Some(0.7)), "\u{2021}");
        assert_eq!(significance_marker(None), "\u{2021}");
    }
}
