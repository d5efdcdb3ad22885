use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticSpec;
use crate::classifier::ClassifierHyperParams;
use crate::error::{Error, Result};
use crate::fairness::CutoffSchedule;
use crate::quantify::QuantifierKind;
use crate::retrieval::Bm25Params;

/// A method evaluated by the benchmark: one of the quantifiers, or one of
/// the binary PMC corrections of the CC proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Cc,
    Acc,
    Pacc,
    Kdey,
    PmcB,
    PmcBPlus,
    PmcD,
    PmcDPlus,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Naive,
        Method::Cc,
        Method::Acc,
        Method::Pacc,
        Method::Kdey,
        Method::PmcB,
        Method::PmcBPlus,
        Method::PmcD,
        Method::PmcDPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Cc => "cc",
            Method::Acc => "acc",
            Method::Pacc => "pacc",
            Method::Kdey => "kdey",
            Method::PmcB => "pmc_b",
            Method::PmcBPlus => "pmc_b_plus",
            Method::PmcD => "pmc_d",
            Method::PmcDPlus => "pmc_d_plus",
        }
    }

    /// Label used in printed tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Naive => "Naive@k",
            Method::Cc => "CC",
            Method::Acc => "ACC",
            Method::Pacc => "PACC",
            Method::Kdey => "KDEy",
            Method::PmcB => "PMC_b",
            Method::PmcBPlus => "PMC_b+",
            Method::PmcD => "PMC_d",
            Method::PmcDPlus => "PMC_d+",
        }
    }

    pub fn quantifier(self) -> Option<QuantifierKind> {
        match self {
            Method::Naive => Some(QuantifierKind::Naive),
            Method::Cc => Some(QuantifierKind::Cc),
            Method::Acc => Some(QuantifierKind::Acc),
            Method::Pacc => Some(QuantifierKind::Pacc),
            Method::Kdey => Some(QuantifierKind::Kdey),
            _ => None,
        }
    }

    pub fn is_pmc(self) -> bool {
        self.quantifier().is_none()
    }

    /// Every method applicable to `class_count` groups.
    pub fn defaults_for(class_count: usize) -> Vec<Method> {
        Method::ALL
            .into_iter()
            .filter(|m| class_count == 2 || !m.is_pmc())
            .collect()
    }

    pub fn valid_names() -> String {
        Method::ALL.map(Method::name).join(", ")
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.name() == t)
            .ok_or_else(|| Error::invalid("method", format!("unknown method {s:?}; valid: {}", Method::valid_names())))
    }
}

/// Size of a correction pool: an absolute count or everything left after
/// the classifier's training draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "PoolSizeRepr", into = "String")]
pub enum PoolSize {
    Count(usize),
    Full,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PoolSizeRepr {
    Int(usize),
    Text(String),
}

impl TryFrom<PoolSizeRepr> for PoolSize {
    type Error = Error;

    fn try_from(r: PoolSizeRepr) -> Result<Self> {
        match r {
            PoolSizeRepr::Int(0) => Err(Error::invalid("pool size", "must be positive")),
            PoolSizeRepr::Int(n) => Ok(PoolSize::Count(n)),
            PoolSizeRepr::Text(s) => s.parse(),
        }
    }
}

impl From<PoolSize> for String {
    fn from(p: PoolSize) -> String {
        p.to_string()
    }
}

impl FromStr for PoolSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("full") {
            return Ok(PoolSize::Full);
        }
        let (digits, scale) = match t.chars().last() {
            Some('k' | 'K') => (&t[..t.len() - 1], 1_000),
            Some('m' | 'M') => (&t[..t.len() - 1], 1_000_000),
            _ => (t, 1),
        };
        let bad = || Error::invalid("pool size", format!("{s:?} is not a count like 10K, 2M, 5000 or \"full\""));
        let n: usize = digits.parse().map_err(|_| bad())?;
        match n.checked_mul(scale) {
            Some(0) | None => Err(bad()),
            Some(v) => Ok(PoolSize::Count(v)),
        }
    }
}

impl fmt::Display for PoolSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            PoolSize::Full => f.write_str("full"),
            PoolSize::Count(n) if n % 1_000_000 == 0 => write!(f, "{}M", n / 1_000_000),
            PoolSize::Count(n) if n % 1_000 == 0 => write!(f, "{}K", n / 1_000),
            PoolSize::Count(n) => write!(f, "{n}"),
        }
    }
}

/// KDE bandwidth: fixed, or picked on the validation queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandwidthRepr", into = "BandwidthRepr")]
pub enum Bandwidth {
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BandwidthRepr {
    Value(f64),
    Text(String),
}

impl TryFrom<BandwidthRepr> for Bandwidth {
    type Error = Error;

    fn try_from(r: BandwidthRepr) -> Result<Self> {
        match r {
            BandwidthRepr::Value(h) => Ok(Bandwidth::Fixed(h)),
            BandwidthRepr::Text(s) if s == "auto" => Ok(Bandwidth::Auto),
            BandwidthRepr::Text(s) => Err(Error::invalid("kdey_bandwidth", format!("expected a number or \"auto\", got {s:?}"))),
        }
    }
}

impl From<Bandwidth> for BandwidthRepr {
    fn from(b: Bandwidth) -> Self {
        match b {
            Bandwidth::Auto => BandwidthRepr::Text("auto".into()),
            Bandwidth::Fixed(h) => BandwidthRepr::Value(h),
        }
    }
}

pub fn default_bandwidth_candidates() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 100.0).collect()
}

/// Where the corpora come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        labeled: PathBuf,
        unlabeled: PathBuf,
        queries: PathBuf,
        #[serde(default)]
        validation_queries: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticSpec::default())
    }
}

/// Benchmark configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub seed: u64,
    pub classifier_docs_per_group: usize,
    pub lq_cap_per_group: usize,
    pub pool_sizes: Vec<PoolSize>,
    pub cutoffs: CutoffSchedule,
    pub retrieval_depth: usize,
    /// `None` runs every method applicable to the group count.
    pub methods: Option<Vec<Method>>,
    pub kdey_bandwidth: Bandwidth,
    pub bandwidth_candidates: Vec<f64>,
    /// `None` searches the default grid.
    pub classifier_grid: Option<Vec<ClassifierHyperParams>>,
    pub bm25: Bm25Params,
    /// Collapses the groups to "other" (0) versus this group (1).
    pub binarize: Option<String>,
    pub data: DataSource,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            classifier_docs_per_group: 500,
            lq_cap_per_group: 200,
            pool_sizes: vec![PoolSize::Count(10_000), PoolSize::Count(20_000), PoolSize::Count(40_000)],
            cutoffs: CutoffSchedule::default(),
            retrieval_depth: 1000,
            methods: None,
            kdey_bandwidth: Bandwidth::Auto,
            bandwidth_candidates: default_bandwidth_candidates(),
            classifier_grid: None,
            bm25: Bm25Params::default(),
            binarize: None,
            data: DataSource::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.cutoffs.max() > self.retrieval_depth {
            return Err(Error::invalid(
                "cutoffs",
                format!("largest cutoff {} exceeds retrieval depth {}", self.cutoffs.max(), self.retrieval_depth),
            ));
        }
        if self.lq_cap_per_group == 0 {
            return Err(Error::invalid("lq_cap_per_group", "must be at least 1"));
        }
        if self.classifier_docs_per_group == 0 {
            return Err(Error::invalid("classifier_docs_per_group", "must be at least 1"));
        }
        if self.pool_sizes.is_empty() {
            return Err(Error::invalid("pool_sizes", "at least one pool size is required"));
        }
        if let Some(m) = &self.methods {
            if m.is_empty() {
                return Err(Error::invalid("methods", "at least one method is required"));
            }
        }
        if let Bandwidth::Fixed(h) = self.kdey_bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid("kdey_bandwidth", "must be positive"));
            }
        }
        if self.kdey_bandwidth == Bandwidth::Auto
            && (self.bandwidth_candidates.is_empty()
                || self.bandwidth_candidates.iter().any(|h| !(h.is_finite() && *h > 0.0)))
        {
            return Err(Error::invalid("bandwidth_candidates", "need at least one positive bandwidth"));
        }
        if let Some(grid) = &self.classifier_grid {
            if grid.is_empty() || grid.iter().any(|hp| !(hp.c.is_finite() && hp.c > 0.0)) {
                return Err(Error::invalid("classifier_grid", "need at least one point with C > 0"));
            }
        }
        self.bm25.validate()?;
        if let DataSource::Synthetic(spec) = &self.data {
            spec.validate()?;
        }
        Ok(())
    }

    /// Methods to run for `class_count` groups; PMC methods need two.
    pub fn methods_for(&self, class_count: usize) -> Result<Vec<Method>> {
        let mut methods = match &self.methods {
            Some(m) => m.clone(),
            None => return Ok(Method::defaults_for(class_count)),
        };
        methods.sort();
        methods.dedup();
        if class_count != 2 {
            if let Some(m) = methods.iter().find(|m| m.is_pmc()) {
                return Err(Error::invalid(
                    "methods",
                    format!("{m} is binary-only but the data has {class_count} groups"),
                ));
            }
        }
        Ok(methods)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        let err = "svm".parse::<Method>().unwrap_err().to_string();
        assert!(err.contains("pmc_d_plus") && err.contains("kdey"), "{err}");
    }

    #[test]
    fn pool_size_parsing() {
        assert_eq!("10K".parse::<PoolSize>().unwrap(), PoolSize::Count(10_000));
        assert_eq!("2m".parse::<PoolSize>().unwrap(), PoolSize::Count(2_000_000));
        assert_eq!("1234".parse::<PoolSize>().unwrap(), PoolSize::Count(1234));
        assert_eq!("FULL".parse::<PoolSize>().unwrap(), PoolSize::Full);
        for bad in ["", "K", "0", "-5K", "ten"] {
            assert!(bad.parse::<PoolSize>().is_err(), "{bad}");
        }
        for s in ["10K", "3M", "1500", "full"] {
            assert_eq!(s.parse::<PoolSize>().unwrap().to_string(), s);
        }
        assert!(PoolSize::Count(5) < PoolSize::Full);
    }

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = ProtocolConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ProtocolConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn toml_subset() {
        let cfg = ProtocolConfig::from_toml(
            r#"
            seed = 3
            pool_sizes = ["10K", 500, "full"]
            cutoffs = [10, 20]
            methods = ["cc", "kdey"]
            kdey_bandwidth = 0.05

            [data]
            kind = "files"
            labeled = "L.jsonl"
            unlabeled = "U.jsonl"
            queries = "queries.tsv"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.pool_sizes, vec![PoolSize::Count(10_000), PoolSize::Count(500), PoolSize::Full]);
        assert_eq!(cfg.kdey_bandwidth, Bandwidth::Fixed(0.05));
        assert_eq!(cfg.methods_for(4).unwrap(), vec![Method::Cc, Method::Kdey]);
        assert!(matches!(cfg.data, DataSource::Files { validation_queries: None, .. }));
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            "cutoffs = [50, 2000]",
            "lq_cap_per_group = 0",
            "pool_sizes = []",
            "kdey_bandwidth = -1.0",
            "kdey_bandwidth = \"wide\"",
            "methods = [\"svm\"]",
            "unknown_key = 1",
        ];
        for text in bad {
            assert!(ProtocolConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn pmc_needs_binary() {
        let cfg = ProtocolConfig {
            methods: Some(vec![Method::Cc, Method::PmcB]),
            ..Default::default()
        };
        assert!(cfg.methods_for(4).is_err());
        assert_eq!(cfg.methods_for(2).unwrap(), vec![Method::Cc, Method::PmcB]);
        assert_eq!(Method::defaults_for(3).len(), 5);
        assert_eq!(Method::defaults_for(2).len(), 9);
    }
}
