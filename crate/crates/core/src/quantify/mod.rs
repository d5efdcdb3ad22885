//! Prevalence quantifiers and their per-query corrections.
//!
//! Every adjusted method here learns its correction from a labeled sample
//! retrieved with the same query as the bag being quantified, so the
//! correction sees the same selection bias as the test items.

mod kde;
mod optim;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use kde::GaussianKde;
pub use optim::{
    least_squares_objective, minimize_on_simplex, solve_least_squares_simplex, SimplexSolution, StepRule,
    MAX_ITER, MOVE_TOL,
};

use crate::corpus::prevalence_of_labels;
use crate::error::{Error, Result};
use crate::fairness::rae;
use crate::simplex::{project_to_simplex, PosteriorMatrix, PrevalenceVector};

/// Likelihood floor inside the KDEy log.
pub const KDEY_EPSILON: f64 = 1e-10;
/// Minimum `|tpr - fpr|` for binary ACC.
pub const MIN_RATE_GAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantifierKind {
    Naive,
    Cc,
    Acc,
    Pacc,
    Kdey,
}

impl QuantifierKind {
    pub const ALL: [QuantifierKind; 5] = [Self::Naive, Self::Cc, Self::Acc, Self::Pacc, Self::Kdey];

    pub fn name(self) -> &'static str {
        match self {
            Self::Naive => "naive",
            Self::Cc => "cc",
            Self::Acc => "acc",
            Self::Pacc => "pacc",
            Self::Kdey => "kdey",
        }
    }
}

impl fmt::Display for QuantifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for QuantifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("quantifier", s.to_string()))
    }
}

/// Learned per-query state of a quantifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CorrectionModel {
    /// Stored prevalence of the top-k correction items, per cutoff.
    Naive { prevalences: BTreeMap<usize, PrevalenceVector> },
    Cc { class_count: usize },
    /// Row-major `M[i][j] = P(predicted i | class j)`.
    Acc { rates: Vec<Vec<f64>> },
    /// Column `j` is the mean posterior of class-`j` correction items.
    Pacc { rates: Vec<Vec<f64>> },
    Kdey { kdes: Vec<GaussianKde>, bandwidth: f64 },
}

impl CorrectionModel {
    pub fn kind(&self) -> QuantifierKind {
        match self {
            Self::Naive { .. } => QuantifierKind::Naive,
            Self::Cc { .. } => QuantifierKind::Cc,
            Self::Acc { .. } => QuantifierKind::Acc,
            Self::Pacc { .. } => QuantifierKind::Pacc,
            Self::Kdey { .. } => QuantifierKind::Kdey,
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            Self::Naive { prevalences } => prevalences.values().next().map_or(0, PrevalenceVector::len),
            Self::Cc { class_count } => *class_count,
            Self::Acc { rates } | Self::Pacc { rates } => rates.len(),
            Self::Kdey { kdes, .. } => kdes.len(),
        }
    }

    /// Estimates the prevalence of a bag given its posteriors. Naive uses
    /// the bag only for its size, to pick the stored cutoff.
    pub fn estimate(&self, bag: &PosteriorMatrix) -> Result<PrevalenceVector> {
        match self {
            Self::Naive { .. } => naive_estimate(self, bag.rows()),
            Self::Cc { class_count } => classify_and_count(&bag.argmax(), *class_count),
            Self::Acc { .. } => acc_estimate(self, &bag.argmax()),
            Self::Pacc { .. } => pacc_estimate(self, bag),
            Self::Kdey { .. } => kdey_estimate(self, bag),
        }
    }
}

/// Fraction of items predicted in each class.
pub fn classify_and_count(predicted: &[usize], class_count: usize) -> Result<PrevalenceVector> {
    if predicted.is_empty() {
        return Err(Error::Empty("bag"));
    }
    prevalence_of_labels(predicted.iter().map(|&y| Ok(y)), class_count)
}

/// `M[i][j]`: fraction of class-`j` items predicted as `i`.
pub fn crisp_rate_matrix(predicted: &[usize], labels: &[usize], class_count: usize) -> Result<Vec<Vec<f64>>> {
    if predicted.len() != labels.len() {
        return Err(Error::Dimension("predictions and labels differ in length".into()));
    }
    if predicted.iter().any(|&p| p >= class_count) {
        return Err(Error::Dimension(format!("prediction >= class count {class_count}")));
    }
    let columns = class_columns(labels, class_count, |members| {
        let mut col = vec![0.0; class_count];
        for &i in members {
            col[predicted[i]] += 1.0;
        }
        col.iter_mut().for_each(|v| *v /= members.len() as f64);
        col
    })?;
    Ok(transpose(&columns))
}

/// Mean posterior of each class's items, as columns of a row-major matrix.
pub fn posterior_rate_matrix(posteriors: &PosteriorMatrix, labels: &[usize]) -> Result<Vec<Vec<f64>>> {
    if posteriors.rows() != labels.len() {
        return Err(Error::Dimension("posteriors and labels differ in length".into()));
    }
    let n = posteriors.class_count();
    let columns = class_columns(labels, n, |members| {
        let mut col = vec![0.0; n];
        for &i in members {
            col.iter_mut().zip(posteriors.row(i)).for_each(|(c, p)| *c += p);
        }
        col.iter_mut().for_each(|v| *v /= members.len() as f64);
        col
    })?;
    Ok(transpose(&columns))
}

fn class_members(labels: &[usize], class_count: usize) -> Result<Vec<Vec<usize>>> {
    let mut members = vec![Vec::new(); class_count];
    for (i, &y) in labels.iter().enumerate() {
        members
            .get_mut(y)
            .ok_or_else(|| Error::Dimension(format!("label {y} >= class count {class_count}")))?
            .push(i);
    }
    if let Some(j) = members.iter().position(Vec::is_empty) {
        return Err(Error::ClassUnseen(j));
    }
    Ok(members)
}

fn class_columns<F>(labels: &[usize], class_count: usize, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[usize]) -> Vec<f64>,
{
    Ok(class_members(labels, class_count)?.iter().map(|m| f(m)).collect())
}

fn transpose(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = columns.len();
    (0..n).map(|i| (0..n).map(|j| columns[j][i]).collect()).collect()
}

/// Fits one of the adjusted quantifiers on the correction sample.
///
/// `bandwidth` is required for KDEy. Naive has its own constructor
/// ([`fit_naive`]) because it needs the rank order instead of posteriors.
pub fn fit_correction(
    kind: QuantifierKind,
    posteriors: &PosteriorMatrix,
    labels: &[usize],
    bandwidth: Option<f64>,
) -> Result<CorrectionModel> {
    let n = posteriors.class_count();
    if posteriors.rows() != labels.len() {
        return Err(Error::Dimension("posteriors and labels differ in length".into()));
    }
    match kind {
        QuantifierKind::Cc => Ok(CorrectionModel::Cc { class_count: n }),
        QuantifierKind::Acc => Ok(CorrectionModel::Acc {
            rates: crisp_rate_matrix(&posteriors.argmax(), labels, n)?,
        }),
        QuantifierKind::Pacc => Ok(CorrectionModel::Pacc {
            rates: posterior_rate_matrix(posteriors, labels)?,
        }),
        QuantifierKind::Kdey => {
            let h = bandwidth.ok_or_else(|| Error::invalid("bandwidth", "KDEy requires a bandwidth"))?;
            let kdes = class_members(labels, n)?
                .into_iter()
                .map(|m| GaussianKde::fit(posteriors.select(&m), h))
                .collect::<Result<_>>()?;
            Ok(CorrectionModel::Kdey { kdes, bandwidth: h })
        }
        QuantifierKind::Naive => Err(Error::invalid(
            "quantifier",
            "naive is fitted from ranked labels with fit_naive",
        )),
    }
}

/// Class-level statistics of a non-query-biased labeled sample, used when
/// a class does not occur in the correction sample.
#[derive(Debug, Clone)]
pub struct GlobalCorrection {
    crisp_rates: Vec<Vec<f64>>,
    posterior_rates: Vec<Vec<f64>>,
    class_points: Vec<PosteriorMatrix>,
}

impl GlobalCorrection {
    /// From out-of-fold posteriors of the classifier's own training set.
    pub fn new(posteriors: &PosteriorMatrix, labels: &[usize]) -> Result<Self> {
        let n = posteriors.class_count();
        let class_points = class_members(labels, n)?
            .into_iter()
            .map(|m| posteriors.select(&m))
            .collect();
        Ok(Self {
            crisp_rates: crisp_rate_matrix(&posteriors.argmax(), labels, n)?,
            posterior_rates: posterior_rate_matrix(posteriors, labels)?,
            class_points,
        })
    }

    pub fn crisp_rates(&self) -> &[Vec<f64>] {
        &self.crisp_rates
    }
}

/// As [`fit_correction`], but a class absent from the correction sample
/// takes its column (or KDE) from `global`. Returns the classes that fell
/// back.
pub fn fit_correction_with_fallback(
    kind: QuantifierKind,
    posteriors: &PosteriorMatrix,
    labels: &[usize],
    bandwidth: Option<f64>,
    global: &GlobalCorrection,
) -> Result<(CorrectionModel, Vec<usize>)> {
    let n = posteriors.class_count();
    let mut members = vec![Vec::new(); n];
    for (i, &y) in labels.iter().enumerate() {
        members
            .get_mut(y)
            .ok_or_else(|| Error::Dimension(format!("label {y} >= class count {n}")))?
            .push(i);
    }
    let missing: Vec<usize> = (0..n).filter(|&j| members[j].is_empty()).collect();
    if missing.is_empty() || kind == QuantifierKind::Cc {
        return Ok((fit_correction(kind, posteriors, labels, bandwidth)?, Vec::new()));
    }
    let model = match kind {
        QuantifierKind::Acc | QuantifierKind::Pacc => {
            let preds = posteriors.argmax();
            let mut columns = Vec::with_capacity(n);
            for (j, m) in members.iter().enumerate() {
                let col: Vec<f64> = if m.is_empty() {
                    let src = match kind {
                        QuantifierKind::Acc => &global.crisp_rates,
                        _ => &global.posterior_rates,
                    };
                    (0..n).map(|i| src[i][j]).collect()
                } else if kind == QuantifierKind::Acc {
                    let mut c = vec![0.0; n];
                    m.iter().for_each(|&i| c[preds[i]] += 1.0);
                    c.iter().map(|v| v / m.len() as f64).collect()
                } else {
                    let mut c = vec![0.0; n];
                    for &i in m {
                        c.iter_mut().zip(posteriors.row(i)).for_each(|(a, p)| *a += p);
                    }
                    c.iter().map(|v| v / m.len() as f64).collect()
                };
                columns.push(col);
            }
            let rates = transpose(&columns);
            if kind == QuantifierKind::Acc {
                CorrectionModel::Acc { rates }
            } else {
                CorrectionModel::Pacc { rates }
            }
        }
        QuantifierKind::Kdey => {
            let h = bandwidth.ok_or_else(|| Error::invalid("bandwidth", "KDEy requires a bandwidth"))?;
            let kdes = members
                .iter()
                .enumerate()
                .map(|(j, m)| {
                    let pts = if m.is_empty() {
                        global.class_points[j].clone()
                    } else {
                        posteriors.select(m)
                    };
                    GaussianKde::fit(pts, h)
                })
                .collect::<Result<_>>()?;
            CorrectionModel::Kdey { kdes, bandwidth: h }
        }
        QuantifierKind::Cc | QuantifierKind::Naive => unreachable!(),
    };
    Ok((model, missing))
}

/// Stores the prevalence of the top-`k` correction items for each cutoff;
/// cutoffs beyond the sample length use the whole sample.
pub fn fit_naive(ranked_labels: &[usize], cutoffs: &[usize], class_count: usize) -> Result<CorrectionModel> {
    if ranked_labels.is_empty() {
        return Err(Error::Empty("correction sample"));
    }
    let mut prevalences = BTreeMap::new();
    for &k in cutoffs {
        let top = &ranked_labels[..k.min(ranked_labels.len())];
        prevalences.insert(k, prevalence_of_labels(top.iter().map(|&y| Ok(y)), class_count)?);
    }
    Ok(CorrectionModel::Naive { prevalences })
}

pub fn naive_estimate(model: &CorrectionModel, k: usize) -> Result<PrevalenceVector> {
    match model {
        CorrectionModel::Naive { prevalences } => prevalences.get(&k).cloned().ok_or(Error::MissingCutoff(k)),
        other => Err(wrong_model(QuantifierKind::Naive, other)),
    }
}

fn wrong_model(expected: QuantifierKind, got: &CorrectionModel) -> Error {
    Error::invalid("correction model", format!("expected {expected}, got {}", got.kind()))
}

/// Binary: the clipped `(CC - fpr) / (tpr - fpr)` correction. Multiclass:
/// least squares over the simplex against the crisp rate matrix.
pub fn acc_estimate(model: &CorrectionModel, predicted: &[usize]) -> Result<PrevalenceVector> {
    let CorrectionModel::Acc { rates } = model else {
        return Err(wrong_model(QuantifierKind::Acc, model));
    };
    let n = rates.len();
    let cc = classify_and_count(predicted, n)?;
    if n == 2 {
        let (tpr, fpr) = (rates[1][1], rates[1][0]);
        binary_acc(cc[1], tpr, fpr)
    } else {
        Ok(solve_least_squares_simplex(rates, cc.as_slice())?.point)
    }
}

/// Positive-class adjustment for a binary problem, returned as
/// `(negative, positive)`.
pub fn binary_acc(cc_positive: f64, tpr: f64, fpr: f64) -> Result<PrevalenceVector> {
    let gap = tpr - fpr;
    if gap.abs() < MIN_RATE_GAP {
        return Err(Error::UninformativeRates);
    }
    let pos = ((cc_positive - fpr) / gap).clamp(0.0, 1.0);
    project_to_simplex(&[1.0 - pos, pos])
}

pub fn pacc_estimate(model: &CorrectionModel, bag: &PosteriorMatrix) -> Result<PrevalenceVector> {
    let CorrectionModel::Pacc { rates } = model else {
        return Err(wrong_model(QuantifierKind::Pacc, model));
    };
    let t = bag.mean()?;
    Ok(solve_least_squares_simplex(rates, t.as_slice())?.point)
}

/// Row-major `m x n` matrix of class-conditional densities at each bag item.
pub fn kdey_densities(model: &CorrectionModel, bag: &PosteriorMatrix) -> Result<Vec<f64>> {
    let CorrectionModel::Kdey { kdes, .. } = model else {
        return Err(wrong_model(QuantifierKind::Kdey, model));
    };
    let mut out = Vec::with_capacity(bag.rows() * kdes.len());
    for x in bag.iter() {
        out.extend(kdes.iter().map(|k| k.density(x)));
    }
    Ok(out)
}

/// Mean negative log-likelihood of mixture weights `p`.
pub fn kdey_objective(densities: &[f64], n: usize, p: &[f64]) -> f64 {
    let m = densities.len() / n;
    let sum: f64 = densities
        .chunks_exact(n)
        .map(|q| (q.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + KDEY_EPSILON).ln())
        .sum();
    -sum / m as f64
}

/// Maximum-likelihood mixture weights from precomputed densities.
pub fn kdey_from_densities(densities: &[f64], n: usize) -> Result<SimplexSolution> {
    if densities.is_empty() {
        return Err(Error::Empty("bag"));
    }
    if !densities.len().is_multiple_of(n) {
        return Err(Error::Dimension("density matrix is not m x n".into()));
    }
    if densities.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("densities"));
    }
    let m = (densities.len() / n) as f64;
    let grad = |p: &[f64], g: &mut [f64]| {
        g.iter_mut().for_each(|v| *v = 0.0);
        for q in densities.chunks_exact(n) {
            let mix = q.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + KDEY_EPSILON;
            g.iter_mut().zip(q).for_each(|(gi, qi)| *gi -= qi / mix);
        }
        g.iter_mut().for_each(|v| *v /= m);
    };
    Ok(minimize_on_simplex(
        n,
        |p| kdey_objective(densities, n, p),
        grad,
        StepRule::Backtracking(0.1),
    ))
}

pub fn kdey_estimate(model: &CorrectionModel, bag: &PosteriorMatrix) -> Result<PrevalenceVector> {
    let d = kdey_densities(model, bag)?;
    Ok(kdey_from_densities(&d, model.class_count())?.point)
}

/// One held-out query for bandwidth selection.
#[derive(Debug, Clone)]
pub struct ValidationQuery {
    pub correction_posteriors: PosteriorMatrix,
    pub correction_labels: Vec<usize>,
    pub test_posteriors: PosteriorMatrix,
    pub true_prevalence: PrevalenceVector,
}

/// Picks the bandwidth with the lowest mean RAE over the validation
/// queries; ties go to the smaller bandwidth. Also returns the table.
pub fn select_kdey_bandwidth(queries: &[ValidationQuery], candidates: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if queries.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    if candidates.is_empty() {
        return Err(Error::Empty("bandwidth candidates"));
    }
    let mut table = Vec::with_capacity(candidates.len());
    for &h in candidates {
        let mut total = 0.0;
        for q in queries {
            let model = fit_correction(QuantifierKind::Kdey, &q.correction_posteriors, &q.correction_labels, Some(h))?;
            let est = kdey_estimate(&model, &q.test_posteriors)?;
            total += rae(&q.true_prevalence, &est, q.test_posteriors.rows())?;
        }
        table.push((h, total / queries.len() as f64));
    }
    let best = table
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)))
        .map(|(h, _)| h)
        .unwrap();
    Ok((best, table))
}
