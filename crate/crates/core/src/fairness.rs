//! Rank-discounted fairness metrics and quantification error measures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::PrevalenceVector;

/// Additive smoothing applied to both KL arguments.
pub const KL_SMOOTHING: f64 = 1e-6;

/// Rank cutoffs and their `1 / log2(k)` exposure weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CutoffSchedule(Vec<usize>);

impl CutoffSchedule {
    pub fn new(mut cutoffs: Vec<usize>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::Empty("cutoff schedule"));
        }
        if let Some(k) = cutoffs.iter().find(|&&k| k < 2) {
            return Err(Error::invalid("cutoff", format!("{k} (cutoffs must be >= 2)")));
        }
        cutoffs.sort_unstable();
        cutoffs.dedup();
        Ok(Self(cutoffs))
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.0
    }

    pub fn max(&self) -> usize {
        *self.0.last().unwrap()
    }

    pub fn weight(k: usize) -> f64 {
        1.0 / (k as f64).log2()
    }

    /// `Z = sum_k 1 / log2(k)`.
    pub fn normalizer(&self) -> f64 {
        self.0.iter().map(|&k| Self::weight(k)).sum()
    }

    /// Exposure-weighted mean of a per-cutoff quantity.
    fn discounted_mean<F>(&self, scale: f64, mut per_k: F) -> Result<f64>
    where
        F: FnMut(usize) -> Result<f64>,
    {
        let mut acc = 0.0;
        for &k in &self.0 {
            acc += scale * Self::weight(k) * per_k(k)?;
        }
        Ok(acc / (scale * self.normalizer()))
    }
}

impl Default for CutoffSchedule {
    fn default() -> Self {
        Self(vec![50, 100, 500, 1000])
    }
}

impl TryFrom<Vec<usize>> for CutoffSchedule {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CutoffSchedule> for Vec<usize> {
    fn from(s: CutoffSchedule) -> Self {
        s.0
    }
}

fn smooth(p: &[f64], eps: f64) -> impl Iterator<Item = f64> + '_ {
    let denom = 1.0 + eps * p.len() as f64;
    p.iter().map(move |v| (v + eps) / denom)
}

/// `KL(p || q)` in nats after smoothing both arguments.
pub fn kl_divergence(p: &PrevalenceVector, q: &PrevalenceVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("{} vs {} classes", p.len(), q.len())));
    }
    let kl: f64 = smooth(p.as_slice(), KL_SMOOTHING)
        .zip(smooth(q.as_slice(), KL_SMOOTHING))
        .map(|(a, b)| a * (a / b).ln())
        .sum();
    Ok(kl.max(0.0))
}

pub type DistributionsAtK = BTreeMap<usize, PrevalenceVector>;

fn at(d: &DistributionsAtK, k: usize) -> Result<&PrevalenceVector> {
    d.get(&k).ok_or(Error::MissingCutoff(k))
}

/// Normalized discounted KL divergence of the top-k group distributions
/// from `target`.
pub fn rkl(dists: &DistributionsAtK, target: &PrevalenceVector, schedule: &CutoffSchedule) -> Result<f64> {
    schedule.discounted_mean(1.0, |k| kl_divergence(at(dists, k)?, target))
}

/// Normalized discounted difference of the protected group (index 1).
pub fn rnd(dists: &DistributionsAtK, target: &PrevalenceVector, schedule: &CutoffSchedule) -> Result<f64> {
    rnd_scaled(dists, target, schedule, 1.0)
}

fn rnd_scaled(dists: &DistributionsAtK, target: &PrevalenceVector, schedule: &CutoffSchedule, scale: f64) -> Result<f64> {
    if target.len() != 2 {
        return Err(Error::BinaryOnly);
    }
    schedule.discounted_mean(scale, |k| {
        let p = at(dists, k)?;
        if p.len() != 2 {
            return Err(Error::BinaryOnly);
        }
        Ok((p[1] - target[1]).abs())
    })
}

/// Relative absolute error with `(p + e) / (1 + n e)` smoothing, `e = 1/(2m)`.
pub fn rae(truth: &PrevalenceVector, estimate: &PrevalenceVector, bag_size: usize) -> Result<f64> {
    if bag_size == 0 {
        return Err(Error::invalid("bag size", "must be positive"));
    }
    if truth.len() != estimate.len() {
        return Err(Error::Dimension(format!("{} vs {} classes", truth.len(), estimate.len())));
    }
    let eps = 1.0 / (2.0 * bag_size as f64);
    let n = truth.len() as f64;
    let total: f64 = smooth(truth.as_slice(), eps)
        .zip(smooth(estimate.as_slice(), eps))
        .map(|(p, q)| (q - p).abs() / p)
        .sum();
    Ok(total / n)
}

/// Mean absolute difference between true and estimated per-query scores.
pub fn ae_over_queries(truth: &BTreeMap<String, f64>, estimated: &BTreeMap<String, f64>) -> Result<f64> {
    Ok(mean(&absolute_errors(truth, estimated)?))
}

/// Per-query absolute errors in query-id order.
pub fn absolute_errors(truth: &BTreeMap<String, f64>, estimated: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
    if truth.len() != estimated.len() || truth.keys().zip(estimated.keys()).any(|(a, b)| a != b) {
        return Err(Error::invalid("query sets", "true and estimated scores cover different queries"));
    }
    if truth.is_empty() {
        return Err(Error::Empty("query set"));
    }
    Ok(truth.values().zip(estimated.values()).map(|(a, b)| (a - b).abs()).collect())
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn std_dev(v: &[f64]) -> f64 {
    let mu = mean(v);
    (v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / v.len() as f64).sqrt()
}
