//! Post-metric corrections of a proxy-label rND score (binary groups only).
//!
//! `p = P(pred 1 | class 0)`, `w = P(pred 0 | class 1)`, `beta = P(class 1)`.
//! The `_b` correction divides by `(1 - p) - w`; the `_d` correction
//! multiplies by `(1 - w) beta / x - w beta / y` with
//! `x = (1 - w) beta + p (1 - beta)` and `y = w beta + (1 - p)(1 - beta)`.
//! The "plus" variants are the same maps with rates measured on the
//! query-biased correction sample instead of the classifier's training set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_DENOMINATOR: f64 = 1e-6;
const MIN_MARGINAL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    ClassifierTrainingSet,
    QueryBiased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmcRates {
    pub p: f64,
    pub w: f64,
    pub beta: f64,
    pub source: RateSource,
}

pub fn estimate_pmc_rates(labels: &[usize], predicted: &[usize], source: RateSource) -> Result<PmcRates> {
    if labels.len() != predicted.len() {
        return Err(Error::Dimension("labels and predictions differ in length".into()));
    }
    let (mut neg, mut pos, mut false_pos, mut false_neg) = (0usize, 0usize, 0usize, 0usize);
    for (&y, &yhat) in labels.iter().zip(predicted) {
        if y > 1 || yhat > 1 {
            return Err(Error::BinaryOnly);
        }
        match (y, yhat) {
            (0, 1) => false_pos += 1,
            (1, 0) => false_neg += 1,
            _ => {}
        }
        if y == 0 {
            neg += 1;
        } else {
            pos += 1;
        }
    }
    if neg == 0 {
        return Err(Error::ClassUnseen(0));
    }
    if pos == 0 {
        return Err(Error::ClassUnseen(1));
    }
    Ok(PmcRates {
        p: false_pos as f64 / neg as f64,
        w: false_neg as f64 / pos as f64,
        beta: pos as f64 / labels.len() as f64,
        source,
    })
}

pub fn pmc_b_correct(proxy_rnd: f64, rates: &PmcRates) -> Result<f64> {
    let denom = (1.0 - rates.p) - rates.w;
    if denom.abs() < MIN_DENOMINATOR {
        return Err(Error::DegeneratePmc);
    }
    Ok((proxy_rnd / denom).clamp(0.0, 1.0))
}

pub fn pmc_d_correct(proxy_rnd: f64, rates: &PmcRates) -> Result<f64> {
    let PmcRates { p, w, beta, .. } = *rates;
    let x = (1.0 - w) * beta + p * (1.0 - beta);
    let y = w * beta + (1.0 - p) * (1.0 - beta);
    if x < MIN_MARGINAL || y < MIN_MARGINAL {
        return Err(Error::DegeneratePmc);
    }
    let factor = (1.0 - w) * beta / x - w * beta / y;
    Ok((proxy_rnd * factor).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rates(p: f64, w: f64, beta: f64) -> PmcRates {
        PmcRates {
            p,
            w,
            beta,
            source: RateSource::ClassifierTrainingSet,
        }
    }

    #[test]
    fn rate_counting() {
        let r = estimate_pmc_rates(&[1, 1, 0, 0], &[1, 0, 0, 1], RateSource::QueryBiased).unwrap();
        assert_eq!((r.p, r.w, r.beta), (0.5, 0.5, 0.5));
        let r = estimate_pmc_rates(&[1, 0, 1, 0], &[1, 0, 1, 0], RateSource::QueryBiased).unwrap();
        assert_eq!((r.p, r.w), (0.0, 0.0));
        let r = estimate_pmc_rates(&[1, 0, 1, 0], &[0, 0, 0, 0], RateSource::QueryBiased).unwrap();
        assert_eq!((r.p, r.w), (0.0, 1.0));
        assert!(estimate_pmc_rates(&[0, 0], &[0, 1], RateSource::QueryBiased).is_err());
    }

    #[test]
    fn pmc_b_examples() {
        assert_eq!(pmc_b_correct(0.37, &rates(0.0, 0.0, 0.3)).unwrap(), 0.37);
        assert!((pmc_b_correct(0.4, &rates(0.1, 0.1, 0.5)).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(
            pmc_b_correct(0.4, &rates(0.5, 0.5, 0.5)).unwrap_err().to_string(),
            "degenerate PMC denominator"
        );
        assert_eq!(pmc_b_correct(0.9, &rates(0.3, 0.3, 0.5)).unwrap(), 1.0);
    }

    #[test]
    fn pmc_d_examples() {
        assert_eq!(pmc_d_correct(0.37, &rates(0.0, 0.0, 0.3)).unwrap(), 0.37);
        assert!((pmc_d_correct(0.4, &rates(0.1, 0.1, 0.5)).unwrap() - 0.32).abs() < 1e-12);
        assert_eq!(pmc_d_correct(0.4, &rates(0.2, 0.1, 0.0)).unwrap(), 0.0);
        assert!(pmc_d_correct(0.4, &rates(0.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn source_does_not_change_the_map() {
        let a = rates(0.15, 0.2, 0.4);
        let b = PmcRates {
            source: RateSource::QueryBiased,
            ..a
        };
        assert_eq!(pmc_b_correct(0.3, &a).unwrap(), pmc_b_correct(0.3, &b).unwrap());
        assert_eq!(pmc_d_correct(0.3, &a).unwrap(), pmc_d_correct(0.3, &b).unwrap());
    }
}
