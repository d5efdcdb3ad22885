//! Paired significance testing.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Minimum number of non-zero paired differences.
pub const MIN_PAIRS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub statistic: f64,
    pub z: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub pairs: usize,
}

/// Wilcoxon signed-rank test with the normal approximation.
///
/// Zero differences are dropped, tied magnitudes share their average rank,
/// and the variance carries the usual tie correction. No continuity
/// correction is applied.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Dimension("paired samples differ in length".into()));
    }
    let mut d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("paired samples"));
    }
    let n = d.len();
    if n < MIN_PAIRS {
        return Err(Error::SampleTooSmall);
    }
    d.sort_by(|x, y| x.abs().total_cmp(&y.abs()));

    let (mut w_plus, mut w_minus, mut tie_term) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[j + 1].abs() == d[i].abs() {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let rank = (i + j + 2) as f64 / 2.0;
        for v in &d[i..=j] {
            if *v > 0.0 {
                w_plus += rank;
            } else {
                w_minus += rank;
            }
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let statistic = w_plus.min(w_minus);
    let z = (statistic - mean) / var.sqrt();
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    Ok(WilcoxonResult {
        statistic,
        z,
        p_value,
        pairs: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_samples_are_too_small() {
        let a = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        assert_eq!(wilcoxon_signed_rank(&a, &a).unwrap_err().to_string(), "sample too small");
    }

    #[test]
    fn constant_shift_is_extreme() {
        let a: Vec<f64> = (0..20).map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value < 0.001);
        // scipy.stats.wilcoxon(a, b, correction=False, method="approx")
        assert!((r.p_value - 7.744_216_431_044_07e-6).abs() < 1e-9);
    }

    #[test]
    fn matches_reference_with_zero_difference() {
        // nine non-zero pairs; reference W = 18, p = 0.5936305914425295
        let a = [125.0, 115.0, 130.0, 140.0, 140.0, 115.0, 140.0, 125.0, 140.0, 135.0];
        let b = [110.0, 122.0, 125.0, 120.0, 140.0, 124.0, 123.0, 137.0, 135.0, 145.0];
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        assert_eq!(r.pairs, 9);
        assert_eq!(r.statistic, 18.0);
        assert!((r.p_value - 0.593_630_591_442_529_5).abs() < 1e-3);
    }

    #[test]
    fn symmetric_in_arguments() {
        let a = [12.0, 30.0, 25.0, 41.0, 8.0, 19.0, 33.0, 27.0, 15.0, 22.0];
        let b = [10.0, 21.0, 30.0, 30.0, 2.0, 25.0, 20.0, 21.0, 5.0, 16.0];
        let x = wilcoxon_signed_rank(&a, &b).unwrap();
        let y = wilcoxon_signed_rank(&b, &a).unwrap();
        assert_eq!(x.p_value, y.p_value);
        assert_eq!(x.statistic, y.statistic);
    }
}
