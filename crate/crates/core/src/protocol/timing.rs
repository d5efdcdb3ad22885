use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantify::{fit_correction, fit_naive, naive_estimate, CorrectionModel, QuantifierKind};
use crate::simplex::PosteriorMatrix;

/// One query's worth of quantification work.
#[derive(Debug, Clone)]
pub struct TimingWorkload {
    pub correction_posteriors: PosteriorMatrix,
    pub correction_labels: Vec<usize>,
    pub bag: PosteriorMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub queries: usize,
    pub learn_ms_mean: f64,
    pub predict_ms_mean: f64,
}

fn learn(kind: QuantifierKind, w: &TimingWorkload, bandwidth: Option<f64>) -> Result<CorrectionModel> {
    match kind {
        QuantifierKind::Naive => fit_naive(&w.correction_labels, &[w.bag.rows().max(1)], w.bag.class_count()),
        _ => fit_correction(kind, &w.correction_posteriors, &w.correction_labels, bandwidth),
    }
}

fn predict(model: &CorrectionModel, w: &TimingWorkload) -> Result<()> {
    match model {
        CorrectionModel::Naive { .. } => naive_estimate(model, w.bag.rows().max(1)).map(drop),
        _ => model.estimate(&w.bag).map(drop),
    }
}

/// Mean wall-clock learning and prediction time per query. The first
/// workload is run once untimed as a warm-up.
pub fn measure_timings(kind: QuantifierKind, workload: &[TimingWorkload], bandwidth: Option<f64>) -> Result<TimingSummary> {
    let first = workload.first().ok_or(Error::Empty("timing workload"))?;
    predict(&learn(kind, first, bandwidth)?, first)?;

    let (mut learn_ms, mut predict_ms) = (0.0, 0.0);
    for w in workload {
        let t0 = Instant::now();
        let model = learn(kind, w, bandwidth)?;
        let t1 = Instant::now();
        predict(&model, w)?;
        let t2 = Instant::now();
        learn_ms += (t1 - t0).as_secs_f64() * 1e3;
        predict_ms += (t2 - t1).as_secs_f64() * 1e3;
    }
    let q = workload.len() as f64;
    Ok(TimingSummary {
        queries: workload.len(),
        learn_ms_mean: learn_ms / q,
        predict_ms_mean: predict_ms / q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn workload() -> Vec<TimingWorkload> {
        let post = PosteriorMatrix::from_rows(2, &[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]]).unwrap();
        vec![
            TimingWorkload {
                correction_posteriors: post.clone(),
                correction_labels: vec![0, 1, 0, 1],
                bag: post,
            };
            3
        ]
    }

    #[test]
    fn timings_are_non_negative() {
        for kind in QuantifierKind::ALL {
            let s = measure_timings(kind, &workload(), Some(0.1)).unwrap();
            assert_eq!(s.queries, 3);
            assert!(s.learn_ms_mean >= 0.0 && s.predict_ms_mean >= 0.0, "{kind}");
        }
        assert!(measure_timings(QuantifierKind::Cc, &[], None).is_err());
    }
}
