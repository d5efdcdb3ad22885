use serde::{Deserialize, Serialize};

use super::features::{FeatureVector, Vectorizer};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::simplex::PosteriorMatrix;

/// Vocabulary terms must occur at least this often in the training set.
pub const MIN_TERM_COUNT: usize = 2;
const GRAD_TOL: f64 = 1e-5;
const MAX_ITER: usize = 1000;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    Balanced,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHyperParams {
    /// Inverse regularization strength `C`.
    pub c: f64,
    pub class_weighting: ClassWeighting,
}

impl ClassifierHyperParams {
    pub fn new(c: f64, class_weighting: ClassWeighting) -> Self {
        Self { c, class_weighting }
    }
}

impl Default for ClassifierHyperParams {
    fn default() -> Self {
        Self::new(1.0, ClassWeighting::None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Multinomial logistic regression over tf-idf features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub class_count: usize,
    pub vectorizer: Vectorizer,
    /// Row-major `class_count x (dim + 1)`; the last column is the bias.
    pub weights: Vec<f64>,
    pub hyper_params: ClassifierHyperParams,
}

impl LogisticModel {
    pub fn dim(&self) -> usize {
        self.vectorizer.len()
    }

    pub fn featurize(&self, tokens: &[String]) -> FeatureVector {
        self.vectorizer.featurize(tokens)
    }

    pub fn posterior_of(&self, x: &FeatureVector) -> Vec<f64> {
        let mut z = vec![0.0; self.class_count];
        scores_into(&self.weights, self.dim() + 1, x, &mut z);
        softmax_in_place(&mut z);
        z
    }

    /// Softmax posteriors, one row per token sequence.
    pub fn posteriors<'a, I>(&self, docs: I) -> PosteriorMatrix
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut out = PosteriorMatrix::new(self.class_count);
        for tokens in docs {
            out.push_unchecked(&self.posterior_of(&self.featurize(tokens)));
        }
        out
    }

    pub fn posteriors_of_features(&self, xs: &[FeatureVector]) -> PosteriorMatrix {
        let mut out = PosteriorMatrix::with_capacity(self.class_count, xs.len());
        for x in xs {
            out.push_unchecked(&self.posterior_of(x));
        }
        out
    }

    /// Argmax labels, ties to the lowest class index.
    pub fn crisp_predict<'a, I>(&self, docs: I) -> Vec<usize>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        self.posteriors(docs).argmax()
    }
}

fn scores_into(weights: &[f64], stride: usize, x: &FeatureVector, z: &mut [f64]) {
    for (c, zc) in z.iter_mut().enumerate() {
        let row = &weights[c * stride..(c + 1) * stride];
        let mut s = row[stride - 1];
        for &(j, w) in &x.entries {
            s += row[j as usize] * w;
        }
        *zc = s;
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// `log(sum(exp(z))) - z[y]`, computed stably.
fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[y]
}

/// Weighted mean cross-entropy plus `||W||^2 / (2 C m)` on the non-bias
/// weights, over a fixed training set.
pub struct LogisticObjective<'a> {
    xs: &'a [FeatureVector],
    ys: &'a [usize],
    sample_weights: Vec<f64>,
    class_count: usize,
    dim: usize,
    c: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(
        xs: &'a [FeatureVector],
        ys: &'a [usize],
        class_count: usize,
        dim: usize,
        hp: ClassifierHyperParams,
    ) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Dimension("features and labels differ in length".into()));
        }
        if !(hp.c > 0.0 && hp.c.is_finite()) {
            return Err(Error::invalid("regularization strength", hp.c.to_string()));
        }
        let mut counts = vec![0usize; class_count];
        for &y in ys {
            if y >= class_count {
                return Err(Error::Dimension(format!("label {y} >= class count {class_count}")));
            }
            counts[y] += 1;
        }
        if counts.contains(&0) {
            return Err(Error::EmptyClass);
        }
        let m = ys.len() as f64;
        let sample_weights = match hp.class_weighting {
            ClassWeighting::None => vec![1.0; ys.len()],
            ClassWeighting::Balanced => ys
                .iter()
                .map(|&y| m / (class_count as f64 * counts[y] as f64))
                .collect(),
        };
        Ok(Self {
            xs,
            ys,
            sample_weights,
            class_count,
            dim,
            c: hp.c,
        })
    }

    pub fn param_len(&self) -> usize {
        self.class_count * (self.dim + 1)
    }

    fn stride(&self) -> usize {
        self.dim + 1
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let stride = self.stride();
        let sq: f64 = w
            .chunks_exact(stride)
            .map(|row| row[..stride - 1].iter().map(|v| v * v).sum::<f64>())
            .sum();
        sq / (2.0 * self.c * self.ys.len() as f64)
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let mut z = vec![0.0; self.class_count];
        let mut loss = 0.0;
        for ((x, &y), &s) in self.xs.iter().zip(self.ys).zip(&self.sample_weights) {
            scores_into(w, self.stride(), x, &mut z);
            loss += s * cross_entropy(&z, y);
        }
        loss / self.ys.len() as f64 + self.penalty(w)
    }

    /// Objective value and gradient at `w`; also fills `scores` with the
    /// per-example class scores.
    pub fn value_and_gradient(&self, w: &[f64], grad: &mut [f64], scores: &mut Vec<f64>) -> f64 {
        let n = self.class_count;
        let stride = self.stride();
        let m = self.ys.len() as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        scores.clear();
        scores.resize(self.ys.len() * n, 0.0);
        let mut loss = 0.0;
        let mut p = vec![0.0; n];
        for (i, ((x, &y), &s)) in self.xs.iter().zip(self.ys).zip(&self.sample_weights).enumerate() {
            let z = &mut scores[i * n..(i + 1) * n];
            scores_into(w, stride, x, z);
            loss += s * cross_entropy(z, y);
            p.copy_from_slice(z);
            softmax_in_place(&mut p);
            p[y] -= 1.0;
            for (c, &pc) in p.iter().enumerate() {
                let coef = s * pc / m;
                let row = &mut grad[c * stride..(c + 1) * stride];
                for &(j, v) in &x.entries {
                    row[j as usize] += coef * v;
                }
                row[stride - 1] += coef;
            }
        }
        let lam = 1.0 / (self.c * m);
        for row_idx in 0..n {
            let row = row_idx * stride;
            for j in 0..stride - 1 {
                grad[row + j] += lam * w[row + j];
            }
        }
        loss / m + self.penalty(w)
    }

    /// Objective along `w - step * dir`, using precomputed scores and their
    /// directional change `dz`.
    fn value_along(&self, w: &[f64], dir: &[f64], step: f64, scores: &[f64], dz: &[f64]) -> f64 {
        let n = self.class_count;
        let mut z = vec![0.0; n];
        let mut loss = 0.0;
        for (i, (&y, &s)) in self.ys.iter().zip(&self.sample_weights).enumerate() {
            for c in 0..n {
                z[c] = scores[i * n + c] - step * dz[i * n + c];
            }
            loss += s * cross_entropy(&z, y);
        }
        let stride = self.stride();
        let mut sq = 0.0;
        for (k, (&wk, &dk)) in w.iter().zip(dir).enumerate() {
            if k % stride != stride - 1 {
                let v = wk - step * dk;
                sq += v * v;
            }
        }
        loss / self.ys.len() as f64 + sq / (2.0 * self.c * self.ys.len() as f64)
    }

    fn directional_scores(&self, dir: &[f64], dz: &mut Vec<f64>) {
        let n = self.class_count;
        dz.clear();
        dz.resize(self.ys.len() * n, 0.0);
        for (i, x) in self.xs.iter().enumerate() {
            scores_into(dir, self.stride(), x, &mut dz[i * n..(i + 1) * n]);
        }
    }

    /// Full-batch gradient descent with Armijo backtracking; the trial step
    /// starts from the Barzilai-Borwein estimate of the previous iteration.
    pub fn minimize(&self) -> (Vec<f64>, TrainingReport) {
        let len = self.param_len();
        let mut w = vec![0.0; len];
        let mut grad = vec![0.0; len];
        let mut scores = Vec::new();
        let mut dz = Vec::new();
        let mut f = self.value_and_gradient(&w, &mut grad, &mut scores);
        let mut step = 1.0;
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let mut iterations = 0;
        let mut gnorm = inf_norm(&grad);
        while gnorm >= GRAD_TOL && iterations < MAX_ITER {
            if let Some((pw, pg)) = &prev {
                let (mut ss, mut sy) = (0.0, 0.0);
                for k in 0..len {
                    let s = w[k] - pw[k];
                    let y = grad[k] - pg[k];
                    ss += s * s;
                    sy += s * y;
                }
                if sy > 0.0 && ss > 0.0 {
                    step = (ss / sy).clamp(1e-10, 1e10);
                }
            }
            self.directional_scores(&grad, &mut dz);
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            let mut accepted = false;
            for _ in 0..60 {
                let trial = self.value_along(&w, &grad, step, &scores, &dz);
                if trial <= f - ARMIJO * step * g2 {
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            let old_w = w.clone();
            let old_g = grad.clone();
            for (wk, gk) in w.iter_mut().zip(&grad) {
                *wk -= step * gk;
            }
            f = self.value_and_gradient(&w, &mut grad, &mut scores);
            prev = Some((old_w, old_g));
            gnorm = inf_norm(&grad);
            iterations += 1;
        }
        (
            w,
            TrainingReport {
                iterations,
                gradient_norm: gnorm,
                converged: gnorm < GRAD_TOL,
            },
        )
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// Fits a vectorizer and a logistic model on fully labeled documents.
pub fn train(docs: &[Document], class_count: usize, hp: ClassifierHyperParams) -> Result<LogisticModel> {
    let labels: Vec<usize> = docs
        .iter()
        .map(|d| d.group.ok_or(Error::UnlabeledItem))
        .collect::<Result<_>>()?;
    let vectorizer = Vectorizer::fit(docs.iter().map(|d| d.tokens.as_slice()), MIN_TERM_COUNT);
    let xs: Vec<FeatureVector> = docs.iter().map(|d| vectorizer.featurize(&d.tokens)).collect();
    let (model, _) = train_on_features(vectorizer, &xs, &labels, class_count, hp)?;
    Ok(model)
}

pub fn train_on_features(
    vectorizer: Vectorizer,
    xs: &[FeatureVector],
    labels: &[usize],
    class_count: usize,
    hp: ClassifierHyperParams,
) -> Result<(LogisticModel, TrainingReport)> {
    let objective = LogisticObjective::new(xs, labels, class_count, vectorizer.len(), hp)?;
    let (weights, report) = objective.minimize();
    Ok((
        LogisticModel {
            class_count,
            vectorizer,
            weights,
            hyper_params: hp,
        },
        report,
    ))
}
