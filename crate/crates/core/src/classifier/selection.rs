use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::features::{FeatureVector, Vectorizer};
use super::logistic::{train_on_features, ClassWeighting, ClassifierHyperParams, MIN_TERM_COUNT};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::simplex::PosteriorMatrix;

pub const FOLDS: usize = 5;

/// `C in {1e-4, ..., 1e4}` crossed with both weighting schemes.
pub fn default_grid() -> Vec<ClassifierHyperParams> {
    let mut grid = Vec::new();
    for i in -4..=4 {
        for w in [ClassWeighting::None, ClassWeighting::Balanced] {
            grid.push(ClassifierHyperParams::new(10f64.powi(i), w));
        }
    }
    grid
}

/// Assigns every example a fold in `0..folds`, stratified by class: each
/// class is shuffled with `seed` and dealt round-robin.
pub fn stratified_folds(labels: &[usize], class_count: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class = vec![Vec::new(); class_count];
    for (i, &y) in labels.iter().enumerate() {
        if y >= class_count {
            return Err(Error::Dimension(format!("label {y} >= class count {class_count}")));
        }
        by_class[y].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < folds {
            return Err(Error::TooFewForFolds(class, folds));
        }
        members.shuffle(&mut rng);
        for (k, i) in members.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Ok(assignment)
}

struct Prepared {
    vectorizer: Vectorizer,
    xs: Vec<FeatureVector>,
    labels: Vec<usize>,
    folds: Vec<usize>,
}

fn prepare(docs: &[Document], class_count: usize, seed: u64) -> Result<Prepared> {
    let labels: Vec<usize> = docs
        .iter()
        .map(|d| d.group.ok_or(Error::UnlabeledItem))
        .collect::<Result<_>>()?;
    let folds = stratified_folds(&labels, class_count, FOLDS, seed)?;
    let vectorizer = Vectorizer::fit(docs.iter().map(|d| d.tokens.as_slice()), MIN_TERM_COUNT);
    let xs = docs.iter().map(|d| vectorizer.featurize(&d.tokens)).collect();
    Ok(Prepared {
        vectorizer,
        xs,
        labels,
        folds,
    })
}

impl Prepared {
    /// Out-of-fold posteriors in the original example order.
    fn oof_posteriors(&self, class_count: usize, hp: ClassifierHyperParams) -> Result<PosteriorMatrix> {
        let per_fold = map_folds(|k| {
            let (train_idx, test_idx): (Vec<usize>, Vec<usize>) =
                (0..self.labels.len()).partition(|&i| self.folds[i] != k);
            let xs: Vec<FeatureVector> = train_idx.iter().map(|&i| self.xs[i].clone()).collect();
            let ys: Vec<usize> = train_idx.iter().map(|&i| self.labels[i]).collect();
            let (model, _) = train_on_features(self.vectorizer.clone(), &xs, &ys, class_count, hp)?;
            let rows: Vec<Vec<f64>> = test_idx.iter().map(|&i| model.posterior_of(&self.xs[i])).collect();
            Ok((test_idx, rows))
        })?;
        let mut rows = vec![Vec::new(); self.labels.len()];
        for (idx, fold_rows) in per_fold {
            for (i, r) in idx.into_iter().zip(fold_rows) {
                rows[i] = r;
            }
        }
        let mut out = PosteriorMatrix::with_capacity(class_count, rows.len());
        for r in &rows {
            out.push_unchecked(r);
        }
        Ok(out)
    }

    /// Mean per-fold accuracy.
    fn accuracy(&self, class_count: usize, hp: ClassifierHyperParams) -> Result<f64> {
        let post = self.oof_posteriors(class_count, hp)?;
        let preds = post.argmax();
        let mut hits = [0usize; FOLDS];
        let mut sizes = [0usize; FOLDS];
        for ((&p, &y), &k) in preds.iter().zip(&self.labels).zip(&self.folds) {
            sizes[k] += 1;
            hits[k] += usize::from(p == y);
        }
        Ok(hits.iter().zip(&sizes).map(|(&h, &s)| h as f64 / s as f64).sum::<f64>() / FOLDS as f64)
    }
}

#[cfg(feature = "parallel")]
fn map_folds<T, F>(f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    use rayon::prelude::*;
    (0..FOLDS).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_folds<T, F>(f: F) -> Result<Vec<T>>
where
    F: Fn(usize) -> Result<T>,
{
    (0..FOLDS).map(f).collect()
}

/// Mean 5-fold accuracy of one hyperparameter setting.
pub fn cv_accuracy(docs: &[Document], class_count: usize, hp: ClassifierHyperParams, seed: u64) -> Result<f64> {
    prepare(docs, class_count, seed)?.accuracy(class_count, hp)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub best: ClassifierHyperParams,
    pub best_accuracy: f64,
    /// Every grid point with its mean fold accuracy, in grid order.
    pub table: Vec<(ClassifierHyperParams, f64)>,
}

/// Picks the grid point with the highest mean 5-fold accuracy. Ties go to
/// the smaller `C`, then to unweighted classes.
pub fn select_model(
    docs: &[Document],
    class_count: usize,
    grid: &[ClassifierHyperParams],
    seed: u64,
) -> Result<SelectionOutcome> {
    if grid.is_empty() {
        return Err(Error::Empty("hyperparameter grid"));
    }
    let prepared = prepare(docs, class_count, seed)?;
    let mut table = Vec::with_capacity(grid.len());
    for &hp in grid {
        table.push((hp, prepared.accuracy(class_count, hp)?));
    }
    let mut order: Vec<&(ClassifierHyperParams, f64)> = table.iter().collect();
    order.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then(a.0.c.total_cmp(&b.0.c))
            .then_with(|| weighting_rank(a.0.class_weighting).cmp(&weighting_rank(b.0.class_weighting)))
    });
    let (best, best_accuracy) = *order[0];
    Ok(SelectionOutcome {
        best,
        best_accuracy,
        table,
    })
}

fn weighting_rank(w: ClassWeighting) -> u8 {
    match w {
        ClassWeighting::None => 0,
        ClassWeighting::Balanced => 1,
    }
}

/// Out-of-fold posteriors of a 5-fold cross-validation, aligned with `docs`.
pub fn cross_val_posteriors(
    docs: &[Document],
    class_count: usize,
    hp: ClassifierHyperParams,
    seed: u64,
) -> Result<PosteriorMatrix> {
    prepare(docs, class_count, seed)?.oof_posteriors(class_count, hp)
}

/// `M[i][j] = P(predicted i | true j)` from out-of-fold crisp predictions.
pub fn cv_rate_matrix(
    docs: &[Document],
    class_count: usize,
    hp: ClassifierHyperParams,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let post = cross_val_posteriors(docs, class_count, hp, seed)?;
    let labels: Vec<usize> = docs.iter().map(|d| d.group.ok_or(Error::UnlabeledItem)).collect::<Result<_>>()?;
    crate::quantify::crisp_rate_matrix(&post.argmax(), &labels, class_count)
}
