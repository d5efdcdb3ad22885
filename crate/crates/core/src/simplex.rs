//! Points on the probability simplex and the projections onto it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the unit-sum constraint.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A class-prevalence vector: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PrevalenceVector(Vec<f64>);

impl PrevalenceVector {
    /// Validates `values` against the simplex invariants.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_simplex(&values)?;
        Ok(Self(values))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, index: usize) -> Self {
        let mut v = vec![0.0; n];
        v[index] = 1.0;
        Self(v)
    }

    /// Wraps values known to be on the simplex (e.g. produced by a projection).
    pub(crate) fn from_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(check_simplex(&values).is_ok(), "{values:?}");
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for PrevalenceVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for PrevalenceVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PrevalenceVector> for Vec<f64> {
    fn from(p: PrevalenceVector) -> Self {
        p.0
    }
}

pub fn check_simplex(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty("prevalence vector"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prevalence vector"));
    }
    if let Some(v) = values.iter().find(|&&v| v < 0.0) {
        return Err(Error::NotOnSimplex(format!("negative entry {v}")));
    }
    let sum: f64 = values.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NotOnSimplex(format!("entries sum to {sum}")));
    }
    Ok(())
}

/// Clip-and-renormalize: negatives go to zero, the rest is rescaled to sum
/// one. An all-zero result falls back to the uniform vector.
pub fn project_to_simplex(raw: &[f64]) -> Result<PrevalenceVector> {
    if raw.is_empty() {
        return Err(Error::Empty("raw vector"));
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("raw vector"));
    }
    let clipped: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
    let sum: f64 = clipped.iter().sum();
    if sum <= 0.0 {
        return Ok(PrevalenceVector::uniform(raw.len()));
    }
    Ok(PrevalenceVector::from_unchecked(normalize(clipped, sum)))
}

/// Euclidean (nearest-point) projection onto the simplex, by the sort-based
/// threshold algorithm.
pub fn euclidean_projection(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    let out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // the threshold leaves rounding residue of a few ulps
    let sum: f64 = out.iter().sum();
    normalize(out, sum)
}

fn normalize(mut v: Vec<f64>, sum: f64) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

/// Per-item posterior vectors, one simplex row per item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorMatrix {
    class_count: usize,
    data: Vec<f64>,
}

impl PosteriorMatrix {
    pub fn new(class_count: usize) -> Self {
        Self {
            class_count,
            data: Vec::new(),
        }
    }

    /// Builds a matrix from rows, validating each one.
    pub fn from_rows<R: AsRef<[f64]>>(class_count: usize, rows: &[R]) -> Result<Self> {
        let mut m = Self::with_capacity(class_count, rows.len());
        for r in rows {
            m.push(r.as_ref())?;
        }
        Ok(m)
    }

    pub fn with_capacity(class_count: usize, rows: usize) -> Self {
        Self {
            class_count,
            data: Vec::with_capacity(class_count * rows),
        }
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.class_count {
            return Err(Error::Dimension(format!(
                "posterior row has {} entries, expected {}",
                row.len(),
                self.class_count
            )));
        }
        check_simplex(row)?;
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub(crate) fn push_unchecked(&mut self, row: &[f64]) {
        self.data.extend_from_slice(row);
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.class_count.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.class_count..(i + 1) * self.class_count]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.class_count)
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::with_capacity(self.class_count, indices.len());
        for &i in indices {
            out.push_unchecked(self.row(i));
        }
        out
    }

    /// The first `k` rows (or all of them).
    pub fn prefix(&self, k: usize) -> Self {
        let k = k.min(self.rows());
        Self {
            class_count: self.class_count,
            data: self.data[..k * self.class_count].to_vec(),
        }
    }

    /// Mean row; the mean of simplex points is itself on the simplex.
    pub fn mean(&self) -> Result<PrevalenceVector> {
        if self.is_empty() {
            return Err(Error::Empty("bag"));
        }
        let mut acc = vec![0.0; self.class_count];
        for row in self.iter() {
            acc.iter_mut().zip(row).for_each(|(a, r)| *a += r);
        }
        let sum: f64 = acc.iter().sum();
        Ok(PrevalenceVector::from_unchecked(normalize(acc, sum)))
    }

    /// Row-wise argmax, ties to the lowest class index.
    pub fn argmax(&self) -> Vec<usize> {
        self.iter().map(argmax).collect()
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clip_and_renormalize_examples() {
        assert_eq!(project_to_simplex(&[0.5, 0.5]).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(
            project_to_simplex(&[-0.2, 0.6, 0.6]).unwrap().as_slice(),
            &[0.0, 0.5, 0.5]
        );
        assert_eq!(project_to_simplex(&[-1.0, -1.0]).unwrap().as_slice(), &[0.5, 0.5]);
        assert!(matches!(
            project_to_simplex(&[f64::NAN, 1.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rejects_off_simplex() {
        assert!(PrevalenceVector::new(vec![0.5, 0.6]).is_err());
        assert!(PrevalenceVector::new(vec![-0.1, 1.1]).is_err());
        assert!(PrevalenceVector::new(vec![]).is_err());
        assert!(PrevalenceVector::new(vec![0.3, 0.7 + 5e-10]).is_ok());
    }

    #[test]
    fn euclidean_projection_known_points() {
        assert_eq!(euclidean_projection(&[0.3, 0.7]), vec![0.3, 0.7]);
        assert_eq!(euclidean_projection(&[2.0, 0.0]), vec![1.0, 0.0]);
        let p = euclidean_projection(&[1.0, 1.0, 0.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && p[2] == 0.0);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    proptest! {
        #[test]
        fn clip_projection_idempotent(raw in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            let once = project_to_simplex(&raw).unwrap();
            let twice = project_to_simplex(once.as_slice()).unwrap();
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn euclidean_projection_on_simplex(raw in prop::collection::vec(-5.0f64..5.0, 1..8)) {
            let p = euclidean_projection(&raw);
            prop_assert!(check_simplex(&p).is_ok());
        }
    }
}
