use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::PosteriorMatrix;

/// Isotropic Gaussian kernel density estimate over posterior vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianKde {
    points: PosteriorMatrix,
    bandwidth: f64,
}

impl GaussianKde {
    pub fn fit(points: PosteriorMatrix, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::invalid("bandwidth", bandwidth.to_string()));
        }
        if points.is_empty() {
            return Err(Error::Empty("kernel density sample"));
        }
        Ok(Self { points, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn points(&self) -> &PosteriorMatrix {
        &self.points
    }

    fn normalizer(&self) -> f64 {
        let d = self.points.class_count() as f64;
        (2.0 * std::f64::consts::PI * self.bandwidth * self.bandwidth).powf(-d / 2.0) / self.points.rows() as f64
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        let inv = -0.5 / (self.bandwidth * self.bandwidth);
        let sum: f64 = self
            .points
            .iter()
            .map(|c| {
                let d2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (inv * d2).exp()
            })
            .sum();
        sum * self.normalizer()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_is_one_gaussian() {
        let pts = PosteriorMatrix::from_rows(2, &[[0.3, 0.7]]).unwrap();
        let h = 0.1;
        let kde = GaussianKde::fit(pts, h).unwrap();
        let at = |x: [f64; 2]| {
            let d2 = (x[0] - 0.3f64).powi(2) + (x[1] - 0.7f64).powi(2);
            (-d2 / (2.0 * h * h)).exp() / (2.0 * std::f64::consts::PI * h * h)
        };
        for x in [[0.3, 0.7], [0.5, 0.5], [0.0, 1.0]] {
            assert!((kde.density(&x) - at(x)).abs() < 1e-12 * at([0.3, 0.7]));
        }
    }

    #[test]
    fn integrates_to_one_on_the_plane() {
        // the kernel lives in the ambient space; check mass with a 2-d grid
        let pts = PosteriorMatrix::from_rows(2, &[[0.2, 0.8], [0.6, 0.4]]).unwrap();
        let kde = GaussianKde::fit(pts, 0.05).unwrap();
        let step = 0.005;
        let mut mass = 0.0;
        for i in -100..300 {
            for j in -100..300 {
                mass += kde.density(&[i as f64 * step, j as f64 * step]) * step * step;
            }
        }
        assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    }

    #[test]
    fn rejects_bad_bandwidth() {
        let pts = PosteriorMatrix::from_rows(2, &[[0.5, 0.5]]).unwrap();
        assert!(GaussianKde::fit(pts.clone(), 0.0).is_err());
        assert!(GaussianKde::fit(pts, f64::NAN).is_err());
    }
}
