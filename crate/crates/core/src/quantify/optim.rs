//! Projected-gradient minimization over the probability simplex.

use crate::error::{Error, Result};
use crate::simplex::{euclidean_projection, PrevalenceVector};

/// Iteration stops once an update moves the iterate less than this (L2).
pub const MOVE_TOL: f64 = 1e-10;
pub const MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub point: PrevalenceVector,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub enum StepRule {
    /// Constant step, valid when it is at most the inverse Lipschitz
    /// constant of the gradient.
    Fixed(f64),
    /// Backtracking on the projected-gradient sufficient-decrease test,
    /// starting from the given step.
    Backtracking(f64),
}

/// Minimizes a smooth convex function over the simplex from the uniform
/// point; returns the best iterate seen.
pub fn minimize_on_simplex<F, G>(n: usize, objective: F, gradient: G, rule: StepRule) -> SimplexSolution
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    let mut p = vec![1.0 / n as f64; n];
    let mut f = objective(&p);
    let mut best = (p.clone(), f);
    let mut g = vec![0.0; n];
    let mut step = match rule {
        StepRule::Fixed(s) | StepRule::Backtracking(s) => s,
    };
    let mut trial = vec![0.0; n];
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        gradient(&p, &mut g);
        let (next, f_next) = match rule {
            StepRule::Fixed(s) => {
                trial.iter_mut().zip(&p).zip(&g).for_each(|((t, pi), gi)| *t = pi - s * gi);
                let next = euclidean_projection(&trial);
                let fv = objective(&next);
                (next, fv)
            }
            StepRule::Backtracking(_) => {
                step *= 2.0;
                loop {
                    trial.iter_mut().zip(&p).zip(&g).for_each(|((t, pi), gi)| *t = pi - step * gi);
                    let next = euclidean_projection(&trial);
                    let fv = objective(&next);
                    let (mut lin, mut sq) = (0.0, 0.0);
                    for i in 0..n {
                        let d = next[i] - p[i];
                        lin += g[i] * d;
                        sq += d * d;
                    }
                    if fv <= f + lin + sq / (2.0 * step) || step < 1e-30 {
                        break (next, fv);
                    }
                    step *= 0.5;
                }
            }
        };
        let moved = p.iter().zip(&next).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        p = next;
        f = f_next;
        if f < best.1 {
            best = (p.clone(), f);
        }
        if moved < MOVE_TOL {
            break;
        }
    }
    SimplexSolution {
        point: PrevalenceVector::from_unchecked(best.0),
        objective: best.1,
        iterations,
    }
}

/// `||t - M p||^2` for a row-major square `M`.
pub fn least_squares_objective(m: &[Vec<f64>], t: &[f64], p: &[f64]) -> f64 {
    m.iter()
        .zip(t)
        .map(|(row, ti)| {
            let r = row.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - ti;
            r * r
        })
        .sum()
}

/// `argmin_{p in simplex} ||t - M p||^2` by projected gradient with the
/// fixed step `1 / ||M||_F^2`.
pub fn solve_least_squares_simplex(m: &[Vec<f64>], t: &[f64]) -> Result<SimplexSolution> {
    let n = t.len();
    if n == 0 {
        return Err(Error::Empty("target vector"));
    }
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("matrix is not {n}x{n}")));
    }
    if t.iter().chain(m.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("least-squares system"));
    }
    let frob: f64 = m.iter().flatten().map(|v| v * v).sum();
    if frob == 0.0 {
        return Ok(SimplexSolution {
            point: PrevalenceVector::uniform(n),
            objective: least_squares_objective(m, t, &vec![1.0 / n as f64; n]),
            iterations: 0,
        });
    }
    // gradient of half the objective; its Lipschitz constant is at most ||M||_F^2
    let grad = |p: &[f64], g: &mut [f64]| {
        let r: Vec<f64> = m
            .iter()
            .zip(t)
            .map(|(row, ti)| row.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - ti)
            .collect();
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = m.iter().zip(&r).map(|(row, ri)| row[j] * ri).sum();
        }
    };
    Ok(minimize_on_simplex(
        n,
        |p| least_squares_objective(m, t, p),
        grad,
        StepRule::Fixed(1.0 / frob),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn identity_system() {
        let m = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let s = solve_least_squares_simplex(&m, &[0.3, 0.7]).unwrap();
        assert!(close(s.point.as_slice(), &[0.3, 0.7], 1e-9));
    }

    #[test]
    fn symmetric_fixed_point() {
        let m = vec![vec![0.9, 0.1], vec![0.1, 0.9]];
        let s = solve_least_squares_simplex(&m, &[0.5, 0.5]).unwrap();
        assert!(close(s.point.as_slice(), &[0.5, 0.5], 1e-12));
    }

    #[test]
    fn asymmetric_exact_solution() {
        // 0.8 * 0.5 + 0.3 * 0.5 = 0.55
        let m = vec![vec![0.8, 0.3], vec![0.2, 0.7]];
        let t = [0.55, 0.45];
        let s = solve_least_squares_simplex(&m, &t).unwrap();
        assert!(close(s.point.as_slice(), &[0.5, 0.5], 1e-8), "{:?}", s.point);
        // grid oracle over p1 in [0, 1], step 1e-4
        let (mut best_p, mut best_f) = (0.0, f64::INFINITY);
        for i in 0..=10_000 {
            let p0 = i as f64 * 1e-4;
            let f = least_squares_objective(&m, &t, &[p0, 1.0 - p0]);
            if f < best_f {
                best_f = f;
                best_p = p0;
            }
        }
        assert!((best_p - 0.5).abs() < 1e-9);
        assert!(s.objective <= best_f + 1e-12);
    }

    #[test]
    fn infeasible_target_lands_on_boundary() {
        let m = vec![vec![0.8, 0.3], vec![0.2, 0.7]];
        let s = solve_least_squares_simplex(&m, &[0.95, 0.05]).unwrap();
        assert!(close(s.point.as_slice(), &[1.0, 0.0], 1e-9));
    }

    #[test]
    fn rejects_non_finite() {
        let m = vec![vec![f64::NAN, 0.0], vec![0.0, 1.0]];
        assert!(solve_least_squares_simplex(&m, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn backtracking_minimizes_quadratic() {
        let target = [0.2, 0.5, 0.3];
        let s = minimize_on_simplex(
            3,
            |p| p.iter().zip(&target).map(|(a, b)| 50.0 * (a - b) * (a - b)).sum(),
            |p, g| g.iter_mut().enumerate().for_each(|(i, gi)| *gi = 100.0 * (p[i] - target[i])),
            StepRule::Backtracking(1.0),
        );
        assert!(close(s.point.as_slice(), &target, 1e-8));
    }
}
