//! Damped Gauss-Newton (Levenberg-Marquardt) for small weighted
//! least-squares problems with box bounds and numeric derivatives.

use super::FitError;

pub const STEP_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;

pub struct Problem<'a, F: Fn(&[f64], f64) -> f64> {
    pub model: F,
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Inverse variances.
    pub weights: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    /// Typical magnitude of each parameter; sets the difference step.
    pub scale: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub params: Vec<f64>,
    /// `(J^T W J)^-1` at the optimum.
    pub covariance: Vec<Vec<f64>>,
    /// Weighted sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
}

impl<F: Fn(&[f64], f64) -> f64> Problem<'_, F> {
    fn cost(&self, p: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .zip(self.weights)
            .map(|((&x, &y), &w)| w * (y - (self.model)(p, x)).powi(2))
            .sum()
    }

    fn project(&self, p: &mut [f64]) {
        for (j, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    /// Central-difference Jacobian, one row per data point.
    pub fn jacobian(&self, p: &[f64]) -> Vec<Vec<f64>> {
        let n = p.len();
        // Cube root of machine epsilon balances truncation and rounding.
        let h = f64::EPSILON.cbrt();
        let steps: Vec<f64> = (0..n).map(|j| h * p[j].abs().max(self.scale[j])).collect();
        self.x
            .iter()
            .map(|&x| {
                (0..n)
                    .map(|j| {
                        let mut hi = p.to_vec();
                        let mut lo = p.to_vec();
                        hi[j] += steps[j];
                        lo[j] -= steps[j];
                        ((self.model)(&hi, x) - (self.model)(&lo, x)) / (2.0 * steps[j])
                    })
                    .collect()
            })
            .collect()
    }

    fn normal_equations(&self, p: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = p.len();
        let jac = self.jacobian(p);
        let mut a = vec![vec![0.0; n]; n];
        let mut g = vec![0.0; n];
        for (i, row) in jac.iter().enumerate() {
            let w = self.weights[i];
            let r = self.y[i] - (self.model)(p, self.x[i]);
            for j in 0..n {
                g[j] += w * row[j] * r;
                for k in 0..n {
                    a[j][k] += w * row[j] * row[k];
                }
            }
        }
        (a, g)
    }

    pub fn solve(&self, init: &[f64]) -> Result<Solution, FitError> {
        let mut p = init.to_vec();
        self.project(&mut p);
        let mut cost = self.cost(&p);
        let mut lambda = 1e-3;
        for iter in 1..=MAX_ITERATIONS {
            if cost == 0.0 {
                return Ok(self.finish(p, cost, iter));
            }
            let (a, g) = self.normal_equations(&p);
            loop {
                let mut damped = a.clone();
                for (j, row) in damped.iter_mut().enumerate() {
                    row[j] += lambda * a[j][j].max(1e-300);
                }
                let Some(delta) = solve_linear(damped, g.clone()) else {
                    lambda *= 10.0;
                    if lambda > 1e20 {
                        return Err(FitError::NonConvergence { iterations: iter });
                    }
                    continue;
                };
                let mut trial: Vec<f64> = p.iter().zip(&delta).map(|(a, b)| a + b).collect();
                self.project(&mut trial);
                let trial_cost = self.cost(&trial);
                if trial_cost.is_finite() && trial_cost <= cost {
                    let step = trial
                        .iter()
                        .zip(&p)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    p = trial;
                    cost = trial_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    if step < STEP_TOLERANCE {
                        return Ok(self.finish(p, cost, iter));
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > 1e20 {
                    // No downhill direction left: we are at the optimum to
                    // working precision.
                    return Ok(self.finish(p, cost, iter));
                }
            }
        }
        Err(FitError::NonConvergence {
            iterations: MAX_ITERATIONS,
        })
    }

    fn finish(&self, params: Vec<f64>, cost: f64, iterations: usize) -> Solution {
        let (a, _) = self.normal_equations(&params);
        let n = params.len();
        let covariance = invert(&a).unwrap_or_else(|| vec![vec![f64::NAN; n]; n]);
        Solution {
            params,
            covariance,
            cost,
            iterations,
        }
    }
}

/// Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let (upper, lower) = a.split_at_mut(row);
            for (x, &p) in lower[0][col..].iter_mut().zip(&upper[col][col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e: Vec<f64> = (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect();
        cols.push(solve_linear(a.to_vec(), e)?);
    }
    Some(
        (0..n)
            .map(|i| (0..n).map(|j| cols[j][i]).collect())
            .collect(),
    )
}
