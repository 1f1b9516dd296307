//! Decay-curve fitting, bootstrap error bars, exponential T2 fits and
//! quadratic sensitivity coefficients.
//!
//! The benchmark model is `F(l) = 1/2 + 1/2 (1 - d_if) (1 - 2 E_g)^l`, fitted
//! to per-length mean fidelities weighted by the inverse variance of each
//! mean.

pub mod solver;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateset::Pole;
use crate::rng::{self, stream};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 3 distinct sequence lengths, found {found}")]
    TooFewLengths { found: usize },
    #[error("need at least {needed} points, found {found}")]
    TooFewPoints { needed: usize, found: usize },
    #[error("signal lost: mean fidelity is not above 1/2 at the shortest length")]
    SignalLost,
    #[error("fit did not converge within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("data show no decay; the time constant diverges")]
    NoDecay,
    #[error("fitted coefficient {0:e} is negative")]
    NegativeCoefficient(f64),
    #[error("length {length} has {found} sequences; bootstrap needs at least 2")]
    TooFewSequences { length: usize, found: usize },
    #[error("no {0}-ending sequences to fit")]
    EmptySubset(&'static str),
    #[error("every bootstrap resample failed to fit")]
    BootstrapFailed,
}

/// Outcome of one sequence: `successes` correct results out of `reps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FidelityRecord {
    pub length: usize,
    pub sequence_index: usize,
    pub successes: u32,
    pub reps: u32,
    pub expected: Pole,
}

impl FidelityRecord {
    pub fn success_fraction(&self) -> f64 {
        self.successes as f64 / self.reps as f64
    }
}

/// Per-length summary used by the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthPoint {
    pub length: usize,
    pub sequences: usize,
    pub mean_fidelity: f64,
    /// Standard error of the mean.
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(rename = "epg_per_gate")]
    pub epg: f64,
    #[serde(rename = "dif_probability")]
    pub dif: f64,
    /// Ordered `(d_if, E_g)`.
    #[serde(rename = "covariance_dif_epg")]
    pub covariance: [[f64; 2]; 2],
    #[serde(rename = "bootstrap_se_epg_per_gate")]
    pub bootstrap_se_epg: Option<f64>,
    pub bootstrap_resamples_used: usize,
    pub bootstrap_resamples_skipped: usize,
    pub chi_squared: f64,
    pub degrees_of_freedom: usize,
    pub iterations: usize,
    pub points: Vec<LengthPoint>,
}

impl FitResult {
    pub fn epg_standard_error(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }
}

pub fn decay_model(dif: f64, epg: f64, length: f64) -> f64 {
    0.5 + 0.5 * (1.0 - dif) * (1.0 - 2.0 * epg).powf(length)
}

/// Group by length, in ascending order.
fn by_length(records: &[FidelityRecord]) -> BTreeMap<usize, Vec<&FidelityRecord>> {
    let mut map: BTreeMap<usize, Vec<&FidelityRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.length).or_default().push(r);
    }
    map
}

pub fn length_points(records: &[FidelityRecord]) -> Vec<LengthPoint> {
    by_length(records)
        .into_iter()
        .map(|(length, rs)| {
            let n = rs.len();
            let mean = rs.iter().map(|r| r.success_fraction()).sum::<f64>() / n as f64;
            let var = if n > 1 {
                rs.iter()
                    .map(|r| (r.success_fraction() - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1) as f64
            } else {
                0.0
            };
            LengthPoint {
                length,
                sequences: n,
                mean_fidelity: mean,
                standard_error: (var / n as f64).sqrt(),
            }
        })
        .collect()
}

/// Variance of a per-length mean, floored at a quarter of the squared
/// granularity of the pooled shots so perfect data keep finite weights.
fn mean_variance(p: &LengthPoint, reps: u32) -> f64 {
    let shots = (p.sequences as f64) * reps.max(1) as f64;
    p.standard_error.powi(2).max(0.25 / (shots * shots))
}

fn log_linear_init(points: &[LengthPoint]) -> (f64, f64) {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.mean_fidelity > 0.52)
        .map(|p| (p.length as f64, (2.0 * p.mean_fidelity - 1.0).ln()))
        .collect();
    match usable.len() {
        0 => (0.0, 1e-3),
        1 => (1.0 - usable[0].1.exp(), 1e-4),
        n => {
            let n = n as f64;
            let mx = usable.iter().map(|u| u.0).sum::<f64>() / n;
            let my = usable.iter().map(|u| u.1).sum::<f64>() / n;
            let sxx: f64 = usable.iter().map(|u| (u.0 - mx).powi(2)).sum();
            let sxy: f64 = usable.iter().map(|u| (u.0 - mx) * (u.1 - my)).sum();
            let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            let intercept = my - slope * mx;
            let dif = (1.0 - intercept.exp()).clamp(0.0, 1.0);
            let epg = ((1.0 - slope.exp()) / 2.0).clamp(0.0, 0.5);
            (dif, epg)
        }
    }
}

pub fn fit_decay(records: &[FidelityRecord]) -> Result<FitResult, FitError> {
    let points = length_points(records);
    if points.len() < 3 {
        return Err(FitError::TooFewLengths {
            found: points.len(),
        });
    }
    if points[0].mean_fidelity <= 0.5 {
        return Err(FitError::SignalLost);
    }
    let reps = records.iter().map(|r| r.reps).max().unwrap_or(1);
    let x: Vec<f64> = points.iter().map(|p| p.length as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.mean_fidelity).collect();
    let w: Vec<f64> = points
        .iter()
        .map(|p| 1.0 / mean_variance(p, reps))
        .collect();
    let (d0, e0) = log_linear_init(&points);
    let problem = decay_problem(&x, &y, &w);
    let sol = problem.solve(&[d0, e0])?;
    let cov = &sol.covariance;
    Ok(FitResult {
        dif: sol.params[0],
        epg: sol.params[1],
        covariance: [[cov[0][0], cov[0][1]], [cov[1][0], cov[1][1]]],
        bootstrap_se_epg: None,
        bootstrap_resamples_used: 0,
        bootstrap_resamples_skipped: 0,
        chi_squared: sol.cost,
        degrees_of_freedom: points.len() - 2,
        iterations: sol.iterations,
        points,
    })
}

pub(crate) fn decay_problem<'a>(
    x: &'a [f64],
    y: &'a [f64],
    w: &'a [f64],
) -> solver::Problem<'a, fn(&[f64], f64) -> f64> {
    fn model(p: &[f64], l: f64) -> f64 {
        decay_model(p[0], p[1], l)
    }
    solver::Problem {
        model,
        x,
        y,
        weights: w,
        lower: &[0.0, 0.0],
        upper: &[1.0, 0.5],
        scale: &[1e-2, 1e-3],
    }
}

/// Unweighted fit to every sequence's own success fraction, for
/// diagnostics.
pub fn fit_decay_per_sequence(records: &[FidelityRecord]) -> Result<(f64, f64), FitError> {
    let lengths = by_length(records).len();
    if lengths < 3 {
        return Err(FitError::TooFewLengths { found: lengths });
    }
    let x: Vec<f64> = records.iter().map(|r| r.length as f64).collect();
    let y: Vec<f64> = records.iter().map(|r| r.success_fraction()).collect();
    let w = vec![1.0; x.len()];
    let (d0, e0) = log_linear_init(&length_points(records));
    let sol = decay_problem(&x, &y, &w).solve(&[d0, e0])?;
    Ok((sol.params[0], sol.params[1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSummary {
    pub standard_error: f64,
    pub used: usize,
    pub skipped: usize,
}

/// Resample whole sequences with replacement within each length, refit,
/// and report the spread of the fitted error per gate.
pub fn bootstrap_uncertainty(
    records: &[FidelityRecord],
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapSummary, FitError> {
    let groups: Vec<Vec<FidelityRecord>> = by_length(records)
        .into_values()
        .map(|v| v.into_iter().copied().collect())
        .collect();
    for g in &groups {
        if g.len() < 2 {
            return Err(FitError::TooFewSequences {
                length: g[0].length,
                found: g.len(),
            });
        }
    }
    let fits: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::rng_for(&[seed, stream::BOOTSTRAP, i as u64]);
            let sample: Vec<FidelityRecord> = groups
                .iter()
                .flat_map(|g| {
                    let picks: Vec<FidelityRecord> = (0..g.len())
                        .map(|_| g[rng.random_range(0..g.len())])
                        .collect();
                    picks
                })
                .collect();
            fit_decay(&sample).ok().map(|f| f.epg)
        })
        .collect();
    let ok: Vec<f64> = fits.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(FitError::BootstrapFailed);
    }
    let n = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / n;
    let var = if ok.len() > 1 {
        ok.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(BootstrapSummary {
        standard_error: var.sqrt(),
        used: ok.len(),
        skipped: n_resamples - ok.len(),
    })
}

/// `fit_decay` plus a bootstrap error bar.
pub fn fit_with_bootstrap(
    records: &[FidelityRecord],
    n_resamples: usize,
    seed: u64,
) -> Result<FitResult, FitError> {
    let mut fit = fit_decay(records)?;
    let b = bootstrap_uncertainty(records, n_resamples, seed)?;
    fit.bootstrap_se_epg = Some(b.standard_error);
    fit.bootstrap_resamples_used = b.used;
    fit.bootstrap_resamples_skipped = b.skipped;
    Ok(fit)
}

/// Separate fits for sequences expected to end bright (`|down>`) and dark.
pub fn split_fit_by_target(records: &[FidelityRecord]) -> Result<(FitResult, FitResult), FitError> {
    let (bright, dark): (Vec<FidelityRecord>, Vec<FidelityRecord>) =
        records.iter().partition(|r| r.expected == Pole::Down);
    if bright.is_empty() {
        return Err(FitError::EmptySubset("bright"));
    }
    if dark.is_empty() {
        return Err(FitError::EmptySubset("dark"));
    }
    Ok((fit_decay(&bright)?, fit_decay(&dark)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub amplitude: f64,
    pub t2_s: f64,
    pub t2_standard_error_s: f64,
}

/// Least-squares fit of `y = 1/2 + a exp(-x / T2)`.
pub fn fit_exponential(x: &[f64], y: &[f64]) -> Result<ExponentialFit, FitError> {
    if x.len() < 3 || x.len() != y.len() {
        return Err(FitError::TooFewPoints {
            needed: 3,
            found: x.len().min(y.len()),
        });
    }
    let x_max = x.iter().copied().fold(0.0, f64::max);
    // Initial guess from the log of the excess over 1/2 at the ends.
    let (i0, i1) = (0, x.len() - 1);
    let a0 = (y[i0] - 0.5).max(1e-3);
    let a1 = (y[i1] - 0.5).max(1e-6);
    let span = (x[i1] - x[i0]).abs().max(1e-300);
    let rate0 = ((a0 / a1).ln() / span).max(0.0);
    let w = vec![1.0; x.len()];
    let scale_rate = if x_max > 0.0 { 1.0 / x_max } else { 1.0 };
    let problem = solver::Problem {
        model: |p: &[f64], x: f64| 0.5 + p[0] * (-p[1] * x).exp(),
        x,
        y,
        weights: &w,
        lower: &[-1.0, 0.0],
        upper: &[1.0, f64::INFINITY],
        scale: &[1e-2, scale_rate],
    };
    let sol = problem.solve(&[a0, rate0])?;
    let (amplitude, rate) = (sol.params[0], sol.params[1]);
    if rate * x_max < 1e-9 {
        return Err(FitError::NoDecay);
    }
    // Unit weights: scale the covariance by the residual variance.
    let dof = (x.len() - 2).max(1) as f64;
    let rate_var = sol.covariance[1][1] * sol.cost / dof;
    Ok(ExponentialFit {
        amplitude,
        t2_s: 1.0 / rate,
        t2_standard_error_s: rate_var.max(0.0).sqrt() / (rate * rate),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    #[serde(rename = "epg_per_gate")]
    pub epg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub coefficient: f64,
    /// e.g. `1/Hz^2`.
    pub coefficient_unit: String,
    /// Unit of `SweepPoint::value`.
    pub value_unit: String,
    pub points: Vec<SweepPoint>,
    pub rms_residual: f64,
    pub r_squared: f64,
}

impl SweepResult {
    pub fn with_units(mut self, value_unit: &str, coefficient_unit: &str) -> Self {
        self.value_unit = value_unit.to_string();
        self.coefficient_unit = coefficient_unit.to_string();
        self
    }

    pub fn predict(&self, value: f64) -> f64 {
        self.coefficient * value * value
    }
}

/// Regression of `E_g` on `x^2` through the origin.
pub fn extract_quadratic_coefficient(points: &[(f64, f64)]) -> Result<SweepResult, FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints {
            needed: 3,
            found: points.len(),
        });
    }
    let sxxxx: f64 = points.iter().map(|(x, _)| x.powi(4)).sum();
    let sxxy: f64 = points.iter().map(|(x, y)| x * x * y).sum();
    let coefficient = sxxy / sxxxx;
    if coefficient < 0.0 {
        return Err(FitError::NegativeCoefficient(coefficient));
    }
    let ss_res: f64 = points
        .iter()
        .map(|(x, y)| (y - coefficient * x * x).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|(_, y)| y * y).sum();
    Ok(SweepResult {
        coefficient,
        coefficient_unit: String::new(),
        value_unit: String::new(),
        points: points
            .iter()
            .map(|&(value, epg)| SweepPoint { value, epg })
            .collect(),
        rms_residual: (ss_res / points.len() as f64).sqrt(),
        r_squared: if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateset::PAPER_LENGTHS;

    fn exact_records(dif: f64, epg: f64, reps: u32, per_length: usize) -> Vec<FidelityRecord> {
        // Fractional successes are not representable, so use a large reps
        // count and round; callers use values that round cleanly.
        let mut out = Vec::new();
        for &l in &PAPER_LENGTHS {
            let f = decay_model(dif, epg, l as f64);
            for i in 0..per_length {
                out.push(FidelityRecord {
                    length: l,
                    sequence_index: i,
                    successes: (f * reps as f64).round() as u32,
                    reps,
                    expected: if i % 2 == 0 { Pole::Down } else { Pole::Up },
                });
            }
        }
        out
    }

    #[test]
    fn perfect_data_fit_to_zero() {
        let fit = fit_decay(&exact_records(0.0, 0.0, 100, 4)).unwrap();
        assert_eq!(fit.epg, 0.0);
        assert_eq!(fit.dif, 0.0);
    }

    #[test]
    fn noiseless_model_recovered_to_six_digits() {
        // Exact real-valued fidelities, fitted through the same path.
        let x: Vec<f64> = PAPER_LENGTHS.iter().map(|&l| l as f64).collect();
        let y: Vec<f64> = x.iter().map(|&l| decay_model(0.02, 1e-3, l)).collect();
        let w = vec![1.0; x.len()];
        let sol = decay_problem(&x, &y, &w).solve(&[0.0, 1e-4]).unwrap();
        assert!(
            (sol.params[1] / 1e-3 - 1.0).abs() < 1e-6,
            "{}",
            sol.params[1]
        );
        assert!((sol.params[0] / 0.02 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn numeric_jacobian_matches_analytic() {
        let x: Vec<f64> = PAPER_LENGTHS.iter().map(|&l| l as f64).collect();
        let y = vec![0.0; x.len()];
        let w = vec![1.0; x.len()];
        let problem = decay_problem(&x, &y, &w);
        for &(d, e) in &[(0.027, 2e-5), (0.0, 1e-3), (0.1, 1e-4), (0.01, 0.0)] {
            let jac = problem.jacobian(&[d, e]);
            for (row, &l) in jac.iter().zip(&x) {
                let q: f64 = 1.0 - 2.0 * e;
                let dd = -0.5 * q.powf(l);
                let de = -(1.0 - d) * l * q.powf(l - 1.0);
                assert!((row[0] - dd).abs() <= 1e-7 * dd.abs(), "{l}");
                assert!((row[1] - de).abs() <= 1e-7 * de.abs().max(1e-300), "{l}");
            }
        }
    }

    #[test]
    fn preconditions() {
        let recs = exact_records(0.0, 0.0, 100, 2);
        let two: Vec<_> = recs.iter().filter(|r| r.length <= 3).copied().collect();
        assert_eq!(fit_decay(&two), Err(FitError::TooFewLengths { found: 2 }));
        let lost = exact_records(0.0, 0.5, 100, 2);
        assert_eq!(fit_decay(&lost), Err(FitError::SignalLost));
    }

    #[test]
    fn bootstrap_zero_variance() {
        let b = bootstrap_uncertainty(&exact_records(0.02, 1e-4, 100, 5), 50, 1).unwrap();
        assert!(b.standard_error < 1e-15, "{}", b.standard_error);
        assert_eq!(b.used, 50);
    }

    #[test]
    fn bootstrap_needs_two_sequences() {
        let recs = exact_records(0.0, 0.0, 100, 1);
        assert!(matches!(
            bootstrap_uncertainty(&recs, 10, 1),
            Err(FitError::TooFewSequences { .. })
        ));
    }

    #[test]
    fn split_requires_both_targets() {
        let recs: Vec<_> = exact_records(0.0, 0.0, 100, 2)
            .into_iter()
            .filter(|r| r.expected == Pole::Down)
            .collect();
        assert_eq!(
            split_fit_by_target(&recs),
            Err(FitError::EmptySubset("dark"))
        );
    }

    #[test]
    fn exponential_self_consistency() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = x.iter().map(|&t| 0.5 + 0.5 * (-t / 0.38).exp()).collect();
        let fit = fit_exponential(&x, &y).unwrap();
        assert!((fit.t2_s / 0.38 - 1.0).abs() < 1e-6, "{}", fit.t2_s);
        assert!((fit.amplitude - 0.5).abs() < 1e-6);
    }

    #[test]
    fn flat_data_has_no_decay() {
        let x = [0.0, 0.05, 0.1];
        assert_eq!(
            fit_exponential(&x, &[1.0, 1.0, 1.0]),
            Err(FitError::NoDecay)
        );
        assert!(matches!(
            fit_exponential(&x[..2], &[1.0, 1.0]),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn quadratic_regression_identity() {
        let pts: Vec<(f64, f64)> = [5.0, 10.0, 15.0, 20.0, 25.0, 50.0]
            .iter()
            .map(|&d| (d, 1.91e-8 * d * d))
            .collect();
        let s = extract_quadratic_coefficient(&pts).unwrap();
        assert!((s.coefficient / 1.91e-8 - 1.0).abs() < 1e-14);
        assert!(s.rms_residual < 1e-20);
        assert!((s.predict(25.0) - 1.19375e-5).abs() < 1e-18);
    }

    #[test]
    fn negative_coefficient_flagged() {
        let pts = [(1.0, -1.0), (2.0, -4.0), (3.0, -9.0)];
        assert!(matches!(
            extract_quadratic_coefficient(&pts),
            Err(FitError::NegativeCoefficient(_))
        ));
    }

    #[test]
    fn fit_result_json_names_units() {
        let fit = fit_decay(&exact_records(0.0, 0.0, 100, 2)).unwrap();
        let json = serde_json::to_string(&fit).unwrap();
        assert!(json.contains("\"epg_per_gate\"") && json.contains("\"dif_probability\""));
    }
}
