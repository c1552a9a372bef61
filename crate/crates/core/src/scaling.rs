//! Power-law model of epoch time against GPU count,
//! `t = alpha * N^(-beta)`, fitted by ordinary least squares on
//! `ln t = ln alpha - beta * ln N`.
//!
//! `beta` is reported positive: a slope of `-0.82` on log-log axes is a
//! scaling exponent of `0.82`. Logarithms are natural throughout.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod reference;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("need at least {needed} distinct GPU counts, got {found}")]
    TooFewGpuCounts { needed: usize, found: usize },
    #[error("epoch time must be positive and finite, got {0}")]
    NonPositiveTime(f64),
    #[error("GPU count must be at least 1")]
    ZeroGpuCount,
    #[error("no measurement at {0} GPUs")]
    MissingGpuCount(u32),
    #[error("relative residual threshold must be positive, got {0}")]
    BadThreshold(f64),
}

/// One observation: mean (or single) epoch time at a GPU count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub num_gpus: u32,
    pub epoch_time_s: f64,
}

impl ScalingPoint {
    pub fn new(num_gpus: u32, epoch_time_s: f64) -> Self {
        ScalingPoint {
            num_gpus,
            epoch_time_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Epoch time at one GPU, in seconds.
    pub alpha: f64,
    pub beta: f64,
    pub beta_stderr: f64,
    /// Standard error of the intercept `ln alpha`.
    pub alpha_log_stderr: f64,
    /// Coefficient of determination on the log-log data. Zero for a flat
    /// response.
    pub r_squared: f64,
    pub n_points: usize,
    pub n_min: u32,
    pub n_max: u32,
}

fn validate(points: &[ScalingPoint], needed: usize) -> Result<usize, ScalingError> {
    for p in points {
        if p.num_gpus == 0 {
            return Err(ScalingError::ZeroGpuCount);
        }
        if !(p.epoch_time_s > 0.0 && p.epoch_time_s.is_finite()) {
            return Err(ScalingError::NonPositiveTime(p.epoch_time_s));
        }
    }
    let mut counts: Vec<u32> = points.iter().map(|p| p.num_gpus).collect();
    counts.sort_unstable();
    counts.dedup();
    if counts.len() < needed {
        return Err(ScalingError::TooFewGpuCounts {
            needed,
            found: counts.len(),
        });
    }
    Ok(counts.len())
}

/// Least-squares fit of `ln t` on `ln N`.
///
/// Every point is one observation; replicates at the same `N` are not
/// averaged (see [`collapse_replicates`] for that). Requires at least three
/// distinct GPU counts.
pub fn fit_power_law(points: &[ScalingPoint]) -> Result<PowerLawFit, ScalingError> {
    validate(points, 3)?;
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| f64::from(p.num_gpus).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.epoch_time_s.ln()).collect();

    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }

    let n_min = points.iter().map(|p| p.num_gpus).min().unwrap_or(0);
    let n_max = points.iter().map(|p| p.num_gpus).max().unwrap_or(0);

    let flat = points
        .iter()
        .all(|p| p.epoch_time_s == points[0].epoch_time_s);
    if flat {
        return Ok(PowerLawFit {
            alpha: points[0].epoch_time_s,
            beta: 0.0,
            beta_stderr: 0.0,
            alpha_log_stderr: 0.0,
            r_squared: 0.0,
            n_points: points.len(),
            n_min,
            n_max,
        });
    }

    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let (mut sse, mut sst) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let r = y - (intercept + slope * x);
        sse += r * r;
        sst += (y - y_mean) * (y - y_mean);
    }
    let sigma2 = sse / (n - 2.0);
    let beta_stderr = (sigma2 / sxx).sqrt();
    let alpha_log_stderr = (sigma2 * (1.0 / n + x_mean * x_mean / sxx)).sqrt();
    let r_squared = if sst > 0.0 { 1.0 - sse / sst } else { 0.0 };

    Ok(PowerLawFit {
        alpha: intercept.exp(),
        beta: -slope,
        beta_stderr,
        alpha_log_stderr,
        r_squared,
        n_points: points.len(),
        n_min,
        n_max,
    })
}

/// Replaces replicate observations at each GPU count with their arithmetic
/// mean. Output is sorted by GPU count.
pub fn collapse_replicates(points: &[ScalingPoint]) -> Vec<ScalingPoint> {
    let mut groups: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for p in points {
        let g = groups.entry(p.num_gpus).or_insert((0.0, 0));
        g.0 += p.epoch_time_s;
        g.1 += 1;
    }
    groups
        .into_iter()
        .map(|(n, (sum, count))| ScalingPoint::new(n, sum / count as f64))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub epoch_time_s: f64,
    /// `n` lies outside the fitted GPU range.
    pub extrapolated: bool,
}

pub fn predict_epoch_time(fit: &PowerLawFit, n: u32) -> Result<Prediction, ScalingError> {
    if n == 0 {
        return Err(ScalingError::ZeroGpuCount);
    }
    Ok(Prediction {
        epoch_time_s: fit.alpha * f64::from(n).powf(-fit.beta),
        extrapolated: n < fit.n_min || n > fit.n_max,
    })
}

/// Where epoch times for a speedup come from.
#[derive(Debug, Clone, Copy)]
pub enum SpeedupSource<'a> {
    /// Model predictions.
    Fit(&'a PowerLawFit),
    /// Measured times; replicates at a GPU count are averaged.
    Measured(&'a [ScalingPoint]),
}

/// `t(n_base) / t(n_target)`.
pub fn speedup(source: SpeedupSource<'_>, n_base: u32, n_target: u32) -> Result<f64, ScalingError> {
    if n_base == 0 || n_target == 0 {
        return Err(ScalingError::ZeroGpuCount);
    }
    match source {
        // alpha cancels; evaluate the ratio directly so ideal scaling is exact.
        SpeedupSource::Fit(fit) => Ok((f64::from(n_target) / f64::from(n_base)).powf(fit.beta)),
        SpeedupSource::Measured(points) => {
            let mean_at = |n: u32| {
                let (sum, count) = points
                    .iter()
                    .filter(|p| p.num_gpus == n)
                    .fold((0.0, 0usize), |(s, c), p| (s + p.epoch_time_s, c + 1));
                if count == 0 {
                    Err(ScalingError::MissingGpuCount(n))
                } else {
                    Ok(sum / count as f64)
                }
            };
            Ok(mean_at(n_base)? / mean_at(n_target)?)
        }
    }
}

/// Default relative residual threshold for [`detect_saturation_knee`].
pub const DEFAULT_KNEE_THRESHOLD: f64 = 0.25;

fn relative_residual(fit: &PowerLawFit, p: &ScalingPoint) -> f64 {
    let predicted = fit.alpha * f64::from(p.num_gpus).powf(-fit.beta);
    (p.epoch_time_s - predicted).abs() / predicted
}

/// Finds the GPU count beyond which epoch times stop following the power law.
///
/// Fits are made on growing prefixes of the distinct GPU counts, starting
/// with the smallest three. The prefix keeps growing while its own fit keeps
/// every member within `threshold` relative residual and the next GPU count
/// is also predicted within `threshold`. The knee is the largest GPU count of
/// the last good prefix whose successor falls outside. Returns `None` when
/// every point agrees with the fit on the full domain.
pub fn detect_saturation_knee(
    points: &[ScalingPoint],
    threshold: f64,
) -> Result<Option<u32>, ScalingError> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(ScalingError::BadThreshold(threshold));
    }
    validate(points, 4)?;
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.num_gpus);
    let mut counts: Vec<u32> = sorted.iter().map(|p| p.num_gpus).collect();
    counts.dedup();

    let full = fit_power_law(&sorted)?;
    if sorted
        .iter()
        .all(|p| relative_residual(&full, p) <= threshold)
    {
        return Ok(None);
    }

    for k in 3..counts.len() {
        let last_in_prefix = counts[k - 1];
        let prefix: Vec<ScalingPoint> = sorted
            .iter()
            .copied()
            .filter(|p| p.num_gpus <= last_in_prefix)
            .collect();
        let fit = fit_power_law(&prefix)?;
        if prefix
            .iter()
            .any(|p| relative_residual(&fit, p) > threshold)
        {
            return Ok(None);
        }
        let next = counts[k];
        let next_exceeds = sorted
            .iter()
            .filter(|p| p.num_gpus == next)
            .any(|p| relative_residual(&fit, p) > threshold);
        if next_exceeds {
            return Ok(Some(last_in_prefix));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitComparison {
    /// `a.beta - b.beta`.
    pub delta_beta: f64,
    pub combined_stderr: f64,
    /// `|delta_beta| > 2 * combined_stderr`.
    pub significant: bool,
}

pub fn compare_fits(a: &PowerLawFit, b: &PowerLawFit) -> FitComparison {
    let delta_beta = a.beta - b.beta;
    let combined_stderr = a.beta_stderr.hypot(b.beta_stderr);
    FitComparison {
        delta_beta,
        combined_stderr,
        significant: delta_beta.abs() > 2.0 * combined_stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn law(alpha: f64, beta: f64, ns: &[u32]) -> Vec<ScalingPoint> {
        ns.iter()
            .map(|&n| ScalingPoint::new(n, alpha * f64::from(n).powf(-beta)))
            .collect()
    }

    fn powers_of_two(max: u32) -> Vec<u32> {
        (1..).map(|k| 1u32 << k).take_while(|&n| n <= max).collect()
    }

    #[test]
    fn ideal_scaling_fit() {
        let fit = fit_power_law(&law(100.0, 1.0, &[2, 4, 8, 16])).unwrap();
        assert!((fit.beta - 1.0).abs() < 1e-12);
        assert!((fit.alpha - 100.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.beta_stderr < 1e-12);
        assert_eq!((fit.n_points, fit.n_min, fit.n_max), (4, 2, 16));
    }

    #[test]
    fn flat_response() {
        let fit = fit_power_law(&law(50.0, 0.0, &[2, 4, 8])).unwrap();
        assert_eq!(fit.beta, 0.0);
        assert_eq!(fit.alpha, 50.0);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn fit_preconditions() {
        assert_eq!(
            fit_power_law(&law(1.0, 1.0, &[2, 4])).unwrap_err(),
            ScalingError::TooFewGpuCounts {
                needed: 3,
                found: 2
            }
        );
        let mut pts = law(1.0, 1.0, &[2, 4, 8]);
        pts.push(ScalingPoint::new(2, 0.5));
        assert_eq!(
            fit_power_law(&[pts[0], pts[3], pts[1]]).unwrap_err(),
            ScalingError::TooFewGpuCounts {
                needed: 3,
                found: 2
            }
        );
        pts[1].epoch_time_s = -1.0;
        assert_eq!(
            fit_power_law(&pts).unwrap_err(),
            ScalingError::NonPositiveTime(-1.0)
        );
        pts[1] = ScalingPoint::new(0, 1.0);
        assert_eq!(fit_power_law(&pts).unwrap_err(), ScalingError::ZeroGpuCount);
    }

    #[test]
    fn replicates_enter_individually() {
        // Two replicates symmetric in log space around the law leave the fit unchanged
        // but add residual variance.
        let mut pts = law(100.0, 0.5, &[2, 4, 8, 16]);
        let base = pts[1].epoch_time_s;
        pts[1].epoch_time_s = base * 1.1;
        pts.push(ScalingPoint::new(4, base / 1.1));
        let fit = fit_power_law(&pts).unwrap();
        assert_eq!(fit.n_points, 5);
        assert!((fit.beta - 0.5).abs() < 1e-12);
        assert!(fit.beta_stderr > 0.0);

        let collapsed = collapse_replicates(&pts);
        assert_eq!(collapsed.len(), 4);
        assert!((collapsed[1].epoch_time_s - base * (1.1 + 1.0 / 1.1) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn stderr_matches_textbook_formula() {
        // Hand-computed in units of ln 2: x = 0, 1, 2 and y = 0, -1, -3.
        // slope -1.5, intercept 1/6, residuals -1/6, 1/3, -1/6, SSE = 1/6,
        // sigma^2 = 1/6, Sxx = 2, so se(slope) = sqrt(1/12) independent of units.
        let ns = [1u32, 2, 4];
        let ts = [1.0f64, 0.5, 0.125];
        let pts: Vec<_> = ns
            .iter()
            .zip(ts)
            .map(|(&n, t)| ScalingPoint::new(n, t))
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        let l2 = 2f64.ln();
        assert!((fit.beta - 1.5).abs() < 1e-12);
        assert!((fit.beta_stderr - (1.0f64 / 12.0).sqrt()).abs() < 1e-12);
        let se_intercept = ((l2 * l2 / 6.0) * (1.0 / 3.0 + 1.0 / 2.0)).sqrt();
        assert!((fit.alpha_log_stderr - se_intercept).abs() < 1e-12);
        // SST = l2^2 * (0 + 1 + 9 - 16/3) = l2^2 * 14/3.
        assert!((fit.r_squared - (1.0 - (1.0 / 6.0) / (14.0 / 3.0))).abs() < 1e-12);
    }

    #[test]
    fn prediction() {
        let fit = fit_power_law(&law(100.0, 1.0, &[2, 4, 8, 16])).unwrap();
        let p = predict_epoch_time(&fit, 4).unwrap();
        assert!((p.epoch_time_s - 25.0).abs() < 1e-10);
        assert!(!p.extrapolated);
        assert!(predict_epoch_time(&fit, 64).unwrap().extrapolated);
        assert!(predict_epoch_time(&fit, 1).unwrap().extrapolated);
        assert_eq!(
            predict_epoch_time(&fit, 0).unwrap_err(),
            ScalingError::ZeroGpuCount
        );

        let flat = fit_power_law(&law(100.0, 0.0, &[2, 4, 8])).unwrap();
        assert_eq!(predict_epoch_time(&flat, 37).unwrap().epoch_time_s, 100.0);
    }

    #[test]
    fn speedups() {
        let ideal = PowerLawFit {
            alpha: 100.0,
            beta: 1.0,
            beta_stderr: 0.0,
            alpha_log_stderr: 0.0,
            r_squared: 1.0,
            n_points: 4,
            n_min: 2,
            n_max: 16,
        };
        assert_eq!(speedup(SpeedupSource::Fit(&ideal), 2, 256).unwrap(), 128.0);
        let none = PowerLawFit { beta: 0.0, ..ideal };
        assert_eq!(speedup(SpeedupSource::Fit(&none), 3, 300).unwrap(), 1.0);

        let pts = [
            ScalingPoint::new(2, 100.0),
            ScalingPoint::new(8, 20.0),
            ScalingPoint::new(8, 30.0),
        ];
        assert_eq!(speedup(SpeedupSource::Measured(&pts), 2, 8).unwrap(), 4.0);
        assert_eq!(
            speedup(SpeedupSource::Measured(&pts), 2, 4).unwrap_err(),
            ScalingError::MissingGpuCount(4)
        );
    }

    #[test]
    fn knee_on_pure_law_is_none() {
        let pts = law(1000.0, 0.42, &powers_of_two(512));
        assert_eq!(
            detect_saturation_knee(&pts, DEFAULT_KNEE_THRESHOLD).unwrap(),
            None
        );
    }

    #[test]
    fn knee_at_flat_floor() {
        let floor = 1000.0 * 64f64.powf(-0.42);
        let pts: Vec<_> = powers_of_two(512)
            .into_iter()
            .map(|n| {
                let t = if n > 64 {
                    floor
                } else {
                    1000.0 * f64::from(n).powf(-0.42)
                };
                ScalingPoint::new(n, t)
            })
            .collect();
        assert_eq!(
            detect_saturation_knee(&pts, DEFAULT_KNEE_THRESHOLD).unwrap(),
            Some(64)
        );
    }

    #[test]
    fn knee_preconditions() {
        let pts = law(1.0, 1.0, &[2, 4, 8, 16]);
        assert_eq!(
            detect_saturation_knee(&pts, 0.0).unwrap_err(),
            ScalingError::BadThreshold(0.0)
        );
        assert!(matches!(
            detect_saturation_knee(&pts[..3], 0.25).unwrap_err(),
            ScalingError::TooFewGpuCounts {
                needed: 4,
                found: 3
            }
        ));
    }

    #[test]
    fn compare_reference_exponents() {
        let fit = |beta, se| PowerLawFit {
            alpha: 1.0,
            beta,
            beta_stderr: se,
            alpha_log_stderr: 0.0,
            r_squared: 1.0,
            n_points: 3,
            n_min: 2,
            n_max: 8,
        };
        let c = compare_fits(&fit(0.82, 0.03), &fit(0.42, 0.05));
        assert!((c.delta_beta - 0.40).abs() < 1e-12);
        assert!((c.combined_stderr - 0.0034f64.sqrt()).abs() < 1e-12);
        assert!((c.combined_stderr - 0.058).abs() < 5e-4);
        assert!(c.significant);

        let same = compare_fits(&fit(0.5, 0.02), &fit(0.5, 0.02));
        assert_eq!(same.delta_beta, 0.0);
        assert!(!same.significant);
    }

    proptest! {
        #[test]
        fn noiseless_round_trip(alpha in 0.01f64..1e5, beta in 0.0f64..1.2) {
            prop_assume!(beta > 1e-6);
            let fit = fit_power_law(&law(alpha, beta, &powers_of_two(512))).unwrap();
            prop_assert!((fit.beta - beta).abs() < 1e-9);
            prop_assert!(((fit.alpha - alpha) / alpha).abs() < 1e-9);
            prop_assert!((fit.r_squared - 1.0).abs() < 1e-9);
        }

        #[test]
        fn time_unit_covariance(ts in proptest::collection::vec(0.1f64..1000.0, 5), k in 0.001f64..1000.0) {
            let ns = [2u32, 4, 8, 16, 32];
            let pts: Vec<_> = ns.iter().zip(&ts).map(|(&n, &t)| ScalingPoint::new(n, t)).collect();
            let scaled: Vec<_> = pts.iter().map(|p| ScalingPoint::new(p.num_gpus, p.epoch_time_s * k)).collect();
            let a = fit_power_law(&pts).unwrap();
            let b = fit_power_law(&scaled).unwrap();
            prop_assert!(((b.alpha - k * a.alpha) / (k * a.alpha)).abs() < 1e-9);
            prop_assert!((a.beta - b.beta).abs() < 1e-9);
            prop_assert!((a.beta_stderr - b.beta_stderr).abs() < 1e-9);
            prop_assert!((a.r_squared - b.r_squared).abs() < 1e-9);
        }

        #[test]
        fn relabeling_gpu_counts(beta in 0.05f64..1.2, q in 1u32..4) {
            // Observations at N^q carrying the times measured at N.
            let ns = [2u32, 3, 4, 5, 6];
            let pts = law(100.0, beta, &ns);
            let relabeled: Vec<_> = pts.iter().map(|p| ScalingPoint::new(p.num_gpus.pow(q), p.epoch_time_s)).collect();
            let fit = fit_power_law(&relabeled).unwrap();
            prop_assert!((fit.beta - beta / f64::from(q)).abs() < 1e-9);
        }

        #[test]
        fn log_residuals_sum_to_zero(ts in proptest::collection::vec(0.1f64..1000.0, 6)) {
            let ns = [2u32, 4, 4, 16, 64, 128];
            let pts: Vec<_> = ns.iter().zip(&ts).map(|(&n, &t)| ScalingPoint::new(n, t)).collect();
            let fit = fit_power_law(&pts).unwrap();
            prop_assume!(fit.beta != 0.0 || fit.r_squared != 0.0);
            let sum: f64 = pts.iter()
                .map(|p| p.epoch_time_s.ln() - predict_epoch_time(&fit, p.num_gpus).unwrap().epoch_time_s.ln())
                .sum();
            prop_assert!(sum.abs() < 1e-9);
        }

        #[test]
        fn speedup_chains(beta in 0.0f64..1.5, a in 1u32..1000, b in 1u32..1000, c in 1u32..1000) {
            let fit = PowerLawFit { alpha: 1.0, beta, beta_stderr: 0.0, alpha_log_stderr: 0.0, r_squared: 1.0, n_points: 3, n_min: 1, n_max: 1000 };
            let s = |x, y| speedup(SpeedupSource::Fit(&fit), x, y).unwrap();
            let chained = s(a, b) * s(b, c);
            prop_assert!((chained - s(a, c)).abs() <= 1e-12 * s(a, c));
        }
    }
}
