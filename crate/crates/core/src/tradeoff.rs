//! Power-cap trade-off curves, energy-optimal cap selection under a
//! slowdown budget, and carbon estimates from energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{normalize_runs, Baseline, MetricsError, RunMetrics};

/// Slowdown budget used when none is given.
pub const DEFAULT_MAX_SLOWDOWN: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TradeoffError {
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("trade-off curve is empty")]
    EmptyCurve,
    #[error("maximum slowdown must be a non-negative number, got {0}")]
    BadSlowdown(f64),
    #[error("{name} must be a non-negative number, got {value}")]
    NegativeInput { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub power_cap_w: f64,
    /// Baseline epoch time over this cap's epoch time.
    pub relative_speed: f64,
    /// This cap's total energy over the baseline's.
    pub relative_energy: f64,
}

impl TradeoffPoint {
    pub fn slowdown(&self) -> f64 {
        1.0 - self.relative_speed
    }

    fn is_baseline(&self) -> bool {
        self.relative_speed == 1.0 && self.relative_energy == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapRecommendation {
    pub chosen_cap_w: f64,
    /// `1 - relative_energy`; negative when the cap costs energy.
    pub energy_saving_fraction: f64,
    /// `1 - relative_speed`; negative when the cap trains faster.
    pub slowdown_fraction: f64,
    /// Whether the chosen cap meets the slowdown budget.
    pub satisfied: bool,
}

/// Normalizes a family of runs that differ only in power cap against the
/// run at `baseline_cap_w`. Points are sorted by descending cap.
pub fn build_tradeoff_curve(
    runs: &[RunMetrics],
    baseline_cap_w: f64,
) -> Result<Vec<TradeoffPoint>, TradeoffError> {
    let mut curve: Vec<TradeoffPoint> = normalize_runs(runs, Baseline::PowerCap(baseline_cap_w))?
        .into_iter()
        .map(|p| TradeoffPoint {
            power_cap_w: p.axis_value,
            relative_speed: p.relative_speed,
            relative_energy: p.relative_energy,
        })
        .collect();
    curve.sort_by(|a, b| b.power_cap_w.total_cmp(&a.power_cap_w));
    Ok(curve)
}

/// Picks the cap with the lowest relative energy among those whose slowdown
/// is within `max_slowdown`, preferring the lower cap on ties.
///
/// The baseline point (relative speed and energy both exactly 1) has zero
/// slowdown and therefore always qualifies. When no point qualifies the
/// baseline, or failing that the highest cap, is returned with
/// `satisfied = false`.
pub fn select_optimal_cap(
    curve: &[TradeoffPoint],
    max_slowdown: f64,
) -> Result<CapRecommendation, TradeoffError> {
    if curve.is_empty() {
        return Err(TradeoffError::EmptyCurve);
    }
    if max_slowdown.is_nan() || max_slowdown < 0.0 {
        return Err(TradeoffError::BadSlowdown(max_slowdown));
    }
    let best = curve
        .iter()
        .filter(|p| p.slowdown() <= max_slowdown)
        .min_by(|a, b| {
            a.relative_energy
                .total_cmp(&b.relative_energy)
                .then(a.power_cap_w.total_cmp(&b.power_cap_w))
        });
    let (point, satisfied) = match best {
        Some(p) => (p, true),
        None => {
            let fallback = curve.iter().find(|p| p.is_baseline()).unwrap_or_else(|| {
                curve
                    .iter()
                    .max_by(|a, b| a.power_cap_w.total_cmp(&b.power_cap_w))
                    .expect("curve is non-empty")
            });
            (fallback, false)
        }
    };
    Ok(CapRecommendation {
        chosen_cap_w: point.power_cap_w,
        energy_saving_fraction: 1.0 - point.relative_energy,
        slowdown_fraction: point.slowdown(),
        satisfied,
    })
}

const JOULES_PER_KWH: f64 = 3.6e6;

/// Kilograms of CO2 for `energy_j` joules at a grid intensity in grams per kWh.
pub fn estimate_carbon(energy_j: f64, intensity_g_per_kwh: f64) -> Result<f64, TradeoffError> {
    for (name, value) in [
        ("energy", energy_j),
        ("carbon intensity", intensity_g_per_kwh),
    ] {
        if value.is_nan() || value < 0.0 {
            return Err(TradeoffError::NegativeInput { name, value });
        }
    }
    Ok(energy_j / JOULES_PER_KWH * intensity_g_per_kwh / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pt(cap: f64, speed: f64, energy: f64) -> TradeoffPoint {
        TradeoffPoint {
            power_cap_w: cap,
            relative_speed: speed,
            relative_energy: energy,
        }
    }

    fn canonical() -> Vec<TradeoffPoint> {
        vec![
            pt(250.0, 1.0, 1.0),
            pt(200.0, 0.97, 0.88),
            pt(100.0, 0.65, 0.80),
        ]
    }

    #[test]
    fn five_percent_budget_picks_200() {
        let rec = select_optimal_cap(&canonical(), 0.05).unwrap();
        assert_eq!(rec.chosen_cap_w, 200.0);
        assert!((rec.energy_saving_fraction - 0.12).abs() < 1e-12);
        assert!((rec.slowdown_fraction - 0.03).abs() < 1e-12);
        assert!(rec.satisfied);
    }

    #[test]
    fn half_budget_picks_100() {
        let rec = select_optimal_cap(&canonical(), 0.50).unwrap();
        assert_eq!(rec.chosen_cap_w, 100.0);
        assert!((rec.energy_saving_fraction - 0.20).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_falls_to_baseline() {
        let rec = select_optimal_cap(&canonical(), 0.0).unwrap();
        assert_eq!(rec.chosen_cap_w, 250.0);
        assert_eq!(rec.energy_saving_fraction, 0.0);
        assert!(rec.satisfied);
    }

    #[test]
    fn faster_caps_always_qualify() {
        let curve = vec![pt(250.0, 1.0, 1.0), pt(200.0, 1.02, 0.9)];
        let rec = select_optimal_cap(&curve, 0.0).unwrap();
        assert_eq!(rec.chosen_cap_w, 200.0);
        assert!(rec.slowdown_fraction < 0.0);
    }

    #[test]
    fn ties_prefer_lower_cap() {
        let curve = vec![
            pt(250.0, 1.0, 1.0),
            pt(200.0, 0.99, 0.9),
            pt(150.0, 0.99, 0.9),
        ];
        assert_eq!(
            select_optimal_cap(&curve, 0.05).unwrap().chosen_cap_w,
            150.0
        );
    }

    #[test]
    fn unsatisfiable_without_baseline_point() {
        let curve = vec![pt(200.0, 0.9, 0.8), pt(100.0, 0.6, 0.7)];
        let rec = select_optimal_cap(&curve, 0.0).unwrap();
        assert!(!rec.satisfied);
        assert_eq!(rec.chosen_cap_w, 200.0);
    }

    #[test]
    fn selector_errors() {
        assert_eq!(
            select_optimal_cap(&[], 0.05).unwrap_err(),
            TradeoffError::EmptyCurve
        );
        assert!(matches!(
            select_optimal_cap(&canonical(), -0.1).unwrap_err(),
            TradeoffError::BadSlowdown(_)
        ));
    }

    #[test]
    fn carbon() {
        assert!((estimate_carbon(3.6e6, 400.0).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(estimate_carbon(0.0, 400.0).unwrap(), 0.0);
        assert!(estimate_carbon(-1.0, 400.0).is_err());
        assert!(estimate_carbon(1.0, -400.0).is_err());
    }

    #[test]
    fn intensity_matching_reported_rate() {
        // 128 GPUs at 250 W for one hour: 115.2 MJ, i.e. 32 kWh.
        let energy_j = 128.0 * 250.0 * 3600.0;
        assert!((energy_j / JOULES_PER_KWH - 32.0).abs() < 1e-12);
        let intensity: f64 = 22.0 * 1000.0 / 32.0;
        assert_eq!(intensity, 687.5);
        assert!((estimate_carbon(energy_j, intensity).unwrap() - 22.0).abs() < 1e-9);
    }

    fn arb_curve() -> impl Strategy<Value = Vec<TradeoffPoint>> {
        proptest::collection::vec((50.0f64..300.0, 0.3f64..1.2, 0.3f64..1.5), 1..10).prop_map(|v| {
            let mut seen = Vec::new();
            v.into_iter()
                .filter(|(c, _, _)| {
                    let c = c.round();
                    if seen.contains(&c) {
                        false
                    } else {
                        seen.push(c);
                        true
                    }
                })
                .map(|(c, s, e)| pt(c.round(), s, e))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn relaxing_budget_never_costs_energy(curve in arb_curve(), a in 0.0f64..0.8, b in 0.0f64..0.8) {
            let (tight, loose) = if a < b { (a, b) } else { (b, a) };
            let t = select_optimal_cap(&curve, tight).unwrap();
            let l = select_optimal_cap(&curve, loose).unwrap();
            if t.satisfied {
                prop_assert!(l.satisfied);
                prop_assert!(1.0 - l.energy_saving_fraction <= 1.0 - t.energy_saving_fraction + 1e-15);
            }
        }

        #[test]
        fn carbon_is_linear(e in 0.0f64..1e9, g in 0.0f64..1000.0, k in 0.0f64..10.0) {
            let base = estimate_carbon(e, g).unwrap();
            prop_assert!((estimate_carbon(k * e, g).unwrap() - k * base).abs() <= 1e-9 * (k * base).max(1e-12));
            prop_assert!((estimate_carbon(e, k * g).unwrap() - k * base).abs() <= 1e-9 * (k * base).max(1e-12));
        }
    }
}
