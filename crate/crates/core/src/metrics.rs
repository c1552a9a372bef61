//! Per-epoch and per-run aggregation: wall time, energy, utilization means
//! and coefficients of variation, and normalization of run families against
//! a baseline run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{group_by_gpu, EpochWindow, RunManifest, TelemetrySample};
use crate::Validation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no samples available for the GPU")]
    NoSamples,
    #[error("gpu {gpu_id}, epoch {epoch}: window extends {uncovered_s} s beyond sampled span (sampling gap {gap_s} s)")]
    WindowOutsideSpan {
        gpu_id: u32,
        epoch: u32,
        uncovered_s: f64,
        gap_s: f64,
    },
    #[error("series is empty")]
    EmptySeries,
    #[error("coefficient of variation undefined for zero mean")]
    UndefinedCv,
    #[error("gpu {gpu_id} has no samples inside epoch {epoch}")]
    MissingGpuSamples { gpu_id: u32, epoch: u32 },
    #[error("manifest declares {expected} GPUs but telemetry has {found}")]
    GpuCountMismatch { expected: u32, found: usize },
    #[error("epoch {0} has no samples from any GPU")]
    NoSamplesInWindow(u32),
    #[error("run has no epochs")]
    NoEpochs,
    #[error("baseline run not present")]
    MissingBaseline,
    #[error("{0} runs match the baseline; expected exactly one")]
    AmbiguousBaseline(usize),
    #[error("runs differ in `{0}`, which is not the normalization axis")]
    MixedRuns(&'static str),
}

/// How energy over a window is computed from a power trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMethod {
    /// Trapezoidal integral of the sampled power, holding the nearest sample
    /// constant past either end of the trace.
    #[default]
    Trapezoid,
    /// Mean in-window power times wall time.
    MeanPower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AggregationOptions {
    pub energy: EnergyMethod,
    pub validation: Validation,
}

/// Result of integrating one GPU's power over one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub joules: f64,
    /// Seconds the window reaches past the sampled span, when that exceeds
    /// the largest sampling gap; zero otherwise. Only non-zero in lenient
    /// mode.
    pub excess_uncovered_s: f64,
}

fn max_gap(samples: &[TelemetrySample]) -> f64 {
    samples
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .fold(0.0, f64::max)
}

fn interpolate(a: &TelemetrySample, b: &TelemetrySample, t: f64) -> f64 {
    if t <= a.timestamp {
        return a.power_draw;
    }
    if t >= b.timestamp {
        return b.power_draw;
    }
    a.power_draw + (b.power_draw - a.power_draw) * (t - a.timestamp) / (b.timestamp - a.timestamp)
}

/// Trapezoidal integral of `power_draw` over `[start, end]`.
fn trapezoid(samples: &[TelemetrySample], start: f64, end: f64) -> f64 {
    let first = &samples[0];
    let last = &samples[samples.len() - 1];
    let mut total = 0.0;

    if start < first.timestamp {
        total += first.power_draw * (end.min(first.timestamp) - start);
    }
    // First segment whose right end lies after `start`.
    let from = samples.partition_point(|s| s.timestamp <= start).max(1);
    for i in from..samples.len() {
        let (a, b) = (&samples[i - 1], &samples[i]);
        if a.timestamp >= end {
            break;
        }
        let lo = start.max(a.timestamp);
        let hi = end.min(b.timestamp);
        if hi > lo {
            total += 0.5 * (interpolate(a, b, lo) + interpolate(a, b, hi)) * (hi - lo);
        }
    }
    if end > last.timestamp {
        total += last.power_draw * (end - start.max(last.timestamp));
    }
    total
}

/// Energy drawn by one GPU over `window`, in joules.
///
/// `samples` must be one GPU's stream in increasing time order. For a
/// constant power `P` the result is `P * (end - start)`.
pub fn integrate_energy(
    samples: &[TelemetrySample],
    window: &EpochWindow,
    options: AggregationOptions,
) -> Result<Energy, MetricsError> {
    let (first, last) = match (samples.first(), samples.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(MetricsError::NoSamples),
    };
    let gap = max_gap(samples);
    let uncovered = (first.timestamp - window.start)
        .max(window.end - last.timestamp)
        .max(0.0);
    let excess = if uncovered > gap { uncovered } else { 0.0 };
    if excess > 0.0 && options.validation == Validation::Strict {
        return Err(MetricsError::WindowOutsideSpan {
            gpu_id: first.gpu_id,
            epoch: window.epoch_index,
            uncovered_s: uncovered,
            gap_s: gap,
        });
    }

    let joules = match options.energy {
        EnergyMethod::Trapezoid => trapezoid(samples, window.start, window.end),
        EnergyMethod::MeanPower => {
            let mut acc = RunningStats::default();
            samples
                .iter()
                .filter(|s| window.contains(s.timestamp))
                .for_each(|s| acc.push(s.power_draw));
            if acc.count == 0 {
                return Err(MetricsError::MissingGpuSamples {
                    gpu_id: first.gpu_id,
                    epoch: window.epoch_index,
                });
            }
            acc.mean * window.duration()
        }
    };
    Ok(Energy {
        joules,
        excess_uncovered_s: excess,
    })
}

/// Single-pass (Welford) mean and population variance.
#[derive(Debug, Clone, Copy, Default)]
struct RunningStats {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn population_std(&self) -> f64 {
        (self.m2 / self.count as f64).max(0.0).sqrt()
    }

    fn cv(&self) -> Result<f64, MetricsError> {
        if self.count == 0 {
            return Err(MetricsError::EmptySeries);
        }
        if self.mean == 0.0 {
            return Err(MetricsError::UndefinedCv);
        }
        Ok(self.population_std() / self.mean)
    }
}

/// Population standard deviation divided by the mean.
pub fn coefficient_of_variation(series: &[f64]) -> Result<f64, MetricsError> {
    let mut acc = RunningStats::default();
    series.iter().for_each(|&x| acc.push(x));
    acc.cv()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpuEpochStats {
    pub gpu_id: u32,
    pub samples: usize,
    pub energy_j: f64,
    pub mean_sm_util: Option<f64>,
    pub mean_mem_util: Option<f64>,
    pub cv_sm_util: Option<f64>,
    pub cv_mem_util: Option<f64>,
}

/// Aggregates for one epoch. Utilization statistics pool the in-window
/// samples of every GPU; `per_gpu` keeps the per-worker breakdown.
///
/// A CV is `None` when the pooled mean is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch_index: u32,
    pub wall_time_s: f64,
    pub energy_j: f64,
    pub mean_sm_util: f64,
    pub mean_mem_util: f64,
    pub cv_sm_util: Option<f64>,
    pub cv_mem_util: Option<f64>,
    #[serde(default)]
    pub per_gpu: Vec<GpuEpochStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn optional_cv(acc: &RunningStats) -> Option<f64> {
    acc.cv().ok()
}

/// Aggregates one epoch from per-GPU sample streams.
///
/// In strict mode the number of streams must equal `expected_gpus` and every
/// stream needs at least one sample inside the window (`start <= t < end`).
/// Lenient mode records those conditions as warnings instead.
pub fn epoch_metrics(
    streams: &BTreeMap<u32, Vec<TelemetrySample>>,
    window: &EpochWindow,
    expected_gpus: u32,
    options: AggregationOptions,
) -> Result<EpochMetrics, MetricsError> {
    let strict = options.validation == Validation::Strict;
    let mut warnings = Vec::new();
    if streams.len() != expected_gpus as usize {
        let err = MetricsError::GpuCountMismatch {
            expected: expected_gpus,
            found: streams.len(),
        };
        if strict {
            return Err(err);
        }
        warnings.push(format!("epoch {}: {err}", window.epoch_index));
    }

    let mut pooled_sm = RunningStats::default();
    let mut pooled_mem = RunningStats::default();
    let mut energy_j = 0.0;
    let mut per_gpu = Vec::with_capacity(streams.len());

    for (&gpu_id, samples) in streams {
        let mut sm = RunningStats::default();
        let mut mem = RunningStats::default();
        for s in samples.iter().filter(|s| window.contains(s.timestamp)) {
            sm.push(s.sm_utilization);
            mem.push(s.memory_utilization);
            pooled_sm.push(s.sm_utilization);
            pooled_mem.push(s.memory_utilization);
        }
        if sm.count == 0 {
            let err = MetricsError::MissingGpuSamples {
                gpu_id,
                epoch: window.epoch_index,
            };
            if strict {
                return Err(err);
            }
            warnings.push(err.to_string());
        }

        let energy = match integrate_energy(samples, window, options) {
            Ok(e) => e,
            Err(e @ MetricsError::MissingGpuSamples { .. }) => {
                // Mean-power mode has nothing to average; fall back to the trace.
                warnings.push(format!("{e}; energy taken from the trapezoidal trace"));
                integrate_energy(
                    samples,
                    window,
                    AggregationOptions {
                        energy: EnergyMethod::Trapezoid,
                        ..options
                    },
                )?
            }
            Err(e) => return Err(e),
        };
        if energy.excess_uncovered_s > 0.0 {
            warnings.push(format!(
                "gpu {gpu_id}, epoch {}: {} s of the window lie beyond the sampled span",
                window.epoch_index, energy.excess_uncovered_s
            ));
        }
        energy_j += energy.joules;

        let present = sm.count > 0;
        per_gpu.push(GpuEpochStats {
            gpu_id,
            samples: sm.count,
            energy_j: energy.joules,
            mean_sm_util: present.then_some(sm.mean),
            mean_mem_util: present.then_some(mem.mean),
            cv_sm_util: optional_cv(&sm),
            cv_mem_util: optional_cv(&mem),
        });
    }

    if pooled_sm.count == 0 {
        return Err(MetricsError::NoSamplesInWindow(window.epoch_index));
    }

    Ok(EpochMetrics {
        epoch_index: window.epoch_index,
        wall_time_s: window.duration(),
        energy_j,
        mean_sm_util: pooled_sm.mean,
        mean_mem_util: pooled_mem.mean,
        cv_sm_util: optional_cv(&pooled_sm),
        cv_mem_util: optional_cv(&pooled_mem),
        per_gpu,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub manifest: RunManifest,
    pub epochs: Vec<EpochMetrics>,
    pub mean_epoch_time_s: f64,
    pub total_energy_j: f64,
}

impl RunMetrics {
    pub fn from_epochs(
        manifest: RunManifest,
        epochs: Vec<EpochMetrics>,
    ) -> Result<Self, MetricsError> {
        if epochs.is_empty() {
            return Err(MetricsError::NoEpochs);
        }
        let mean_epoch_time_s =
            epochs.iter().map(|e| e.wall_time_s).sum::<f64>() / epochs.len() as f64;
        let total_energy_j = epochs.iter().map(|e| e.energy_j).sum();
        Ok(RunMetrics {
            manifest,
            epochs,
            mean_epoch_time_s,
            total_energy_j,
        })
    }

    pub fn warnings(&self) -> impl Iterator<Item = &str> {
        self.epochs
            .iter()
            .flat_map(|e| e.warnings.iter().map(String::as_str))
    }
}

/// Aggregates a whole run: demultiplexes the samples by GPU and computes one
/// [`EpochMetrics`] per window.
pub fn run_metrics(
    manifest: RunManifest,
    samples: &[TelemetrySample],
    windows: &[EpochWindow],
    options: AggregationOptions,
) -> Result<RunMetrics, MetricsError> {
    let streams = group_by_gpu(samples);
    let epochs = windows
        .iter()
        .map(|w| epoch_metrics(&streams, w, manifest.num_gpus, options))
        .collect::<Result<Vec<_>, _>>()?;
    RunMetrics::from_epochs(manifest, epochs)
}

/// Which run of a family is the reference, and thereby which manifest field
/// is allowed to vary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Run with the fewest GPUs; the family varies `num_gpus`.
    SmallestGpuCount,
    /// Run at this power cap in watts; the family varies `power_cap_w`.
    PowerCap(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub label: String,
    /// GPU count or power cap, depending on the baseline kind.
    pub axis_value: f64,
    /// Baseline mean epoch time divided by this run's.
    pub relative_speed: f64,
    /// This run's total energy divided by the baseline's.
    pub relative_energy: f64,
}

fn check_shared_fields(runs: &[RunMetrics], baseline: Baseline) -> Result<(), MetricsError> {
    let Some(first) = runs.first().map(|r| &r.manifest) else {
        return Ok(());
    };
    for run in &runs[1..] {
        let m = &run.manifest;
        if m.model_name != first.model_name {
            return Err(MetricsError::MixedRuns("model"));
        }
        if m.clock_cap_mhz != first.clock_cap_mhz {
            return Err(MetricsError::MixedRuns("clock_cap_mhz"));
        }
        if m.per_gpu_batch_size != first.per_gpu_batch_size {
            return Err(MetricsError::MixedRuns("batch_per_gpu"));
        }
        match baseline {
            Baseline::SmallestGpuCount if m.power_cap_w != first.power_cap_w => {
                return Err(MetricsError::MixedRuns("power_cap_w"))
            }
            Baseline::PowerCap(_) if m.num_gpus != first.num_gpus => {
                return Err(MetricsError::MixedRuns("num_gpus"))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Expresses every run's speed and energy relative to the baseline run.
///
/// Points come back ordered by increasing axis value; the baseline maps to
/// `(1, 1)`.
pub fn normalize_runs(
    runs: &[RunMetrics],
    baseline: Baseline,
) -> Result<Vec<NormalizedPoint>, MetricsError> {
    check_shared_fields(runs, baseline)?;

    let axis = |r: &RunMetrics| match baseline {
        Baseline::SmallestGpuCount => f64::from(r.manifest.num_gpus),
        Baseline::PowerCap(_) => r.manifest.power_cap_w,
    };
    let target = match baseline {
        Baseline::SmallestGpuCount => runs
            .iter()
            .map(axis)
            .min_by(f64::total_cmp)
            .ok_or(MetricsError::MissingBaseline)?,
        Baseline::PowerCap(cap) => cap,
    };
    let matches: Vec<&RunMetrics> = runs.iter().filter(|r| axis(r) == target).collect();
    let base = match matches.as_slice() {
        [] => return Err(MetricsError::MissingBaseline),
        [one] => *one,
        many => return Err(MetricsError::AmbiguousBaseline(many.len())),
    };

    let mut points: Vec<NormalizedPoint> = runs
        .iter()
        .map(|r| {
            let is_base = std::ptr::eq(r, base);
            let value = axis(r);
            NormalizedPoint {
                label: match baseline {
                    Baseline::SmallestGpuCount => format!("{} GPUs", r.manifest.num_gpus),
                    Baseline::PowerCap(_) => format!("{value} W"),
                },
                axis_value: value,
                relative_speed: if is_base {
                    1.0
                } else {
                    base.mean_epoch_time_s / r.mean_epoch_time_s
                },
                relative_energy: if is_base {
                    1.0
                } else {
                    r.total_energy_j / base.total_energy_j
                },
            }
        })
        .collect();
    points.sort_by(|a, b| a.axis_value.total_cmp(&b.axis_value));
    Ok(points)
}
