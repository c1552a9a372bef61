use std::path::PathBuf;

use gpuscale::metrics::RunMetrics;
use gpuscale::tradeoff::{build_tradeoff_curve, estimate_carbon, select_optimal_cap};

use crate::canonical::{self, fmt_num};
use crate::commands::load_runs;
use crate::documents::{
    CarbonRow, InputDigest, RunRecord, TradeoffDocument, TradeoffGroup, TradeoffRecord,
    SCHEMA_VERSION, TOOL_VERSION,
};
use crate::error::CliError;
use crate::{write_file, GlobalArgs, Outcome};

fn family_key(r: &RunRecord) -> TradeoffGroup {
    let m = &r.metrics.manifest;
    TradeoffGroup {
        model: m.model_name.clone(),
        num_gpus: m.num_gpus,
        clock_cap_mhz: m.clock_cap_mhz,
        batch_per_gpu: m.per_gpu_batch_size,
    }
}

/// Builds a curve and recommendation for every family of runs sharing
/// model, GPU count, clock cap and batch size. Families without a run at
/// the baseline cap are skipped with a warning.
pub fn analyze(
    runs: &[RunRecord],
    baseline_cap_w: f64,
    max_slowdown: f64,
    carbon_intensity: Option<f64>,
    inputs: Vec<InputDigest>,
) -> Result<TradeoffDocument, CliError> {
    if !(max_slowdown >= 0.0 && max_slowdown.is_finite()) {
        return Err(CliError::Usage(format!(
            "--max-slowdown must be a non-negative number, got {max_slowdown}"
        )));
    }
    if let Some(c) = carbon_intensity {
        if !(c >= 0.0 && c.is_finite()) {
            return Err(CliError::Usage(format!(
                "--carbon-intensity must be a non-negative number, got {c}"
            )));
        }
    }

    let mut families: Vec<(TradeoffGroup, Vec<RunMetrics>)> = Vec::new();
    for r in runs {
        let key = family_key(r);
        match families.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(r.metrics.clone()),
            None => families.push((key, vec![r.metrics.clone()])),
        }
    }
    families.sort_by(|(a, _), (b, _)| {
        a.model
            .cmp(&b.model)
            .then(a.num_gpus.cmp(&b.num_gpus))
            .then(a.clock_cap_mhz.total_cmp(&b.clock_cap_mhz))
            .then(a.batch_per_gpu.cmp(&b.batch_per_gpu))
    });

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for (group, members) in families {
        let label = format!(
            "{}/n{}/{}MHz/b{}",
            group.model,
            group.num_gpus,
            fmt_num(group.clock_cap_mhz),
            group.batch_per_gpu
        );
        if !members
            .iter()
            .any(|m| m.manifest.power_cap_w == baseline_cap_w)
        {
            warnings.push(format!(
                "family {label}: skipped: no run at the {} W baseline cap",
                fmt_num(baseline_cap_w)
            ));
            continue;
        }
        let curve = build_tradeoff_curve(&members, baseline_cap_w)
            .map_err(|e| CliError::Analysis(format!("family {label}: {e}")))?;
        let recommendation = select_optimal_cap(&curve, max_slowdown)
            .map_err(|e| CliError::Analysis(format!("family {label}: {e}")))?;
        if !recommendation.satisfied {
            warnings.push(format!(
                "family {label}: no cap meets the {} slowdown budget",
                fmt_num(max_slowdown)
            ));
        }
        let carbon = match carbon_intensity {
            None => None,
            Some(intensity) => {
                let mut rows = members
                    .iter()
                    .map(|m| {
                        Ok(CarbonRow {
                            power_cap_w: m.manifest.power_cap_w,
                            energy_j: m.total_energy_j,
                            co2_kg: estimate_carbon(m.total_energy_j, intensity)
                                .map_err(|e| CliError::Analysis(format!("family {label}: {e}")))?,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                rows.sort_by(|a, b| b.power_cap_w.total_cmp(&a.power_cap_w));
                Some(rows)
            }
        };
        records.push(TradeoffRecord {
            label,
            group,
            curve,
            recommendation,
            carbon,
        });
    }
    Ok(TradeoffDocument {
        schema_version: SCHEMA_VERSION,
        kind: "tradeoff".into(),
        tool_version: TOOL_VERSION.into(),
        baseline_cap_w,
        max_slowdown,
        carbon_intensity_g_per_kwh: carbon_intensity,
        inputs,
        families: records,
        warnings,
    })
}

pub fn run(
    g: &GlobalArgs,
    metrics: &[PathBuf],
    carbon_intensity: Option<f64>,
) -> Result<Outcome, CliError> {
    let (runs, inputs) = load_runs(metrics)?;
    let doc = analyze(
        &runs,
        g.baseline_cap,
        g.max_slowdown,
        carbon_intensity,
        inputs,
    )?;
    let written = vec![write_file(
        &g.out_dir.join("tradeoff.json"),
        &canonical::to_string(&doc),
    )?];
    Ok(Outcome {
        written,
        warnings: doc.warnings,
    })
}
