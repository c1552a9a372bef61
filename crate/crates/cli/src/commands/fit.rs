use std::path::PathBuf;

use gpuscale::scaling::{collapse_replicates, detect_saturation_knee, fit_power_law, ScalingPoint};

use crate::canonical;
use crate::commands::load_runs;
use crate::documents::{
    FitRecord, FitsDocument, GroupKey, InputDigest, RunRecord, SCHEMA_VERSION, TOOL_VERSION,
};
use crate::error::CliError;
use crate::{write_file, GlobalArgs, GroupField, Outcome};

pub fn group_key(run: &RunRecord, fields: &[GroupField]) -> GroupKey {
    let m = &run.metrics.manifest;
    let mut key = GroupKey::default();
    for f in fields {
        match f {
            GroupField::Model => key.model = Some(m.model_name.clone()),
            GroupField::Domain => key.domain = Some(m.domain_tag),
            GroupField::PowerCap => key.power_cap_w = Some(m.power_cap_w),
            GroupField::ClockCap => key.clock_cap_mhz = Some(m.clock_cap_mhz),
            GroupField::Batch => key.batch_per_gpu = Some(m.per_gpu_batch_size),
        }
    }
    key
}

/// Groups runs, sorted by key. Runs keep their input order within a group.
pub fn group_runs<'a>(
    runs: &'a [RunRecord],
    fields: &[GroupField],
) -> Vec<(GroupKey, Vec<&'a RunRecord>)> {
    let mut groups: Vec<(GroupKey, Vec<&RunRecord>)> = Vec::new();
    for run in runs {
        let key = group_key(run, fields);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(run),
            None => groups.push((key, vec![run])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp_key(&b.0));
    groups
}

/// Fits every group with at least three distinct GPU counts; the rest are
/// reported in `warnings`.
pub fn fit_groups(
    runs: &[RunRecord],
    fields: &[GroupField],
    collapse: bool,
    knee_threshold: f64,
    inputs: Vec<InputDigest>,
) -> Result<FitsDocument, CliError> {
    if knee_threshold.is_nan() || knee_threshold <= 0.0 {
        return Err(CliError::Usage(format!(
            "knee threshold must be positive, got {knee_threshold}"
        )));
    }
    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    for (group, members) in group_runs(runs, fields) {
        let label = group.label();
        let mut points: Vec<ScalingPoint> = members
            .iter()
            .flat_map(|r| {
                let n = r.metrics.manifest.num_gpus;
                r.metrics
                    .epochs
                    .iter()
                    .map(move |e| ScalingPoint::new(n, e.wall_time_s))
            })
            .collect();
        if collapse {
            points = collapse_replicates(&points);
        } else {
            points.sort_by_key(|p| p.num_gpus);
        }
        let fit = match fit_power_law(&points) {
            Ok(fit) => fit,
            Err(e) => {
                warnings.push(format!("group {label}: skipped: {e}"));
                continue;
            }
        };
        let knee_gpus = detect_saturation_knee(&points, knee_threshold)
            .ok()
            .flatten();
        let pre_knee_fit = knee_gpus.and_then(|k| {
            let prefix: Vec<_> = points.iter().copied().filter(|p| p.num_gpus <= k).collect();
            fit_power_law(&prefix).ok()
        });
        let mut run_labels: Vec<String> = members.iter().map(|r| r.label.clone()).collect();
        run_labels.sort();
        fits.push(FitRecord {
            label,
            group,
            fit,
            points,
            runs: run_labels,
            knee_gpus,
            pre_knee_fit,
        });
    }
    Ok(FitsDocument {
        schema_version: SCHEMA_VERSION,
        kind: "fits".into(),
        tool_version: TOOL_VERSION.into(),
        group_by: fields.iter().map(|f| f.name().to_string()).collect(),
        collapse_replicates: collapse,
        knee_threshold,
        inputs,
        fits,
        warnings,
    })
}

pub fn run(
    g: &GlobalArgs,
    metrics: &[PathBuf],
    group_by: &[GroupField],
    knee_threshold: f64,
) -> Result<Outcome, CliError> {
    let mut fields = group_by.to_vec();
    fields.dedup();
    let (runs, inputs) = load_runs(metrics)?;
    let doc = fit_groups(
        &runs,
        &fields,
        g.collapse_replicates,
        knee_threshold,
        inputs,
    )?;
    let written = vec![write_file(
        &g.out_dir.join("fits.json"),
        &canonical::to_string(&doc),
    )?];
    Ok(Outcome {
        written,
        warnings: doc.warnings,
    })
}
