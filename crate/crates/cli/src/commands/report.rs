use std::path::{Path, PathBuf};

use gpuscale::metrics::{normalize_runs, Baseline, RunMetrics};
use gpuscale::scaling::predict_epoch_time;

use crate::canonical::{self, fmt_num};
use crate::commands::fit::group_runs;
use crate::documents::{
    read_document, FitsDocument, InputDigest, MetricsDocument, ReportDocument, TradeoffDocument,
    SCHEMA_VERSION, TOOL_VERSION,
};
use crate::error::CliError;
use crate::{write_file, GlobalArgs, GroupField, Outcome};

fn digest_of<T: serde::Serialize>(name: &str, doc: &T) -> InputDigest {
    InputDigest {
        name: name.into(),
        sha256: canonical::sha256_hex(canonical::to_string(doc).as_bytes()),
    }
}

/// Assembles a report. Input digests are taken over the canonical form of
/// each embedded document, so a report rebuilt from its own contents is
/// byte-identical.
pub fn build(
    metrics: Option<MetricsDocument>,
    fits: Option<FitsDocument>,
    tradeoff: Option<TradeoffDocument>,
) -> Result<ReportDocument, CliError> {
    if metrics.is_none() && fits.is_none() && tradeoff.is_none() {
        return Err(CliError::Usage(
            "report needs at least one of --fits, --tradeoff, --metrics or --from-report".into(),
        ));
    }
    let mut inputs = Vec::new();
    let mut warnings = Vec::new();
    if let Some(d) = &metrics {
        inputs.push(digest_of("metrics", d));
        warnings.extend(d.warnings.iter().cloned());
    }
    if let Some(d) = &fits {
        inputs.push(digest_of("fits", d));
        warnings.extend(d.warnings.iter().cloned());
    }
    if let Some(d) = &tradeoff {
        inputs.push(digest_of("tradeoff", d));
        warnings.extend(d.warnings.iter().cloned());
    }
    Ok(ReportDocument {
        schema_version: SCHEMA_VERSION,
        kind: "report".into(),
        tool_version: TOOL_VERSION.into(),
        inputs,
        metrics,
        fits,
        tradeoff,
        warnings,
    })
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.write_record(row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

/// Fitted and measured epoch time per group on a log-friendly grid: every
/// measured GPU count plus every power of two inside the fitted range.
pub fn scaling_curves_csv(fits: &FitsDocument) -> String {
    let mut rows = Vec::new();
    for rec in &fits.fits {
        let mut grid: Vec<u32> = rec.points.iter().map(|p| p.num_gpus).collect();
        let mut p2 = 1u32;
        while p2 <= rec.fit.n_max {
            if p2 >= rec.fit.n_min {
                grid.push(p2);
            }
            match p2.checked_mul(2) {
                Some(next) => p2 = next,
                None => break,
            }
        }
        grid.sort_unstable();
        grid.dedup();
        for n in grid {
            let fitted = predict_epoch_time(&rec.fit, n)
                .map(|p| p.epoch_time_s)
                .unwrap_or(f64::NAN);
            let at_n: Vec<f64> = rec
                .points
                .iter()
                .filter(|p| p.num_gpus == n)
                .map(|p| p.epoch_time_s)
                .collect();
            let measured = if at_n.is_empty() {
                String::new()
            } else {
                fmt_num(at_n.iter().sum::<f64>() / at_n.len() as f64)
            };
            rows.push(vec![
                rec.label.clone(),
                n.to_string(),
                fmt_num(fitted),
                measured,
            ]);
        }
    }
    csv_string(
        &[
            "group",
            "num_gpus",
            "fitted_epoch_time_s",
            "measured_epoch_time_s",
        ],
        rows,
    )
}

pub fn tradeoff_csv(doc: &TradeoffDocument) -> String {
    let mut rows = Vec::new();
    for fam in &doc.families {
        for p in &fam.curve {
            rows.push(vec![
                fam.label.clone(),
                fmt_num(p.power_cap_w),
                fmt_num(p.relative_speed),
                fmt_num(p.relative_energy),
                (p.power_cap_w == fam.recommendation.chosen_cap_w).to_string(),
            ]);
        }
    }
    csv_string(
        &[
            "family",
            "power_cap_w",
            "relative_speed",
            "relative_energy",
            "recommended",
        ],
        rows,
    )
}

/// Speed and energy relative to the fewest-GPU run of each
/// (model, power cap, clock cap) group.
pub fn normalized_csv(doc: &MetricsDocument) -> (String, Vec<String>) {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let fields = [
        GroupField::Model,
        GroupField::PowerCap,
        GroupField::ClockCap,
        GroupField::Batch,
    ];
    for (key, members) in group_runs(&doc.runs, &fields) {
        let runs: Vec<RunMetrics> = members.iter().map(|r| r.metrics.clone()).collect();
        match normalize_runs(&runs, Baseline::SmallestGpuCount) {
            Ok(points) => {
                for p in points {
                    rows.push(vec![
                        key.label(),
                        fmt_num(p.axis_value),
                        fmt_num(p.relative_speed),
                        fmt_num(p.relative_energy),
                    ]);
                }
            }
            Err(e) => warnings.push(format!("normalized curve for {}: {e}", key.label())),
        }
    }
    (
        csv_string(
            &["group", "num_gpus", "relative_speed", "relative_energy"],
            rows,
        ),
        warnings,
    )
}

pub fn utilization_csv(doc: &MetricsDocument) -> String {
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    let mut rows = Vec::new();
    for run in &doc.runs {
        for e in &run.metrics.epochs {
            rows.push(vec![
                run.label.clone(),
                run.metrics.manifest.num_gpus.to_string(),
                e.epoch_index.to_string(),
                fmt_num(e.mean_sm_util),
                opt(e.cv_sm_util),
                fmt_num(e.mean_mem_util),
                opt(e.cv_mem_util),
            ]);
        }
    }
    csv_string(
        &[
            "run",
            "num_gpus",
            "epoch",
            "mean_sm_util",
            "cv_sm_util",
            "mean_mem_util",
            "cv_mem_util",
        ],
        rows,
    )
}

pub fn run(
    g: &GlobalArgs,
    fits: Option<&Path>,
    tradeoff: Option<&Path>,
    metrics: Option<&Path>,
    from_report: Option<&Path>,
) -> Result<Outcome, CliError> {
    let report = match from_report {
        Some(path) => {
            let (old, _): (ReportDocument, _) = read_document(path)?;
            build(old.metrics, old.fits, old.tradeoff)?
        }
        None => {
            let metrics = metrics
                .map(read_document::<MetricsDocument>)
                .transpose()?
                .map(|d| d.0);
            let fits = fits
                .map(read_document::<FitsDocument>)
                .transpose()?
                .map(|d| d.0);
            let tradeoff = tradeoff
                .map(read_document::<TradeoffDocument>)
                .transpose()?
                .map(|d| d.0);
            build(metrics, fits, tradeoff)?
        }
    };

    let out = &g.out_dir;
    let mut written: Vec<PathBuf> = vec![write_file(
        &out.join("report.json"),
        &canonical::to_string(&report),
    )?];
    let mut warnings = report.warnings.clone();
    if let Some(f) = &report.fits {
        written.push(write_file(
            &out.join("scaling_curves.csv"),
            &scaling_curves_csv(f),
        )?);
    }
    if let Some(t) = &report.tradeoff {
        written.push(write_file(&out.join("tradeoff.csv"), &tradeoff_csv(t))?);
    }
    if let Some(m) = &report.metrics {
        let (csv, w) = normalized_csv(m);
        warnings.extend(w);
        written.push(write_file(&out.join("normalized.csv"), &csv)?);
        written.push(write_file(
            &out.join("utilization.csv"),
            &utilization_csv(m),
        )?);
    }
    Ok(Outcome { written, warnings })
}
