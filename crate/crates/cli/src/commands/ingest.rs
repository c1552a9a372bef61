use std::path::{Path, PathBuf};

use gpuscale::metrics::run_metrics;
use gpuscale::synth::run_label;
use gpuscale::telemetry::{parse_epoch_windows_str, parse_manifest_str, parse_telemetry_str};
use walkdir::WalkDir;

use crate::canonical::{self, fmt_num};
use crate::documents::{
    IngestOptions, InputDigest, MetricsDocument, RunRecord, SCHEMA_VERSION, TOOL_VERSION,
};
use crate::error::CliError;
use crate::{write_file, GlobalArgs, Outcome};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const TELEMETRY_FILE: &str = "telemetry.csv";
pub const EPOCHS_FILE: &str = "epochs.csv";

/// File triple describing one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub source: String,
    pub telemetry: PathBuf,
    pub epochs: PathBuf,
    pub manifest: PathBuf,
}

/// Finds run directories under each root. A directory holding any of the
/// three run files must hold all of them.
pub fn discover(roots: &[PathBuf]) -> Result<Vec<RunFiles>, CliError> {
    let mut runs = Vec::new();
    for root in roots {
        if !root.exists() {
            return Err(CliError::MissingInput(root.display().to_string()));
        }
        let before = runs.len();
        for entry in WalkDir::new(root).sort_by_file_name() {
            let entry = entry.map_err(|e| CliError::Io {
                path: root.clone(),
                source: e.into(),
            })?;
            if !entry.file_type().is_dir() {
                continue;
            }
            let dir = entry.path();
            let files = [MANIFEST_FILE, TELEMETRY_FILE, EPOCHS_FILE].map(|f| dir.join(f));
            let present = files.iter().filter(|f| f.is_file()).count();
            if present == 0 {
                continue;
            }
            if let Some(missing) = files.iter().find(|f| !f.is_file()) {
                return Err(CliError::MissingInput(missing.display().to_string()));
            }
            let [manifest, telemetry, epochs] = files;
            runs.push(RunFiles {
                source: dir.display().to_string(),
                telemetry,
                epochs,
                manifest,
            });
        }
        if runs.len() == before {
            return Err(CliError::MissingInput(format!(
                "no run directory (with {MANIFEST_FILE}) under {}",
                root.display()
            )));
        }
    }
    Ok(runs)
}

fn read(path: &Path, inputs: &mut Vec<InputDigest>) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    inputs.push(InputDigest {
        name: path.display().to_string(),
        sha256: canonical::sha256_hex(text.as_bytes()),
    });
    Ok(text)
}

/// Parses and aggregates the runs into a metrics document.
pub fn ingest(g: &GlobalArgs, runs: &[RunFiles]) -> Result<MetricsDocument, CliError> {
    let options = g.aggregation();
    let mut inputs = Vec::new();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for run in runs {
        let manifest_text = read(&run.manifest, &mut inputs)?;
        let telemetry_text = read(&run.telemetry, &mut inputs)?;
        let epochs_text = read(&run.epochs, &mut inputs)?;
        let manifest = parse_manifest_str(&manifest_text)
            .map_err(|e| CliError::from((run.manifest.as_path(), e)))?;
        let telemetry = parse_telemetry_str(&telemetry_text, options.validation)
            .map_err(|e| CliError::from((run.telemetry.as_path(), e)))?;
        let windows = parse_epoch_windows_str(&epochs_text)
            .map_err(|e| CliError::from((run.epochs.as_path(), e)))?;
        for r in &telemetry.rejected {
            warnings.push(format!(
                "{}: line {}: dropped row: {}",
                run.telemetry.display(),
                r.line,
                r.reason
            ));
        }
        let metrics = run_metrics(manifest, &telemetry.samples, &windows, options)
            .map_err(|e| CliError::validation(&run.source, e))?;
        warnings.extend(metrics.warnings().map(|w| format!("{}: {w}", run.source)));
        records.push(RunRecord {
            source: run.source.clone(),
            label: run_label(&metrics.manifest),
            rejected_rows: telemetry.rejected.len(),
            metrics,
        });
    }
    records.sort_by(|a, b| a.label.cmp(&b.label).then_with(|| a.source.cmp(&b.source)));
    inputs.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(MetricsDocument {
        schema_version: SCHEMA_VERSION,
        kind: "metrics".into(),
        tool_version: TOOL_VERSION.into(),
        options: IngestOptions {
            validation: options.validation,
            energy_method: options.energy,
        },
        inputs,
        runs: records,
        warnings,
    })
}

const EPOCH_CSV_HEADER: [&str; 13] = [
    "run",
    "model",
    "num_gpus",
    "power_cap_w",
    "clock_cap_mhz",
    "epoch",
    "wall_time_s",
    "energy_j",
    "mean_sm_util",
    "cv_sm_util",
    "mean_mem_util",
    "cv_mem_util",
    "warnings",
];

/// One row per epoch, for plotting.
pub fn epoch_csv(doc: &MetricsDocument) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EPOCH_CSV_HEADER).expect("write to memory");
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    for run in &doc.runs {
        let m = &run.metrics.manifest;
        for e in &run.metrics.epochs {
            w.write_record([
                run.label.clone(),
                m.model_name.clone(),
                m.num_gpus.to_string(),
                fmt_num(m.power_cap_w),
                fmt_num(m.clock_cap_mhz),
                e.epoch_index.to_string(),
                fmt_num(e.wall_time_s),
                fmt_num(e.energy_j),
                fmt_num(e.mean_sm_util),
                opt(e.cv_sm_util),
                fmt_num(e.mean_mem_util),
                opt(e.cv_mem_util),
                e.warnings.len().to_string(),
            ])
            .expect("write to memory");
        }
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn run(
    g: &GlobalArgs,
    paths: &[PathBuf],
    telemetry: &[PathBuf],
    epochs: &[PathBuf],
    manifest: &[PathBuf],
) -> Result<Outcome, CliError> {
    if telemetry.len() != epochs.len() || telemetry.len() != manifest.len() {
        return Err(CliError::Usage(
            "--telemetry, --epochs and --manifest must be given the same number of times".into(),
        ));
    }
    let mut runs = discover(paths)?;
    for ((t, e), m) in telemetry.iter().zip(epochs).zip(manifest) {
        runs.push(RunFiles {
            source: t.display().to_string(),
            telemetry: t.clone(),
            epochs: e.clone(),
            manifest: m.clone(),
        });
    }
    if runs.is_empty() {
        return Err(CliError::Usage("no runs given".into()));
    }
    let doc = ingest(g, &runs)?;
    let written = vec![
        write_file(&g.out_dir.join("metrics.json"), &canonical::to_string(&doc))?,
        write_file(&g.out_dir.join("epoch_metrics.csv"), &epoch_csv(&doc))?,
    ];
    Ok(Outcome {
        written,
        warnings: doc.warnings,
    })
}
