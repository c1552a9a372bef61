use std::path::Path;

use gpuscale::synth::{generate_family, SimulationPlan};

use crate::canonical;
use crate::commands::ingest::{EPOCHS_FILE, MANIFEST_FILE, TELEMETRY_FILE};
use crate::documents::{
    CorpusDocument, CorpusFamily, GroundTruthDocument, InputDigest, SCHEMA_VERSION, TOOL_VERSION,
};
use crate::error::CliError;
use crate::{write_file, GlobalArgs, Outcome};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const CORPUS_FILE: &str = "corpus.json";

fn dir_name(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn load_plan(path: &Path, seed: Option<u64>) -> Result<SimulationPlan, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut plan: SimulationPlan = toml::from_str(&text).map_err(|e| CliError::parse(path, e))?;
    if seed.is_some() {
        plan.seed = seed;
    }
    plan.validate().map_err(|e| CliError::validation(path, e))?;
    Ok(plan)
}

/// Writes every run of every family under `out/<model>/<run label>/` and an
/// index with the digest of each file.
pub fn write_corpus(plan: &SimulationPlan, out: &Path) -> Result<CorpusDocument, CliError> {
    let mut files = Vec::new();
    let mut families = Vec::new();
    for spec in plan.resolved_families() {
        let runs = generate_family(&spec).map_err(|e| CliError::validation(&spec.model, e))?;
        families.push(CorpusFamily {
            model: spec.model.clone(),
            seed: spec.seed,
            runs: runs.len(),
        });
        for run in runs {
            let rel = format!("{}/{}", dir_name(&spec.model), run.label());
            let truth = GroundTruthDocument {
                schema_version: SCHEMA_VERSION,
                kind: "ground_truth".into(),
                tool_version: TOOL_VERSION.into(),
                ground_truth: run.ground_truth.clone(),
            };
            for (name, contents) in [
                (MANIFEST_FILE, run.manifest_text()),
                (TELEMETRY_FILE, run.telemetry_csv()),
                (EPOCHS_FILE, run.epochs_csv()),
                (GROUND_TRUTH_FILE, canonical::to_string(&truth)),
            ] {
                let name = format!("{rel}/{name}");
                write_file(&out.join(&name), &contents)?;
                files.push(InputDigest {
                    name,
                    sha256: canonical::sha256_hex(contents.as_bytes()),
                });
            }
        }
    }
    files.sort_by(|a, b| a.name.cmp(&b.name));
    families.sort_by(|a, b| a.model.cmp(&b.model));
    Ok(CorpusDocument {
        schema_version: SCHEMA_VERSION,
        kind: "corpus".into(),
        tool_version: TOOL_VERSION.into(),
        families,
        files,
    })
}

pub fn run(g: &GlobalArgs, spec: &Path) -> Result<Outcome, CliError> {
    let plan = load_plan(spec, g.seed)?;
    let corpus = write_corpus(&plan, &g.out_dir)?;
    let index = write_file(&g.out_dir.join(CORPUS_FILE), &canonical::to_string(&corpus))?;
    let mut written: Vec<_> = corpus
        .files
        .iter()
        .map(|f| g.out_dir.join(&f.name))
        .collect();
    written.push(index);
    Ok(Outcome {
        written,
        warnings: Vec::new(),
    })
}
