//! JSON documents exchanged between subcommands.
//!
//! Every document carries `schema_version` and `kind`; readers reject a
//! mismatch of either with a parse error.

use std::path::Path;

use gpuscale::metrics::{EnergyMethod, RunMetrics};
use gpuscale::scaling::{PowerLawFit, ScalingPoint};
use gpuscale::telemetry::Domain;
use gpuscale::tradeoff::{CapRecommendation, TradeoffPoint};
use gpuscale::Validation;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A file or embedded document and the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

pub trait Document: Serialize + DeserializeOwned {
    const KIND: &'static str;
}

macro_rules! document {
    ($t:ty, $kind:literal) => {
        impl Document for $t {
            const KIND: &'static str = $kind;
        }
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub validation: Validation,
    pub energy_method: EnergyMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Run directory (or telemetry file) as named on the command line.
    pub source: String,
    pub label: String,
    pub rejected_rows: usize,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub options: IngestOptions,
    pub inputs: Vec<InputDigest>,
    pub runs: Vec<RunRecord>,
    pub warnings: Vec<String>,
}
document!(MetricsDocument, "metrics");

/// Values of the manifest fields a fit group is keyed on. Fields not in the
/// grouping are omitted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_cap_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock_cap_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_per_gpu: Option<u32>,
}

impl GroupKey {
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if let Some(m) = &self.model {
            parts.push(m.clone());
        }
        if let Some(d) = self.domain {
            parts.push(d.to_string());
        }
        if let Some(p) = self.power_cap_w {
            parts.push(format!("{}W", canonical::fmt_num(p)));
        }
        if let Some(c) = self.clock_cap_mhz {
            parts.push(format!("{}MHz", canonical::fmt_num(c)));
        }
        if let Some(b) = self.batch_per_gpu {
            parts.push(format!("b{b}"));
        }
        if parts.is_empty() {
            "all".to_string()
        } else {
            parts.join("/")
        }
    }

    pub(crate) fn cmp_key(&self, other: &Self) -> std::cmp::Ordering {
        let f = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(a), Some(b)) => a.total_cmp(&b),
            (a, b) => a.is_some().cmp(&b.is_some()),
        };
        self.model
            .cmp(&other.model)
            .then(self.domain.cmp(&other.domain))
            .then(f(self.power_cap_w, other.power_cap_w))
            .then(f(self.clock_cap_mhz, other.clock_cap_mhz))
            .then(self.batch_per_gpu.cmp(&other.batch_per_gpu))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub label: String,
    pub group: GroupKey,
    pub fit: PowerLawFit,
    /// Observations the fit was made on.
    pub points: Vec<ScalingPoint>,
    /// Run labels contributing to the group.
    pub runs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knee_gpus: Option<u32>,
    /// Fit restricted to GPU counts up to the knee.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_knee_fit: Option<PowerLawFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsDocument {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub group_by: Vec<String>,
    pub collapse_replicates: bool,
    pub knee_threshold: f64,
    pub inputs: Vec<InputDigest>,
    pub fits: Vec<FitRecord>,
    pub warnings: Vec<String>,
}
document!(FitsDocument, "fits");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffGroup {
    pub model: String,
    pub num_gpus: u32,
    pub clock_cap_mhz: f64,
    pub batch_per_gpu: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonRow {
    pub power_cap_w: f64,
    pub energy_j: f64,
    pub co2_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRecord {
    pub label: String,
    pub group: TradeoffGroup,
    pub curve: Vec<TradeoffPoint>,
    pub recommendation: CapRecommendation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon: Option<Vec<CarbonRow>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffDocument {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub baseline_cap_w: f64,
    pub max_slowdown: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon_intensity_g_per_kwh: Option<f64>,
    pub inputs: Vec<InputDigest>,
    pub families: Vec<TradeoffRecord>,
    pub warnings: Vec<String>,
}
document!(TradeoffDocument, "tradeoff");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    /// Digests of the embedded documents' canonical serializations.
    pub inputs: Vec<InputDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fits: Option<FitsDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tradeoff: Option<TradeoffDocument>,
    pub warnings: Vec<String>,
}
document!(ReportDocument, "report");

/// Index of a simulated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub families: Vec<CorpusFamily>,
    pub files: Vec<InputDigest>,
}
document!(CorpusDocument, "corpus");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusFamily {
    pub model: String,
    pub seed: u64,
    pub runs: usize,
}

/// Sidecar written next to every simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDocument {
    pub schema_version: u32,
    pub kind: String,
    pub tool_version: String,
    pub ground_truth: gpuscale::synth::RunGroundTruth,
}
document!(GroundTruthDocument, "ground_truth");

pub fn parse_document<D: Document>(path: &Path, text: &str) -> Result<D, CliError> {
    #[derive(Deserialize)]
    struct Header {
        schema_version: u32,
        kind: String,
    }
    let header: Header = serde_json::from_str(text).map_err(|e| CliError::parse(path, e))?;
    if header.kind != D::KIND {
        return Err(CliError::parse(
            path,
            format!("expected a `{}` document, found `{}`", D::KIND, header.kind),
        ));
    }
    if header.schema_version != SCHEMA_VERSION {
        return Err(CliError::parse(
            path,
            format!(
                "schema version {} is not supported (expected {SCHEMA_VERSION})",
                header.schema_version
            ),
        ));
    }
    serde_json::from_str(text).map_err(|e| CliError::parse(path, e))
}

/// Reads a document, returning it with its digest under `name`.
pub fn read_document<D: Document>(path: &Path) -> Result<(D, InputDigest), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let doc = parse_document(path, &text)?;
    let digest = InputDigest {
        name: path.display().to_string(),
        sha256: canonical::sha256_hex(text.as_bytes()),
    };
    Ok((doc, digest))
}
