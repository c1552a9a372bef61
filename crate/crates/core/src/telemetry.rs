//! Typed records for raw run telemetry: power/utilization samples, epoch
//! boundaries and the run manifest, with their text formats.
//!
//! Three formats are understood:
//!
//! * telemetry CSV, header `timestamp,gpu_id,power_w,sm_util_pct,mem_util_pct,sm_clock_mhz`;
//! * epoch CSV, header `epoch,start_s,end_s`;
//! * manifest, flat `key=value` lines.
//!
//! Rows from several GPUs may be interleaved in one telemetry file. Within a
//! single GPU's stream timestamps must strictly increase.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Validation;

pub const TELEMETRY_HEADER: [&str; 6] = [
    "timestamp",
    "gpu_id",
    "power_w",
    "sm_util_pct",
    "mem_util_pct",
    "sm_clock_mhz",
];

pub const EPOCH_HEADER: [&str; 3] = ["epoch", "start_s", "end_s"];

/// Manifest keys that must be present, in the order they are written.
pub const MANIFEST_REQUIRED_KEYS: [&str; 7] = [
    "model",
    "domain",
    "num_gpus",
    "power_cap_w",
    "clock_cap_mhz",
    "batch_per_gpu",
    "epochs",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: malformed row: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("line {line}: {field} out of range: {value}")]
    OutOfRange {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: timestamp {timestamp} for gpu {gpu_id} does not increase (previous {previous})")]
    NonMonotonic {
        line: u64,
        gpu_id: u32,
        previous: f64,
        timestamp: f64,
    },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("line {line}: invalid value for `{key}`: {reason}")]
    InvalidValue {
        line: u64,
        key: String,
        reason: String,
    },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: u64, key: String },
    #[error("epoch {epoch}: start {start} is not before end {end}")]
    EmptyWindow { epoch: u32, start: f64, end: f64 },
    #[error("line {line}: duplicate epoch index {epoch}")]
    DuplicateEpoch { line: u64, epoch: u32 },
    #[error("epochs {first} and {second} overlap")]
    Overlap { first: u32, second: u32 },
    #[error("epoch {second} starts before epoch {first} although its index is larger")]
    OutOfOrder { first: u32, second: u32 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for ParseError {
    fn from(e: io::Error) -> Self {
        ParseError::Io(e.to_string())
    }
}

/// One instant of one GPU's readings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySample {
    /// Seconds since run start.
    pub timestamp: f64,
    pub gpu_id: u32,
    /// Watts.
    pub power_draw: f64,
    /// Percent, `[0, 100]`.
    pub sm_utilization: f64,
    /// Percent, `[0, 100]`.
    pub memory_utilization: f64,
    /// MHz.
    pub sm_clock: f64,
}

/// Application domain of the trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Geometric,
    Nlp,
    Vision,
    Other,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Geometric => "geometric",
            Domain::Nlp => "nlp",
            Domain::Vision => "vision",
            Domain::Other => "other",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "geometric" => Ok(Domain::Geometric),
            "nlp" => Ok(Domain::Nlp),
            "vision" => Ok(Domain::Vision),
            "other" => Ok(Domain::Other),
            _ => Err(format!(
                "unknown domain `{s}` (expected geometric, nlp, vision or other)"
            )),
        }
    }
}

/// Experiment descriptor: model, GPU count, power cap, clock cap and any
/// further settings that are carried along as opaque metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model_name: String,
    pub domain_tag: Domain,
    pub num_gpus: u32,
    pub power_cap_w: f64,
    pub clock_cap_mhz: f64,
    pub per_gpu_batch_size: u32,
    pub epochs_planned: u32,
    #[serde(default)]
    pub extra_settings: BTreeMap<String, String>,
}

/// Time span of one training epoch, in seconds since run start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochWindow {
    pub epoch_index: u32,
    pub start: f64,
    pub end: f64,
}

impl EpochWindow {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Half-open membership test, `start <= t < end`.
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

/// A telemetry row dropped in lenient mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedTelemetry {
    pub samples: Vec<TelemetrySample>,
    /// Always empty under strict validation.
    pub rejected: Vec<RejectedRow>,
}

enum RawTimestamp {
    Seconds(f64),
    Instant(DateTime<FixedOffset>),
}

fn parse_timestamp(line: u64, s: &str) -> Result<RawTimestamp, ParseError> {
    if let Ok(v) = s.parse::<f64>() {
        return Ok(RawTimestamp::Seconds(v));
    }
    DateTime::parse_from_rfc3339(s)
        .map(RawTimestamp::Instant)
        .map_err(|_| ParseError::Malformed {
            line,
            reason: format!("timestamp `{s}` is neither seconds nor an ISO-8601 instant"),
        })
}

fn parse_number(line: u64, field: &'static str, s: &str) -> Result<f64, ParseError> {
    let v = s.parse::<f64>().map_err(|_| ParseError::Malformed {
        line,
        reason: format!("{field} `{s}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(ParseError::OutOfRange {
            line,
            field,
            value: s.to_string(),
        });
    }
    Ok(v)
}

fn check_range(
    line: u64,
    field: &'static str,
    value: f64,
    ok: impl Fn(f64) -> bool,
) -> Result<f64, ParseError> {
    if ok(value) {
        Ok(value)
    } else {
        Err(ParseError::OutOfRange {
            line,
            field,
            value: value.to_string(),
        })
    }
}

#[derive(Default)]
struct TimestampState {
    /// `Some(true)` once ISO instants are in use, `Some(false)` for seconds.
    iso: Option<bool>,
    anchor: Option<DateTime<FixedOffset>>,
}

impl TimestampState {
    fn resolve(&mut self, line: u64, raw: RawTimestamp) -> Result<f64, ParseError> {
        match (raw, self.iso) {
            (RawTimestamp::Seconds(v), None | Some(false)) => {
                self.iso = Some(false);
                check_range(line, "timestamp", v, f64::is_finite)
            }
            (RawTimestamp::Instant(t), None | Some(true)) => {
                self.iso = Some(true);
                let anchor = *self.anchor.get_or_insert(t);
                let delta = t.signed_duration_since(anchor);
                let secs = delta.num_seconds() as f64 + f64::from(delta.subsec_nanos()) * 1e-9;
                Ok(secs)
            }
            _ => Err(ParseError::Malformed {
                line,
                reason: "mixed ISO-8601 and numeric timestamps".to_string(),
            }),
        }
    }
}

fn parse_sample_row(
    line: u64,
    record: &csv::StringRecord,
    stamps: &mut TimestampState,
) -> Result<TelemetrySample, ParseError> {
    if record.len() != TELEMETRY_HEADER.len() {
        return Err(ParseError::Malformed {
            line,
            reason: format!(
                "expected {} fields, found {}",
                TELEMETRY_HEADER.len(),
                record.len()
            ),
        });
    }
    let raw_ts = parse_timestamp(line, &record[0])?;

    let gpu_raw = &record[1];
    let gpu_id = match gpu_raw.parse::<i64>() {
        Ok(v) if (0..=i64::from(u32::MAX)).contains(&v) => v as u32,
        Ok(_) => {
            return Err(ParseError::OutOfRange {
                line,
                field: "gpu_id",
                value: gpu_raw.to_string(),
            })
        }
        Err(_) => {
            return Err(ParseError::Malformed {
                line,
                reason: format!("gpu_id `{gpu_raw}` is not an integer"),
            })
        }
    };

    let power = parse_number(line, "power_w", &record[2])?;
    let sm = parse_number(line, "sm_utilization", &record[3])?;
    let mem = parse_number(line, "memory_utilization", &record[4])?;
    let clock = parse_number(line, "sm_clock", &record[5])?;

    let power_draw = check_range(line, "power_w", power, |v| v >= 0.0)?;
    let sm_utilization = check_range(line, "sm_utilization", sm, |v| (0.0..=100.0).contains(&v))?;
    let memory_utilization = check_range(line, "memory_utilization", mem, |v| {
        (0.0..=100.0).contains(&v)
    })?;
    let sm_clock = check_range(line, "sm_clock", clock, |v| v > 0.0)?;
    let timestamp = stamps.resolve(line, raw_ts)?;

    Ok(TelemetrySample {
        timestamp,
        gpu_id,
        power_draw,
        sm_utilization,
        memory_utilization,
        sm_clock,
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn check_header(record: &csv::StringRecord, expected: &[&str]) -> Result<(), ParseError> {
    if record.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(ParseError::Header {
            expected: expected.join(","),
            found: record.iter().collect::<Vec<_>>().join(","),
        })
    }
}

/// Parses a telemetry CSV stream.
///
/// Under [`Validation::Strict`] the first bad row aborts parsing. Under
/// [`Validation::Lenient`] bad rows are dropped and reported in
/// [`ParsedTelemetry::rejected`]; a wrong header is an error in both modes.
pub fn parse_telemetry<R: Read>(
    reader: R,
    validation: Validation,
) -> Result<ParsedTelemetry, ParseError> {
    let mut rdr = csv_reader(reader);
    let mut records = rdr.records();
    let mut out = ParsedTelemetry::default();

    match records.next() {
        None => return Ok(out),
        Some(Err(e)) => {
            return Err(ParseError::Malformed {
                line: 1,
                reason: e.to_string(),
            })
        }
        Some(Ok(header)) => check_header(&header, &TELEMETRY_HEADER)?,
    }

    let mut stamps = TimestampState::default();
    let mut last_seen: HashMap<u32, f64> = HashMap::new();

    for record in records {
        let parsed = match record {
            Ok(record) => {
                let line = record_line(&record);
                parse_sample_row(line, &record, &mut stamps).and_then(|s| {
                    match last_seen.get(&s.gpu_id) {
                        Some(&prev) if s.timestamp <= prev => Err(ParseError::NonMonotonic {
                            line,
                            gpu_id: s.gpu_id,
                            previous: prev,
                            timestamp: s.timestamp,
                        }),
                        _ => Ok(s),
                    }
                })
            }
            Err(e) => Err(ParseError::Malformed {
                line: e.position().map_or(0, |p| p.line()),
                reason: e.to_string(),
            }),
        };
        match parsed {
            Ok(s) => {
                last_seen.insert(s.gpu_id, s.timestamp);
                out.samples.push(s);
            }
            Err(e) if validation == Validation::Lenient => out.rejected.push(RejectedRow {
                line: error_line(&e),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn error_line(e: &ParseError) -> u64 {
    match e {
        ParseError::Malformed { line, .. }
        | ParseError::OutOfRange { line, .. }
        | ParseError::NonMonotonic { line, .. }
        | ParseError::InvalidValue { line, .. }
        | ParseError::DuplicateKey { line, .. }
        | ParseError::DuplicateEpoch { line, .. } => *line,
        _ => 0,
    }
}

pub fn parse_telemetry_str(s: &str, validation: Validation) -> Result<ParsedTelemetry, ParseError> {
    parse_telemetry(s.as_bytes(), validation)
}

/// Writes samples in the telemetry CSV format. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_telemetry<W: Write>(mut w: W, samples: &[TelemetrySample]) -> io::Result<()> {
    writeln!(w, "{}", TELEMETRY_HEADER.join(","))?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            s.timestamp, s.gpu_id, s.power_draw, s.sm_utilization, s.memory_utilization, s.sm_clock
        )?;
    }
    Ok(())
}

pub fn telemetry_to_string(samples: &[TelemetrySample]) -> String {
    let mut buf = Vec::new();
    write_telemetry(&mut buf, samples).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("telemetry CSV is ASCII")
}

/// Splits an interleaved sample list into per-GPU streams, preserving order.
pub fn group_by_gpu(samples: &[TelemetrySample]) -> BTreeMap<u32, Vec<TelemetrySample>> {
    let mut by_gpu: BTreeMap<u32, Vec<TelemetrySample>> = BTreeMap::new();
    for s in samples {
        by_gpu.entry(s.gpu_id).or_default().push(*s);
    }
    by_gpu
}

fn parse_positive_int(line: u64, key: &str, value: &str) -> Result<u32, ParseError> {
    match value.parse::<i64>() {
        Ok(v) if v >= 1 && v <= i64::from(u32::MAX) => Ok(v as u32),
        Ok(v) => Err(ParseError::InvalidValue {
            line,
            key: key.to_string(),
            reason: format!("must be a positive integer, got {v}"),
        }),
        Err(_) => Err(ParseError::InvalidValue {
            line,
            key: key.to_string(),
            reason: format!("`{value}` is not an integer"),
        }),
    }
}

fn parse_positive_float(line: u64, key: &str, value: &str) -> Result<f64, ParseError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(v) => Err(ParseError::InvalidValue {
            line,
            key: key.to_string(),
            reason: format!("must be positive, got {v}"),
        }),
        Err(_) => Err(ParseError::InvalidValue {
            line,
            key: key.to_string(),
            reason: format!("`{value}` is not a number"),
        }),
    }
}

/// Parses a `key=value` manifest. Blank lines and lines starting with `#`
/// are ignored; keys outside the required set go to `extra_settings`.
pub fn parse_manifest<R: Read>(mut reader: R) -> Result<RunManifest, ParseError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    parse_manifest_str(&text)
}

pub fn parse_manifest_str(text: &str) -> Result<RunManifest, ParseError> {
    let mut entries: BTreeMap<String, (u64, String)> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx as u64 + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| ParseError::Malformed {
                line,
                reason: format!("expected key=value, found `{trimmed}`"),
            })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ParseError::Malformed {
                line,
                reason: "empty key".to_string(),
            });
        }
        if entries
            .insert(key.to_string(), (line, value.trim().to_string()))
            .is_some()
        {
            return Err(ParseError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
    }

    let mut take = |key: &'static str| entries.remove(key).ok_or(ParseError::MissingKey(key));
    // Look every required key up before validating any of them, so a missing
    // key is reported even when another value is also bad.
    let model = take("model")?;
    let domain = take("domain")?;
    let num_gpus = take("num_gpus")?;
    let power_cap = take("power_cap_w")?;
    let clock_cap = take("clock_cap_mhz")?;
    let batch = take("batch_per_gpu")?;
    let epochs = take("epochs")?;

    if model.1.is_empty() {
        return Err(ParseError::InvalidValue {
            line: model.0,
            key: "model".to_string(),
            reason: "must not be empty".to_string(),
        });
    }
    let domain_tag = domain
        .1
        .parse::<Domain>()
        .map_err(|reason| ParseError::InvalidValue {
            line: domain.0,
            key: "domain".to_string(),
            reason,
        })?;

    Ok(RunManifest {
        model_name: model.1,
        domain_tag,
        num_gpus: parse_positive_int(num_gpus.0, "num_gpus", &num_gpus.1)?,
        power_cap_w: parse_positive_float(power_cap.0, "power_cap_w", &power_cap.1)?,
        clock_cap_mhz: parse_positive_float(clock_cap.0, "clock_cap_mhz", &clock_cap.1)?,
        per_gpu_batch_size: parse_positive_int(batch.0, "batch_per_gpu", &batch.1)?,
        epochs_planned: parse_positive_int(epochs.0, "epochs", &epochs.1)?,
        extra_settings: entries.into_iter().map(|(k, (_, v))| (k, v)).collect(),
    })
}

pub fn manifest_to_string(m: &RunManifest) -> String {
    let mut out = format!(
        "model={}\ndomain={}\nnum_gpus={}\npower_cap_w={}\nclock_cap_mhz={}\nbatch_per_gpu={}\nepochs={}\n",
        m.model_name,
        m.domain_tag,
        m.num_gpus,
        m.power_cap_w,
        m.clock_cap_mhz,
        m.per_gpu_batch_size,
        m.epochs_planned
    );
    for (k, v) in &m.extra_settings {
        out.push_str(&format!("{k}={v}\n"));
    }
    out
}

/// Parses the epoch-boundary CSV. The result is sorted by epoch index and
/// guaranteed free of overlaps; windows may touch.
pub fn parse_epoch_windows<R: Read>(reader: R) -> Result<Vec<EpochWindow>, ParseError> {
    let mut rdr = csv_reader(reader);
    let mut records = rdr.records();
    match records.next() {
        None => return Ok(Vec::new()),
        Some(Err(e)) => {
            return Err(ParseError::Malformed {
                line: 1,
                reason: e.to_string(),
            })
        }
        Some(Ok(header)) => check_header(&header, &EPOCH_HEADER)?,
    }

    let mut windows: Vec<(u64, EpochWindow)> = Vec::new();
    for record in records {
        let record = record.map_err(|e| ParseError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record_line(&record);
        if record.len() != EPOCH_HEADER.len() {
            return Err(ParseError::Malformed {
                line,
                reason: format!("expected 3 fields, found {}", record.len()),
            });
        }
        let epoch_index = record[0]
            .parse::<u32>()
            .map_err(|_| ParseError::Malformed {
                line,
                reason: format!("epoch `{}` is not a non-negative integer", &record[0]),
            })?;
        let start = parse_number(line, "start_s", &record[1])?;
        let end = parse_number(line, "end_s", &record[2])?;
        if start >= end {
            return Err(ParseError::EmptyWindow {
                epoch: epoch_index,
                start,
                end,
            });
        }
        windows.push((
            line,
            EpochWindow {
                epoch_index,
                start,
                end,
            },
        ));
    }

    windows.sort_by_key(|(_, w)| w.epoch_index);
    for pair in windows.windows(2) {
        let ((_, a), (line, b)) = (&pair[0], &pair[1]);
        if a.epoch_index == b.epoch_index {
            return Err(ParseError::DuplicateEpoch {
                line: *line,
                epoch: b.epoch_index,
            });
        }
    }
    // Overlap is a property of the intervals; ordering is checked separately
    // so the error says which of the two went wrong.
    let mut by_time: Vec<&EpochWindow> = windows.iter().map(|(_, w)| w).collect();
    by_time.sort_by(|a, b| a.start.total_cmp(&b.start));
    for pair in by_time.windows(2) {
        if pair[1].start < pair[0].end {
            let (first, second) = if pair[0].epoch_index < pair[1].epoch_index {
                (pair[0].epoch_index, pair[1].epoch_index)
            } else {
                (pair[1].epoch_index, pair[0].epoch_index)
            };
            return Err(ParseError::Overlap { first, second });
        }
    }
    for pair in windows.windows(2) {
        let ((_, a), (_, b)) = (&pair[0], &pair[1]);
        if b.start < a.start {
            return Err(ParseError::OutOfOrder {
                first: a.epoch_index,
                second: b.epoch_index,
            });
        }
    }
    Ok(windows.into_iter().map(|(_, w)| w).collect())
}

pub fn parse_epoch_windows_str(s: &str) -> Result<Vec<EpochWindow>, ParseError> {
    parse_epoch_windows(s.as_bytes())
}

pub fn epoch_windows_to_string(windows: &[EpochWindow]) -> String {
    let mut out = EPOCH_HEADER.join(",");
    out.push('\n');
    for w in windows {
        out.push_str(&format!("{},{},{}\n", w.epoch_index, w.start, w.end));
    }
    out
}
