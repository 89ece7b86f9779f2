//! Loading instruction datasets and writing mosaicked output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::engine::{MosaicSample, Strategy};
use crate::error::{MosaicError, Result};

/// One original instruction/response pair.
///
/// `instruction` holds the unified instruction: the raw instruction text,
/// followed by a newline and the `input` field when that is non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: usize,
    pub instruction: String,
    pub input: Option<String>,
    pub response: String,
    pub cluster: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FormatTag {
    #[default]
    #[serde(rename = "alpaca-triplet")]
    AlpacaTriplet,
    #[serde(rename = "pair")]
    Pair,
}

impl std::str::FromStr for FormatTag {
    type Err = MosaicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpaca-triplet" | "alpaca" => Ok(FormatTag::AlpacaTriplet),
            "pair" => Ok(FormatTag::Pair),
            other => Err(MosaicError::Config(format!(
                "unknown dataset schema {other:?} (expected alpaca-triplet or pair)"
            ))),
        }
    }
}

/// Container of the input file. `Auto` sniffs the first non-blank byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Container {
    #[default]
    Auto,
    Jsonl,
    Json,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<InstructionRecord>,
    pub source_path: String,
    pub format_tag: FormatTag,
    /// Records dropped at load because instruction or response was blank.
    pub dropped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Builds a dataset from already-parsed JSON objects, applying the same
    /// normalization as [`load_dataset`].
    pub fn from_values(
        values: impl IntoIterator<Item = Value>,
        format_tag: FormatTag,
        source: &str,
    ) -> Result<Dataset> {
        let mut records = Vec::new();
        let mut dropped = 0;
        for (i, value) in values.into_iter().enumerate() {
            let location = format!("record {}", i + 1);
            match normalize(&value, format_tag, records.len())
                .map_err(|message| malformed(source, &location, message))?
            {
                Some(rec) => records.push(rec),
                None => dropped += 1,
            }
        }
        finish(records, dropped, source, format_tag)
    }
}

fn malformed(path: &str, location: &str, message: String) -> MosaicError {
    MosaicError::Malformed {
        path: PathBuf::from(path),
        location: location.to_string(),
        message,
    }
}

fn finish(
    records: Vec<InstructionRecord>,
    dropped: usize,
    source: &str,
    format_tag: FormatTag,
) -> Result<Dataset> {
    if records.is_empty() {
        return Err(MosaicError::EmptyDataset {
            path: PathBuf::from(source),
            dropped,
        });
    }
    if dropped > 0 {
        log::warn!("{source}: dropped {dropped} record(s) with blank instruction or response");
    }
    Ok(Dataset {
        records,
        source_path: source.to_string(),
        format_tag,
        dropped,
    })
}

fn text_field<'a>(obj: &'a Map<String, Value>, key: &str) -> std::result::Result<Option<&'a str>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(other) => Err(format!("field {key:?} must be a string, found {}", kind_of(other))),
    }
}

fn kind_of(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// `Ok(None)` means the record is structurally fine but fails the
/// non-blank invariants and should be dropped.
fn normalize(
    value: &Value,
    format_tag: FormatTag,
    next_id: usize,
) -> std::result::Result<Option<InstructionRecord>, String> {
    let obj = value
        .as_object()
        .ok_or_else(|| format!("expected a JSON object, found {}", kind_of(value)))?;

    let instruction = text_field(obj, "instruction")?.ok_or("missing field \"instruction\"")?;
    let (input, response) = match format_tag {
        FormatTag::AlpacaTriplet => {
            let response = match text_field(obj, "output")? {
                Some(r) => r,
                None => text_field(obj, "response")?
                    .ok_or("missing field \"output\" (or \"response\")")?,
            };
            (text_field(obj, "input")?, response)
        }
        FormatTag::Pair => (
            None,
            text_field(obj, "response")?.ok_or("missing field \"response\"")?,
        ),
    };

    let cluster = match obj.get("cluster") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| format!("field \"cluster\" must be a non-negative integer, found {v}"))?,
        ),
    };

    let instruction = instruction.trim();
    let response = response.trim();
    let input = input.map(str::trim).filter(|s| !s.is_empty());
    if instruction.is_empty() || response.is_empty() {
        return Ok(None);
    }
    let unified = match input {
        Some(inp) => format!("{instruction}\n{inp}"),
        None => instruction.to_string(),
    };
    Ok(Some(InstructionRecord {
        id: next_id,
        instruction: unified,
        input: input.map(str::to_string),
        response: response.to_string(),
        cluster,
    }))
}

pub fn load_dataset(path: &Path, format_tag: FormatTag) -> Result<Dataset> {
    load_dataset_with(path, format_tag, Container::Auto)
}

pub fn load_dataset_with(path: &Path, format_tag: FormatTag, container: Container) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| MosaicError::io(path, e))?;
    let source = path.display().to_string();
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);

    let container = match container {
        Container::Auto if text.trim_start().starts_with('[') => Container::Json,
        Container::Auto => Container::Jsonl,
        c => c,
    };

    match container {
        Container::Json => {
            let values: Vec<Value> = serde_json::from_str(text).map_err(|e| {
                malformed(&source, &format!("line {}", e.line()), e.to_string())
            })?;
            let mut records = Vec::new();
            let mut dropped = 0;
            for (i, value) in values.iter().enumerate() {
                let location = format!("element {}", i + 1);
                match normalize(value, format_tag, records.len())
                    .map_err(|m| malformed(&source, &location, m))?
                {
                    Some(rec) => records.push(rec),
                    None => dropped += 1,
                }
            }
            finish(records, dropped, &source, format_tag)
        }
        _ => {
            let mut records = Vec::new();
            let mut dropped = 0;
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let location = format!("line {}", lineno + 1);
                let value: Value = serde_json::from_str(line)
                    .map_err(|e| malformed(&source, &location, e.to_string()))?;
                match normalize(&value, format_tag, records.len())
                    .map_err(|m| malformed(&source, &location, m))?
                {
                    Some(rec) => records.push(rec),
                    None => dropped += 1,
                }
            }
            finish(records, dropped, &source, format_tag)
        }
    }
}

/// One output line. Field order here is the on-disk key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosaicLine {
    pub instruction: String,
    pub output: String,
    #[serde(default, skip_serializing_if = "Option::is_none", flatten)]
    pub meta: Option<LineMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineMeta {
    pub strategy: Strategy,
    pub rule: Option<String>,
    pub k: usize,
    pub member_ids: Vec<usize>,
    pub epoch: usize,
    pub seed: u64,
}

impl MosaicLine {
    pub fn from_sample(sample: &MosaicSample, include_metadata: bool) -> MosaicLine {
        MosaicLine {
            instruction: sample.overall_instruction.clone(),
            output: sample.overall_response.clone(),
            meta: include_metadata.then(|| LineMeta {
                strategy: sample.strategy,
                rule: sample.rule.as_ref().map(|r| r.name.as_str().to_string()),
                k: sample.k,
                member_ids: sample.member_ids.clone(),
                epoch: sample.epoch,
                seed: sample.seed,
            }),
        }
    }
}

/// Serializes samples as JSONL: UTF-8, one object per `\n`-terminated line.
pub fn render_mosaics(samples: &[MosaicSample], include_metadata: bool) -> String {
    let mut out = String::new();
    for sample in samples {
        let line = MosaicLine::from_sample(sample, include_metadata);
        // serializing plain strings and integers cannot fail
        let json = serde_json::to_string(&line).expect("mosaic line serializes");
        let _ = writeln!(out, "{json}");
    }
    out
}

pub fn write_mosaics(samples: &[MosaicSample], path: &Path, include_metadata: bool) -> Result<()> {
    if samples.is_empty() {
        return Err(MosaicError::Data("no samples to write".into()));
    }
    fs::write(path, render_mosaics(samples, include_metadata)).map_err(|e| MosaicError::io(path, e))
}

/// Reads back a file written by [`write_mosaics`].
pub fn read_mosaics(path: &Path) -> Result<Vec<MosaicLine>> {
    let text = fs::read_to_string(path).map_err(|e| MosaicError::io(path, e))?;
    let source = path.display().to_string();
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| malformed(&source, &format!("line {}", i + 1), e.to_string()))
        })
        .collect()
}
