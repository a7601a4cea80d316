use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::decision::{DecisionKind, ThoughtPair};
use crate::mining::{record_thoughts, ThoughtRecord};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("ingest i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad mapping: {0}")]
    Mapping(String),
    #[error("input is not a JSON array or JSON lines: {0}")]
    Format(String),
}

/// Where to find agent, tick and text in a foreign record. Paths are dotted
/// (`meta.speaker`); array elements are addressed by index (`turns.0.text`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestMapping {
    pub agent: String,
    pub tick: String,
    pub text: String,
    #[serde(default)]
    pub defaults: IngestDefaults,
}

/// Values used when a record lacks the mapped field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestDefaults {
    pub agent: Option<Value>,
    pub tick: Option<u64>,
    pub text: Option<String>,
}

impl IngestMapping {
    pub fn from_toml_str(text: &str) -> Result<Self, IngestError> {
        let m: Self = toml::from_str(text).map_err(|e| IngestError::Mapping(e.to_string()))?;
        for (name, path) in [("agent", &m.agent), ("tick", &m.tick), ("text", &m.text)] {
            if path.trim().is_empty() {
                return Err(IngestError::Mapping(format!("`{name}` path is empty")));
            }
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestResult {
    /// Sorted by tick, then input order.
    pub records: Vec<ThoughtRecord>,
    pub skipped: usize,
    pub warnings: Vec<String>,
    /// Ids given to textual agent names, in order of first appearance.
    pub agent_names: BTreeMap<u32, String>,
}

fn lookup<'a>(v: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(v, |cur, key| match cur {
        Value::Object(m) => m.get(key),
        Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get(i)),
        _ => None,
    })
}

fn as_tick(v: &Value) -> Option<u64> {
    match v {
        Value::Number(n) => n.as_u64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Gives textual agent names ids not used by any numeric agent id in the input.
struct Interner {
    reserved: BTreeSet<u32>,
    by_name: BTreeMap<String, u32>,
    names: BTreeMap<u32, String>,
    next: u32,
}

impl Interner {
    fn agent(&mut self, v: &Value) -> Option<u32> {
        match v {
            Value::Number(n) => n.as_u64().and_then(|n| u32::try_from(n).ok()),
            Value::String(s) if !s.trim().is_empty() => {
                if let Some(&id) = self.by_name.get(s) {
                    return Some(id);
                }
                while self.reserved.contains(&self.next) {
                    self.next += 1;
                }
                let id = self.next;
                self.next += 1;
                self.by_name.insert(s.clone(), id);
                self.names.insert(id, s.clone());
                Some(id)
            }
            _ => None,
        }
    }
}

/// Input line number with the parsed record or its parse error.
type ParsedRecord = (usize, Result<Value, String>);

fn parse_records(text: &str) -> Result<Vec<ParsedRecord>, IngestError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let all: Vec<Value> = serde_json::from_str(trimmed).map_err(|e| IngestError::Format(e.to_string()))?;
        return Ok(all.into_iter().enumerate().map(|(i, v)| (i + 1, Ok(v))).collect());
    }
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
        .collect())
}

/// Convert foreign records into external thought records. Bad records are
/// skipped and counted; ingestion itself only fails on unreadable input.
pub fn ingest_reader(input: impl Read, mapping: &IngestMapping) -> Result<IngestResult, IngestError> {
    let mut text = String::new();
    BufReader::new(input).read_to_string(&mut text)?;
    let mut out = IngestResult::default();
    let parsed = parse_records(&text)?;
    let numeric = |v: &Value| lookup(v, &mapping.agent).and_then(Value::as_u64).and_then(|n| u32::try_from(n).ok());
    let mut interner = Interner {
        reserved: parsed.iter().filter_map(|(_, v)| v.as_ref().ok().and_then(numeric)).collect(),
        by_name: BTreeMap::new(),
        names: BTreeMap::new(),
        next: 0,
    };
    let mut collected = Vec::new();
    for (record_no, v) in parsed {
        let v = match v {
            Ok(v) => v,
            Err(e) => {
                out.skipped += 1;
                out.warnings.push(format!("record {record_no}: not JSON: {e}"));
                continue;
            }
        };
        let agent = lookup(&v, &mapping.agent)
            .or(mapping.defaults.agent.as_ref())
            .and_then(|a| interner.agent(a));
        let tick = lookup(&v, &mapping.tick).and_then(as_tick).or(mapping.defaults.tick);
        let text = lookup(&v, &mapping.text)
            .and_then(Value::as_str)
            .map(str::to_string)
            .or_else(|| mapping.defaults.text.clone())
            .filter(|t| !t.trim().is_empty());
        match (agent, tick, text) {
            (Some(agent), Some(tick), Some(text)) => collected.push(record_thoughts(
                agent,
                tick,
                DecisionKind::External,
                Some(ThoughtPair::new(text.clone(), text)),
            )),
            (agent, tick, text) => {
                let missing: Vec<&str> = [("agent", agent.is_none()), ("tick", tick.is_none()), ("text", text.is_none())]
                    .into_iter()
                    .filter(|(_, m)| *m)
                    .map(|(n, _)| n)
                    .collect();
                out.skipped += 1;
                out.warnings
                    .push(format!("record {record_no}: missing {}; skipped", missing.join(", ")));
            }
        }
    }
    collected.sort_by_key(|r| r.tick);
    out.records = collected;
    out.agent_names = interner.names;
    Ok(out)
}

pub fn ingest_external(path: &Path, mapping: &IngestMapping) -> Result<IngestResult, IngestError> {
    ingest_reader(std::fs::File::open(path)?, mapping)
}
