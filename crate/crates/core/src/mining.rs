//! Thought records, per-agent memory, emergence detection, and the shared
//! intention repository.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decision::{
    render_template, strip_think, BackendError, ChatMessage, ChatRequest, ChatTransport, DecisionKind,
    LlmEndpointConfig, ThoughtPair,
};
use crate::embed::{cosine_similarity, EmbedError, Embedder, EmbeddingVector};

pub const DEFAULT_MEMORY_CAPACITY: usize = 50;
pub const DEFAULT_THETA: f64 = 0.8;

/// One agent's pair of thoughts at a decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtRecord {
    pub agent_id: u32,
    pub tick: u64,
    pub decision_kind: DecisionKind,
    pub pair: ThoughtPair,
    pub combined_text: String,
    /// The backend failed; such records never reach detection.
    pub missing: bool,
}

/// Labeled concatenation of both perspectives. An empty bounded text (single
/// perspective recording) leaves only the rational part.
pub fn combine(pair: &ThoughtPair) -> String {
    if pair.bounded.is_empty() {
        format!("rational: {}", pair.rational)
    } else {
        format!("bounded: {} | rational: {}", pair.bounded, pair.rational)
    }
}

pub fn record_thoughts(agent_id: u32, tick: u64, kind: DecisionKind, pair: Option<ThoughtPair>) -> ThoughtRecord {
    match pair {
        Some(pair) => ThoughtRecord {
            agent_id,
            tick,
            decision_kind: kind,
            combined_text: combine(&pair),
            pair,
            missing: false,
        },
        None => ThoughtRecord {
            agent_id,
            tick,
            decision_kind: kind,
            pair: ThoughtPair::new("", ""),
            combined_text: String::new(),
            missing: true,
        },
    }
}

impl ThoughtRecord {
    /// Drop the bounded perspective, as when the inspector is disabled.
    pub fn single_perspective(mut self) -> Self {
        if !self.missing {
            self.pair.bounded.clear();
            self.combined_text = combine(&self.pair);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub tick: u64,
    pub text: String,
    pub embedding: EmbeddingVector,
}

/// Bounded FIFO of an agent's recent combined thoughts.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentMemory {
    pub agent_id: u32,
    pub capacity: usize,
    entries: VecDeque<MemoryEntry>,
}

impl AgentMemory {
    pub fn new(agent_id: u32, capacity: usize) -> Self {
        Self {
            agent_id,
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    pub fn push(&mut self, entry: MemoryEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest similarity to any entry. Exact text matches count as 1 so that
    /// rounding never lets a repeated thought pass as new.
    pub fn max_similarity(&self, text: &str, embedding: &EmbeddingVector) -> Option<f64> {
        self.entries
            .iter()
            .map(|e| {
                if e.text == text {
                    1.0
                } else {
                    cosine_similarity(&embedding.values, &e.embedding.values).unwrap_or(0.0)
                }
            })
            .reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositoryEntry {
    pub record_id: u64,
    pub agent_id: u32,
    pub tick: u64,
    pub combined_text: String,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("record id {got} does not follow {last}")]
    NonIncreasing { last: u64, got: u64 },
    #[error("repository i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("repository line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Append-only store of emergent intentions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntentionRepository {
    entries: Vec<RepositoryEntry>,
}

impl IntentionRepository {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, entry: RepositoryEntry) -> Result<(), RepositoryError> {
        if let Some(last) = self.entries.last() {
            if entry.record_id <= last.record_id {
                return Err(RepositoryError::NonIncreasing {
                    last: last.record_id,
                    got: entry.record_id,
                });
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[RepositoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for e in &self.entries {
            h.update(serde_json::to_vec(e).expect("entry serializes"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), RepositoryError> {
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self, RepositoryError> {
        let mut repo = Self::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: RepositoryEntry = serde_json::from_str(&line).map_err(|e| RepositoryError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            repo.append(e)?;
        }
        Ok(repo)
    }
}

/// Yes/no judgement from a chat endpoint.
pub struct LlmDetector {
    pub transport: Box<dyn ChatTransport>,
    pub config: LlmEndpointConfig,
    pub template: String,
    /// Used when the reply has no usable yes/no.
    pub fallback_theta: f64,
}

pub enum EmergenceDetector {
    Similarity { theta: f64 },
    Llm(LlmDetector),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("record is missing its thoughts")]
    MissingRecord,
    #[error("detector reply has no yes/no: {0:?}")]
    Unparsable(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// Leading yes/no token of a reply, after any think block.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    let body = strip_think(reply, "<think>", "</think>");
    let word: String = body
        .trim_start()
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

/// Similarity rule: new when memory is empty or nothing in it reaches `theta`.
pub fn is_novel(record: &ThoughtRecord, embedding: &EmbeddingVector, memory: &AgentMemory, theta: f64) -> bool {
    match memory.max_similarity(&record.combined_text, embedding) {
        None => true,
        Some(s) => s < theta,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub emergent: bool,
    /// Set when the LLM judgement was unusable and the similarity rule decided.
    pub fallback: Option<String>,
}

pub fn detect_emergence(
    record: &ThoughtRecord,
    embedding: &EmbeddingVector,
    memory: &AgentMemory,
    detector: &EmergenceDetector,
) -> Result<Detection, DetectError> {
    if record.missing {
        return Err(DetectError::MissingRecord);
    }
    match detector {
        EmergenceDetector::Similarity { theta } => Ok(Detection {
            emergent: is_novel(record, embedding, memory, *theta),
            fallback: None,
        }),
        EmergenceDetector::Llm(d) => {
            let verdict = ask_llm(d, record, memory);
            match verdict {
                Ok(emergent) => Ok(Detection { emergent, fallback: None }),
                Err(e) => Ok(Detection {
                    emergent: is_novel(record, embedding, memory, d.fallback_theta),
                    fallback: Some(e.to_string()),
                }),
            }
        }
    }
}

fn ask_llm(d: &LlmDetector, record: &ThoughtRecord, memory: &AgentMemory) -> Result<bool, DetectError> {
    let summaries: Vec<String> = memory.entries().map(|e| format!("- (tick {}) {}", e.tick, e.text)).collect();
    let prompt = render_template(
        &d.template,
        &[
            ("memory", if summaries.is_empty() { "(none)".into() } else { summaries.join("\n") }),
            ("thought", record.combined_text.clone()),
        ],
    )
    .map_err(|e| DetectError::Unparsable(e.to_string()))?;
    let request = ChatRequest {
        model: d.config.model_id.clone(),
        temperature: d.config.temperature,
        messages: vec![ChatMessage::user(prompt)],
    };
    let reply = d.transport.complete(&request)?;
    parse_yes_no(&reply).ok_or(DetectError::Unparsable(reply))
}

/// Append to the repository when emergent; always remember the record.
pub fn update_repository(
    repo: &mut IntentionRepository,
    memory: &mut AgentMemory,
    record_id: u64,
    record: &ThoughtRecord,
    embedding: &EmbeddingVector,
    is_emergent: bool,
) -> Result<(), RepositoryError> {
    if is_emergent {
        repo.append(RepositoryEntry {
            record_id,
            agent_id: record.agent_id,
            tick: record.tick,
            combined_text: record.combined_text.clone(),
            embedding: embedding.clone(),
        })?;
    }
    memory.push(MemoryEntry {
        tick: record.tick,
        text: record.combined_text.clone(),
        embedding: embedding.clone(),
    });
    Ok(())
}

/// Outcome of mining a record stream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MiningReport {
    pub repository: IntentionRepository,
    pub records_seen: usize,
    pub missing: usize,
    pub warnings: Vec<String>,
}

/// Runs the detector over records in (tick, agent) order, assigning record
/// ids by position in that order. With `analyzer` off nothing is detected and
/// the repository stays empty.
pub fn mine(
    records: &[ThoughtRecord],
    embedder: &Embedder,
    detector: &EmergenceDetector,
    memory_capacity: usize,
    analyzer: bool,
) -> Result<MiningReport, DetectError> {
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].tick, records[i].agent_id));
    let mut memories: BTreeMap<u32, AgentMemory> = BTreeMap::new();
    let mut report = MiningReport::default();
    for (rid, &i) in order.iter().enumerate() {
        let record = &records[i];
        report.records_seen += 1;
        if record.missing {
            report.missing += 1;
            continue;
        }
        if !analyzer {
            continue;
        }
        let embedding = embedder.embed(&record.combined_text)?;
        let memory = memories
            .entry(record.agent_id)
            .or_insert_with(|| AgentMemory::new(record.agent_id, memory_capacity));
        let det = detect_emergence(record, &embedding, memory, detector)?;
        if let Some(why) = det.fallback {
            report
                .warnings
                .push(format!("record {rid}: detector fell back to similarity: {why}"));
        }
        update_repository(&mut report.repository, memory, rid as u64, record, &embedding, det.emergent)
            .expect("record ids increase by construction");
    }
    Ok(report)
}
