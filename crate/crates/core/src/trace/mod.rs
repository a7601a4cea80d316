//! Append-only event log shared by the simulator and every analysis stage.
//!
//! A trace file is newline-delimited JSON: line 1 is a [`TraceHeader`], every
//! following line one [`TraceEvent`]. Sequence numbers start at 1 and are
//! contiguous, ticks never decrease, `sim_start` comes first and `sim_end`
//! last. Violations are hard errors on both the write and the read side.

mod audit;
mod event;
mod ingest;

pub use audit::{audit_trace, AuditReport};
pub use event::{
    DecisionDetail, EventPayload, OrderChange, RiderSummary, TraceEvent, TraceHeader, SCHEMA_VERSION,
};
pub use ingest::{ingest_external, ingest_reader, IngestError, IngestMapping, IngestResult};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

use crate::sim::SimConfig;

/// Hex SHA-256 of raw bytes; used to compare trace files.
pub fn digest_bytes(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace has no header line")]
    MissingHeader,
    #[error("trace schema version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("malformed trace line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("trace ordering violation at line {line}: {message}")]
    Ordering { line: usize, message: String },
    #[error("trace ends without sim_end")]
    Incomplete,
    #[error("config digest mismatch: trace has {trace}, config has {config}")]
    DigestMismatch { trace: String, config: String },
}

/// Receives simulation events; sequence numbers are assigned by the sink.
pub trait EventSink {
    fn emit(&mut self, tick: u64, payload: EventPayload) -> Result<(), TraceError>;
}

impl EventSink for Vec<TraceEvent> {
    fn emit(&mut self, tick: u64, payload: EventPayload) -> Result<(), TraceError> {
        let seq = self.len() as u64 + 1;
        self.push(TraceEvent { seq, tick, payload });
        Ok(())
    }
}

/// Ordering rules common to writing and reading.
#[derive(Debug, Default, Clone)]
struct OrderGuard {
    last_seq: u64,
    last_tick: u64,
    started: bool,
    ended: bool,
}

impl OrderGuard {
    fn check(&mut self, event: &TraceEvent, line: usize) -> Result<(), TraceError> {
        let fail = |message: String| Err(TraceError::Ordering { line, message });
        if self.ended {
            return fail(format!("event seq {} after sim_end", event.seq));
        }
        let is_start = matches!(event.payload, EventPayload::SimStart { .. });
        if !self.started && !is_start {
            return fail(format!("first event must be sim_start, found {}", event.payload.kind()));
        }
        if self.started && is_start {
            return fail("second sim_start".into());
        }
        if event.seq != self.last_seq + 1 {
            return fail(format!("seq {} follows {}", event.seq, self.last_seq));
        }
        if self.started && event.tick < self.last_tick {
            return fail(format!("tick {} after tick {}", event.tick, self.last_tick));
        }
        self.started = true;
        self.ended = matches!(event.payload, EventPayload::SimEnd { .. });
        self.last_seq = event.seq;
        self.last_tick = event.tick;
        Ok(())
    }
}

/// Streaming writer enforcing the trace invariants.
pub struct TraceWriter<W: Write> {
    out: W,
    guard: OrderGuard,
    lines: usize,
}

impl TraceWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &TraceHeader) -> Result<Self, TraceError> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut out: W, header: &TraceHeader) -> Result<Self, TraceError> {
        write_json_line(&mut out, header)?;
        Ok(Self {
            out,
            guard: OrderGuard::default(),
            lines: 1,
        })
    }

    pub fn append_event(&mut self, event: &TraceEvent) -> Result<(), TraceError> {
        self.guard.check(event, self.lines + 1)?;
        write_json_line(&mut self.out, event)?;
        self.lines += 1;
        if self.guard.ended {
            self.out.flush()?;
        }
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.guard.ended
    }

    pub fn into_inner(mut self) -> Result<W, TraceError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> EventSink for TraceWriter<W> {
    fn emit(&mut self, tick: u64, payload: EventPayload) -> Result<(), TraceError> {
        let event = TraceEvent {
            seq: self.guard.last_seq + 1,
            tick,
            payload,
        };
        self.append_event(&event)
    }
}

fn write_json_line<W: Write, T: serde::Serialize>(out: &mut W, value: &T) -> Result<(), TraceError> {
    serde_json::to_writer(&mut *out, value).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// A fully validated trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub events: Vec<TraceEvent>,
}

impl Trace {
    /// The configuration recorded in `sim_start`, if any.
    pub fn config(&self) -> Option<&SimConfig> {
        self.events.iter().find_map(|e| match &e.payload {
            EventPayload::SimStart { config, .. } => Some(config),
            _ => None,
        })
    }

    /// Configuration to re-run this trace with; fails if the recorded config
    /// no longer hashes to the header digest.
    pub fn replay_config(&self) -> Result<SimConfig, TraceError> {
        let config = self.config().ok_or(TraceError::Incomplete)?.clone();
        let digest = config.digest();
        if digest != self.header.config_digest {
            return Err(TraceError::DigestMismatch {
                trace: self.header.config_digest.clone(),
                config: digest,
            });
        }
        Ok(config)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TraceError> {
        let mut w = TraceWriter::new(Vec::new(), &self.header)?;
        for e in &self.events {
            w.append_event(e)?;
        }
        w.into_inner()
    }

    pub fn write(&self, path: &Path) -> Result<(), TraceError> {
        let mut w = TraceWriter::create(path, &self.header)?;
        for e in &self.events {
            w.append_event(e)?;
        }
        w.into_inner()?;
        Ok(())
    }
}

/// Iterates the events of a trace after validating its header. Every event is
/// checked against the ordering rules as it is read.
pub struct TraceReader<R: BufRead> {
    lines: std::io::Lines<R>,
    line_no: usize,
    guard: OrderGuard,
    pub header: TraceHeader,
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(input: R) -> Result<Self, TraceError> {
        let mut lines = input.lines();
        let first = match lines.next() {
            None => return Err(TraceError::MissingHeader),
            Some(line) => line?,
        };
        if first.trim().is_empty() {
            return Err(TraceError::MissingHeader);
        }
        let raw: serde_json::Value = serde_json::from_str(&first).map_err(|e| TraceError::MalformedLine {
            line: 1,
            message: e.to_string(),
        })?;
        let version = raw
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or(TraceError::MissingHeader)?;
        if version != SCHEMA_VERSION as u64 {
            return Err(TraceError::VersionMismatch {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let header = serde_json::from_value(raw).map_err(|e| TraceError::MalformedLine {
            line: 1,
            message: e.to_string(),
        })?;
        Ok(Self {
            lines,
            line_no: 1,
            guard: OrderGuard::default(),
            header,
        })
    }

    fn finished(&self) -> bool {
        self.guard.ended
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<TraceEvent, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        let line = match self.lines.next()? {
            Ok(line) => line,
            Err(e) => return Some(Err(e.into())),
        };
        self.line_no += 1;
        let event: TraceEvent = match serde_json::from_str(&line) {
            Ok(e) => e,
            Err(e) => {
                return Some(Err(TraceError::MalformedLine {
                    line: self.line_no,
                    message: e.to_string(),
                }))
            }
        };
        Some(self.guard.check(&event, self.line_no).map(|_| event))
    }
}

pub fn read_trace(input: impl BufRead) -> Result<Trace, TraceError> {
    let mut reader = TraceReader::new(input)?;
    let events = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    if !reader.finished() {
        return Err(TraceError::Incomplete);
    }
    Ok(Trace {
        header: reader.header,
        events,
    })
}

/// Read and validate a complete trace file.
pub fn load_trace(path: &Path) -> Result<Trace, TraceError> {
    read_trace(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Position;

    fn header() -> TraceHeader {
        TraceHeader::for_config(&SimConfig::default(), 0)
    }

    fn start() -> EventPayload {
        EventPayload::SimStart {
            config_digest: SimConfig::default().digest(),
            config: SimConfig::default(),
        }
    }

    fn end() -> EventPayload {
        EventPayload::SimEnd {
            orders_generated: 0,
            riders: vec![],
        }
    }

    #[test]
    fn first_event_must_be_sim_start() {
        let mut w = TraceWriter::new(Vec::new(), &header()).unwrap();
        let err = w
            .emit(0, EventPayload::Warning { message: "x".into() })
            .unwrap_err();
        assert!(matches!(err, TraceError::Ordering { .. }));
    }

    #[test]
    fn seq_gap_is_rejected() {
        let mut w = TraceWriter::new(Vec::new(), &header()).unwrap();
        w.append_event(&TraceEvent { seq: 1, tick: 0, payload: start() }).unwrap();
        let err = w
            .append_event(&TraceEvent {
                seq: 3,
                tick: 0,
                payload: EventPayload::Warning { message: "gap".into() },
            })
            .unwrap_err();
        assert!(matches!(err, TraceError::Ordering { line: 3, .. }));
    }

    #[test]
    fn ticks_never_decrease_and_nothing_follows_sim_end() {
        let mut w = TraceWriter::new(Vec::new(), &header()).unwrap();
        w.emit(5, start()).unwrap();
        assert!(w.emit(4, EventPayload::Warning { message: "x".into() }).is_err());
        let mut w = TraceWriter::new(Vec::new(), &header()).unwrap();
        w.emit(0, start()).unwrap();
        w.emit(1, end()).unwrap();
        assert!(w.is_finished());
        assert!(w.emit(1, EventPayload::Warning { message: "late".into() }).is_err());
    }

    #[test]
    fn empty_input_has_no_header() {
        assert!(matches!(read_trace(&b""[..]), Err(TraceError::MissingHeader)));
    }

    #[test]
    fn version_is_checked() {
        let text = "{\"schema_version\":2,\"config_digest\":\"x\",\"seed\":1,\"created\":0}\n";
        assert!(matches!(
            read_trace(text.as_bytes()),
            Err(TraceError::VersionMismatch { found: 2, .. })
        ));
    }

    #[test]
    fn missing_sim_end_is_incomplete() {
        let mut w = TraceWriter::new(Vec::new(), &header()).unwrap();
        w.emit(0, start()).unwrap();
        let bytes = w.into_inner().unwrap();
        assert!(matches!(read_trace(&bytes[..]), Err(TraceError::Incomplete)));
    }

    #[test]
    fn truncated_line_reports_its_number() {
        let mut w = TraceWriter::new(Vec::new(), &header()).unwrap();
        w.emit(0, start()).unwrap();
        w.emit(
            0,
            EventPayload::Position {
                rider: 0,
                x: 1,
                y: 2,
                carrying: 0,
                moved: 0,
            },
        )
        .unwrap();
        w.emit(1, end()).unwrap();
        let mut bytes = w.into_inner().unwrap();
        bytes.truncate(bytes.len() - 10);
        match read_trace(&bytes[..]) {
            Err(TraceError::MalformedLine { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn replay_config_checks_digest() {
        let mut events = Vec::new();
        events.emit(0, start()).unwrap();
        events.emit(0, end()).unwrap();
        let trace = Trace { header: header(), events };
        assert_eq!(trace.replay_config().unwrap(), SimConfig::default());
        let mut tampered = trace.clone();
        tampered.header.config_digest = "00".into();
        assert!(matches!(tampered.replay_config(), Err(TraceError::DigestMismatch { .. })));
    }

    #[test]
    fn order_changes_serialize_flat() {
        let e = TraceEvent {
            seq: 2,
            tick: 7,
            payload: EventPayload::OrderEvent {
                order: 3,
                change: OrderChange::Created {
                    pickup: Position::new(1, 2),
                    dropoff: Position::new(3, 4),
                    payment: 9,
                },
            },
        };
        let text = serde_json::to_string(&e).unwrap();
        assert!(text.starts_with("{\"seq\":2,\"tick\":7,\"kind\":\"order_event\""), "{text}");
        assert_eq!(serde_json::from_str::<TraceEvent>(&text).unwrap(), e);
    }
}
