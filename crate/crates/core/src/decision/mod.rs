//! Decision and thought generation for rider agents.
//!
//! Every decision a rider makes goes through a [`DecisionBackend`], which
//! returns the decision together with a [`ThoughtPair`]: one text written from
//! a bounded-rationality perspective (persona and instinct) and one from a
//! fully rational perspective (calculation). Two backends exist:
//!
//! * [`ScriptedBackend`] — deterministic policies with templated thoughts,
//!   used for offline reproduction and tests.
//! * [`LlmBackend`] — renders the rider prompts and speaks a chat-completion
//!   wire protocol.

mod chat;
mod llm;
mod parse;
mod persona;
mod prompt;
mod scripted;

pub use chat::{ChatMessage, ChatRequest, ChatTransport, HttpChatTransport, LlmEndpointConfig};
pub use llm::{LlmBackend, DEFAULT_MEMORY_SUMMARIES};
pub use parse::{
    extract_thought, parse_decision_payload, parse_order_selection, parse_work_hours,
    render_payload, strip_think, Decision, ParseError, PayloadSchema,
};
pub use persona::{persona_for, Persona};
pub use prompt::{render as render_template, PromptTemplates, TemplateError};
pub use scripted::{HoursPolicy, OrderPolicy, ScriptedBackend, ScriptedPolicy};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::sim::Position;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    WorkHours,
    OrderSelection,
    External,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::WorkHours => "work_hours",
            DecisionKind::OrderSelection => "order_selection",
            DecisionKind::External => "external",
        }
    }
}

/// Start and end hour of a working day. Equal hours mean a day off; an end
/// earlier than the start wraps past midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkHoursDecision {
    pub go_to_work_hour: u8,
    pub get_off_work_hour: u8,
}

impl WorkHoursDecision {
    pub fn new(go_to_work_hour: u8, get_off_work_hour: u8) -> Self {
        debug_assert!(go_to_work_hour < 24 && get_off_work_hour < 24);
        Self {
            go_to_work_hour,
            get_off_work_hour,
        }
    }

    pub fn works_during(&self, hour: u32) -> bool {
        let (s, e) = (self.go_to_work_hour as u32, self.get_off_work_hour as u32);
        match s.cmp(&e) {
            std::cmp::Ordering::Less => (s..e).contains(&hour),
            std::cmp::Ordering::Equal => false,
            std::cmp::Ordering::Greater => hour >= s || hour < e,
        }
    }

    pub fn length_hours(&self) -> u32 {
        (0..24).filter(|&h| self.works_during(h)).count() as u32
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub order_ids: Vec<u64>,
}

/// The bounded-rationality and complete-rationality thoughts behind one decision.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtPair {
    pub bounded: String,
    pub rational: String,
}

impl ThoughtPair {
    pub fn new(bounded: impl Into<String>, rational: impl Into<String>) -> Self {
        Self {
            bounded: bounded.into(),
            rational: rational.into(),
        }
    }
}

/// Ranks among all riders for yesterday's work; 1 is best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rankings {
    pub distance_rank: u32,
    pub earnings_rank: u32,
    pub orders_rank: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferedOrder {
    pub id: u64,
    pub pickup: Position,
    pub dropoff: Position,
    pub payment: u32,
}

/// What the top-earning rider did yesterday, as remembered by everyone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeaderInfo {
    pub rider_id: u32,
    pub shift: WorkHoursDecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionContext {
    pub rider_id: u32,
    pub persona: String,
    pub position: Position,
    pub yesterday_shift: WorkHoursDecision,
    pub rankings: Rankings,
    pub n_riders: u32,
    pub offered_orders: Vec<OfferedOrder>,
    /// Orders the rider may still accept this tick.
    pub remaining_capacity: u32,
    pub leader: Option<LeaderInfo>,
    /// Most recent memory summaries, oldest first.
    pub memory: Vec<String>,
    pub current_tick: u64,
}

/// One raw request/response pair with an endpoint, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmExchange {
    pub purpose: String,
    pub request: ChatRequest,
    pub response: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("unusable reply: {0}")]
    Parse(#[from] ParseError),
    #[error("endpoint failure: {0}")]
    Transport(String),
    #[error("empty generation")]
    EmptyGeneration,
}

/// A failed decision; exchanges made before failing are kept for the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Failed {
    pub error: BackendError,
    pub exchanges: Vec<LlmExchange>,
}

impl From<BackendError> for Failed {
    fn from(error: BackendError) -> Self {
        Self {
            error,
            exchanges: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decided<T> {
    pub decision: T,
    pub thoughts: ThoughtPair,
    pub exchanges: Vec<LlmExchange>,
}

pub trait DecisionBackend: Send + Sync {
    fn decide_work_hours(&self, ctx: &DecisionContext) -> Result<Decided<WorkHoursDecision>, Failed>;

    fn select_orders(&self, ctx: &DecisionContext) -> Result<Decided<OrderSelection>, Failed>;

    /// Dual-perspective thoughts for an arbitrary question.
    fn extract_dual_thoughts(
        &self,
        question: &str,
        ctx: &DecisionContext,
    ) -> Result<(ThoughtPair, Vec<LlmExchange>), Failed>;

    /// How many requests this backend tolerates in flight at once.
    fn max_in_flight(&self) -> usize {
        1
    }
}

/// Backends used by a simulation: a default plus per-rider overrides.
pub struct DecisionBackendSet {
    default: Box<dyn DecisionBackend>,
    overrides: BTreeMap<u32, Box<dyn DecisionBackend>>,
}

impl DecisionBackendSet {
    pub fn new(default: impl DecisionBackend + 'static) -> Self {
        Self {
            default: Box::new(default),
            overrides: BTreeMap::new(),
        }
    }

    pub fn with_override(mut self, rider_id: u32, backend: impl DecisionBackend + 'static) -> Self {
        self.overrides.insert(rider_id, Box::new(backend));
        self
    }

    pub fn for_rider(&self, rider_id: u32) -> &dyn DecisionBackend {
        self.overrides
            .get(&rider_id)
            .map(|b| b.as_ref())
            .unwrap_or(self.default.as_ref())
    }

    /// Work-hours decisions for many riders. Requests may run concurrently up
    /// to the backend's in-flight limit; results come back in input order.
    pub fn decide_work_hours_batch(
        &self,
        contexts: &[DecisionContext],
    ) -> Vec<Result<Decided<WorkHoursDecision>, Failed>> {
        let limit = self.default.max_in_flight().max(1);
        if limit == 1 {
            return contexts
                .iter()
                .map(|ctx| self.for_rider(ctx.rider_id).decide_work_hours(ctx))
                .collect();
        }
        let mut out = Vec::with_capacity(contexts.len());
        for chunk in contexts.chunks(limit) {
            let results: Vec<_> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|ctx| scope.spawn(move || self.for_rider(ctx.rider_id).decide_work_hours(ctx)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("decision thread panicked"))
                    .collect()
            });
            out.extend(results);
        }
        out
    }
}
