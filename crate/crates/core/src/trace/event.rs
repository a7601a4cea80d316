use serde::{Deserialize, Serialize};

use crate::decision::{ChatRequest, DecisionKind};
use crate::sim::{Position, SimConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// First line of every trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub config_digest: String,
    pub seed: u64,
    /// Unix seconds. Simulations write a fixed value unless told otherwise so
    /// that traces stay byte-reproducible.
    pub created: u64,
}

impl TraceHeader {
    pub fn for_config(config: &SimConfig, created: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            config_digest: config.digest(),
            seed: config.seed,
            created,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub tick: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    SimStart {
        config_digest: String,
        config: SimConfig,
    },
    /// Where an at-work rider ended the tick.
    Position {
        rider: u32,
        x: u32,
        y: u32,
        /// Orders held while moving this tick.
        carrying: u32,
        /// Grid units travelled this tick.
        moved: u32,
    },
    Decision {
        rider: u32,
        decision: DecisionDetail,
    },
    LlmExchange {
        rider: u32,
        purpose: String,
        request: ChatRequest,
        response: String,
    },
    Thought {
        rider: u32,
        decision_kind: DecisionKind,
        bounded: String,
        rational: String,
        /// The backend failed; texts are empty and the record carries no signal.
        missing: bool,
    },
    Intention {
        record_id: u64,
        agent: u32,
        text: String,
    },
    OrderEvent {
        order: u64,
        change: OrderChange,
    },
    /// Labor cost accrued this tick by all at-work riders.
    CostAccrual {
        riders: u32,
        amount: f64,
    },
    Warning {
        message: String,
    },
    SimEnd {
        orders_generated: u64,
        riders: Vec<RiderSummary>,
    },
}

impl EventPayload {
    pub fn kind(&self) -> &'static str {
        match self {
            EventPayload::SimStart { .. } => "sim_start",
            EventPayload::Position { .. } => "position",
            EventPayload::Decision { .. } => "decision",
            EventPayload::LlmExchange { .. } => "llm_exchange",
            EventPayload::Thought { .. } => "thought",
            EventPayload::Intention { .. } => "intention",
            EventPayload::OrderEvent { .. } => "order_event",
            EventPayload::CostAccrual { .. } => "cost_accrual",
            EventPayload::Warning { .. } => "warning",
            EventPayload::SimEnd { .. } => "sim_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision_kind", rename_all = "snake_case")]
pub enum DecisionDetail {
    WorkHours {
        start: u8,
        end: u8,
        /// Backend failed and yesterday's hours were kept.
        fallback: bool,
    },
    OrderSelection {
        offered: Vec<u64>,
        accepted: Vec<u64>,
        /// Valid picks dropped because the rider hit the order cap.
        truncated: Vec<u64>,
        /// Picks that were not among the offered pending orders.
        rejected: Vec<u64>,
        /// Orders held after the selection was applied.
        held: u32,
        fallback: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum OrderChange {
    Created {
        pickup: Position,
        dropoff: Position,
        payment: u32,
    },
    Assigned {
        rider: u32,
    },
    PickedUp {
        rider: u32,
    },
    Delivered {
        rider: u32,
        payment: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiderSummary {
    pub id: u32,
    pub earnings: u64,
    pub labor_cost: f64,
    pub work_ticks: u64,
    pub orders_completed: u64,
    pub distance_ridden: u64,
}
