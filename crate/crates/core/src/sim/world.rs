use std::collections::{BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ConfigError, SimConfig, OFFER_LIMIT};
use super::geometry::{move_toward, Position};
use crate::decision::{
    persona_for, DecisionBackendSet, DecisionContext, DecisionKind, Decided, Failed, LeaderInfo,
    LlmExchange, OfferedOrder, Persona, Rankings, ThoughtPair, WorkHoursDecision,
};
use crate::trace::{DecisionDetail, EventPayload, EventSink, OrderChange, RiderSummary, TraceError};

/// Day summaries kept per rider for prompting.
pub const RIDER_MEMORY_CAPACITY: usize = 20;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("simulation already finished at tick {0}")]
    Finished(u64),
    #[error("unknown rider {0}")]
    UnknownRider(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum OrderState {
    Pending,
    Assigned { rider: u32 },
    PickedUp { rider: u32 },
    Delivered { rider: u32, tick: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: u64,
    pub pickup: Position,
    pub dropoff: Position,
    pub payment: u32,
    pub created_tick: u64,
    pub state: OrderState,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayStats {
    pub distance: u64,
    pub earnings: u64,
    pub orders: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiderState {
    pub id: u32,
    pub persona: Persona,
    pub position: Position,
    /// Hours for the current day.
    pub shift: WorkHoursDecision,
    pub yesterday_shift: WorkHoursDecision,
    pub held_orders: Vec<u64>,
    pub earnings: u64,
    pub labor_cost: f64,
    pub work_ticks: u64,
    pub orders_completed: u64,
    pub distance_ridden: u64,
    pub at_work: bool,
    pub today: DayStats,
    pub yesterday: DayStats,
    pub rankings: Rankings,
    pub memory: VecDeque<String>,
}

impl RiderState {
    fn summary(&self) -> RiderSummary {
        RiderSummary {
            id: self.id,
            earnings: self.earnings,
            labor_cost: self.labor_cost,
            work_ticks: self.work_ticks,
            orders_completed: self.orders_completed,
            distance_ridden: self.distance_ridden,
        }
    }
}

/// Switches that change what the simulation records, not how it behaves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Record both thought perspectives. Off keeps only the rational text.
    pub inspector: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { inspector: true }
    }
}

/// Outcome of applying one order selection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    pub accepted: Vec<u64>,
    pub truncated: Vec<u64>,
    pub rejected: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub config: SimConfig,
    pub options: SimOptions,
    pub tick: u64,
    pub riders: Vec<RiderState>,
    /// Indexed by order id.
    pub order_book: Vec<Order>,
    pending: BTreeSet<u64>,
}

/// Generator for the order stream of one tick. Demand depends only on
/// (seed, tick), never on what riders did earlier.
fn tick_rng(seed: u64, tick: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tick + 1);
    rng
}

/// Orders arriving at `tick`, numbered from `next_id`.
pub fn generate_orders(config: &SimConfig, tick: u64, next_id: u64) -> Vec<Order> {
    let rate = config.order_rate(tick);
    if rate <= 0.0 {
        return Vec::new();
    }
    let mut rng = tick_rng(config.seed, tick);
    let count = Poisson::new(rate).expect("positive finite rate").sample(&mut rng) as u64;
    let g = config.grid_size;
    let [lo, hi] = config.payment_range;
    (0..count)
        .map(|i| Order {
            id: next_id + i,
            pickup: Position::new(rng.random_range(0..g), rng.random_range(0..g)),
            dropoff: Position::new(rng.random_range(0..g), rng.random_range(0..g)),
            payment: rng.random_range(lo..=hi),
            created_tick: tick,
            state: OrderState::Pending,
        })
        .collect()
}

/// Rank 1 for the largest value; ties go to the lower rider id.
fn ranks(values: &[u64]) -> Vec<u32> {
    let mut ids: Vec<usize> = (0..values.len()).collect();
    ids.sort_by(|&a, &b| values[b].cmp(&values[a]).then(a.cmp(&b)));
    let mut out = vec![0; values.len()];
    for (rank, id) in ids.into_iter().enumerate() {
        out[id] = rank as u32 + 1;
    }
    out
}

impl WorldState {
    pub fn new(config: SimConfig) -> Result<Self, ConfigError> {
        Self::with_options(config, SimOptions::default())
    }

    pub fn with_options(config: SimConfig, options: SimOptions) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let g = config.grid_size;
        let riders = (0..config.n_riders)
            .map(|id| {
                let persona = persona_for(config.seed, id);
                let position = Position::new(rng.random_range(0..g), rng.random_range(0..g));
                RiderState {
                    id,
                    shift: persona.default_shift,
                    yesterday_shift: persona.default_shift,
                    persona,
                    position,
                    held_orders: Vec::new(),
                    earnings: 0,
                    labor_cost: 0.0,
                    work_ticks: 0,
                    orders_completed: 0,
                    distance_ridden: 0,
                    at_work: false,
                    today: DayStats::default(),
                    yesterday: DayStats::default(),
                    rankings: Rankings {
                        distance_rank: id + 1,
                        earnings_rank: id + 1,
                        orders_rank: id + 1,
                    },
                    memory: VecDeque::new(),
                }
            })
            .collect();
        Ok(Self {
            config,
            options,
            tick: 0,
            riders,
            order_book: Vec::new(),
            pending: BTreeSet::new(),
        })
    }

    pub fn day(&self) -> u64 {
        self.tick / self.config.steps_per_day
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.config.total_steps
    }

    pub fn pending_orders(&self) -> impl Iterator<Item = &Order> {
        self.pending.iter().map(|&id| &self.order_book[id as usize])
    }

    /// SHA-256 over riders, orders and tick.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tick.to_le_bytes());
        h.update(serde_json::to_vec(&self.riders).expect("riders serialize"));
        h.update(serde_json::to_vec(&self.order_book).expect("orders serialize"));
        hex::encode(h.finalize())
    }

    fn offers_for(&self, position: Position) -> Vec<OfferedOrder> {
        let mut near: Vec<(u32, u64)> = self
            .pending
            .iter()
            .map(|&id| (position.manhattan(self.order_book[id as usize].pickup), id))
            .collect();
        near.sort_unstable();
        near.truncate(OFFER_LIMIT);
        near.into_iter()
            .map(|(_, id)| {
                let o = &self.order_book[id as usize];
                OfferedOrder {
                    id,
                    pickup: o.pickup,
                    dropoff: o.dropoff,
                    payment: o.payment,
                }
            })
            .collect()
    }

    fn context(&self, rider: &RiderState, offered: Vec<OfferedOrder>, leader: Option<LeaderInfo>) -> DecisionContext {
        DecisionContext {
            rider_id: rider.id,
            persona: rider.persona.description.clone(),
            position: rider.position,
            yesterday_shift: rider.yesterday_shift,
            rankings: rider.rankings,
            n_riders: self.config.n_riders,
            remaining_capacity: self.config.order_cap.saturating_sub(rider.held_orders.len() as u32),
            offered_orders: offered,
            leader,
            memory: rider.memory.iter().cloned().collect(),
            current_tick: self.tick,
        }
    }

    /// Apply a rider's picks. Ids must be pending orders from `offered`;
    /// valid picks beyond the order cap are dropped in offer order.
    pub fn assign_orders(
        &mut self,
        rider_id: u32,
        selection: &[u64],
        offered: &[u64],
    ) -> Result<Assignment, SimError> {
        let idx = rider_id as usize;
        if idx >= self.riders.len() {
            return Err(SimError::UnknownRider(rider_id));
        }
        let mut out = Assignment::default();
        let mut valid = Vec::new();
        for &id in selection {
            let ok = offered.contains(&id) && self.pending.contains(&id) && !valid.contains(&id);
            if ok {
                valid.push(id);
            } else {
                out.rejected.push(id);
            }
        }
        valid.sort_by_key(|id| offered.iter().position(|o| o == id));
        let room = (self.config.order_cap as usize).saturating_sub(self.riders[idx].held_orders.len());
        for id in valid {
            if out.accepted.len() < room {
                self.pending.remove(&id);
                self.order_book[id as usize].state = OrderState::Assigned { rider: rider_id };
                self.riders[idx].held_orders.push(id);
                out.accepted.push(id);
            } else {
                out.truncated.push(id);
            }
        }
        Ok(out)
    }

    fn emit_thought(
        &self,
        sink: &mut impl EventSink,
        rider: u32,
        kind: DecisionKind,
        thoughts: Option<&ThoughtPair>,
    ) -> Result<(), TraceError> {
        let (bounded, rational) = match thoughts {
            Some(t) if self.options.inspector => (t.bounded.clone(), t.rational.clone()),
            Some(t) => (String::new(), t.rational.clone()),
            None => (String::new(), String::new()),
        };
        sink.emit(
            self.tick,
            EventPayload::Thought {
                rider,
                decision_kind: kind,
                bounded,
                rational,
                missing: thoughts.is_none(),
            },
        )
    }

    fn emit_exchanges(&self, sink: &mut impl EventSink, rider: u32, exchanges: &[LlmExchange]) -> Result<(), TraceError> {
        for x in exchanges {
            sink.emit(
                self.tick,
                EventPayload::LlmExchange {
                    rider,
                    purpose: x.purpose.clone(),
                    request: x.request.clone(),
                    response: x.response.clone(),
                },
            )?;
        }
        Ok(())
    }

    /// Roll day stats into yesterday, re-rank riders and write the day into
    /// each rider's memory. Returns yesterday's top earner.
    fn close_day(&mut self) -> Option<LeaderInfo> {
        let n = self.riders.len();
        let pick = |f: fn(&DayStats) -> u64| ranks(&self.riders.iter().map(|r| f(&r.today)).collect::<Vec<_>>());
        let dist = pick(|d| d.distance);
        let earn = pick(|d| d.earnings);
        let orders = pick(|d| d.orders);
        let day = self.day();
        for (i, r) in self.riders.iter_mut().enumerate() {
            r.rankings = Rankings {
                distance_rank: dist[i],
                earnings_rank: earn[i],
                orders_rank: orders[i],
            };
            r.yesterday = std::mem::take(&mut r.today);
            r.yesterday_shift = r.shift;
            r.memory.push_back(format!(
                "Day {day}: worked {}:00-{}:00, earned {} from {} orders and rode {} units; ranked {} in earnings.",
                r.shift.go_to_work_hour,
                r.shift.get_off_work_hour,
                r.yesterday.earnings,
                r.yesterday.orders,
                r.yesterday.distance,
                earn[i]
            ));
            if r.memory.len() > RIDER_MEMORY_CAPACITY {
                r.memory.pop_front();
            }
        }
        (0..n).find(|&i| earn[i] == 1).map(|i| LeaderInfo {
            rider_id: i as u32,
            shift: self.riders[i].yesterday_shift,
        })
    }

    fn start_day(&mut self, backends: &DecisionBackendSet, sink: &mut impl EventSink) -> Result<(), SimError> {
        // day 0 has no yesterday: riders decide from their persona hours, with
        // id-ordered placeholder ranks and no leader to look at
        let leader = if self.day() == 0 { None } else { self.close_day() };
        let contexts: Vec<_> = self.riders.iter().map(|r| self.context(r, Vec::new(), leader)).collect();
        let results = backends.decide_work_hours_batch(&contexts);
        for (i, result) in results.into_iter().enumerate() {
            let rider = i as u32;
            match result {
                Ok(Decided { decision, thoughts, exchanges }) => {
                    self.emit_exchanges(sink, rider, &exchanges)?;
                    self.riders[i].shift = decision;
                    self.emit_decision_hours(sink, rider, decision, false)?;
                    self.emit_thought(sink, rider, DecisionKind::WorkHours, Some(&thoughts))?;
                }
                Err(Failed { error, exchanges }) => {
                    self.emit_exchanges(sink, rider, &exchanges)?;
                    sink.emit(
                        self.tick,
                        EventPayload::Warning {
                            message: format!("rider {rider} work-hours decision failed: {error}; keeping yesterday's hours"),
                        },
                    )?;
                    let kept = self.riders[i].yesterday_shift;
                    self.riders[i].shift = kept;
                    self.emit_decision_hours(sink, rider, kept, true)?;
                    self.emit_thought(sink, rider, DecisionKind::WorkHours, None)?;
                }
            }
        }
        Ok(())
    }

    fn emit_decision_hours(
        &self,
        sink: &mut impl EventSink,
        rider: u32,
        d: WorkHoursDecision,
        fallback: bool,
    ) -> Result<(), TraceError> {
        sink.emit(
            self.tick,
            EventPayload::Decision {
                rider,
                decision: DecisionDetail::WorkHours {
                    start: d.go_to_work_hour,
                    end: d.get_off_work_hour,
                    fallback,
                },
            },
        )
    }

    fn select_for(
        &mut self,
        i: usize,
        backends: &DecisionBackendSet,
        sink: &mut impl EventSink,
    ) -> Result<(), SimError> {
        let offered = self.offers_for(self.riders[i].position);
        if offered.is_empty() {
            return Ok(());
        }
        let offered_ids: Vec<u64> = offered.iter().map(|o| o.id).collect();
        let ctx = self.context(&self.riders[i], offered, None);
        let rider = i as u32;
        let (picks, thoughts, fallback) = match backends.for_rider(rider).select_orders(&ctx) {
            Ok(Decided { decision, thoughts, exchanges }) => {
                self.emit_exchanges(sink, rider, &exchanges)?;
                (decision.order_ids, Some(thoughts), false)
            }
            Err(Failed { error, exchanges }) => {
                self.emit_exchanges(sink, rider, &exchanges)?;
                sink.emit(
                    self.tick,
                    EventPayload::Warning {
                        message: format!("rider {rider} order selection failed: {error}; selecting none"),
                    },
                )?;
                (Vec::new(), None, true)
            }
        };
        let a = self.assign_orders(rider, &picks, &offered_ids)?;
        for &id in &a.accepted {
            sink.emit(
                self.tick,
                EventPayload::OrderEvent {
                    order: id,
                    change: OrderChange::Assigned { rider },
                },
            )?;
        }
        if !a.truncated.is_empty() {
            sink.emit(
                self.tick,
                EventPayload::Warning {
                    message: format!("rider {rider} selection truncated at order cap: {:?}", a.truncated),
                },
            )?;
        }
        sink.emit(
            self.tick,
            EventPayload::Decision {
                rider,
                decision: DecisionDetail::OrderSelection {
                    offered: offered_ids,
                    accepted: a.accepted,
                    truncated: a.truncated,
                    rejected: a.rejected,
                    held: self.riders[i].held_orders.len() as u32,
                    fallback,
                },
            },
        )?;
        self.emit_thought(sink, rider, DecisionKind::OrderSelection, thoughts.as_ref())?;
        Ok(())
    }

    /// Flip states of held orders whose next stop is the rider's position.
    fn settle_arrivals(&mut self, i: usize, sink: &mut impl EventSink) -> Result<(), TraceError> {
        let rider = i as u32;
        while let Some(&id) = self.riders[i].held_orders.first() {
            let order = &mut self.order_book[id as usize];
            let pos = self.riders[i].position;
            match order.state {
                OrderState::Assigned { .. } if order.pickup == pos => {
                    order.state = OrderState::PickedUp { rider };
                    sink.emit(self.tick, EventPayload::OrderEvent { order: id, change: OrderChange::PickedUp { rider } })?;
                }
                OrderState::PickedUp { .. } if order.dropoff == pos => {
                    order.state = OrderState::Delivered { rider, tick: self.tick };
                    let payment = order.payment;
                    let r = &mut self.riders[i];
                    r.held_orders.remove(0);
                    r.earnings += payment as u64;
                    r.orders_completed += 1;
                    r.today.earnings += payment as u64;
                    r.today.orders += 1;
                    sink.emit(
                        self.tick,
                        EventPayload::OrderEvent {
                            order: id,
                            change: OrderChange::Delivered { rider, payment },
                        },
                    )?;
                }
                _ => break,
            }
        }
        Ok(())
    }

    /// Move rider `i` along its stops, spending at most one tick's movement.
    fn advance(&mut self, i: usize, sink: &mut impl EventSink) -> Result<u32, TraceError> {
        let mut budget = self.config.max_move_per_step;
        let mut moved = 0;
        loop {
            self.settle_arrivals(i, sink)?;
            let Some(&id) = self.riders[i].held_orders.first() else { break };
            if budget == 0 {
                break;
            }
            let order = &self.order_book[id as usize];
            let target = match order.state {
                OrderState::Assigned { .. } => order.pickup,
                _ => order.dropoff,
            };
            let from = self.riders[i].position;
            let next = move_toward(from, target, budget);
            let d = from.manhattan(next);
            budget -= d;
            moved += d;
            self.riders[i].position = next;
            if next != target {
                break;
            }
        }
        let r = &mut self.riders[i];
        r.distance_ridden += moved as u64;
        r.today.distance += moved as u64;
        Ok(moved)
    }

    /// Advance the world by one tick.
    pub fn step(&mut self, backends: &DecisionBackendSet, sink: &mut impl EventSink) -> Result<(), SimError> {
        if self.is_finished() {
            return Err(SimError::Finished(self.tick));
        }
        if self.tick.is_multiple_of(self.config.steps_per_day) {
            self.start_day(backends, sink)?;
        }

        let new = generate_orders(&self.config, self.tick, self.order_book.len() as u64);
        for o in new {
            sink.emit(
                self.tick,
                EventPayload::OrderEvent {
                    order: o.id,
                    change: OrderChange::Created {
                        pickup: o.pickup,
                        dropoff: o.dropoff,
                        payment: o.payment,
                    },
                },
            )?;
            self.pending.insert(o.id);
            self.order_book.push(o);
        }

        let hour = self.config.hour_of_tick(self.tick);
        let cap = self.config.order_cap as usize;
        for i in 0..self.riders.len() {
            let in_shift = self.riders[i].shift.works_during(hour);
            self.riders[i].at_work = in_shift || !self.riders[i].held_orders.is_empty();
            if in_shift && self.riders[i].held_orders.len() < cap {
                self.select_for(i, backends, sink)?;
            }
        }

        let mut working = 0u32;
        for i in 0..self.riders.len() {
            if !self.riders[i].at_work {
                continue;
            }
            let carrying = self.riders[i].held_orders.len() as u32;
            let moved = self.advance(i, sink)?;
            let r = &mut self.riders[i];
            r.work_ticks += 1;
            r.labor_cost = self.config.wage_rate * r.work_ticks as f64;
            working += 1;
            sink.emit(
                self.tick,
                EventPayload::Position {
                    rider: r.id,
                    x: r.position.x,
                    y: r.position.y,
                    carrying,
                    moved,
                },
            )?;
        }
        sink.emit(
            self.tick,
            EventPayload::CostAccrual {
                riders: working,
                amount: self.config.wage_rate * working as f64,
            },
        )?;

        self.tick += 1;
        Ok(())
    }

    pub fn summaries(&self) -> Vec<RiderSummary> {
        self.riders.iter().map(RiderState::summary).collect()
    }
}

/// Run a complete simulation, writing `sim_start`, every tick, and `sim_end`.
pub fn run_simulation(
    config: SimConfig,
    options: SimOptions,
    backends: &DecisionBackendSet,
    sink: &mut impl EventSink,
) -> Result<WorldState, SimError> {
    let mut world = WorldState::with_options(config, options)?;
    sink.emit(
        0,
        EventPayload::SimStart {
            config_digest: world.config.digest(),
            config: world.config.clone(),
        },
    )?;
    while !world.is_finished() {
        world.step(backends, sink)?;
    }
    sink.emit(
        world.tick,
        EventPayload::SimEnd {
            orders_generated: world.order_book.len() as u64,
            riders: world.summaries(),
        },
    )?;
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{OrderPolicy, ScriptedBackend, ScriptedPolicy};
    use crate::trace::TraceEvent;

    fn scripted() -> DecisionBackendSet {
        DecisionBackendSet::new(ScriptedBackend::new(ScriptedPolicy::default(), 1))
    }

    fn small(n_riders: u32) -> SimConfig {
        SimConfig {
            n_riders,
            total_steps: 240,
            ..SimConfig::default()
        }
    }

    #[test]
    fn init_places_riders_on_grid() {
        let w = WorldState::new(SimConfig {
            n_riders: 100,
            grid_size: 200,
            seed: 42,
            ..SimConfig::default()
        })
        .unwrap();
        assert_eq!(w.riders.len(), 100);
        assert!(w.riders.iter().all(|r| r.position.in_grid(200)));
        assert_eq!(w.tick, 0);
        assert!(w.order_book.is_empty());
    }

    #[test]
    fn init_rejects_invalid_config() {
        let bad = SimConfig {
            grid_size: 0,
            ..SimConfig::default()
        };
        assert!(matches!(
            WorldState::new(bad),
            Err(ConfigError::Invalid { field: "grid_size", .. })
        ));
    }

    #[test]
    fn init_is_deterministic() {
        let a = WorldState::new(SimConfig { seed: 7, ..SimConfig::default() }).unwrap();
        let b = WorldState::new(SimConfig { seed: 7, ..SimConfig::default() }).unwrap();
        assert_eq!(a.digest(), b.digest());
    }

    #[test]
    fn zero_riders_idles() {
        let mut events: Vec<TraceEvent> = Vec::new();
        let w = run_simulation(small(0), SimOptions::default(), &scripted(), &mut events).unwrap();
        assert_eq!(w.tick, 240);
        assert!(events.iter().all(|e| !matches!(e.payload, EventPayload::Position { .. } | EventPayload::Thought { .. })));
    }

    #[test]
    fn zero_rate_generates_nothing() {
        let cfg = SimConfig {
            base_order_rate: 0.0,
            ..SimConfig::default()
        };
        assert!((0..500).all(|t| generate_orders(&cfg, t, 0).is_empty()));
    }

    #[test]
    fn orders_depend_only_on_seed_and_tick() {
        let cfg = SimConfig::default();
        let a = generate_orders(&cfg, 60, 10);
        let b = generate_orders(&cfg, 60, 10);
        assert_eq!(a, b);
        for o in &a {
            assert!(o.pickup.in_grid(200) && o.dropoff.in_grid(200));
            assert!((5..=15).contains(&o.payment));
            assert_eq!(o.state, OrderState::Pending);
        }
    }

    #[test]
    fn peak_rate_is_three_times_off_peak() {
        // Monte Carlo mean over 10,000 draws against the analytic rate
        let cfg = SimConfig {
            base_order_rate: 2.0,
            peak_multiplier: 3.0,
            ..SimConfig::default()
        };
        let mean = |tick_of_day: u64| {
            let total: usize = (0..10_000u64)
                .map(|d| generate_orders(&cfg, d * cfg.steps_per_day + tick_of_day, 0).len())
                .sum();
            total as f64 / 10_000.0
        };
        let peak = mean(60);
        let off = mean(10);
        assert!((peak / 6.0 - 1.0).abs() < 0.05, "peak mean {peak}");
        assert!((off / 2.0 - 1.0).abs() < 0.05, "off-peak mean {off}");
        assert!((peak / off / 3.0 - 1.0).abs() < 0.05);
    }

    fn world_with_order(held: usize) -> WorldState {
        let mut w = WorldState::new(SimConfig {
            n_riders: 1,
            base_order_rate: 0.0,
            ..SimConfig::default()
        })
        .unwrap();
        for id in 0..5u64 {
            w.order_book.push(Order {
                id,
                pickup: Position::new(id as u32, 0),
                dropoff: Position::new(50, 50),
                payment: 10,
                created_tick: 0,
                state: OrderState::Pending,
            });
            w.pending.insert(id);
        }
        for id in 0..held as u64 {
            w.assign_orders(0, &[id], &[id]).unwrap();
        }
        w
    }

    #[test]
    fn empty_selection_changes_nothing() {
        let mut w = world_with_order(0);
        let before = w.digest();
        let a = w.assign_orders(0, &[], &[0, 1]).unwrap();
        assert_eq!(a, Assignment::default());
        assert_eq!(w.digest(), before);
    }

    #[test]
    fn selection_truncated_at_cap() {
        let mut w = world_with_order(2);
        let a = w.assign_orders(0, &[3, 2], &[2, 3, 4]).unwrap();
        assert_eq!(a.accepted, vec![2]);
        assert_eq!(a.truncated, vec![3]);
        assert_eq!(w.riders[0].held_orders.len(), 3);
        assert_eq!(w.order_book[3].state, OrderState::Pending);
    }

    #[test]
    fn unoffered_ids_rejected() {
        let mut w = world_with_order(0);
        let a = w.assign_orders(0, &[1, 4, 99], &[0, 1, 2]).unwrap();
        assert_eq!(a.accepted, vec![1]);
        assert_eq!(a.rejected, vec![4, 99]);
        assert_eq!(w.order_book[4].state, OrderState::Pending);
    }

    #[test]
    fn adjacent_pickup_is_collected() {
        let mut w = world_with_order(0);
        w.riders[0].position = Position::new(2, 1);
        w.riders[0].shift = WorkHoursDecision::new(0, 23);
        w.assign_orders(0, &[2], &[2]).unwrap();
        let mut events: Vec<TraceEvent> = Vec::new();
        // no decision is needed this tick: pending order 0 is offered but
        // the scripted backend may take it, which is fine; we only check order 2
        w.step(&scripted(), &mut events).unwrap();
        assert!(matches!(
            w.order_book[2].state,
            OrderState::PickedUp { rider: 0 } | OrderState::Delivered { rider: 0, .. }
        ));
        assert!(events.iter().any(|e| matches!(
            e.payload,
            EventPayload::OrderEvent { order: 2, change: OrderChange::PickedUp { rider: 0 } }
        )));
    }

    #[test]
    fn idle_world_only_generates_orders() {
        let mut w = WorldState::new(SimConfig {
            n_riders: 3,
            ..SimConfig::default()
        })
        .unwrap();
        for r in &mut w.riders {
            r.shift = WorkHoursDecision::new(5, 5);
        }
        // mid-day, so no work-hours decision is due
        w.tick = 1;
        let mut events: Vec<TraceEvent> = Vec::new();
        w.step(&scripted(), &mut events).unwrap();
        assert_eq!(w.tick, 2);
        assert!(events.iter().all(|e| matches!(
            e.payload,
            EventPayload::OrderEvent { change: OrderChange::Created { .. }, .. }
                | EventPayload::CostAccrual { riders: 0, .. }
        )));
    }

    #[test]
    fn full_run_is_deterministic() {
        let run = || {
            let mut events: Vec<TraceEvent> = Vec::new();
            let w = run_simulation(small(20), SimOptions::default(), &scripted(), &mut events).unwrap();
            (w.digest(), serde_json::to_string(&events).unwrap())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ranks_break_ties_by_id() {
        assert_eq!(ranks(&[5, 9, 5, 1]), vec![2, 1, 3, 4]);
        assert_eq!(ranks(&[]), Vec::<u32>::new());
    }

    #[test]
    fn inspector_off_drops_bounded_text() {
        let mut events: Vec<TraceEvent> = Vec::new();
        run_simulation(
            small(10),
            SimOptions { inspector: false },
            &DecisionBackendSet::new(ScriptedBackend::new(
                ScriptedPolicy {
                    orders: OrderPolicy::GreedyNearest,
                    ..ScriptedPolicy::default()
                },
                1,
            )),
            &mut events,
        )
        .unwrap();
        let thoughts: Vec<_> = events
            .iter()
            .filter_map(|e| match &e.payload {
                EventPayload::Thought { bounded, rational, .. } => Some((bounded, rational)),
                _ => None,
            })
            .collect();
        assert!(!thoughts.is_empty());
        assert!(thoughts.iter().all(|(b, r)| b.is_empty() && !r.is_empty()));
    }
}
