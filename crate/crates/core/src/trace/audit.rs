use std::collections::BTreeMap;

use super::{EventPayload, OrderChange, Trace};
use crate::decision::DecisionKind;
use crate::sim::Position;
use crate::trace::DecisionDetail;

/// Result of replaying a trace's bookkeeping. Each named check counts how
/// many times it was evaluated; `violations` lists every failure.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub events: usize,
    pub checks: BTreeMap<&'static str, u64>,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn check(&mut self, name: &'static str, ok: bool, detail: impl FnOnce() -> String) {
        *self.checks.entry(name).or_default() += 1;
        if !ok && self.violations.len() < 100 {
            self.violations.push(format!("{name}: {}", detail()));
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Pending,
    Assigned(u32),
    PickedUp(u32),
    Delivered,
}

#[derive(Default, Clone)]
struct RiderBook {
    held: u32,
    last: Option<Position>,
    work_ticks: u64,
    distance: u64,
    earnings: u64,
    delivered: u64,
}

/// Verify order conservation, speed cap, grid bounds, order cap, and the
/// earnings and labor-cost identities at every event of a simulation trace.
pub fn audit_trace(trace: &Trace) -> AuditReport {
    let mut r = AuditReport::default();
    let Some(cfg) = trace.config().cloned() else {
        r.violations.push("trace has no sim_start config".into());
        return r;
    };
    let mut orders: BTreeMap<u64, (State, u32)> = BTreeMap::new();
    let mut counts = [0u64; 4];
    let mut riders: BTreeMap<u32, RiderBook> = BTreeMap::new();
    let mut tick_positions: (u64, u32) = (0, 0);
    let idx = |s: State| match s {
        State::Pending => 0,
        State::Assigned(_) => 1,
        State::PickedUp(_) => 2,
        State::Delivered => 3,
    };

    for e in &trace.events {
        r.events += 1;
        if e.tick != tick_positions.0 {
            tick_positions = (e.tick, 0);
        }
        match &e.payload {
            EventPayload::OrderEvent { order, change } => {
                let order = *order;
                let prev = orders.get(&order).copied();
                let next = match (change, prev) {
                    (OrderChange::Created { pickup, dropoff, payment }, None) => {
                        r.check("bounds", pickup.in_grid(cfg.grid_size) && dropoff.in_grid(cfg.grid_size), || {
                            format!("order {order} created off grid")
                        });
                        let [lo, hi] = cfg.payment_range;
                        r.check("payment_range", (lo..=hi).contains(payment), || {
                            format!("order {order} pays {payment}")
                        });
                        Some((State::Pending, *payment))
                    }
                    (OrderChange::Assigned { rider }, Some((State::Pending, p))) => {
                        let b = riders.entry(*rider).or_default();
                        b.held += 1;
                        let held = b.held;
                        r.check("order_cap", held <= cfg.order_cap, || {
                            format!("rider {rider} holds {held} at seq {}", e.seq)
                        });
                        Some((State::Assigned(*rider), p))
                    }
                    (OrderChange::PickedUp { rider }, Some((State::Assigned(a), p))) if a == *rider => {
                        Some((State::PickedUp(*rider), p))
                    }
                    (OrderChange::Delivered { rider, payment }, Some((State::PickedUp(a), p))) if a == *rider => {
                        r.check("accounting", *payment == p, || {
                            format!("order {order} delivered for {payment}, created at {p}")
                        });
                        let b = riders.entry(*rider).or_default();
                        b.held -= 1;
                        b.earnings += *payment as u64;
                        b.delivered += 1;
                        Some((State::Delivered, p))
                    }
                    _ => None,
                };
                r.check("order_transition", next.is_some(), || {
                    format!("illegal change {change:?} for order {order} at seq {}", e.seq)
                });
                if let Some((s, p)) = next {
                    if let Some((old, _)) = prev {
                        counts[idx(old)] -= 1;
                    }
                    counts[idx(s)] += 1;
                    orders.insert(order, (s, p));
                }
            }
            EventPayload::Position { rider, x, y, moved, .. } => {
                let pos = Position::new(*x, *y);
                r.check("bounds", pos.in_grid(cfg.grid_size), || format!("rider {rider} at {pos}"));
                r.check("speed_cap", *moved <= cfg.max_move_per_step, || {
                    format!("rider {rider} moved {moved} at tick {}", e.tick)
                });
                let b = riders.entry(*rider).or_default();
                if let Some(last) = b.last {
                    let d = last.manhattan(pos);
                    r.check("speed_cap", d <= *moved, || {
                        format!("rider {rider} displaced {d} but reported {moved} at tick {}", e.tick)
                    });
                }
                b.last = Some(pos);
                b.work_ticks += 1;
                b.distance += *moved as u64;
                tick_positions.1 += 1;
            }
            EventPayload::CostAccrual { riders: n, amount } => {
                let seen = tick_positions.1;
                r.check("accounting", *n == seen, || {
                    format!("tick {} accrues for {n} riders, {seen} at work", e.tick)
                });
                let expect = cfg.wage_rate * *n as f64;
                r.check("accounting", (amount - expect).abs() <= 1e-9 * expect.max(1.0), || {
                    format!("tick {} accrual {amount} != {expect}", e.tick)
                });
            }
            EventPayload::Decision {
                rider,
                decision: DecisionDetail::OrderSelection { held, .. },
            } => {
                let ours = riders.get(rider).map_or(0, |b| b.held);
                r.check("order_cap", *held <= cfg.order_cap && *held == ours, || {
                    format!("rider {rider} reports {held} held, ledger has {ours}")
                });
            }
            EventPayload::Thought { decision_kind, .. } => {
                r.check("thought_kind", *decision_kind != DecisionKind::External, || {
                    "simulation trace carries an external thought".into()
                });
            }
            EventPayload::SimEnd {
                orders_generated,
                riders: summaries,
            } => {
                r.check("conservation", *orders_generated == orders.len() as u64, || {
                    format!("sim_end reports {orders_generated} orders, trace created {}", orders.len())
                });
                for s in summaries {
                    let b = riders.get(&s.id).cloned().unwrap_or_default();
                    r.check("accounting", s.earnings == b.earnings, || {
                        format!("rider {} earnings {} != delivered payments {}", s.id, s.earnings, b.earnings)
                    });
                    r.check("accounting", s.orders_completed == b.delivered, || {
                        format!("rider {} completed {} != {}", s.id, s.orders_completed, b.delivered)
                    });
                    r.check("accounting", s.work_ticks == b.work_ticks, || {
                        format!("rider {} work ticks {} != {}", s.id, s.work_ticks, b.work_ticks)
                    });
                    let cost = cfg.wage_rate * b.work_ticks as f64;
                    r.check("accounting", (s.labor_cost - cost).abs() <= 1e-9 * cost.max(1.0), || {
                        format!("rider {} labor cost {} != {cost}", s.id, s.labor_cost)
                    });
                    r.check("accounting", s.distance_ridden == b.distance, || {
                        format!("rider {} distance {} != {}", s.id, s.distance_ridden, b.distance)
                    });
                }
            }
            _ => {}
        }
        let total: u64 = counts.iter().sum();
        r.check("conservation", total == orders.len() as u64, || {
            format!("state counts {counts:?} do not add up at seq {}", e.seq)
        });
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::{DecisionBackendSet, ScriptedBackend, ScriptedPolicy};
    use crate::sim::{run_simulation, SimConfig, SimOptions};
    use crate::trace::{TraceEvent, TraceHeader};

    fn short_run() -> Trace {
        let cfg = SimConfig {
            n_riders: 15,
            total_steps: 360,
            ..SimConfig::default()
        };
        let mut events: Vec<TraceEvent> = Vec::new();
        let backends = DecisionBackendSet::new(ScriptedBackend::new(ScriptedPolicy::default(), 3));
        run_simulation(cfg.clone(), SimOptions::default(), &backends, &mut events).unwrap();
        Trace {
            header: TraceHeader::for_config(&cfg, 0),
            events,
        }
    }

    #[test]
    fn clean_run_passes() {
        let r = audit_trace(&short_run());
        assert!(r.is_clean(), "{:?}", r.violations);
        for name in ["conservation", "speed_cap", "bounds", "order_cap", "accounting"] {
            assert!(r.checks.get(name).copied().unwrap_or(0) > 0, "{name} never evaluated");
        }
    }

    #[test]
    fn tampered_payment_is_caught() {
        let mut t = short_run();
        let e = t
            .events
            .iter_mut()
            .find(|e| matches!(e.payload, EventPayload::OrderEvent { change: OrderChange::Delivered { .. }, .. }))
            .expect("some delivery");
        if let EventPayload::OrderEvent {
            change: OrderChange::Delivered { payment, .. },
            ..
        } = &mut e.payload
        {
            *payment += 1;
        }
        assert!(!audit_trace(&t).is_clean());
    }

    #[test]
    fn teleport_is_caught() {
        let mut t = short_run();
        let mut seen = 0;
        for e in &mut t.events {
            if let EventPayload::Position { x, rider: 0, .. } = &mut e.payload {
                seen += 1;
                if seen == 3 {
                    *x = (*x + 100) % 200;
                    break;
                }
            }
        }
        let r = audit_trace(&t);
        assert!(r.violations.iter().any(|v| v.starts_with("speed_cap")), "{:?}", r.violations);
    }
}
