use serde::{Deserialize, Serialize};

use super::{
    DecisionBackend, DecisionContext, Decided, Failed, LlmExchange, OfferedOrder, OrderSelection,
    ThoughtPair, WorkHoursDecision,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HoursPolicy {
    /// Copy yesterday's hours of the top earner and widen them by `delta` on both ends.
    ImitateTopRanked { delta: u8 },
    /// Work the given hours every day; `None` keeps whatever the rider worked yesterday.
    FixedHours { hours: Option<WorkHoursDecision> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Best payment per unit of distance to the pickup.
    GreedyNearest,
    /// Best payment per unit of the whole trip, pickup leg plus delivery leg.
    RouteOptimizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub hours: HoursPolicy,
    pub orders: OrderPolicy,
}

impl Default for ScriptedPolicy {
    fn default() -> Self {
        Self {
            hours: HoursPolicy::ImitateTopRanked { delta: 1 },
            orders: OrderPolicy::GreedyNearest,
        }
    }
}

/// Deterministic rule-based backend. Decisions and thought texts are pure
/// functions of (policy, context, seed).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedBackend {
    pub policy: ScriptedPolicy,
    pub seed: u64,
}

impl ScriptedBackend {
    pub fn new(policy: ScriptedPolicy, seed: u64) -> Self {
        Self { policy, seed }
    }

    pub fn fixed(start: u8, end: u8, orders: OrderPolicy, seed: u64) -> Self {
        Self::new(
            ScriptedPolicy {
                hours: HoursPolicy::FixedHours {
                    hours: Some(WorkHoursDecision::new(start, end)),
                },
                orders,
            },
            seed,
        )
    }

    // Picks one of two phrasings; stable per (seed, rider).
    fn variant(&self, rider_id: u32) -> bool {
        let mut h = self.seed ^ 0xa076_1d64_78bd_642f;
        h = (h ^ rider_id as u64).wrapping_mul(0xe703_7ed1_a0b4_28db);
        (h >> 33) & 1 == 1
    }

    fn hours_decision(&self, ctx: &DecisionContext) -> WorkHoursDecision {
        match self.policy.hours {
            HoursPolicy::FixedHours { hours } => hours.unwrap_or(ctx.yesterday_shift),
            HoursPolicy::ImitateTopRanked { delta } => match ctx.leader {
                Some(leader) => widen(leader.shift, delta),
                None => ctx.yesterday_shift,
            },
        }
    }

    fn hours_thoughts(&self, ctx: &DecisionContext, d: WorkHoursDecision) -> ThoughtPair {
        let (s, e) = (d.go_to_work_hour, d.get_off_work_hour);
        let r = ctx.rankings;
        match (self.policy.hours, ctx.leader) {
            (HoursPolicy::ImitateTopRanked { .. }, Some(leader)) if leader.rider_id != ctx.rider_id => {
                let l = leader.rider_id;
                let bounded = if self.variant(ctx.rider_id) {
                    format!("Rider {l} earned the most yesterday and I feel jealous. I will imitate rider {l} and copy those working hours, starting at {s}:00 and staying until {e}:00.")
                } else {
                    format!("I feel jealous that rider {l} earned the most yesterday. I will imitate rider {l} and copy those working hours, from {s}:00 until {e}:00.")
                };
                let rational = format!(
                    "Yesterday I ranked {} in earnings, {} in orders and {} in distance among {} riders. Working from {s}:00 to {e}:00 adds hours on the road, so more orders should reach me.",
                    r.earnings_rank, r.orders_rank, r.distance_rank, ctx.n_riders
                );
                ThoughtPair::new(bounded, rational)
            }
            (HoursPolicy::ImitateTopRanked { .. }, None) => ThoughtPair::new(
                format!("Nobody has shown me yet how the best riders work, so I start with my usual hours from {s}:00 to {e}:00."),
                format!("Without any earnings history there is nothing to compare against, so working from {s}:00 to {e}:00 is a reasonable default."),
            ),
            (HoursPolicy::ImitateTopRanked { .. }, Some(_)) => ThoughtPair::new(
                format!("I earned the most yesterday and I want to stay on top, so I will keep competing and work from {s}:00 to {e}:00."),
                format!(
                    "Yesterday I ranked {} in earnings among {} riders. Working from {s}:00 to {e}:00 adds hours on the road, so more orders should reach me.",
                    r.earnings_rank, ctx.n_riders
                ),
            ),
            (HoursPolicy::FixedHours { .. }, _) => ThoughtPair::new(
                format!("I like a steady routine, so I keep my usual hours from {s}:00 to {e}:00."),
                format!(
                    "Ranked {} in earnings, my schedule from {s}:00 to {e}:00 already balances income against time, so there is no reason to change it.",
                    r.earnings_rank
                ),
            ),
        }
    }

    fn select<'a>(&self, ctx: &'a DecisionContext) -> Vec<&'a OfferedOrder> {
        let cost = |o: &OfferedOrder| -> u64 {
            let to_pickup = ctx.position.manhattan(o.pickup) as u64;
            match self.policy.orders {
                OrderPolicy::GreedyNearest => to_pickup + 1,
                OrderPolicy::RouteOptimizer => to_pickup + o.pickup.manhattan(o.dropoff) as u64 + 1,
            }
        };
        let mut ranked: Vec<&OfferedOrder> = ctx.offered_orders.iter().collect();
        // payment / cost, descending, compared exactly by cross-multiplication
        ranked.sort_by(|a, b| {
            let lhs = b.payment as u64 * cost(a);
            let rhs = a.payment as u64 * cost(b);
            lhs.cmp(&rhs).then(a.id.cmp(&b.id))
        });
        ranked.truncate(ctx.remaining_capacity as usize);
        ranked
    }

    fn order_thoughts(&self, ctx: &DecisionContext, chosen: &[&OfferedOrder]) -> ThoughtPair {
        let Some(best) = chosen.first() else {
            return ThoughtPair::new(
                "Nothing here is worth chasing, so I will wait where orders are dense.",
                "No offered order pays enough for the distance, so accepting none is optimal right now.",
            );
        };
        let dist = ctx.position.manhattan(best.pickup);
        let ids = chosen.iter().map(|o| o.id.to_string()).collect::<Vec<_>>().join(", ");
        match self.policy.orders {
            OrderPolicy::GreedyNearest => {
                let ratio = best.payment as f64 / (dist as f64 + 1.0);
                ThoughtPair::new(
                    "I will go where orders are dense and grab the closest ones before the other riders take them.",
                    format!(
                        "Order {} pays {} for a pickup distance of {dist}, a ratio of {ratio:.2}, the best payment per unit distance, so I accept orders {ids}.",
                        best.id, best.payment
                    ),
                )
            }
            OrderPolicy::RouteOptimizer => {
                let trip = dist + best.pickup.manhattan(best.dropoff);
                ThoughtPair::new(
                    "The roads are congested, so I will change my delivery route to avoid traffic and keep trips short.",
                    format!(
                        "Order {} needs a full route of {trip} units for {} in payment, the shortest trip for the money, so I accept orders {ids}.",
                        best.id, best.payment
                    ),
                )
            }
        }
    }
}

fn widen(shift: WorkHoursDecision, delta: u8) -> WorkHoursDecision {
    let (s, e) = (shift.go_to_work_hour, shift.get_off_work_hour);
    if s >= e {
        return shift;
    }
    WorkHoursDecision::new(s.saturating_sub(delta), e.saturating_add(delta).min(23))
}

impl DecisionBackend for ScriptedBackend {
    fn decide_work_hours(&self, ctx: &DecisionContext) -> Result<Decided<WorkHoursDecision>, Failed> {
        let decision = self.hours_decision(ctx);
        Ok(Decided {
            decision,
            thoughts: self.hours_thoughts(ctx, decision),
            exchanges: Vec::new(),
        })
    }

    fn select_orders(&self, ctx: &DecisionContext) -> Result<Decided<OrderSelection>, Failed> {
        let chosen = self.select(ctx);
        let thoughts = self.order_thoughts(ctx, &chosen);
        Ok(Decided {
            decision: OrderSelection {
                order_ids: chosen.iter().map(|o| o.id).collect(),
            },
            thoughts,
            exchanges: Vec::new(),
        })
    }

    fn extract_dual_thoughts(
        &self,
        question: &str,
        ctx: &DecisionContext,
    ) -> Result<(ThoughtPair, Vec<LlmExchange>), Failed> {
        let pair = ThoughtPair::new(
            format!("Facing \"{question}\", I follow my gut and my character."),
            format!(
                "Facing \"{question}\", I weigh the numbers: earnings rank {} of {} riders.",
                ctx.rankings.earnings_rank, ctx.n_riders
            ),
        );
        Ok((pair, Vec::new()))
    }
}
