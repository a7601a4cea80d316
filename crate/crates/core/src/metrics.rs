//! Observational reports computed from a finished trace.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimConfig;
use crate::trace::{EventPayload, OrderChange, Trace};

pub const DEFAULT_HEATMAP_FACTOR: u32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trace has no sim_start config")]
    NoConfig,
    #[error("down-sampling factor must be positive")]
    ZeroFactor,
}

fn config_of(trace: &Trace) -> Result<&SimConfig, MetricsError> {
    trace.config().ok_or(MetricsError::NoConfig)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvolutionDay {
    /// Simulated day, `tick / steps_per_day`.
    pub day: u64,
    pub cost: f64,
    pub orders: u64,
    pub index: f64,
    /// No deliveries that day; the index is the raw cost.
    pub flagged: bool,
}

/// Labor cost per delivered order, per day.
pub fn involution_index(trace: &Trace) -> Result<Vec<InvolutionDay>, MetricsError> {
    let cfg = config_of(trace)?;
    let spd = cfg.steps_per_day;
    let days = cfg.days() as usize;
    let mut cost = vec![0.0; days];
    let mut orders = vec![0u64; days];
    for e in &trace.events {
        let d = (e.tick / spd) as usize;
        if d >= days {
            continue;
        }
        match &e.payload {
            EventPayload::CostAccrual { amount, .. } => cost[d] += amount,
            EventPayload::OrderEvent {
                change: OrderChange::Delivered { .. },
                ..
            } => orders[d] += 1,
            _ => {}
        }
    }
    Ok(series_from(&cost, &orders))
}

/// Build rows from per-day totals.
pub fn series_from(cost: &[f64], orders: &[u64]) -> Vec<InvolutionDay> {
    cost.iter()
        .zip(orders)
        .enumerate()
        .map(|(i, (&c, &o))| InvolutionDay {
            day: i as u64,
            cost: c,
            orders: o,
            index: c / o.max(1) as f64,
            flagged: o == 0,
        })
        .collect()
}

pub fn involution_csv(rows: &[InvolutionDay]) -> String {
    let mut s = String::from("day,cost,orders,index,flagged\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{:.6},{}", r.day, r.cost, r.orders, r.index, r.flagged);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    pub window: usize,
    pub factor: u32,
    /// Cells per side after down-sampling.
    pub side: u32,
    /// Row-major by y, then x.
    pub counts: Vec<u64>,
}

impl HeatmapGrid {
    pub fn get(&self, x: u32, y: u32) -> u64 {
        self.counts[(y * self.side + x) as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in self.counts.chunks(self.side as usize) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }
}

/// Visits per cell over ticks `[window * window_ticks, (window + 1) * window_ticks)`.
///
/// Down-sampling by `factor` sums each f×f block, so the grid total always
/// equals the number of position events in the window.
pub fn position_heatmap(trace: &Trace, window: usize, window_ticks: u64, factor: u32) -> Result<HeatmapGrid, MetricsError> {
    if factor == 0 {
        return Err(MetricsError::ZeroFactor);
    }
    let cfg = config_of(trace)?;
    let side = cfg.grid_size.div_ceil(factor);
    let mut counts = vec![0u64; (side * side) as usize];
    let (lo, hi) = (window as u64 * window_ticks, (window as u64 + 1) * window_ticks);
    for e in &trace.events {
        if e.tick < lo || e.tick >= hi {
            continue;
        }
        if let EventPayload::Position { x, y, .. } = e.payload {
            counts[((y / factor) * side + x / factor) as usize] += 1;
        }
    }
    Ok(HeatmapGrid {
        window,
        factor,
        side,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoursRow {
    pub agent_id: u32,
    pub total_hours: f64,
    /// Hours spent holding at least one order.
    pub effective_hours: f64,
    pub total_orders: u64,
}

fn hours_rows(trace: &Trace, day: Option<u64>) -> Result<Vec<HoursRow>, MetricsError> {
    let cfg = config_of(trace)?;
    let spd = cfg.steps_per_day;
    let scale = 24.0 / spd as f64;
    let mut acc: BTreeMap<u32, (u64, u64, u64)> = (0..cfg.n_riders).map(|r| (r, (0, 0, 0))).collect();
    for e in &trace.events {
        if day.is_some_and(|d| e.tick / spd != d) {
            continue;
        }
        match e.payload {
            EventPayload::Position { rider, carrying, .. } => {
                let a = acc.entry(rider).or_default();
                a.0 += 1;
                if carrying > 0 {
                    a.1 += 1;
                }
            }
            EventPayload::OrderEvent {
                change: OrderChange::Delivered { rider, .. },
                ..
            } => acc.entry(rider).or_default().2 += 1,
            _ => {}
        }
    }
    Ok(acc
        .into_iter()
        .map(|(agent_id, (work, busy, orders))| HoursRow {
            agent_id,
            total_hours: work as f64 * scale,
            effective_hours: busy as f64 * scale,
            total_orders: orders,
        })
        .collect())
}

/// Per-rider working and effective hours on one 0-based day.
pub fn effective_hours(trace: &Trace, day: u64) -> Result<Vec<HoursRow>, MetricsError> {
    hours_rows(trace, Some(day))
}

/// Per-rider totals over the whole run.
pub fn hours_vs_orders(trace: &Trace) -> Result<Vec<HoursRow>, MetricsError> {
    hours_rows(trace, None)
}

pub fn hours_csv(rows: &[HoursRow]) -> String {
    let mut s = String::from("agent_id,total_hours,effective_hours,total_orders\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.4},{:.4},{}", r.agent_id, r.total_hours, r.effective_hours, r.total_orders);
    }
    s
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson over average ranks). `None` when
/// either side is constant or there are fewer than two points.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}
