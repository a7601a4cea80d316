//! Windowed emergence analysis: which intention clusters appear when, who
//! started them, and who picked them up afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DIAGRAM_SCHEMA: u32 = 1;
pub const DEFAULT_WINDOW_TICKS: u64 = 1200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmergenceError {
    #[error("window_ticks must be positive")]
    ZeroWindow,
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
    #[error("unknown diagram format {0:?} (expected dot, json or svg)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_ticks: u64,
    /// Windows covering the run; more are added if observations lie beyond.
    pub n_windows: usize,
}

impl WindowSpec {
    /// Windows tiling `[0, total_ticks)`.
    pub fn new(window_ticks: u64, total_ticks: u64) -> Result<Self, EmergenceError> {
        if window_ticks == 0 {
            return Err(EmergenceError::ZeroWindow);
        }
        Ok(Self {
            window_ticks,
            n_windows: total_ticks.div_ceil(window_ticks) as usize,
        })
    }

    pub fn window_of(&self, tick: u64) -> usize {
        (tick / self.window_ticks) as usize
    }
}

/// A repository entry as seen by the diagram: who, when, and which cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub record_id: u64,
    pub agent: u32,
    pub tick: u64,
    /// `None` for entries left out of clustering.
    pub cluster: Option<usize>,
}

/// Per window: cluster → contributing agent → first tick in that window.
pub type WindowContents = BTreeMap<usize, BTreeMap<u32, u64>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowedClusters {
    pub windows: Vec<WindowContents>,
    /// Record ids without a cluster.
    pub skipped: Vec<u64>,
}

pub fn window_partition(observations: &[Observation], spec: &WindowSpec) -> WindowedClusters {
    let needed = observations
        .iter()
        .map(|o| spec.window_of(o.tick) + 1)
        .max()
        .unwrap_or(0)
        .max(spec.n_windows);
    let mut out = WindowedClusters {
        windows: vec![BTreeMap::new(); needed],
        skipped: Vec::new(),
    };
    for o in observations {
        let Some(c) = o.cluster else {
            out.skipped.push(o.record_id);
            continue;
        };
        let first = out.windows[spec.window_of(o.tick)]
            .entry(c)
            .or_default()
            .entry(o.agent)
            .or_insert(o.tick);
        *first = (*first).min(o.tick);
    }
    out
}

/// Clusters in `current` that no earlier window contained.
pub fn emergent_diff(current: &WindowContents, seen: &BTreeSet<usize>) -> BTreeSet<usize> {
    current.keys().filter(|c| !seen.contains(c)).copied().collect()
}

/// Agent with the earliest tick in the cluster; ties go to the lower id.
pub fn attribute_origin(cluster: usize, windows: &[WindowContents]) -> Result<(u32, u64), EmergenceError> {
    windows
        .iter()
        .filter_map(|w| w.get(&cluster))
        .flat_map(|m| m.iter().map(|(&a, &t)| (t, a)))
        .min()
        .map(|(t, a)| (a, t))
        .ok_or(EmergenceError::EmptyCluster(cluster))
}

/// Agents other than the origin that join the cluster after the origin tick
/// in window `i` or `i + 1`, with the window they were first seen in.
pub fn find_influenced(
    cluster: usize,
    origin: (u32, u64),
    i: usize,
    windows: &[WindowContents],
) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for (w, contents) in windows.iter().enumerate().skip(i).take(2) {
        if let Some(members) = contents.get(&cluster) {
            for (&agent, &tick) in members {
                if agent != origin.0 && tick > origin.1 {
                    out.entry(agent).or_insert(w);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmergencePoint {
    pub cluster: usize,
    pub origin_agent: u32,
    pub influenced_agent: u32,
    /// Window in which the influenced agent was observed in the cluster.
    pub window: usize,
    /// Window in which the cluster first appeared.
    pub emerged_window: usize,
}

/// Agent → clusters that influenced it.
pub type InfluenceMap = BTreeMap<u32, BTreeSet<usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    pub window: usize,
    pub cluster: usize,
    pub label: String,
    pub origin_agent: u32,
    pub origin_tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentNode {
    pub window: usize,
    pub agent: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfluenceEdge {
    pub from: AgentNode,
    pub to: AgentNode,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergenceDiagram {
    pub diagram_schema: u32,
    pub window_ticks: u64,
    pub n_windows: usize,
    pub clusters: Vec<ClusterNode>,
    pub agents: Vec<AgentNode>,
    pub edges: Vec<InfluenceEdge>,
    pub points: Vec<EmergencePoint>,
    pub influence: InfluenceMap,
}

impl EmergenceDiagram {
    pub fn empty(spec: &WindowSpec) -> Self {
        Self {
            diagram_schema: DIAGRAM_SCHEMA,
            window_ticks: spec.window_ticks,
            n_windows: spec.n_windows,
            clusters: Vec::new(),
            agents: Vec::new(),
            edges: Vec::new(),
            points: Vec::new(),
            influence: BTreeMap::new(),
        }
    }

    /// Structural checks: distinct endpoints, forward time, edges between
    /// known nodes, one birth per cluster, and H equal to the point list.
    pub fn check_invariants(&self) -> Result<(), String> {
        let nodes: BTreeSet<AgentNode> = self.agents.iter().copied().collect();
        for p in &self.points {
            if p.origin_agent == p.influenced_agent {
                return Err(format!("point {p:?} has the origin as influenced agent"));
            }
            if p.window < p.emerged_window {
                return Err(format!("point {p:?} points backward in time"));
            }
        }
        for e in &self.edges {
            if !nodes.contains(&e.from) || !nodes.contains(&e.to) {
                return Err(format!("edge {e:?} has an unknown endpoint"));
            }
            if e.to.window < e.from.window {
                return Err(format!("edge {e:?} points backward in time"));
            }
        }
        let mut born = BTreeSet::new();
        for c in &self.clusters {
            if !born.insert(c.cluster) {
                return Err(format!("cluster {} emerges more than once", c.cluster));
            }
        }
        let mut projected: InfluenceMap = BTreeMap::new();
        for p in &self.points {
            projected.entry(p.influenced_agent).or_default().insert(p.cluster);
        }
        if projected != self.influence {
            return Err("influence map differs from the point list".into());
        }
        Ok(())
    }
}

/// Run the windowed emergence analysis. `labels` names clusters; missing
/// labels fall back to `cluster <id>`.
pub fn build_diagram(
    observations: &[Observation],
    labels: &BTreeMap<usize, String>,
    spec: &WindowSpec,
) -> Result<(EmergenceDiagram, WindowedClusters), EmergenceError> {
    let windowed = window_partition(observations, spec);
    let windows = &windowed.windows;
    let mut diagram = EmergenceDiagram::empty(spec);
    diagram.n_windows = windows.len();
    let mut seen = BTreeSet::new();
    let mut agents = BTreeSet::new();
    for (i, contents) in windows.iter().enumerate() {
        for cluster in emergent_diff(contents, &seen) {
            let origin = attribute_origin(cluster, windows)?;
            diagram.clusters.push(ClusterNode {
                window: i,
                cluster,
                label: labels.get(&cluster).cloned().unwrap_or_else(|| format!("cluster {cluster}")),
                origin_agent: origin.0,
                origin_tick: origin.1,
            });
            let from = AgentNode { window: i, agent: origin.0 };
            agents.insert(from);
            for (b, w) in find_influenced(cluster, origin, i, windows) {
                let to = AgentNode { window: w, agent: b };
                agents.insert(to);
                diagram.points.push(EmergencePoint {
                    cluster,
                    origin_agent: origin.0,
                    influenced_agent: b,
                    window: w,
                    emerged_window: i,
                });
                diagram.edges.push(InfluenceEdge { from, to, cluster });
                diagram.influence.entry(b).or_default().insert(cluster);
            }
        }
        seen.extend(contents.keys().copied());
    }
    diagram.agents = agents.into_iter().collect();
    Ok((diagram, windowed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagramFormat {
    Dot,
    Json,
    Svg,
}

impl DiagramFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DiagramFormat::Dot => "dot",
            DiagramFormat::Json => "json",
            DiagramFormat::Svg => "svg",
        }
    }
}

impl FromStr for DiagramFormat {
    type Err = EmergenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(DiagramFormat::Dot),
            "json" => Ok(DiagramFormat::Json),
            "svg" => Ok(DiagramFormat::Svg),
            other => Err(EmergenceError::UnknownFormat(other.to_string())),
        }
    }
}

pub fn render_diagram(d: &EmergenceDiagram, format: DiagramFormat) -> String {
    match format {
        DiagramFormat::Dot => render_dot(d),
        DiagramFormat::Json => {
            let mut s = serde_json::to_string_pretty(d).expect("diagram serializes");
            s.push('\n');
            s
        }
        DiagramFormat::Svg => render_svg(d),
    }
}

fn escape(s: &str, quote: &str) -> String {
    s.replace('\\', "\\\\").replace('"', quote).replace('\n', " ")
}

fn agent_id(n: &AgentNode) -> String {
    format!("a{}_w{}", n.agent, n.window)
}

fn render_dot(d: &EmergenceDiagram) -> String {
    let mut s = String::from("digraph emergence {\n  rankdir=LR;\n");
    for c in &d.clusters {
        let _ = writeln!(
            s,
            "  \"c{}_w{}\" [shape=box, label=\"cluster {} (window {})\\norigin: agent {}\\n{}\"];",
            c.cluster,
            c.window,
            c.cluster,
            c.window,
            c.origin_agent,
            escape(&c.label, "\\\"")
        );
    }
    for a in &d.agents {
        let _ = writeln!(
            s,
            "  \"{}\" [shape=ellipse, label=\"agent {}\\nwindow {}\"];",
            agent_id(a),
            a.agent,
            a.window
        );
    }
    for e in &d.edges {
        let _ = writeln!(
            s,
            "  \"{}\" -> \"{}\" [label=\"cluster {} / window {}\"];",
            agent_id(&e.from),
            agent_id(&e.to),
            e.cluster,
            e.to.window
        );
    }
    s.push_str("}\n");
    s
}

fn xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Timeline: one column per window, one row per agent, arrows for influence.
fn render_svg(d: &EmergenceDiagram) -> String {
    const COL: usize = 220;
    const ROW: usize = 40;
    const LEFT: usize = 100;
    const TOP: usize = 60;
    let rows: Vec<u32> = d.agents.iter().map(|a| a.agent).collect::<BTreeSet<_>>().into_iter().collect();
    let row_of = |agent: u32| rows.iter().position(|&r| r == agent).unwrap_or(0);
    let at = |n: &AgentNode| (LEFT + n.window * COL + COL / 2, TOP + row_of(n.agent) * ROW + ROW / 2);
    let width = LEFT + d.n_windows.max(1) * COL + 20;
    let label_rows = d.clusters.len();
    let height = TOP + rows.len().max(1) * ROW + 20 + label_rows * 18;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    s.push_str("  <defs><marker id=\"arrow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" markerWidth=\"6\" markerHeight=\"6\" orient=\"auto\"><path d=\"M0,0 L10,5 L0,10 z\"/></marker></defs>\n");
    for w in 0..d.n_windows {
        let x = LEFT + w * COL;
        let _ = writeln!(
            s,
            "  <rect x=\"{x}\" y=\"{}\" width=\"{COL}\" height=\"{}\" fill=\"none\" stroke=\"#ccc\"/>",
            TOP - 30,
            rows.len().max(1) * ROW + 30
        );
        let _ = writeln!(
            s,
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">window {w} (ticks {}-{})</text>",
            x + COL / 2,
            TOP - 12,
            w as u64 * d.window_ticks,
            (w as u64 + 1) * d.window_ticks - 1
        );
    }
    for (r, agent) in rows.iter().enumerate() {
        let _ = writeln!(s, "  <text x=\"10\" y=\"{}\">agent {agent}</text>", TOP + r * ROW + ROW / 2 + 4);
    }
    for a in &d.agents {
        let (x, y) = at(a);
        let _ = writeln!(s, "  <circle cx=\"{x}\" cy=\"{y}\" r=\"6\" fill=\"#4a7\"/>");
    }
    for e in &d.edges {
        let (x1, y1) = at(&e.from);
        let (x2, y2) = at(&e.to);
        let _ = writeln!(
            s,
            "  <line x1=\"{x1}\" y1=\"{y1}\" x2=\"{x2}\" y2=\"{y2}\" stroke=\"#c33\" marker-end=\"url(#arrow)\"><title>cluster {}</title></line>",
            e.cluster
        );
    }
    let base = TOP + rows.len().max(1) * ROW + 30;
    for (i, c) in d.clusters.iter().enumerate() {
        let _ = writeln!(
            s,
            "  <text x=\"10\" y=\"{}\">cluster {} (window {}, origin agent {}): {}</text>",
            base + i * 18,
            c.cluster,
            c.window,
            c.origin_agent,
            xml(&c.label)
        );
    }
    s.push_str("</svg>\n");
    s
}
