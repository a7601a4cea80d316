//! End-to-end analysis: thoughts → emergent intentions → clusters → diagram.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::cluster::{kmeans, label_cluster, silhouette_scan, ClusterError, Clustering, KMeansOptions};
use crate::embed::Embedder;
use crate::emergence::{
    build_diagram, render_diagram, DiagramFormat, EmergenceDiagram, EmergenceError, Observation, WindowSpec,
    DEFAULT_WINDOW_TICKS,
};
use crate::mining::{mine, DetectError, EmergenceDetector, IntentionRepository, RepositoryError, ThoughtRecord};
use crate::trace::{EventPayload, Trace};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Emergence(#[from] EmergenceError),
    #[error(transparent)]
    Repository(#[from] RepositoryError),
    #[error("analysis i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisConfig {
    pub theta: f64,
    pub k: usize,
    pub seed: u64,
    pub window_ticks: u64,
    pub memory_capacity: usize,
    /// Keep the bounded perspective. Off records rational text only.
    pub inspector: bool,
    /// Run emergence detection. Off leaves the repository empty.
    pub analyzer: bool,
    pub kmeans: KMeansOptions,
    /// Score k in 2..=10 by silhouette and report it (does not change `k`).
    pub silhouette: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            theta: crate::mining::DEFAULT_THETA,
            k: 5,
            seed: 42,
            window_ticks: DEFAULT_WINDOW_TICKS,
            memory_capacity: crate::mining::DEFAULT_MEMORY_CAPACITY,
            inspector: true,
            analyzer: true,
            kmeans: KMeansOptions {
                restarts: 10,
                ..KMeansOptions::default()
            },
            silhouette: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub repository: IntentionRepository,
    pub clustering: Option<Clustering>,
    /// Cluster of each repository entry; `None` for zero vectors.
    pub entry_clusters: Vec<Option<usize>>,
    pub labels: BTreeMap<usize, String>,
    pub diagram: EmergenceDiagram,
    pub silhouette: Vec<(usize, f64)>,
    pub records_seen: usize,
    pub missing: usize,
    pub warnings: Vec<String>,
}

/// Thought events of a simulation trace as records.
pub fn records_from_trace(trace: &Trace) -> Vec<ThoughtRecord> {
    trace
        .events
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::Thought {
                rider,
                decision_kind,
                bounded,
                rational,
                missing,
            } => Some(crate::mining::record_thoughts(
                *rider,
                e.tick,
                *decision_kind,
                (!missing).then(|| crate::decision::ThoughtPair::new(bounded.clone(), rational.clone())),
            )),
            _ => None,
        })
        .collect()
}

/// Run the analysis. `total_ticks` sets the window range; by default it
/// covers the last record.
pub fn analyze(
    records: &[ThoughtRecord],
    total_ticks: Option<u64>,
    cfg: &AnalysisConfig,
    embedder: &Embedder,
    detector: &EmergenceDetector,
) -> Result<Analysis, AnalysisError> {
    let prepared: Vec<ThoughtRecord>;
    let records = if cfg.inspector {
        records
    } else {
        prepared = records.iter().cloned().map(ThoughtRecord::single_perspective).collect();
        &prepared
    };
    let report = mine(records, embedder, detector, cfg.memory_capacity, cfg.analyzer)?;
    let mut warnings = report.warnings;
    let repo = report.repository;

    let total = total_ticks.unwrap_or_else(|| records.iter().map(|r| r.tick + 1).max().unwrap_or(0));
    let spec = WindowSpec::new(cfg.window_ticks, total)?;

    let usable: Vec<usize> = (0..repo.len()).filter(|&i| !repo.entries()[i].embedding.is_zero()).collect();
    let points: Vec<Vec<f64>> = usable.iter().map(|&i| repo.entries()[i].embedding.values.clone()).collect();
    let mut entry_clusters = vec![None; repo.len()];
    let mut labels = BTreeMap::new();
    let mut clustering = None;
    let mut silhouette = Vec::new();
    if !points.is_empty() {
        let k = if points.len() < cfg.k {
            warnings.push(format!(
                "only {} clusterable intentions; k reduced from {} to {}",
                points.len(),
                cfg.k,
                points.len()
            ));
            points.len()
        } else {
            cfg.k
        };
        let c = kmeans(&points, k, cfg.seed, cfg.kmeans)?;
        for (p, &i) in usable.iter().enumerate() {
            entry_clusters[i] = Some(c.assignments[p]);
        }
        for j in 0..k {
            let members: Vec<(u64, &str, &[f64])> = c
                .members(j)
                .map(|p| {
                    let e = &repo.entries()[usable[p]];
                    (e.record_id, e.combined_text.as_str(), e.embedding.values.as_slice())
                })
                .collect();
            labels.insert(j, label_cluster(&members, &c.centroids[j])?);
        }
        if cfg.silhouette {
            silhouette = silhouette_scan(&points, 2..=10, cfg.seed, cfg.kmeans);
        }
        clustering = Some(c);
    } else if cfg.analyzer && !repo.is_empty() {
        warnings.push("every intention embedded to a zero vector; nothing to cluster".into());
    }

    let observations: Vec<Observation> = repo
        .entries()
        .iter()
        .zip(&entry_clusters)
        .map(|(e, &cluster)| Observation {
            record_id: e.record_id,
            agent: e.agent_id,
            tick: e.tick,
            cluster,
        })
        .collect();
    let (diagram, windowed) = build_diagram(&observations, &labels, &spec)?;
    for id in windowed.skipped {
        warnings.push(format!("record {id} has no cluster (empty text); left out of the diagram"));
    }
    Ok(Analysis {
        repository: repo,
        clustering,
        entry_clusters,
        labels,
        diagram,
        silhouette,
        records_seen: report.records_seen,
        missing: report.missing,
        warnings,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per repository entry with its cluster and the cluster's label.
pub fn clusters_csv(a: &Analysis) -> String {
    let mut s = String::from("record_id,agent_id,tick,cluster,label\n");
    for (e, c) in a.repository.entries().iter().zip(&a.entry_clusters) {
        let (cluster, label) = match c {
            Some(c) => (c.to_string(), a.labels.get(c).map(String::as_str).unwrap_or("")),
            None => (String::new(), ""),
        };
        let _ = writeln!(s, "{},{},{},{},{}", e.record_id, e.agent_id, e.tick, cluster, csv_field(label));
    }
    s
}

pub const REPOSITORY_FILE: &str = "repository.jsonl";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const DIAGRAM_JSON_FILE: &str = "diagram.json";
pub const DIAGRAM_DOT_FILE: &str = "diagram.dot";

/// Write the fixed set of analysis outputs into `dir`.
pub fn write_outputs(dir: &Path, a: &Analysis) -> Result<(), AnalysisError> {
    std::fs::create_dir_all(dir)?;
    let mut repo = Vec::new();
    a.repository.write_jsonl(&mut repo)?;
    std::fs::write(dir.join(REPOSITORY_FILE), repo)?;
    std::fs::write(dir.join(CLUSTERS_FILE), clusters_csv(a))?;
    std::fs::write(dir.join(DIAGRAM_JSON_FILE), render_diagram(&a.diagram, DiagramFormat::Json))?;
    std::fs::write(dir.join(DIAGRAM_DOT_FILE), render_diagram(&a.diagram, DiagramFormat::Dot))?;
    Ok(())
}
