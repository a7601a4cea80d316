use std::collections::{BTreeMap, BTreeSet};

use eami::decision::{DecisionKind, ThoughtPair};
use eami::embed::{cosine_similarity, tokenize, HashEmbedder};
use eami::emergence::{build_diagram, render_diagram, DiagramFormat, EmergenceDiagram, EmergencePoint, Observation, WindowSpec};
use eami::mining::{detect_emergence, record_thoughts, AgentMemory, EmergenceDetector, MemoryEntry, ThoughtRecord};
use proptest::prelude::*;

const X: usize = 0;

fn obs(record_id: u64, agent: u32, tick: u64, cluster: usize) -> Observation {
    Observation {
        record_id,
        agent,
        tick,
        cluster: Some(cluster),
    }
}

fn fixture() -> EmergenceDiagram {
    let observations = [obs(0, 1, 10, X), obs(1, 2, 200, X), obs(2, 3, 1300, X)];
    let labels = BTreeMap::from([(X, "X".to_string())]);
    let spec = WindowSpec::new(1200, 2400).unwrap();
    build_diagram(&observations, &labels, &spec).unwrap().0
}

#[test]
fn three_agents_two_windows() {
    let d = fixture();
    assert_eq!(
        d.points,
        vec![
            EmergencePoint {
                cluster: X,
                origin_agent: 1,
                influenced_agent: 2,
                window: 0,
                emerged_window: 0,
            },
            EmergencePoint {
                cluster: X,
                origin_agent: 1,
                influenced_agent: 3,
                window: 1,
                emerged_window: 0,
            },
        ]
    );
    let h: BTreeMap<u32, BTreeSet<usize>> = BTreeMap::from([(2, BTreeSet::from([X])), (3, BTreeSet::from([X]))]);
    assert_eq!(d.influence, h);
    d.check_invariants().unwrap();

    let dot = render_diagram(&d, DiagramFormat::Dot);
    assert_eq!(dot.matches(" -> ").count(), 2);
    assert!(dot.starts_with("digraph emergence {"));

    let json = render_diagram(&d, DiagramFormat::Json);
    let back: EmergenceDiagram = serde_json::from_str(&json).unwrap();
    assert_eq!(back, d);
    assert_eq!(render_diagram(&back, DiagramFormat::Json), json);
}

#[test]
fn late_cluster_members_outside_the_next_window_are_not_influenced() {
    // window 2 is beyond i+1 for a cluster born in window 0
    let observations = [obs(0, 1, 10, X), obs(1, 2, 2500, X)];
    let spec = WindowSpec::new(1200, 3600).unwrap();
    let d = build_diagram(&observations, &BTreeMap::new(), &spec).unwrap().0;
    assert!(d.points.is_empty());
    d.check_invariants().unwrap();
}

fn record(agent: u32, bounded: &str, rational: &str) -> ThoughtRecord {
    record_thoughts(agent, 5, DecisionKind::WorkHours, Some(ThoughtPair::new(bounded, rational)))
}

fn memory_of(texts: &[&str]) -> AgentMemory {
    let e = HashEmbedder::default();
    let mut m = AgentMemory::new(1, 50);
    for (i, t) in texts.iter().enumerate() {
        m.push(MemoryEntry {
            tick: i as u64,
            text: t.to_string(),
            embedding: e.embed(t),
        });
    }
    m
}

fn emergent(r: &ThoughtRecord, m: &AgentMemory, theta: f64) -> bool {
    let v = HashEmbedder::default().embed(&r.combined_text);
    detect_emergence(r, &v, m, &EmergenceDetector::Similarity { theta })
        .unwrap()
        .emergent
}

#[test]
fn half_similar_pair_depends_on_theta() {
    let old = record(1, "p q", "r s");
    let new = record(1, "p t", "v w");
    let e = HashEmbedder::default();
    // precondition: the nine distinct tokens land in nine distinct buckets
    let tokens: BTreeSet<String> = tokenize(&old.combined_text).chain(tokenize(&new.combined_text)).collect();
    let buckets: BTreeSet<usize> = tokens.iter().map(|t| e.bucket(t)).collect();
    assert_eq!((tokens.len(), buckets.len()), (9, 9));

    let cos = cosine_similarity(&e.embed(&old.combined_text).values, &e.embed(&new.combined_text).values).unwrap();
    assert!((cos - 0.5).abs() < 1e-12, "cosine {cos}");

    let m = memory_of(&[&old.combined_text]);
    assert!(emergent(&new, &m, 0.8));
    assert!(!emergent(&new, &m, 0.4));
}

#[test]
fn missing_record_is_an_error() {
    let r = record_thoughts(1, 0, DecisionKind::WorkHours, None);
    let v = HashEmbedder::default().embed("");
    assert!(detect_emergence(&r, &v, &memory_of(&[]), &EmergenceDetector::Similarity { theta: 0.8 }).is_err());
}

proptest! {
    #[test]
    fn identical_text_never_emergent(b in "[a-z ]{1,40}", r in "[a-z ]{1,40}", theta in 0.0f64..=1.0) {
        let rec = record(1, &b, &r);
        let m = memory_of(&["something else entirely", &rec.combined_text]);
        prop_assert!(!emergent(&rec, &m, theta));
    }

    #[test]
    fn empty_memory_always_emergent(b in ".{0,40}", r in ".{1,40}", theta in 0.0f64..=1.0) {
        let rec = record(1, &b, &r);
        prop_assert!(emergent(&rec, &memory_of(&[]), theta));
    }

    #[test]
    fn raising_theta_never_removes_emergence(b in "[a-z ]{1,30}", prior in prop::collection::vec("[a-z ]{1,30}", 1..5), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let rec = record(1, &b, &b);
        let texts: Vec<&str> = prior.iter().map(String::as_str).collect();
        let m = memory_of(&texts);
        if emergent(&rec, &m, lo) {
            prop_assert!(emergent(&rec, &m, hi));
        }
    }

    #[test]
    fn every_diagram_satisfies_its_invariants(
        raw in prop::collection::vec((0u32..6, 0u64..4000, prop::option::of(0usize..4)), 0..60),
        window in 300u64..1500,
    ) {
        let mut raw = raw;
        raw.sort_by_key(|&(a, t, _)| (t, a));
        let observations: Vec<Observation> = raw
            .iter()
            .enumerate()
            .map(|(i, &(agent, tick, cluster))| Observation { record_id: i as u64, agent, tick, cluster })
            .collect();
        let spec = WindowSpec::new(window, 4000).unwrap();
        let (d, _) = build_diagram(&observations, &BTreeMap::new(), &spec).unwrap();
        prop_assert!(d.check_invariants().is_ok(), "{:?}", d.check_invariants());
        for p in &d.points {
            prop_assert!(p.origin_agent != p.influenced_agent);
            prop_assert!(p.window >= p.emerged_window && p.window <= p.emerged_window + 1);
            prop_assert!(d.influence[&p.influenced_agent].contains(&p.cluster));
        }
        let from_points: usize = d.points.iter().map(|p| (p.influenced_agent, p.cluster)).collect::<BTreeSet<_>>().len();
        let from_h: usize = d.influence.values().map(BTreeSet::len).sum();
        prop_assert_eq!(from_points, from_h);
        let json = render_diagram(&d, DiagramFormat::Json);
        let back: EmergenceDiagram = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, d);
    }
}
