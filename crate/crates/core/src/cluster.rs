//! Seeded k-means over embedding vectors, medoid labels, and reports.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::cosine_similarity;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("fewer points than clusters ({points} < {k})")]
    TooFewPoints { points: usize, k: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("points have inconsistent dimensions")]
    Ragged,
    #[error("cannot label an empty cluster")]
    EmptyCluster,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Independent k-means++ starts; the lowest objective wins. Start `r`
    /// draws from ChaCha stream `r` of the seed, so one start is plain k-means++.
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub objective: f64,
    pub iterations_run: usize,
    /// Objective after every assignment step.
    pub objective_history: Vec<f64>,
}

impl Clustering {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lower index.
fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target at the very end of the mass
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("positive mass"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("n >= k")
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Centroid means of the current assignment, reseeding empty clusters first.
fn update(points: &[Vec<f64>], assignments: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let dim = points[0].len();
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        // farthest point from its own centroid, taken from a cluster that can spare it
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[a]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("some cluster holds two points when one is empty");
        sizes[assignments[i]] -= 1;
        assignments[i] = j;
        sizes[j] = 1;
    }
    let mut sums = vec![vec![0.0; dim]; k];
    for (p, &a) in points.iter().zip(assignments.iter()) {
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (j, s) in sums.into_iter().enumerate() {
        centroids[j] = s.into_iter().map(|x| x / sizes[j] as f64).collect();
    }
}

fn objective(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

/// Lloyd's algorithm from a k-means++ start.
///
/// Stops at a fixed point of the assignment, when one Lloyd round improves
/// the objective by less than `tol`, or after `max_iter` assignment steps.
/// Centroids returned are always the means of their members.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, opts: KMeansOptions) -> Result<Clustering, ClusterError> {
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if points.len() < k {
        return Err(ClusterError::TooFewPoints { points: points.len(), k });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(ClusterError::Ragged);
    }
    let mut best: Option<Clustering> = None;
    for r in 0..opts.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let c = lloyd(points, k, &mut rng, opts);
        if best.as_ref().is_none_or(|b| c.objective < b.objective) {
            best = Some(c);
        }
    }
    Ok(best.expect("at least one start"))
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng, opts: KMeansOptions) -> Clustering {
    let mut centroids = kmeans_pp(points, k, rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = vec![objective(points, &assignments, &centroids)];
    let mut iterations = 1;
    loop {
        update(points, &mut assignments, &mut centroids);
        if iterations >= opts.max_iter {
            break;
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let obj = objective(points, &next, &centroids);
        let prev = *history.last().expect("non-empty");
        debug_assert!(obj <= prev + 1e-9 * prev.max(1.0), "objective rose: {prev} -> {obj}");
        history.push(obj);
        iterations += 1;
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }
        if prev - obj < opts.tol {
            update(points, &mut assignments, &mut centroids);
            break;
        }
    }
    let obj = objective(points, &assignments, &centroids);
    Clustering {
        k,
        centroids,
        assignments,
        objective: obj,
        iterations_run: iterations,
        objective_history: history,
    }
}

/// The member text most similar to `centroid`; ties go to the lower record id.
pub fn label_cluster(members: &[(u64, &str, &[f64])], centroid: &[f64]) -> Result<String, ClusterError> {
    let mut best: Option<(f64, u64, &str)> = None;
    for &(id, text, v) in members {
        let s = cosine_similarity(v, centroid).unwrap_or(f64::NEG_INFINITY);
        let better = match best {
            None => true,
            Some((bs, bid, _)) => s > bs || (s == bs && id < bid),
        };
        if better {
            best = Some((s, id, text));
        }
    }
    best.map(|(_, _, t)| t.to_string()).ok_or(ClusterError::EmptyCluster)
}

/// Mean silhouette coefficient of a clustering (Euclidean).
pub fn silhouette(points: &[Vec<f64>], c: &Clustering) -> f64 {
    let n = points.len();
    if c.k < 2 || n < 2 {
        return 0.0;
    }
    let sizes = c.sizes();
    let mut total = 0.0;
    for i in 0..n {
        let mut sum = vec![0.0; c.k];
        for j in 0..n {
            if i != j {
                sum[c.assignments[j]] += squared_distance(&points[i], &points[j]).sqrt();
            }
        }
        let own = c.assignments[i];
        if sizes[own] <= 1 {
            continue;
        }
        let a = sum[own] / (sizes[own] - 1) as f64;
        let b = (0..c.k)
            .filter(|&j| j != own && sizes[j] > 0)
            .map(|j| sum[j] / sizes[j] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

/// Silhouette score for every k in `ks` that the data supports.
pub fn silhouette_scan(
    points: &[Vec<f64>],
    ks: std::ops::RangeInclusive<usize>,
    seed: u64,
    opts: KMeansOptions,
) -> Vec<(usize, f64)> {
    ks.filter(|&k| k >= 2 && k <= points.len())
        .filter_map(|k| kmeans(points, k, seed, opts).ok().map(|c| (k, silhouette(points, &c))))
        .collect()
}

/// Pairwise cosine similarities as CSV, rows and columns keyed by record id.
pub fn similarity_matrix_csv(entries: &[(u64, &[f64])]) -> String {
    let mut out = String::from("record_id");
    for (id, _) in entries {
        out.push_str(&format!(",{id}"));
    }
    out.push('\n');
    for (id, a) in entries {
        out.push_str(&id.to_string());
        for (_, b) in entries {
            let s = cosine_similarity(a, b).unwrap_or(0.0);
            out.push_str(&format!(",{s:.6}"));
        }
        out.push('\n');
    }
    out
}
