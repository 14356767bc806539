//! Watts–Strogatz quantities on undirected graphs and the small-worldness
//! score `S = (C / C_rand) / (L / L_rand)`.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetricsError {
    #[error("graph needs at least {needed} nodes, has {actual}")]
    TooFewNodes { needed: usize, actual: usize },
    #[error("graph has no pair of mutually reachable nodes")]
    NoReachablePairs,
    #[error("{edges} edges exceed the simple-graph maximum {max} for this node count")]
    TooManyEdges { edges: usize, max: usize },
    #[error("analytic baseline needs mean degree > 1, got {mean_degree}")]
    DegreeTooLow { mean_degree: f64 },
    #[error("baseline sample count must be at least 1")]
    NoSamples,
    #[error("random baseline has zero clustering; gamma is undefined")]
    ZeroBaselineClustering,
    #[error("no random baseline sample had a reachable pair")]
    NoReachableBaseline,
}

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<Vec<usize>>,
    edge_count: usize,
}

impl UndirectedGraph {
    /// Self-loops are dropped and parallel edges collapse.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); node_count];
        for (a, b) in edges {
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut twice = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            twice += list.len();
        }
        UndirectedGraph { adj, edge_count: twice / 2 }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Number of edges among the neighbors of each node.
    fn neighbor_links(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut mark = vec![false; n];
        let mut links = vec![0; n];
        for v in 0..n {
            for &u in &self.adj[v] {
                mark[u] = true;
            }
            let mut count = 0;
            for &u in &self.adj[v] {
                count += self.adj[u].iter().filter(|&&w| mark[w]).count();
            }
            for &u in &self.adj[v] {
                mark[u] = false;
            }
            links[v] = count / 2;
        }
        links
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringKind {
    /// Mean of local coefficients; degree < 2 nodes contribute 0.
    #[default]
    AverageLocal,
    /// Triangle-to-triple ratio.
    Transitivity,
}

pub fn clustering_coefficient(g: &UndirectedGraph) -> f64 {
    clustering(g, ClusteringKind::AverageLocal)
}

pub fn clustering(g: &UndirectedGraph, kind: ClusteringKind) -> f64 {
    let n = g.node_count();
    if n == 0 {
        return 0.0;
    }
    let links = g.neighbor_links();
    match kind {
        ClusteringKind::AverageLocal => {
            let total: f64 = (0..n)
                .map(|v| {
                    let d = g.degree(v);
                    if d < 2 {
                        0.0
                    } else {
                        links[v] as f64 / (d * (d - 1) / 2) as f64
                    }
                })
                .sum();
            total / n as f64
        }
        ClusteringKind::Transitivity => {
            let closed: usize = links.iter().sum();
            let triples: usize = (0..n).map(|v| g.degree(v) * g.degree(v).saturating_sub(1) / 2).sum();
            if triples == 0 {
                0.0
            } else {
                closed as f64 / triples as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStats {
    pub mean: f64,
    /// Ordered pairs `(u, v)`, `u != v`, with `v` reachable from `u`.
    pub reachable_pairs: u64,
    pub total_pairs: u64,
}

impl PathStats {
    pub fn reachable_fraction(&self) -> f64 {
        self.reachable_pairs as f64 / self.total_pairs as f64
    }
}

fn bfs_sums(g: &UndirectedGraph, src: usize, dist: &mut [u32], queue: &mut VecDeque<usize>) -> (u64, u64) {
    dist.fill(u32::MAX);
    dist[src] = 0;
    queue.clear();
    queue.push_back(src);
    let (mut sum, mut count) = (0u64, 0u64);
    while let Some(v) = queue.pop_front() {
        let d = dist[v] + 1;
        for &u in g.neighbors(v) {
            if dist[u] == u32::MAX {
                dist[u] = d;
                sum += d as u64;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    (sum, count)
}

/// Mean shortest-path length over reachable pairs, via BFS from every node.
pub fn path_stats(g: &UndirectedGraph) -> Result<PathStats, MetricsError> {
    let n = g.node_count();
    if n < 2 {
        return Err(MetricsError::TooFewNodes { needed: 2, actual: n });
    }
    let per_source: Vec<(u64, u64)> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![u32::MAX; n], VecDeque::with_capacity(n)),
            |(dist, queue), s| bfs_sums(g, s, dist, queue),
        )
        .collect();
    // integer sums: exact and independent of scheduling
    let (sum, count) = per_source
        .iter()
        .fold((0u64, 0u64), |(s, c), &(a, b)| (s + a, c + b));
    if count == 0 {
        return Err(MetricsError::NoReachablePairs);
    }
    Ok(PathStats {
        mean: sum as f64 / count as f64,
        reachable_pairs: count,
        total_pairs: (n * (n - 1)) as u64,
    })
}

pub fn characteristic_path_length(g: &UndirectedGraph) -> Result<f64, MetricsError> {
    path_stats(g).map(|s| s.mean)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    MonteCarlo,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub sample_count: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub const DEFAULT_SAMPLES: usize = 50;

    pub fn monte_carlo(sample_count: usize, seed: u64) -> Self {
        BaselineConfig { method: BaselineMethod::MonteCarlo, sample_count, seed }
    }

    pub fn analytic() -> Self {
        BaselineConfig { method: BaselineMethod::Analytic, sample_count: 1, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub c_rand: f64,
    pub l_rand: f64,
}

pub fn max_simple_edges(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Maps a pair index in `0..n(n-1)/2` to `(i, j)`, `i < j`, enumerating
/// pairs row by row.
pub fn pair_from_index(n: usize, idx: usize) -> (usize, usize) {
    let row_start = |i: usize| i * (2 * n - i - 1) / 2;
    // largest row i in 0..n-1 with row_start(i) <= idx
    let (mut lo, mut hi) = (0, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if row_start(mid) <= idx {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let i = lo;
    (i, i + 1 + idx - row_start(i))
}

/// Draws a uniform graph with exactly `edges` edges on `n` nodes from
/// sample stream `sample` of `seed`.
pub fn sample_gnm(n: usize, edges: usize, seed: u64, sample: u64) -> UndirectedGraph {
    let mut rng = stream_rng(seed, sample);
    let picks = rand::seq::index::sample(&mut rng, max_simple_edges(n), edges);
    UndirectedGraph::from_edges(n, picks.into_iter().map(|idx| pair_from_index(n, idx)))
}

/// Clustering and path length expected of an Erdős–Rényi graph with the
/// given node and edge counts.
pub fn er_baseline(
    node_count: usize,
    edge_count: usize,
    config: &BaselineConfig,
    kind: ClusteringKind,
) -> Result<Baseline, MetricsError> {
    let max = max_simple_edges(node_count);
    if edge_count > max {
        return Err(MetricsError::TooManyEdges { edges: edge_count, max });
    }
    if node_count < 2 {
        return Err(MetricsError::TooFewNodes { needed: 2, actual: node_count });
    }
    match config.method {
        BaselineMethod::Analytic => {
            let n = node_count as f64;
            let k = 2.0 * edge_count as f64 / n;
            if k <= 1.0 {
                return Err(MetricsError::DegreeTooLow { mean_degree: k });
            }
            Ok(Baseline { c_rand: k / n, l_rand: n.ln() / k.ln() })
        }
        BaselineMethod::MonteCarlo => {
            if config.sample_count == 0 {
                return Err(MetricsError::NoSamples);
            }
            let samples: Vec<(f64, Option<f64>)> = (0..config.sample_count as u64)
                .into_par_iter()
                .map(|s| {
                    let g = sample_gnm(node_count, edge_count, config.seed, s);
                    (clustering(&g, kind), path_stats(&g).ok().map(|p| p.mean))
                })
                .collect();
            let c_rand = samples.iter().map(|s| s.0).sum::<f64>() / samples.len() as f64;
            let lengths: Vec<f64> = samples.iter().filter_map(|s| s.1).collect();
            if lengths.is_empty() {
                return Err(MetricsError::NoReachableBaseline);
            }
            let l_rand = lengths.iter().sum::<f64>() / lengths.len() as f64;
            Ok(Baseline { c_rand, l_rand })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallWorldMetrics {
    pub c_g: f64,
    pub l_g: f64,
    pub c_rand: f64,
    pub l_rand: f64,
    pub gamma_g: f64,
    pub lambda_g: f64,
    pub s_g: f64,
    pub reachable_fraction: f64,
}

impl SmallWorldMetrics {
    /// Combines graph and baseline quantities into the ratio triple.
    pub fn from_parts(
        c_g: f64,
        l_g: f64,
        baseline: Baseline,
        reachable_fraction: f64,
    ) -> Result<Self, MetricsError> {
        if baseline.c_rand == 0.0 {
            return Err(MetricsError::ZeroBaselineClustering);
        }
        let gamma_g = c_g / baseline.c_rand;
        let lambda_g = l_g / baseline.l_rand;
        Ok(SmallWorldMetrics {
            c_g,
            l_g,
            c_rand: baseline.c_rand,
            l_rand: baseline.l_rand,
            gamma_g,
            lambda_g,
            s_g: gamma_g / lambda_g,
            reachable_fraction,
        })
    }

    pub fn is_small_world(&self) -> bool {
        self.s_g > 1.0
    }
}

/// Small-worldness of `g` against an already computed baseline.
pub fn small_worldness_against(
    g: &UndirectedGraph,
    baseline: Baseline,
    kind: ClusteringKind,
) -> Result<SmallWorldMetrics, MetricsError> {
    if g.node_count() < 2 {
        return Err(MetricsError::TooFewNodes { needed: 2, actual: g.node_count() });
    }
    let paths = path_stats(g)?;
    SmallWorldMetrics::from_parts(clustering(g, kind), paths.mean, baseline, paths.reachable_fraction())
}

pub fn small_worldness(g: &UndirectedGraph, config: &BaselineConfig) -> Result<SmallWorldMetrics, MetricsError> {
    small_worldness_with(g, config, ClusteringKind::AverageLocal)
}

pub fn small_worldness_with(
    g: &UndirectedGraph,
    config: &BaselineConfig,
    kind: ClusteringKind,
) -> Result<SmallWorldMetrics, MetricsError> {
    if g.edge_count() == 0 {
        return Err(MetricsError::NoReachablePairs);
    }
    let baseline = er_baseline(g.node_count(), g.edge_count(), config, kind)?;
    small_worldness_against(g, baseline, kind)
}

/// JSON document for one metrics evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub metrics: SmallWorldMetrics,
    pub is_small_world: bool,
    pub baseline: BaselineConfig,
    pub clustering: ClusteringKind,
}
