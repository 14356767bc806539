//! Edge rewiring, the rewiring-probability sweep, and selection of the
//! topology with the highest small-worldness.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, LayeredGraph};
use crate::metrics::{
    er_baseline, small_worldness_against, BaselineConfig, ClusteringKind, MetricsError,
    SmallWorldMetrics,
};
use crate::report::fmt_f64;
use crate::rng::stream_rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewireError {
    #[error("rewiring probability {0} is outside [0, 1]")]
    BadProbability(f64),
    #[error("probability grid is empty")]
    EmptyGrid,
    #[error("replicate count must be at least 1")]
    NoReplicates,
    #[error("no sweep point has defined metrics")]
    NoValidPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewireConfig {
    pub p: f64,
    pub seed: u64,
    /// Sub-stream of `seed`; lets a sweep derive independent draws per point.
    #[serde(default)]
    pub stream: u64,
    /// Restrict new endpoints to layers after the source's layer.
    pub forward_only: bool,
}

impl RewireConfig {
    pub fn new(p: f64, seed: u64) -> Self {
        RewireConfig { p, seed, stream: 0, forward_only: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeTag {
    Kept,
    Rewired { original_dst: usize },
    /// Selected for rewiring but no eligible endpoint existed.
    KeptNoEligible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewiredTopology {
    pub graph: LayeredGraph,
    /// One tag per edge of `graph`, in the same order.
    pub provenance: Vec<EdgeTag>,
    pub config: RewireConfig,
}

impl RewiredTopology {
    pub fn rewired_count(&self) -> usize {
        self.provenance.iter().filter(|t| matches!(t, EdgeTag::Rewired { .. })).count()
    }

    pub fn no_eligible_count(&self) -> usize {
        self.provenance.iter().filter(|t| **t == EdgeTag::KeptNoEligible).count()
    }

    /// Sidecar listing rewired edges as `src old_dst new_dst`.
    pub fn provenance_text(&self) -> String {
        let mut s = String::new();
        for (e, tag) in self.graph.edges().iter().zip(&self.provenance) {
            if let EdgeTag::Rewired { original_dst } = tag {
                writeln!(s, "{} {} {}", e.src, original_dst, e.dst).unwrap();
            }
        }
        s
    }
}

/// Edges sorted by `(src_layer, src, dst_layer, dst)`.
pub fn canonical_order(graph: &LayeredGraph) -> Vec<Edge> {
    let mut edges = graph.edges().to_vec();
    edges.sort_by_key(|e| (graph.layer_of(e.src), e.src, graph.layer_of(e.dst), e.dst));
    edges
}

struct Adjacency(Vec<HashMap<usize, u32>>);

impl Adjacency {
    fn new(n: usize, edges: &[Edge]) -> Self {
        let mut adj = Adjacency(vec![HashMap::new(); n]);
        for e in edges {
            adj.add(e.src, e.dst);
        }
        adj
    }

    fn add(&mut self, a: usize, b: usize) {
        *self.0[a].entry(b).or_insert(0) += 1;
        *self.0[b].entry(a).or_insert(0) += 1;
    }

    fn remove(&mut self, a: usize, b: usize) {
        for (x, y) in [(a, b), (b, a)] {
            if let Some(c) = self.0[x].get_mut(&y) {
                *c -= 1;
                if *c == 0 {
                    self.0[x].remove(&y);
                }
            }
        }
    }

    fn adjacent(&self, a: usize, b: usize) -> bool {
        self.0[a].contains_key(&b)
    }
}

/// Visits every edge once in canonical order and, with probability `p`,
/// moves its destination to a node drawn uniformly from those not adjacent
/// to the source. Edges without an eligible destination are kept.
pub fn rewire(graph: &LayeredGraph, config: &RewireConfig) -> Result<RewiredTopology, RewireError> {
    if !(0.0..=1.0).contains(&config.p) {
        return Err(RewireError::BadProbability(config.p));
    }
    let mut rng = stream_rng(config.seed, config.stream);
    let mut edges = canonical_order(graph);
    let mut provenance = vec![EdgeTag::Kept; edges.len()];
    let n = graph.node_count();
    let mut adj = Adjacency::new(n, &edges);
    let mut candidates = Vec::with_capacity(n);

    for (slot, tag) in provenance.iter_mut().enumerate() {
        if !rng.gen_bool(config.p) {
            continue;
        }
        let Edge { src, dst } = edges[slot];
        let range = if config.forward_only {
            let next = graph.layer_of(src) + 1;
            if next < graph.layer_count() {
                graph.layer_nodes(next).start..n
            } else {
                n..n
            }
        } else {
            0..n
        };
        candidates.clear();
        candidates.extend(range.filter(|&w| w != src && !adj.adjacent(src, w)));
        if candidates.is_empty() {
            *tag = EdgeTag::KeptNoEligible;
            continue;
        }
        let new_dst = candidates[rng.gen_range(0..candidates.len())];
        adj.remove(src, dst);
        adj.add(src, new_dst);
        edges[slot].dst = new_dst;
        *tag = EdgeTag::Rewired { original_dst: dst };
    }

    Ok(RewiredTopology { graph: graph.with_edges(edges), provenance, config: *config })
}

/// `count` log-spaced points in `[lo, hi]`, preceded by `p = 0`.
pub fn log_grid(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut grid = vec![0.0];
    if count == 1 {
        grid.push(hi);
    } else {
        let (a, b) = (lo.log10(), hi.log10());
        for i in 0..count {
            let t = i as f64 / (count - 1) as f64;
            grid.push(10f64.powf(a + t * (b - a)));
        }
        // pin the endpoint exactly
        *grid.last_mut().unwrap() = hi;
    }
    grid
}

pub fn default_grid() -> Vec<f64> {
    log_grid(32, 1e-4, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub replicates: usize,
    pub forward_only: bool,
    pub clustering: ClusteringKind,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { replicates: 1, forward_only: true, clustering: ClusteringKind::AverageLocal }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub p: f64,
    pub metrics: Result<SmallWorldMetrics, MetricsError>,
    /// First replicate drawn at this probability.
    pub topology: RewiredTopology,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub selected: Option<usize>,
}

fn point_stream(index: usize, replicate: usize) -> u64 {
    ((index as u64) << 32) | replicate as u64
}

fn mean_metrics(samples: &[SmallWorldMetrics]) -> SmallWorldMetrics {
    let k = samples.len() as f64;
    let avg = |f: fn(&SmallWorldMetrics) -> f64| samples.iter().map(f).sum::<f64>() / k;
    SmallWorldMetrics {
        c_g: avg(|m| m.c_g),
        l_g: avg(|m| m.l_g),
        c_rand: samples[0].c_rand,
        l_rand: samples[0].l_rand,
        gamma_g: avg(|m| m.gamma_g),
        lambda_g: avg(|m| m.lambda_g),
        s_g: avg(|m| m.s_g),
        reachable_fraction: avg(|m| m.reachable_fraction),
    }
}

/// Rewires `graph` at every probability of `p_grid` and scores each result.
/// The random baseline depends only on node and edge counts, which rewiring
/// preserves, so it is computed once.
pub fn sweep(
    graph: &LayeredGraph,
    p_grid: &[f64],
    seed: u64,
    baseline: &BaselineConfig,
    options: &SweepOptions,
) -> Result<SweepResult, RewireError> {
    if p_grid.is_empty() {
        return Err(RewireError::EmptyGrid);
    }
    if let Some(&bad) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(RewireError::BadProbability(bad));
    }
    if options.replicates == 0 {
        return Err(RewireError::NoReplicates);
    }
    let undirected = graph.undirected();
    let base = er_baseline(undirected.node_count(), undirected.edge_count(), baseline, options.clustering);

    let points: Vec<SweepPoint> = p_grid
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut first = None;
            let mut samples = Vec::with_capacity(options.replicates);
            let mut failure = None;
            for r in 0..options.replicates {
                let config = RewireConfig {
                    p,
                    seed,
                    stream: point_stream(i, r),
                    forward_only: options.forward_only,
                };
                let topo = rewire(graph, &config).expect("grid validated");
                let m = base.clone().and_then(|b| {
                    small_worldness_against(&topo.graph.undirected(), b, options.clustering)
                });
                match m {
                    Ok(m) => samples.push(m),
                    Err(e) => failure = failure.or(Some(e)),
                }
                first.get_or_insert(topo);
            }
            let metrics = match failure {
                Some(e) => Err(e),
                None => Ok(mean_metrics(&samples)),
            };
            SweepPoint { p, metrics, topology: first.unwrap() }
        })
        .collect();

    let selected = select_index(&points);
    Ok(SweepResult { points, selected })
}

/// Index of the point with the largest `s_g`; ties go to the smaller `p`.
fn select_index(points: &[SweepPoint]) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, pt) in points.iter().enumerate() {
        let Ok(m) = &pt.metrics else { continue };
        if m.s_g.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, s, p)) => m.s_g > s || (m.s_g == s && pt.p < p),
        };
        if better {
            best = Some((i, m.s_g, pt.p));
        }
    }
    best.map(|b| b.0)
}

impl SweepResult {
    /// Re-derives the selected index from the points.
    pub fn reselect(&mut self) {
        self.selected = select_index(&self.points);
    }

    pub fn selected_point(&self) -> Option<&SweepPoint> {
        self.selected.map(|i| &self.points[i])
    }

    /// CSV with one row per grid point. Undefined metrics leave empty cells.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("p,C,L,C_rand,L_rand,gamma,lambda,S,reachable_fraction,selected\n");
        for (i, pt) in self.points.iter().enumerate() {
            let cells: Vec<String> = match &pt.metrics {
                Ok(m) => [m.c_g, m.l_g, m.c_rand, m.l_rand, m.gamma_g, m.lambda_g, m.s_g, m.reachable_fraction]
                    .iter()
                    .map(|&v| fmt_f64(v))
                    .collect(),
                Err(_) => vec![String::new(); 8],
            };
            let flag = if self.selected == Some(i) { 1 } else { 0 };
            writeln!(s, "{},{},{}", fmt_f64(pt.p), cells.join(","), flag).unwrap();
        }
        s
    }
}

pub fn select_swn(sweep: &SweepResult) -> Result<RewiredTopology, RewireError> {
    sweep
        .selected_point()
        .map(|pt| pt.topology.clone())
        .ok_or(RewireError::NoValidPoint)
}
