//! Channel-level graph form of a feed-forward network.
//!
//! Nodes are numbered consecutively layer by layer, so a graph is fully
//! described by its per-layer node counts and its directed edge list.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::arch::{ArchError, ArchitectureSpec};
use crate::metrics::UndirectedGraph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("edge list line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("edge list header has no layer sizes; supply the architecture to recover them")]
    MissingLayerSizes,
    #[error("layer sizes {sizes:?} do not add up to {nodes} nodes")]
    SizeMismatch { sizes: Vec<usize>, nodes: usize },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
}

impl Edge {
    pub fn new(src: usize, dst: usize) -> Self {
        Edge { src, dst }
    }

    fn unordered(&self) -> (usize, usize) {
        (self.src.min(self.dst), self.src.max(self.dst))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SelfLoop { node: usize },
    DuplicateEdge { src: usize, dst: usize },
    BackwardEdge { src: usize, dst: usize },
    EmptyLayer { layer: usize },
    NodeOutOfRange { node: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayeredGraph {
    layer_sizes: Vec<usize>,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
}

impl LayeredGraph {
    /// Builds a graph without checking it; call [`LayeredGraph::validate`]
    /// for diagnostics.
    pub fn new(layer_sizes: Vec<usize>, edges: Vec<Edge>) -> Self {
        let mut offsets = Vec::with_capacity(layer_sizes.len() + 1);
        let mut acc = 0;
        offsets.push(0);
        for &s in &layer_sizes {
            acc += s;
            offsets.push(acc);
        }
        LayeredGraph { layer_sizes, offsets, edges }
    }

    /// Dense channel graph of `spec`: the input channels form layer 0 and
    /// every node of layer `l` connects to every node of layer `l + 1`.
    pub fn from_architecture(spec: &ArchitectureSpec) -> Result<Self, GraphError> {
        let shapes = spec.shapes()?;
        let sizes: Vec<usize> = shapes.iter().map(|s| s.nodes).collect();
        let mut g = LayeredGraph::new(sizes, Vec::new());
        let mut edges = Vec::with_capacity(spec.weight_block_count()?);
        for l in 0..g.layer_count() - 1 {
            for src in g.layer_nodes(l) {
                for dst in g.layer_nodes(l + 1) {
                    edges.push(Edge::new(src, dst));
                }
            }
        }
        g.edges = edges;
        Ok(g)
    }

    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn node_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn into_edges(self) -> Vec<Edge> {
        self.edges
    }

    pub fn layer_nodes(&self, layer: usize) -> Range<usize> {
        self.offsets[layer]..self.offsets[layer + 1]
    }

    /// Layer of `node`. Panics if the node is out of range.
    pub fn layer_of(&self, node: usize) -> usize {
        assert!(node < self.node_count(), "node {node} out of range");
        self.offsets.partition_point(|&o| o <= node) - 1
    }

    /// Index of `node` within its layer.
    pub fn local_index(&self, node: usize) -> usize {
        node - self.offsets[self.layer_of(node)]
    }

    pub fn with_edges(&self, edges: Vec<Edge>) -> Self {
        LayeredGraph::new(self.layer_sizes.clone(), edges)
    }

    /// Lists every invariant violation; an empty list means well-formed.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (layer, &size) in self.layer_sizes.iter().enumerate() {
            if size == 0 {
                out.push(Violation::EmptyLayer { layer });
            }
        }
        let n = self.node_count();
        let mut seen = HashSet::with_capacity(self.edges.len());
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                out.push(Violation::NodeOutOfRange { node: e.src.max(e.dst) });
                continue;
            }
            if e.src == e.dst {
                out.push(Violation::SelfLoop { node: e.src });
                continue;
            }
            if !seen.insert(e.unordered()) {
                out.push(Violation::DuplicateEdge { src: e.src, dst: e.dst });
            }
            if self.layer_of(e.src) >= self.layer_of(e.dst) {
                out.push(Violation::BackwardEdge { src: e.src, dst: e.dst });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Undirected skeleton used by the small-world metrics.
    pub fn undirected(&self) -> UndirectedGraph {
        UndirectedGraph::from_edges(
            self.node_count(),
            self.edges.iter().map(|e| (e.src, e.dst)),
        )
    }

    /// Edge list text: header `nodes=<N> layers=<K> sizes=<s0,s1,..>` then
    /// one `src dst` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::with_capacity(self.edges.len() * 10 + 64);
        let sizes: Vec<String> = self.layer_sizes.iter().map(|x| x.to_string()).collect();
        writeln!(
            s,
            "nodes={} layers={} sizes={}",
            self.node_count(),
            self.layer_count(),
            sizes.join(",")
        )
        .unwrap();
        for e in &self.edges {
            writeln!(s, "{} {}", e.src, e.dst).unwrap();
        }
        s
    }

    /// Parses the edge list format. When the header lacks `sizes=`, the
    /// layer sizes must be supplied through `fallback_sizes`.
    pub fn from_edge_list(
        text: &str,
        fallback_sizes: Option<&[usize]>,
    ) -> Result<Self, GraphError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(GraphError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let mut nodes = None;
        let mut layers = None;
        let mut sizes: Option<Vec<usize>> = None;
        for tok in header.split_whitespace() {
            let (key, val) = tok.split_once('=').ok_or_else(|| GraphError::Format {
                line: 1,
                message: format!("bad header token `{tok}`"),
            })?;
            let bad = |_| GraphError::Format {
                line: 1,
                message: format!("bad value in `{tok}`"),
            };
            match key {
                "nodes" => nodes = Some(val.parse::<usize>().map_err(bad)?),
                "layers" => layers = Some(val.parse::<usize>().map_err(bad)?),
                "sizes" => {
                    sizes = Some(
                        val.split(',')
                            .map(|v| v.parse::<usize>())
                            .collect::<Result<_, _>>()
                            .map_err(bad)?,
                    )
                }
                _ => {}
            }
        }
        let (nodes, layers) = match (nodes, layers) {
            (Some(n), Some(k)) => (n, k),
            _ => {
                return Err(GraphError::Format {
                    line: 1,
                    message: "header must carry nodes= and layers=".into(),
                })
            }
        };
        let sizes = match sizes {
            Some(s) => s,
            None => fallback_sizes.ok_or(GraphError::MissingLayerSizes)?.to_vec(),
        };
        if sizes.len() != layers || sizes.iter().sum::<usize>() != nodes {
            return Err(GraphError::SizeMismatch { sizes, nodes });
        }
        let mut edges = Vec::new();
        for (i, line) in lines {
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<usize, GraphError> {
                tok.and_then(|t| t.parse().ok()).ok_or_else(|| GraphError::Format {
                    line: i + 1,
                    message: format!("expected `src dst`, got `{line}`"),
                })
            };
            let src = parse(it.next())?;
            let dst = parse(it.next())?;
            if src >= nodes || dst >= nodes {
                return Err(GraphError::Format {
                    line: i + 1,
                    message: format!("node id out of range in `{line}`"),
                });
            }
            edges.push(Edge::new(src, dst));
        }
        Ok(LayeredGraph::new(sizes, edges))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GraphError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_edge_list()).map_err(|e| GraphError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>, fallback_sizes: Option<&[usize]>) -> Result<Self, GraphError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_edge_list(&text, fallback_sizes)
    }
}
