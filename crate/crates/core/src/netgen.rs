//! Realization of a rewired channel graph as an executable network
//! description: one masked (coarse-grained sparse) convolution per connected
//! layer pair, with stride and zero padding chosen so that every incoming
//! feature map of a layer has the same spatial size and can be summed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::arch::{conv_output, same_padding, ArchError, ArchitectureSpec, BundleOp, LayerKind, LayerShape};
use crate::graph::LayeredGraph;
use crate::rewire::RewiredTopology;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetgenError {
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("graph layer sizes {graph:?} do not match the architecture's {spec:?}")]
    LayerMismatch { graph: Vec<usize>, spec: Vec<usize> },
    #[error("edge {src} -> {dst} does not point to a later layer")]
    BackwardEdge { src: usize, dst: usize },
    #[error("layer {layer} has no incoming connection and cannot be trained")]
    NoIncoming { layer: usize },
    #[error("no stride < {kernel} and padding map side {src} onto side {dst}")]
    NoGeometry { src: usize, dst: usize, kernel: usize },
    #[error("connection {src} -> {dst}: {message}")]
    BadConnection { src: usize, dst: usize, message: String },
    #[error("failed to parse network JSON: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Dense boolean matrix, `rows` destination nodes by `cols` source nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Mask { rows, cols, bits: vec![false; rows * cols] }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Mask { rows, cols, bits: vec![true; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.cols + col] = value;
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn iter_true(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / self.cols, i % self.cols))
    }
}

impl Serialize for Mask {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<u8>> = self
            .bits
            .chunks(self.cols.max(1))
            .take(self.rows)
            .map(|r| r.iter().map(|&b| b as u8).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<u8>>::deserialize(d)?;
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("mask rows differ in length"));
        }
        let mut bits = Vec::with_capacity(rows.len() * cols);
        for r in &rows {
            for &v in r {
                match v {
                    0 => bits.push(false),
                    1 => bits.push(true),
                    _ => return Err(serde::de::Error::custom("mask entries must be 0 or 1")),
                }
            }
        }
        Ok(Mask { rows: rows.len(), cols, bits })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseConnection {
    pub src: usize,
    pub dst: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `mask[i][j]`: source node `j` feeds destination node `i`.
    pub mask: Mask,
}

impl SparseConnection {
    pub fn is_long_range(&self) -> bool {
        self.dst > self.src + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwNetSpec {
    #[serde(flatten)]
    pub base: ArchitectureSpec,
    pub connections: Vec<SparseConnection>,
}

/// Smallest stride `s < kernel`, then smallest padding, with
/// `floor((src + 2 pad - kernel) / s) + 1 == dst`.
pub fn compute_geometry(src: usize, dst: usize, kernel: usize) -> Result<(usize, usize), NetgenError> {
    let none = NetgenError::NoGeometry { src, dst, kernel };
    if dst == 0 || src < dst {
        return Err(none);
    }
    for stride in 1..kernel {
        for pad in 0..=kernel {
            if conv_output(src, kernel, stride, pad) == Some(dst) {
                return Ok((stride, pad));
            }
        }
    }
    Err(none)
}

/// Geometry of a connection from graph layer `src` to graph layer `dst`.
fn connection_geometry(
    shapes: &[LayerShape],
    src: usize,
    dst: usize,
) -> Result<(usize, usize, usize), NetgenError> {
    let s = &shapes[src];
    let d = &shapes[dst];
    match d.kind {
        Some(LayerKind::FullyConnected) => Ok((s.out_spatial, 1, 0)),
        Some(LayerKind::Conv) if dst == src + 1 => Ok((d.kernel, d.stride, same_padding(d.kernel))),
        Some(LayerKind::Conv) => {
            let (stride, pad) = compute_geometry(s.out_spatial, d.pre_spatial, d.kernel)?;
            Ok((d.kernel, stride, pad))
        }
        None => Err(NetgenError::BadConnection {
            src,
            dst,
            message: "the input layer cannot receive connections".into(),
        }),
    }
}

/// Groups the topology's edges by layer pair and turns each group into one
/// masked connection. Consecutive-layer groups replace the original dense
/// layers; the rest become long-range connections.
pub fn realize(topology: &RewiredTopology, spec: &ArchitectureSpec) -> Result<SwNetSpec, NetgenError> {
    realize_graph(&topology.graph, spec)
}

pub fn realize_graph(graph: &LayeredGraph, spec: &ArchitectureSpec) -> Result<SwNetSpec, NetgenError> {
    let shapes = spec.shapes()?;
    let spec_sizes: Vec<usize> = shapes.iter().map(|s| s.nodes).collect();
    if graph.layer_sizes() != spec_sizes.as_slice() {
        return Err(NetgenError::LayerMismatch { graph: graph.layer_sizes().to_vec(), spec: spec_sizes });
    }
    let mut groups: BTreeMap<(usize, usize), Mask> = BTreeMap::new();
    for e in graph.edges() {
        let (ls, ld) = (graph.layer_of(e.src), graph.layer_of(e.dst));
        if ls >= ld {
            return Err(NetgenError::BackwardEdge { src: e.src, dst: e.dst });
        }
        groups
            .entry((ls, ld))
            .or_insert_with(|| Mask::new(spec_sizes[ld], spec_sizes[ls]))
            .set(graph.local_index(e.dst), graph.local_index(e.src), true);
    }
    for layer in 1..spec_sizes.len() {
        if !groups.keys().any(|&(_, d)| d == layer) {
            return Err(NetgenError::NoIncoming { layer });
        }
    }
    // order by destination, then source, matching execution order
    let mut keys: Vec<_> = groups.keys().copied().collect();
    keys.sort_by_key(|&(s, d)| (d, s));
    let mut connections = Vec::with_capacity(keys.len());
    for (src, dst) in keys {
        let (kernel, stride, pad) = connection_geometry(&shapes, src, dst)?;
        let mask = groups.remove(&(src, dst)).unwrap();
        connections.push(SparseConnection { src, dst, kernel, stride, pad, mask });
    }
    Ok(SwNetSpec { base: spec.with_resolved_bundles(), connections })
}

/// Every layer connected to every later layer with full masks: the
/// all-pairs dense analogue of `spec` (summation instead of concatenation).
pub fn dense_all_pairs(spec: &ArchitectureSpec) -> Result<SwNetSpec, NetgenError> {
    let shapes = spec.shapes()?;
    let sizes: Vec<usize> = shapes.iter().map(|s| s.nodes).collect();
    let mut g = LayeredGraph::new(sizes, Vec::new());
    let mut edges = Vec::new();
    for a in 0..g.layer_count() {
        for b in a + 1..g.layer_count() {
            for s in g.layer_nodes(a) {
                for d in g.layer_nodes(b) {
                    edges.push(crate::graph::Edge::new(s, d));
                }
            }
        }
    }
    g = g.with_edges(edges);
    realize_graph(&g, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    /// Trainable conv/FC weights (biases and normalization excluded).
    pub weights: usize,
    /// Multiplications in one forward pass of one sample.
    pub multiplies: usize,
}

impl SwNetSpec {
    pub fn layer_count(&self) -> usize {
        self.base.layer_count()
    }

    pub fn bundle_order(&self) -> Vec<Vec<BundleOp>> {
        (0..self.base.layers.len()).map(|i| self.base.effective_bundle(i)).collect()
    }

    pub fn incoming(&self, layer: usize) -> impl Iterator<Item = &SparseConnection> {
        self.connections.iter().filter(move |c| c.dst == layer)
    }

    pub fn connection(&self, src: usize, dst: usize) -> Option<&SparseConnection> {
        self.connections.iter().find(|c| c.src == src && c.dst == dst)
    }

    pub fn total_mask_entries(&self) -> usize {
        self.connections.iter().map(|c| c.mask.count_true()).sum()
    }

    /// Checks masks, geometry, and coverage. Run on every spec loaded from
    /// outside so that shape errors never surface mid-training.
    pub fn validate(&self) -> Result<(), NetgenError> {
        let shapes = self.base.shapes()?;
        let layers = shapes.len();
        let mut seen = std::collections::HashSet::new();
        for c in &self.connections {
            let bad = |message: String| NetgenError::BadConnection { src: c.src, dst: c.dst, message };
            if c.src >= c.dst || c.dst >= layers {
                return Err(bad("layers must satisfy src < dst < layer count".into()));
            }
            if !seen.insert((c.src, c.dst)) {
                return Err(bad("duplicate layer pair".into()));
            }
            let (s, d) = (&shapes[c.src], &shapes[c.dst]);
            if c.mask.rows() != d.nodes || c.mask.cols() != s.nodes {
                return Err(bad(format!(
                    "mask is {}x{}, expected {}x{}",
                    c.mask.rows(),
                    c.mask.cols(),
                    d.nodes,
                    s.nodes
                )));
            }
            if c.stride == 0 || c.kernel == 0 {
                return Err(bad("kernel and stride must be positive".into()));
            }
            if conv_output(s.out_spatial, c.kernel, c.stride, c.pad) != Some(d.pre_spatial) {
                return Err(bad(format!(
                    "kernel {} stride {} pad {} does not map side {} to {}",
                    c.kernel, c.stride, c.pad, s.out_spatial, d.pre_spatial
                )));
            }
            match d.kind {
                Some(LayerKind::Conv) if c.is_long_range() && c.stride >= c.kernel => {
                    return Err(bad("long-range stride must be smaller than the kernel".into()));
                }
                Some(LayerKind::FullyConnected) if c.kernel != s.out_spatial => {
                    return Err(bad("fully connected input must cover the whole source map".into()));
                }
                _ => {}
            }
        }
        for layer in 1..layers {
            if !self.incoming(layer).any(|c| c.mask.count_true() > 0) {
                return Err(NetgenError::NoIncoming { layer });
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, NetgenError> {
        let spec: SwNetSpec = serde_json::from_str(text).map_err(|e| NetgenError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetgenError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| NetgenError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetgenError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| NetgenError::Io { path: path.display().to_string(), message: e.to_string() })
    }
}

pub fn count_params_flops(spec: &SwNetSpec) -> Result<ParamCount, NetgenError> {
    let shapes = spec.base.shapes()?;
    let mut weights = 0;
    let mut multiplies = 0;
    for c in &spec.connections {
        let (s, d) = (&shapes[c.src], &shapes[c.dst]);
        let area = c.kernel * c.kernel;
        let block: usize = c
            .mask
            .iter_true()
            .map(|(i, j)| d.node_channels(i).len() * s.node_channels(j).len() * area)
            .sum();
        weights += block;
        multiplies += block * d.pre_spatial * d.pre_spatial;
    }
    Ok(ParamCount { weights, multiplies })
}
