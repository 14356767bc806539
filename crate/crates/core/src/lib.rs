//! Small-world topology transforms for feed-forward networks.
//!
//! The pipeline runs in four stages:
//!
//! 1. [`graph::LayeredGraph::from_architecture`] turns an
//!    [`arch::ArchitectureSpec`] into a channel-level graph (one node per
//!    feature-map channel or neuron group, one edge per weight block).
//! 2. [`rewire::sweep`] rewires the graph over a grid of probabilities and
//!    scores each result with [`metrics::small_worldness`]; the highest
//!    scoring topology is kept.
//! 3. [`netgen::realize`] maps the topology back to a network whose layers
//!    sum masked (coarse-grained sparse) convolutions from every connected
//!    earlier layer.
//! 4. [`trainer`] executes such networks from scratch and measures how many
//!    iterations they need to reach a given held-out accuracy.

pub mod arch;
pub mod graph;
pub mod metrics;
pub mod netgen;
pub mod report;
pub mod rewire;
pub mod rng;
pub mod trainer;

pub use arch::{ArchitectureSpec, BundleOp, LayerDecl, LayerKind, PoolKind};
pub use graph::{Edge, LayeredGraph};
pub use metrics::{BaselineConfig, SmallWorldMetrics};
pub use netgen::{SparseConnection, SwNetSpec};
pub use rewire::{RewireConfig, RewiredTopology, SweepResult};
