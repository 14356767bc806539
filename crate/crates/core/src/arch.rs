//! Declarative feed-forward architectures and their derived layer geometry.
//!
//! An [`ArchitectureSpec`] lists the weight layers of a network after an
//! input tensor of shape `(channels, height, width)`. Graph layer 0 is the
//! input; declared layer `i` becomes graph layer `i + 1`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ArchError {
    #[error("architecture declares no weight layers; at least one is required after the input")]
    NoLayers,
    #[error("input shape must be non-zero and square, got {0:?}")]
    BadInputShape([usize; 3]),
    #[error("layer {layer}: output channel count must be at least 1")]
    ZeroChannels { layer: usize },
    #[error("layer {layer}: convolution requires a kernel size")]
    MissingKernel { layer: usize },
    #[error("layer {layer}: kernel size must be at least 1")]
    ZeroKernel { layer: usize },
    #[error("layer {layer}: stride must be at least 1")]
    ZeroStride { layer: usize },
    #[error("layer {layer}: fully connected layers take no kernel or pooling")]
    FullyConnectedGeometry { layer: usize },
    #[error("layer {layer}: convolution cannot follow a fully connected layer")]
    ConvAfterFullyConnected { layer: usize },
    #[error("layer {layer}: group size must be at least 1")]
    ZeroGroup { layer: usize },
    #[error("layer {layer}: pooling window and stride must be at least 1")]
    BadPool { layer: usize },
    #[error("layer {layer}: bundle lists maxpool but no pooling is declared (or vice versa)")]
    BundlePoolMismatch { layer: usize },
    #[error("layer {layer}: bundle repeats operation {op}")]
    BundleRepeat { layer: usize, op: BundleOp },
    #[error("layer {layer}: spatial size collapses below 1 (input {input})")]
    SpatialCollapse { layer: usize, input: usize },
    #[error("failed to parse architecture JSON: {0}")]
    Parse(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "conv")]
    Conv,
    #[serde(rename = "fully_connected", alias = "fc")]
    FullyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    #[serde(alias = "avg")]
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub kind: PoolKind,
    pub window: usize,
    pub stride: usize,
}

impl Pool {
    pub fn output_size(&self, input: usize) -> Option<usize> {
        (input >= self.window).then(|| (input - self.window) / self.stride + 1)
    }
}

/// One step of the composite nonlinearity applied after a layer's summed
/// linear response. `MaxPool` applies whatever pooling the layer declares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BundleOp {
    Relu,
    MaxPool,
    BatchNorm,
}

impl fmt::Display for BundleOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BundleOp::Relu => "relu",
            BundleOp::MaxPool => "maxpool",
            BundleOp::BatchNorm => "batchnorm",
        })
    }
}

/// Networks with more graph layers than this get batch norm in their
/// default bundle.
pub const DEFAULT_BATCHNORM_MIN_LAYERS: usize = 7;

fn default_stride() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDecl {
    pub kind: LayerKind,
    pub out_channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<usize>,
    #[serde(default = "default_stride", skip_serializing_if = "is_one")]
    pub stride: usize,
    #[serde(default)]
    pub pool: Option<Pool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle: Option<Vec<BundleOp>>,
    /// Fully connected neurons per graph node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<usize>,
}

impl LayerDecl {
    pub fn conv(out_channels: usize, kernel: usize) -> Self {
        LayerDecl {
            kind: LayerKind::Conv,
            out_channels,
            kernel: Some(kernel),
            stride: 1,
            pool: None,
            bundle: None,
            group: None,
        }
    }

    pub fn fully_connected(out_channels: usize) -> Self {
        LayerDecl {
            kind: LayerKind::FullyConnected,
            out_channels,
            kernel: None,
            stride: 1,
            pool: None,
            bundle: None,
            group: None,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_pool(mut self, kind: PoolKind, window: usize, stride: usize) -> Self {
        self.pool = Some(Pool { kind, window, stride });
        self
    }

    pub fn with_bundle(mut self, bundle: Vec<BundleOp>) -> Self {
        self.bundle = Some(bundle);
        self
    }

    pub fn with_group(mut self, group: usize) -> Self {
        self.group = Some(group);
        self
    }

    pub fn group_size(&self) -> usize {
        match self.kind {
            LayerKind::Conv => 1,
            LayerKind::FullyConnected => self.group.unwrap_or(1),
        }
    }

    /// Number of graph nodes this layer contributes.
    pub fn node_count(&self) -> usize {
        self.out_channels.div_ceil(self.group_size().max(1))
    }
}

/// Derived per-graph-layer geometry. `pre_spatial` is the side length of the
/// summed linear response, `out_spatial` the side length after the bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub channels: usize,
    pub nodes: usize,
    pub group: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pre_spatial: usize,
    pub out_spatial: usize,
    pub kind: Option<LayerKind>,
}

impl LayerShape {
    /// Channels covered by graph node `node` of this layer.
    pub fn node_channels(&self, node: usize) -> std::ops::Range<usize> {
        let start = node * self.group;
        start..((node + 1) * self.group).min(self.channels)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerDecl>,
}

impl ArchitectureSpec {
    pub fn new(input_shape: [usize; 3], layers: Vec<LayerDecl>) -> Self {
        ArchitectureSpec { input_shape, layers }
    }

    /// Graph layers, counting the input.
    pub fn layer_count(&self) -> usize {
        self.layers.len() + 1
    }

    pub fn from_json(text: &str) -> Result<Self, ArchError> {
        let spec: ArchitectureSpec =
            serde_json::from_str(text).map_err(|e| ArchError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architecture serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ArchError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ArchError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ArchError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| ArchError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ArchError> {
        self.shapes().map(|_| ())
    }

    /// Bundle in effect for declared layer `index`. The last layer defaults to
    /// an empty bundle because its output is the class scores.
    pub fn effective_bundle(&self, index: usize) -> Vec<BundleOp> {
        let layer = &self.layers[index];
        if let Some(b) = &layer.bundle {
            return b.clone();
        }
        if index + 1 == self.layers.len() {
            return Vec::new();
        }
        let mut ops = vec![BundleOp::Relu];
        if layer.pool.is_some() {
            ops.push(BundleOp::MaxPool);
        }
        if self.layer_count() >= DEFAULT_BATCHNORM_MIN_LAYERS {
            ops.push(BundleOp::BatchNorm);
        }
        ops
    }

    /// Copy of the spec with every bundle made explicit.
    pub fn with_resolved_bundles(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.layers.len() {
            out.layers[i].bundle = Some(self.effective_bundle(i));
        }
        out
    }

    /// Validates the spec and returns the geometry of every graph layer,
    /// input first.
    pub fn shapes(&self) -> Result<Vec<LayerShape>, ArchError> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 || h != w {
            return Err(ArchError::BadInputShape(self.input_shape));
        }
        if self.layers.is_empty() {
            return Err(ArchError::NoLayers);
        }
        let mut shapes = Vec::with_capacity(self.layer_count());
        shapes.push(LayerShape {
            channels: c,
            nodes: c,
            group: 1,
            kernel: 0,
            stride: 1,
            pre_spatial: h,
            out_spatial: h,
            kind: None,
        });
        let mut seen_fc = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = shapes[i].out_spatial;
            if layer.out_channels == 0 {
                return Err(ArchError::ZeroChannels { layer: i });
            }
            if layer.stride == 0 {
                return Err(ArchError::ZeroStride { layer: i });
            }
            let bundle = self.effective_bundle(i);
            for (j, op) in bundle.iter().enumerate() {
                if bundle[..j].contains(op) {
                    return Err(ArchError::BundleRepeat { layer: i, op: *op });
                }
            }
            if bundle.contains(&BundleOp::MaxPool) != layer.pool.is_some() {
                return Err(ArchError::BundlePoolMismatch { layer: i });
            }
            let shape = match layer.kind {
                LayerKind::Conv => {
                    if seen_fc {
                        return Err(ArchError::ConvAfterFullyConnected { layer: i });
                    }
                    if layer.group.is_some_and(|g| g != 1) {
                        return Err(ArchError::FullyConnectedGeometry { layer: i });
                    }
                    let k = layer.kernel.ok_or(ArchError::MissingKernel { layer: i })?;
                    if k == 0 {
                        return Err(ArchError::ZeroKernel { layer: i });
                    }
                    let pad = same_padding(k);
                    let pre = conv_output(input, k, layer.stride, pad)
                        .ok_or(ArchError::SpatialCollapse { layer: i, input })?;
                    let out = match &layer.pool {
                        Some(pool) => {
                            if pool.window == 0 || pool.stride == 0 {
                                return Err(ArchError::BadPool { layer: i });
                            }
                            pool.output_size(pre)
                                .ok_or(ArchError::SpatialCollapse { layer: i, input })?
                        }
                        None => pre,
                    };
                    LayerShape {
                        channels: layer.out_channels,
                        nodes: layer.node_count(),
                        group: 1,
                        kernel: k,
                        stride: layer.stride,
                        pre_spatial: pre,
                        out_spatial: out,
                        kind: Some(LayerKind::Conv),
                    }
                }
                LayerKind::FullyConnected => {
                    seen_fc = true;
                    if layer.kernel.is_some() || layer.pool.is_some() || layer.stride != 1 {
                        return Err(ArchError::FullyConnectedGeometry { layer: i });
                    }
                    let group = layer.group_size();
                    if group == 0 {
                        return Err(ArchError::ZeroGroup { layer: i });
                    }
                    LayerShape {
                        channels: layer.out_channels,
                        nodes: layer.node_count(),
                        group,
                        // a dense layer is a valid convolution over the whole input map
                        kernel: input,
                        stride: 1,
                        pre_spatial: 1,
                        out_spatial: 1,
                        kind: Some(LayerKind::FullyConnected),
                    }
                }
            };
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Number of weight blocks (graph edges) in the dense network.
    pub fn weight_block_count(&self) -> Result<usize, ArchError> {
        let shapes = self.shapes()?;
        Ok(shapes.windows(2).map(|w| w[0].nodes * w[1].nodes).sum())
    }

    /// Weight count of the dense network (conv and FC weights, no biases).
    pub fn dense_weight_count(&self) -> Result<usize, ArchError> {
        let shapes = self.shapes()?;
        Ok(shapes
            .windows(2)
            .map(|w| w[0].channels * w[1].channels * w[1].kernel * w[1].kernel)
            .sum())
    }
}

/// Padding that preserves spatial size for odd kernels at stride 1.
pub fn same_padding(kernel: usize) -> usize {
    (kernel - 1) / 2
}

pub fn conv_output(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    (padded >= kernel && stride > 0).then(|| (padded - kernel) / stride + 1)
}
