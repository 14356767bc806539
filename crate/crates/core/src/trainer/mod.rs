//! Desk-scale training with hand-written backpropagation.
//!
//! [`SwNetwork`] runs realized networks, where a layer sums masked
//! convolutions of every connected earlier layer. [`DenseNetwork`] runs the
//! plain chain an architecture describes and serves as the reference.

pub mod bundle;
pub mod compare;
pub mod dataset;
pub mod dense;
pub mod heatmap;
pub mod model;
pub mod network;
pub mod ops;
pub mod params;
pub mod train;

pub use bundle::Mode;
pub use compare::{compare, format_speedup, speedup, CompareError, SpeedupTable};
pub use dataset::{synthetic_digits, Dataset, DatasetError, DigitsConfig};
pub use dense::DenseNetwork;
pub use heatmap::weight_heatmap;
pub use model::{apply_bn_updates, ForwardState, Model};
pub use network::SwNetwork;
pub use params::{ParamSet, ParamTensor};
pub use train::{
    evaluate, sgd_step, train, Evaluation, PlateauDecay, ThresholdHit, TrainConfig, TrainError, TrainOutcome,
    TrainReport, TrainSummary,
};
