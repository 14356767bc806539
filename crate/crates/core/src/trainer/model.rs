use super::bundle::{BnUpdate, Mode, StageCache};
use super::ops::BN_MOMENTUM;
use super::params::ParamSet;

/// Everything a forward pass keeps for the backward pass. Index `l` is graph
/// layer `l`; `acts[0]` is the input batch.
#[derive(Debug, Clone)]
pub struct ForwardState {
    pub batch: usize,
    /// Linear sums before the bundle (empty for the input layer).
    pub pre: Vec<Vec<f64>>,
    /// Layer outputs after the bundle.
    pub acts: Vec<Vec<f64>>,
    pub caches: Vec<Vec<StageCache>>,
    pub bn_updates: Vec<BnUpdate>,
    /// `batch x classes` scores.
    pub logits: Vec<f64>,
}

/// A network the training loop can drive.
pub trait Model: Sync {
    fn init_params(&self, seed: u64) -> ParamSet;
    /// Length of one flattened input sample.
    fn input_len(&self) -> usize;
    fn classes(&self) -> usize;
    fn forward(&self, params: &ParamSet, input: &[f64], batch: usize, mode: Mode) -> ForwardState;
    /// Gradients for every tensor of `params`, aligned with
    /// `params.tensors`. Masked entries and running statistics get zero.
    fn backward(&self, params: &ParamSet, state: &ForwardState, dlogits: &[f64]) -> Vec<Vec<f64>>;
}

/// Folds training-mode batch moments into the running statistics.
pub fn apply_bn_updates(params: &mut ParamSet, updates: &[BnUpdate]) {
    for u in updates {
        for (r, &m) in params.tensors[u.mean].values.iter_mut().zip(&u.batch_mean) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
        }
        for (r, &v) in params.tensors[u.var].values.iter_mut().zip(&u.batch_var) {
            *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
        }
    }
}
