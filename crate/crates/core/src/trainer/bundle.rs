//! The nonlinear stages applied after a layer's linear sum.

use crate::arch::{BundleOp, Pool};

use super::ops;
use super::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
pub enum Stage {
    Relu,
    Pool(Pool),
    BatchNorm { gamma: usize, beta: usize, mean: usize, var: usize },
}

#[derive(Debug, Clone)]
pub enum StageCache {
    Relu { input: Vec<f64> },
    Pool { argmax: Vec<usize>, side: usize },
    BatchNormTrain(ops::BnCache),
    BatchNormEval { xhat: Vec<f64>, inv_std: Vec<f64> },
}

/// Batch moments measured in a training-mode forward pass, to be folded
/// into the running statistics after the step.
#[derive(Debug, Clone, PartialEq)]
pub struct BnUpdate {
    pub mean: usize,
    pub var: usize,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Resolves bundle ops to stages; `bn` holds the tensor indices of gamma,
/// beta, running mean and running variance.
pub fn stages(
    ops_list: &[BundleOp],
    pool: Option<Pool>,
    bn: Option<[usize; 4]>,
) -> Vec<Stage> {
    ops_list
        .iter()
        .map(|op| match op {
            BundleOp::Relu => Stage::Relu,
            BundleOp::MaxPool => Stage::Pool(pool.expect("pool declared with maxpool")),
            BundleOp::BatchNorm => {
                let [gamma, beta, mean, var] = bn.expect("batchnorm tensors allocated");
                Stage::BatchNorm { gamma, beta, mean, var }
            }
        })
        .collect()
}

/// Runs the stages on `z` (`batch x channels x side^2`). Returns the output,
/// the output side, the caches, and any batch-norm moment updates.
pub fn forward(
    stages: &[Stage],
    params: &ParamSet,
    z: Vec<f64>,
    batch: usize,
    channels: usize,
    side: usize,
    mode: Mode,
) -> (Vec<f64>, usize, Vec<StageCache>, Vec<BnUpdate>) {
    let mut x = z;
    let mut side = side;
    let mut caches = Vec::with_capacity(stages.len());
    let mut updates = Vec::new();
    for stage in stages {
        match stage {
            Stage::Relu => {
                let y = ops::relu_forward(&x);
                caches.push(StageCache::Relu { input: x });
                x = y;
            }
            Stage::Pool(pool) => {
                let (y, argmax) = ops::pool_forward(pool, &x, batch * channels, side);
                caches.push(StageCache::Pool { argmax, side });
                side = pool.output_size(side).expect("pool geometry validated");
                x = y;
            }
            &Stage::BatchNorm { gamma, beta, mean, var } => {
                let area = side * side;
                let (g, b) = (&params.tensors[gamma].values, &params.tensors[beta].values);
                match mode {
                    Mode::Train => {
                        let (y, cache) = ops::bn_forward_train(&x, batch, channels, area, g, b);
                        updates.push(BnUpdate {
                            mean,
                            var,
                            batch_mean: cache.batch_mean.clone(),
                            batch_var: cache.batch_var.clone(),
                        });
                        caches.push(StageCache::BatchNormTrain(cache));
                        x = y;
                    }
                    Mode::Eval => {
                        let (rm, rv) = (&params.tensors[mean].values, &params.tensors[var].values);
                        let inv_std: Vec<f64> = rv.iter().map(|v| 1.0 / (v + ops::BN_EPS).sqrt()).collect();
                        let mut xhat = x.clone();
                        for (i, plane) in xhat.chunks_mut(area).enumerate() {
                            let c = i % channels;
                            plane.iter_mut().for_each(|v| *v = (*v - rm[c]) * inv_std[c]);
                        }
                        let y = ops::bn_forward_eval(&x, channels, area, g, b, rm, rv);
                        caches.push(StageCache::BatchNormEval { xhat, inv_std });
                        x = y;
                    }
                }
            }
        }
    }
    (x, side, caches, updates)
}

/// Back-propagates `dy` through the stages. Normalization gradients are
/// accumulated into `grads`.
#[allow(clippy::too_many_arguments)]
pub fn backward(
    stages: &[Stage],
    caches: &[StageCache],
    params: &ParamSet,
    grads: &mut [Vec<f64>],
    dy: Vec<f64>,
    batch: usize,
    channels: usize,
) -> Vec<f64> {
    let mut d = dy;
    for (stage, cache) in stages.iter().zip(caches).rev() {
        d = match (stage, cache) {
            (Stage::Relu, StageCache::Relu { input }) => ops::relu_backward(input, &d),
            (Stage::Pool(pool), StageCache::Pool { argmax, side }) => {
                ops::pool_backward(pool, &d, argmax, batch * channels, *side)
            }
            (&Stage::BatchNorm { gamma, beta, .. }, StageCache::BatchNormTrain(c)) => {
                let area = d.len() / (batch * channels);
                let g = &params.tensors[gamma].values;
                let (mut dg, mut db) = (vec![0.0; channels], vec![0.0; channels]);
                let dx = ops::bn_backward(c, &d, batch, channels, area, g, &mut dg, &mut db);
                add(&mut grads[gamma], &dg);
                add(&mut grads[beta], &db);
                dx
            }
            (&Stage::BatchNorm { gamma, beta, .. }, StageCache::BatchNormEval { xhat, inv_std }) => {
                let area = d.len() / (batch * channels);
                let g = &params.tensors[gamma].values;
                let mut dx = vec![0.0; d.len()];
                for (i, plane) in d.chunks(area).enumerate() {
                    let c = i % channels;
                    for (j, &v) in plane.iter().enumerate() {
                        grads[beta][c] += v;
                        grads[gamma][c] += v * xhat[i * area + j];
                        dx[i * area + j] = v * g[c] * inv_std[c];
                    }
                }
                dx
            }
            _ => unreachable!("stage and cache kinds line up"),
        };
    }
    d
}

fn add(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}
