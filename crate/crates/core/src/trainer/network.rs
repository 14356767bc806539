//! Executor for realized networks: each layer sums masked convolutions of
//! every connected earlier layer, adds a bias, then applies its bundle.

use rand::Rng;

use crate::arch::{BundleOp, LayerShape};
use crate::netgen::{NetgenError, SwNetSpec};
use crate::rng::stream_rng;

use super::bundle::{self, Mode, Stage};
use super::model::{ForwardState, Model};
use super::ops::{self, ConvDims, ConvGeom};
use super::params::{bias_name, bn_names, weight_name, ParamSet, ParamTensor};

#[derive(Debug, Clone)]
pub(crate) struct ConnPlan {
    pub src: usize,
    pub geom: ConvGeom,
    pub cin: usize,
    /// Active `(out_channel, in_channel)` filters in row-major order.
    pub pairs: Vec<(usize, usize)>,
    pub weight: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerPlan {
    pub channels: usize,
    pub pre_side: usize,
    pub incoming: Vec<ConnPlan>,
    pub bias: usize,
    pub stages: Vec<Stage>,
    /// Per output channel, the number of active weights feeding it.
    pub fan_in: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SwNetwork {
    spec: SwNetSpec,
    shapes: Vec<LayerShape>,
    layers: Vec<LayerPlan>,
    template: ParamSet,
}

impl SwNetwork {
    pub fn new(spec: &SwNetSpec) -> Result<Self, NetgenError> {
        spec.validate()?;
        let shapes = spec.base.shapes()?;
        let mut tensors = Vec::new();
        let mut layers = Vec::with_capacity(shapes.len() - 1);
        for l in 1..shapes.len() {
            let d = &shapes[l];
            let mut conns: Vec<_> = spec.incoming(l).collect();
            conns.sort_by_key(|c| c.src);
            let mut incoming = Vec::new();
            let mut fan_in = vec![0; d.channels];
            for c in conns {
                let s = &shapes[c.src];
                let kk = c.kernel * c.kernel;
                let mut pairs = Vec::new();
                let mut active = vec![false; d.channels * s.channels * kk];
                for o in 0..d.channels {
                    for ch in 0..s.channels {
                        if c.mask.get(o / d.group, ch / s.group) {
                            pairs.push((o, ch));
                            fan_in[o] += kk;
                            active[(o * s.channels + ch) * kk..][..kk].fill(true);
                        }
                    }
                }
                incoming.push(ConnPlan {
                    src: c.src,
                    geom: ConvGeom {
                        in_side: s.out_spatial,
                        out_side: d.pre_spatial,
                        kernel: c.kernel,
                        stride: c.stride,
                        pad: c.pad,
                    },
                    cin: s.channels,
                    pairs,
                    weight: tensors.len(),
                });
                tensors.push(ParamTensor {
                    name: weight_name(c.src, l),
                    values: vec![0.0; active.len()],
                    active: Some(active),
                    trainable: true,
                });
            }
            let bias = tensors.len();
            tensors.push(ParamTensor { name: bias_name(l), values: vec![0.0; d.channels], active: None, trainable: true });
            let bundle_ops = spec.base.effective_bundle(l - 1);
            let bn = push_bn(&mut tensors, &bundle_ops, l, d.channels);
            layers.push(LayerPlan {
                channels: d.channels,
                pre_side: d.pre_spatial,
                incoming,
                bias,
                stages: bundle::stages(&bundle_ops, spec.base.layers[l - 1].pool, bn),
                fan_in,
            });
        }
        Ok(SwNetwork { spec: spec.clone(), shapes, layers, template: ParamSet { tensors } })
    }

    pub fn spec(&self) -> &SwNetSpec {
        &self.spec
    }

    pub fn layer_count(&self) -> usize {
        self.shapes.len()
    }

    /// `(src, dst, tensor index)` for every connection.
    pub fn connections(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, p)| p.incoming.iter().map(move |c| (c.src, i + 1, c.weight)))
    }
}

/// Appends batch-norm tensors when the bundle has a normalization stage.
pub(crate) fn push_bn(
    tensors: &mut Vec<ParamTensor>,
    bundle_ops: &[BundleOp],
    layer: usize,
    channels: usize,
) -> Option<[usize; 4]> {
    if !bundle_ops.contains(&BundleOp::BatchNorm) {
        return None;
    }
    let start = tensors.len();
    let inits = [(1.0, true), (0.0, true), (0.0, false), (1.0, false)];
    for (name, (init, trainable)) in bn_names(layer).into_iter().zip(inits) {
        tensors.push(ParamTensor { name, values: vec![init; channels], active: None, trainable });
    }
    Some([start, start + 1, start + 2, start + 3])
}

/// Fan-in scaled uniform initialization over active weights, drawn in
/// tensor order then `(out, in, ky, kx)` order.
pub(crate) fn init_weights(template: &ParamSet, layers: &[(Vec<usize>, Vec<usize>)], seed: u64) -> ParamSet {
    let mut params = template.clone();
    let mut rng = stream_rng(seed, 0);
    for (weights, fan_in) in layers {
        for &w in weights {
            let t = &mut params.tensors[w];
            let per_out = t.values.len() / fan_in.len();
            let active = t.active.as_ref().expect("weights carry a mask");
            for (i, v) in t.values.iter_mut().enumerate() {
                if active[i] {
                    let bound = (6.0 / fan_in[i / per_out] as f64).sqrt();
                    *v = rng.gen_range(-bound..bound);
                }
            }
        }
    }
    params
}

impl Model for SwNetwork {
    fn init_params(&self, seed: u64) -> ParamSet {
        let layers: Vec<_> = self
            .layers
            .iter()
            .map(|p| (p.incoming.iter().map(|c| c.weight).collect(), p.fan_in.clone()))
            .collect();
        init_weights(&self.template, &layers, seed)
    }

    fn input_len(&self) -> usize {
        let s = &self.shapes[0];
        s.channels * s.out_spatial * s.out_spatial
    }

    fn classes(&self) -> usize {
        self.shapes.last().expect("at least two layers").channels
    }

    fn forward(&self, params: &ParamSet, input: &[f64], batch: usize, mode: Mode) -> ForwardState {
        assert_eq!(input.len(), batch * self.input_len(), "input batch size");
        let mut acts = vec![input.to_vec()];
        let mut pre = vec![Vec::new()];
        let mut caches = vec![Vec::new()];
        let mut bn_updates = Vec::new();
        for plan in &self.layers {
            let area = plan.pre_side * plan.pre_side;
            let mut z = vec![0.0; batch * plan.channels * area];
            for c in &plan.incoming {
                let dims = ConvDims { batch, cin: c.cin, cout: plan.channels };
                ops::conv_forward(&c.geom, dims, &acts[c.src], &params.tensors[c.weight].values, &c.pairs, &mut z);
            }
            ops::add_bias(&mut z, &params.tensors[plan.bias].values, area);
            pre.push(z.clone());
            let (y, _, cache, upd) = bundle::forward(&plan.stages, params, z, batch, plan.channels, plan.pre_side, mode);
            acts.push(y);
            caches.push(cache);
            bn_updates.extend(upd);
        }
        let last = self.shapes.last().expect("at least two layers");
        let area = last.out_spatial * last.out_spatial;
        let logits = ops::global_average(acts.last().expect("output"), batch * last.channels, area);
        ForwardState { batch, pre, acts, caches, bn_updates, logits }
    }

    fn backward(&self, params: &ParamSet, state: &ForwardState, dlogits: &[f64]) -> Vec<Vec<f64>> {
        let batch = state.batch;
        let mut grads = params.zeros_like();
        let n = self.shapes.len();
        let last = &self.shapes[n - 1];
        let mut dacts: Vec<Option<Vec<f64>>> = vec![None; n];
        dacts[n - 1] = Some(ops::global_average_backward(dlogits, last.out_spatial * last.out_spatial));
        for l in (1..n).rev() {
            // a layer whose output feeds nothing receives no gradient
            let Some(dy) = dacts[l].take() else { continue };
            let plan = &self.layers[l - 1];
            let dz = bundle::backward(&plan.stages, &state.caches[l], params, &mut grads, dy, batch, plan.channels);
            ops::bias_grad(&dz, plan.channels, plan.pre_side * plan.pre_side, &mut grads[plan.bias]);
            for c in &plan.incoming {
                let dims = ConvDims { batch, cin: c.cin, cout: plan.channels };
                let dinput = if c.src > 0 {
                    Some(dacts[c.src].get_or_insert_with(|| vec![0.0; state.acts[c.src].len()]).as_mut_slice())
                } else {
                    None
                };
                ops::conv_backward(
                    &c.geom,
                    dims,
                    &state.acts[c.src],
                    &params.tensors[c.weight].values,
                    &c.pairs,
                    &dz,
                    &mut grads[c.weight],
                    dinput,
                );
            }
        }
        grads
    }
}
