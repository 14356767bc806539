//! Reference executor for plain chains: every layer reads only the layer
//! before it through a dense convolution. Parameter names, layout and
//! initialization order match [`super::SwNetwork`], so a realized network
//! without long-range connections can be checked against it directly.

use crate::arch::{same_padding, ArchError, ArchitectureSpec, LayerKind, LayerShape};

use super::bundle::{self, Mode, Stage};
use super::model::{ForwardState, Model};
use super::network::{init_weights, push_bn};
use super::ops::{self, ConvGeom};
use super::params::{bias_name, weight_name, ParamSet, ParamTensor};

#[derive(Debug, Clone)]
struct DenseLayer {
    geom: ConvGeom,
    cin: usize,
    cout: usize,
    weight: usize,
    bias: usize,
    stages: Vec<Stage>,
}

#[derive(Debug, Clone)]
pub struct DenseNetwork {
    shapes: Vec<LayerShape>,
    layers: Vec<DenseLayer>,
    template: ParamSet,
}

impl DenseNetwork {
    pub fn new(spec: &ArchitectureSpec) -> Result<Self, ArchError> {
        let shapes = spec.shapes()?;
        let mut tensors = Vec::new();
        let mut layers = Vec::new();
        for l in 1..shapes.len() {
            let (s, d) = (&shapes[l - 1], &shapes[l]);
            let pad = match d.kind {
                Some(LayerKind::FullyConnected) => 0,
                _ => same_padding(d.kernel),
            };
            let kk = d.kernel * d.kernel;
            let weight = tensors.len();
            let len = d.channels * s.channels * kk;
            tensors.push(ParamTensor {
                name: weight_name(l - 1, l),
                values: vec![0.0; len],
                active: Some(vec![true; len]),
                trainable: true,
            });
            let bias = tensors.len();
            tensors.push(ParamTensor { name: bias_name(l), values: vec![0.0; d.channels], active: None, trainable: true });
            let bundle_ops = spec.effective_bundle(l - 1);
            let bn = push_bn(&mut tensors, &bundle_ops, l, d.channels);
            layers.push(DenseLayer {
                geom: ConvGeom {
                    in_side: s.out_spatial,
                    out_side: d.pre_spatial,
                    kernel: d.kernel,
                    stride: d.stride,
                    pad,
                },
                cin: s.channels,
                cout: d.channels,
                weight,
                bias,
                stages: bundle::stages(&bundle_ops, spec.layers[l - 1].pool, bn),
            });
        }
        Ok(DenseNetwork { shapes, layers, template: ParamSet { tensors } })
    }
}

/// Input coordinate read by output `o` at kernel offset `k`, if inside.
fn tap(g: &ConvGeom, o: usize, k: usize) -> Option<usize> {
    let i = (o * g.stride + k).checked_sub(g.pad)?;
    (i < g.in_side).then_some(i)
}

impl Model for DenseNetwork {
    fn init_params(&self, seed: u64) -> ParamSet {
        let layers: Vec<_> = self
            .layers
            .iter()
            .map(|p| (vec![p.weight], vec![p.cin * p.geom.kernel * p.geom.kernel; p.cout]))
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
        for p in &self.layers {
            let g = &p.geom;
            let (n, m, k) = (g.in_side, g.out_side, g.kernel);
            let w = &params.tensors[p.weight].values;
            let bias = &params.tensors[p.bias].values;
            let x = acts.last().expect("previous layer");
            let mut z = vec![0.0; batch * p.cout * m * m];
            for b in 0..batch {
                for o in 0..p.cout {
                    for oy in 0..m {
                        for ox in 0..m {
                            let mut acc = 0.0;
                            for c in 0..p.cin {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        if let (Some(iy), Some(ix)) = (tap(g, oy, ky), tap(g, ox, kx)) {
                                            acc += w[((o * p.cin + c) * k + ky) * k + kx]
                                                * x[((b * p.cin + c) * n + iy) * n + ix];
                                        }
                                    }
                                }
                            }
                            z[((b * p.cout + o) * m + oy) * m + ox] = acc + bias[o];
                        }
                    }
                }
            }
            pre.push(z.clone());
            let (y, _, cache, upd) = bundle::forward(&p.stages, params, z, batch, p.cout, m, mode);
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
        let last = self.shapes.last().expect("at least two layers");
        let mut dy = ops::global_average_backward(dlogits, last.out_spatial * last.out_spatial);
        for (i, p) in self.layers.iter().enumerate().rev() {
            let l = i + 1;
            let g = &p.geom;
            let (n, m, k) = (g.in_side, g.out_side, g.kernel);
            let dz = bundle::backward(&p.stages, &state.caches[l], params, &mut grads, dy, batch, p.cout);
            ops::bias_grad(&dz, p.cout, m * m, &mut grads[p.bias]);
            let x = &state.acts[l - 1];
            let w = &params.tensors[p.weight].values;
            let mut dx = vec![0.0; x.len()];
            for b in 0..batch {
                for o in 0..p.cout {
                    for c in 0..p.cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let wi = ((o * p.cin + c) * k + ky) * k + kx;
                                let mut acc = 0.0;
                                for oy in 0..m {
                                    for ox in 0..m {
                                        if let (Some(iy), Some(ix)) = (tap(g, oy, ky), tap(g, ox, kx)) {
                                            let d = dz[((b * p.cout + o) * m + oy) * m + ox];
                                            acc += d * x[((b * p.cin + c) * n + iy) * n + ix];
                                            dx[((b * p.cin + c) * n + iy) * n + ix] += w[wi] * d;
                                        }
                                    }
                                }
                                grads[p.weight][wi] += acc;
                            }
                        }
                    }
                }
            }
            dy = dx;
        }
        grads
    }
}
