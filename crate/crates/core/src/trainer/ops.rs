//! Numeric kernels on `batch x channels x side x side` row-major buffers.

use std::ops::Range;

use crate::arch::{Pool, PoolKind};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Geometry of a square 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_side: usize,
    pub out_side: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Output positions whose tap at kernel offset `off` lands inside the
    /// input.
    fn valid(&self, off: usize) -> Range<usize> {
        let lo = if self.pad > off { (self.pad - off).div_ceil(self.stride) } else { 0 };
        let top = self.in_side + self.pad;
        if top <= off {
            return 0..0;
        }
        let hi = ((top - 1 - off) / self.stride + 1).min(self.out_side);
        lo.min(hi)..hi
    }

    fn taps(&self) -> Vec<Range<usize>> {
        (0..self.kernel).map(|off| self.valid(off)).collect()
    }
}

/// Channel counts and batch size shared by the conv kernels.
#[derive(Debug, Clone, Copy)]
pub struct ConvDims {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
}

/// Accumulates the convolution of `input` with the active filters `pairs`
/// (`(out_channel, in_channel)`) into `out`.
pub fn conv_forward(
    g: &ConvGeom,
    d: ConvDims,
    input: &[f64],
    weights: &[f64],
    pairs: &[(usize, usize)],
    out: &mut [f64],
) {
    let (ia, oa, kk) = (g.in_side * g.in_side, g.out_side * g.out_side, g.kernel * g.kernel);
    let taps = g.taps();
    for b in 0..d.batch {
        for &(o, c) in pairs {
            let wk = &weights[(o * d.cin + c) * kk..][..kk];
            let x = &input[(b * d.cin + c) * ia..][..ia];
            let z = &mut out[(b * d.cout + o) * oa..][..oa];
            for ky in 0..g.kernel {
                for kx in 0..g.kernel {
                    let w = wk[ky * g.kernel + kx];
                    for oy in taps[ky].clone() {
                        let iy = oy * g.stride + ky - g.pad;
                        let xrow = &x[iy * g.in_side..][..g.in_side];
                        let zrow = &mut z[oy * g.out_side..][..g.out_side];
                        for ox in taps[kx].clone() {
                            zrow[ox] += w * xrow[ox * g.stride + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Gradients of [`conv_forward`]: accumulates into `dweights` for active
/// filters only, and into `dinput` when given.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward(
    g: &ConvGeom,
    d: ConvDims,
    input: &[f64],
    weights: &[f64],
    pairs: &[(usize, usize)],
    dout: &[f64],
    dweights: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let (ia, oa, kk) = (g.in_side * g.in_side, g.out_side * g.out_side, g.kernel * g.kernel);
    let taps = g.taps();
    for b in 0..d.batch {
        for &(o, c) in pairs {
            let base = (o * d.cin + c) * kk;
            let x = &input[(b * d.cin + c) * ia..][..ia];
            let dz = &dout[(b * d.cout + o) * oa..][..oa];
            for ky in 0..g.kernel {
                for kx in 0..g.kernel {
                    let mut acc = 0.0;
                    for oy in taps[ky].clone() {
                        let iy = oy * g.stride + ky - g.pad;
                        let xrow = &x[iy * g.in_side..][..g.in_side];
                        let drow = &dz[oy * g.out_side..][..g.out_side];
                        for ox in taps[kx].clone() {
                            acc += drow[ox] * xrow[ox * g.stride + kx - g.pad];
                        }
                    }
                    dweights[base + ky * g.kernel + kx] += acc;
                }
            }
            if let Some(dx) = dinput.as_deref_mut() {
                let wk = &weights[base..][..kk];
                let dx = &mut dx[(b * d.cin + c) * ia..][..ia];
                for ky in 0..g.kernel {
                    for kx in 0..g.kernel {
                        let w = wk[ky * g.kernel + kx];
                        for oy in taps[ky].clone() {
                            let iy = oy * g.stride + ky - g.pad;
                            let drow = &dz[oy * g.out_side..][..g.out_side];
                            let xrow = &mut dx[iy * g.in_side..][..g.in_side];
                            for ox in taps[kx].clone() {
                                xrow[ox * g.stride + kx - g.pad] += w * drow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adds `bias[c]` to every element of channel `c`.
pub fn add_bias(out: &mut [f64], bias: &[f64], area: usize) {
    let channels = bias.len();
    for (i, plane) in out.chunks_mut(area).enumerate() {
        let b = bias[i % channels];
        plane.iter_mut().for_each(|v| *v += b);
    }
}

pub fn bias_grad(dout: &[f64], channels: usize, area: usize, dbias: &mut [f64]) {
    for (i, plane) in dout.chunks(area).enumerate() {
        dbias[i % channels] += plane.iter().sum::<f64>();
    }
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn relu_backward(input: &[f64], dy: &[f64]) -> Vec<f64> {
    input.iter().zip(dy).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect()
}

/// Pools each `side x side` plane. Returns the output and, for max
/// pooling, the flat in-plane index of every selected element.
pub fn pool_forward(pool: &Pool, x: &[f64], planes: usize, side: usize) -> (Vec<f64>, Vec<usize>) {
    let out_side = pool.output_size(side).expect("pool geometry validated");
    let (ia, oa) = (side * side, out_side * out_side);
    let mut out = vec![0.0; planes * oa];
    let mut arg = match pool.kind {
        PoolKind::Max => vec![0; planes * oa],
        PoolKind::Average => Vec::new(),
    };
    let norm = (pool.window * pool.window) as f64;
    for p in 0..planes {
        let plane = &x[p * ia..][..ia];
        for oy in 0..out_side {
            for ox in 0..out_side {
                let (y0, x0) = (oy * pool.stride, ox * pool.stride);
                let o = p * oa + oy * out_side + ox;
                match pool.kind {
                    PoolKind::Max => {
                        let mut best = y0 * side + x0;
                        for wy in 0..pool.window {
                            for wx in 0..pool.window {
                                let idx = (y0 + wy) * side + x0 + wx;
                                if plane[idx] > plane[best] {
                                    best = idx;
                                }
                            }
                        }
                        out[o] = plane[best];
                        arg[o] = best;
                    }
                    PoolKind::Average => {
                        let mut s = 0.0;
                        for wy in 0..pool.window {
                            for wx in 0..pool.window {
                                s += plane[(y0 + wy) * side + x0 + wx];
                            }
                        }
                        out[o] = s / norm;
                    }
                }
            }
        }
    }
    (out, arg)
}

pub fn pool_backward(pool: &Pool, dy: &[f64], arg: &[usize], planes: usize, side: usize) -> Vec<f64> {
    let out_side = pool.output_size(side).expect("pool geometry validated");
    let (ia, oa) = (side * side, out_side * out_side);
    let mut dx = vec![0.0; planes * ia];
    let norm = (pool.window * pool.window) as f64;
    for p in 0..planes {
        for oy in 0..out_side {
            for ox in 0..out_side {
                let o = p * oa + oy * out_side + ox;
                match pool.kind {
                    PoolKind::Max => dx[p * ia + arg[o]] += dy[o],
                    PoolKind::Average => {
                        let (y0, x0) = (oy * pool.stride, ox * pool.stride);
                        for wy in 0..pool.window {
                            for wx in 0..pool.window {
                                dx[p * ia + (y0 + wy) * side + x0 + wx] += dy[o] / norm;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Batch-normalization cache for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

/// Training-mode batch norm over `(batch, spatial)` per channel.
pub fn bn_forward_train(
    x: &[f64],
    batch: usize,
    channels: usize,
    area: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, BnCache) {
    let n = (batch * area) as f64;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for b in 0..batch {
        for c in 0..channels {
            mean[c] += x[(b * channels + c) * area..][..area].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for b in 0..batch {
        for c in 0..channels {
            var[c] += x[(b * channels + c) * area..][..area]
                .iter()
                .map(|v| (v - mean[c]) * (v - mean[c]))
                .sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * area;
            for i in off..off + area {
                xhat[i] = (x[i] - mean[c]) * inv_std[c];
                y[i] = gamma[c] * xhat[i] + beta[c];
            }
        }
    }
    (y, BnCache { xhat, inv_std, batch_mean: mean, batch_var: var })
}

pub fn bn_forward_eval(
    x: &[f64],
    channels: usize,
    area: usize,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> Vec<f64> {
    let mut y = x.to_vec();
    for (i, plane) in y.chunks_mut(area).enumerate() {
        let c = i % channels;
        let inv = 1.0 / (running_var[c] + BN_EPS).sqrt();
        plane
            .iter_mut()
            .for_each(|v| *v = gamma[c] * (*v - running_mean[c]) * inv + beta[c]);
    }
    y
}

/// Returns `dx` and accumulates `dgamma`, `dbeta`.
#[allow(clippy::too_many_arguments)]
pub fn bn_backward(
    cache: &BnCache,
    dy: &[f64],
    batch: usize,
    channels: usize,
    area: usize,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let n = (batch * area) as f64;
    let mut sum_dxhat = vec![0.0; channels];
    let mut sum_dxhat_xhat = vec![0.0; channels];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * area;
            for i in off..off + area {
                dbeta[c] += dy[i];
                dgamma[c] += dy[i] * cache.xhat[i];
                let dxh = dy[i] * gamma[c];
                sum_dxhat[c] += dxh;
                sum_dxhat_xhat[c] += dxh * cache.xhat[i];
            }
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * area;
            let k = cache.inv_std[c] / n;
            for i in off..off + area {
                let dxh = dy[i] * gamma[c];
                dx[i] = k * (n * dxh - sum_dxhat[c] - cache.xhat[i] * sum_dxhat_xhat[c]);
            }
        }
    }
    dx
}

/// Class scores from a final activation: the spatial mean of each channel
/// (the identity for 1x1 maps).
pub fn global_average(y: &[f64], planes: usize, area: usize) -> Vec<f64> {
    (0..planes).map(|p| y[p * area..][..area].iter().sum::<f64>() / area as f64).collect()
}

pub fn global_average_backward(dlogits: &[f64], area: usize) -> Vec<f64> {
    dlogits.iter().flat_map(|&g| std::iter::repeat_n(g / area as f64, area)).collect()
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let batch = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let row = &logits[b * classes..][..classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for k in 0..classes {
            let p = (row[k] - log_z).exp();
            grad[b * classes + k] = (p - if k == label { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    (loss / batch as f64, grad)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeom, cin: usize, cout: usize, x: &[f64], w: &[f64]) -> Vec<f64> {
        let (n, m, k) = (g.in_side as isize, g.out_side, g.kernel);
        let mut out = vec![0.0; cout * m * m];
        for o in 0..cout {
            for oy in 0..m {
                for ox in 0..m {
                    let mut acc = 0.0;
                    for c in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy >= 0 && ix >= 0 && iy < n && ix < n {
                                    acc += w[((o * cin + c) * k + ky) * k + kx]
                                        * x[(c * g.in_side + iy as usize) * g.in_side + ix as usize];
                                }
                            }
                        }
                    }
                    out[(o * m + oy) * m + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_naive_loops() {
        let cases = [(5, 5, 3, 1, 1), (8, 4, 3, 2, 1), (7, 3, 3, 2, 0), (6, 6, 1, 1, 0), (5, 1, 5, 1, 0), (9, 5, 4, 2, 2)];
        for &(n, m, k, s, p) in &cases {
            let g = ConvGeom { in_side: n, out_side: m, kernel: k, stride: s, pad: p };
            assert_eq!((n + 2 * p - k) / s + 1, m);
            let (cin, cout) = (2, 3);
            let x: Vec<f64> = (0..cin * n * n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
            let w: Vec<f64> = (0..cout * cin * k * k).map(|i| ((i * 13 % 7) as f64 - 3.0) / 5.0).collect();
            let pairs: Vec<_> = (0..cout).flat_map(|o| (0..cin).map(move |c| (o, c))).collect();
            let mut out = vec![0.0; cout * m * m];
            conv_forward(&g, ConvDims { batch: 1, cin, cout }, &x, &w, &pairs, &mut out);
            let want = naive_conv(&g, cin, cout, &x, &w);
            for (a, b) in out.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{n} {m} {k} {s} {p}");
            }
        }
    }

    #[test]
    fn softmax_gradient_sums_to_zero() {
        let (loss, g) = softmax_cross_entropy(&[1.0, 2.0, 3.0, 0.0, 0.0, 0.0], &[2, 0], 3);
        let expect = ((1f64.exp() + 2f64.exp() + 3f64.exp()).ln() - 3.0 + 3f64.ln()) / 2.0;
        assert!((loss - expect).abs() < 1e-12);
        assert!(g[..3].iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let pool = Pool { kind: PoolKind::Max, window: 2, stride: 2 };
        let x = [1.0, 5.0, 2.0, 0.0, 3.0, 4.0, 1.0, 9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let (y, arg) = pool_forward(&pool, &x, 1, 4);
        assert_eq!(y, vec![5.0, 9.0, 0.0, 0.0]);
        let dx = pool_backward(&pool, &[1.0, 2.0, 3.0, 4.0], &arg, 1, 4);
        assert_eq!(dx[1], 1.0);
        assert_eq!(dx[7], 2.0);
    }
}
