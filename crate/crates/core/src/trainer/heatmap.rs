use super::network::SwNetwork;
use super::params::ParamSet;

/// Square matrix over graph layers: entry `[src][dst]` is the mean absolute
/// value of the active weights of connection `src -> dst`, and exactly zero
/// where the layers are not connected.
pub fn weight_heatmap(network: &SwNetwork, params: &ParamSet) -> Vec<Vec<f64>> {
    let n = network.layer_count();
    let mut m = vec![vec![0.0; n]; n];
    for (src, dst, w) in network.connections() {
        let t = &params.tensors[w];
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, v) in t.values.iter().enumerate() {
            if t.is_active(i) {
                sum += v.abs();
                count += 1;
            }
        }
        if count > 0 {
            m[src][dst] = sum / count as f64;
        }
    }
    m
}
