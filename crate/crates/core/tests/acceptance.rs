//! Acceptance checks. Each test prints one `criterion N: PASS|FAIL` line
//! with the measured quantities, then asserts. Tolerances are pinned here.

use std::io::Write;
use std::time::Instant;

use rand::Rng;

use swnet::arch::{ArchitectureSpec, LayerDecl, PoolKind};
use swnet::graph::{Edge, LayeredGraph};
use swnet::metrics::{characteristic_path_length, clustering_coefficient, BaselineConfig, UndirectedGraph};
use swnet::netgen::{count_params_flops, dense_all_pairs, realize, realize_graph, SwNetSpec};
use swnet::rewire::{default_grid, rewire, sweep, EdgeTag, RewireConfig, SweepOptions, SweepResult};
use swnet::rng::stream_rng;
use swnet::trainer::ops::softmax_cross_entropy;
use swnet::trainer::{
    speedup, synthetic_digits, train, weight_heatmap, Dataset, DenseNetwork, DigitsConfig, Mode, Model, ParamSet,
    SwNetwork, TrainConfig,
};

const METRIC_TOL: f64 = 1e-12;
const METRIC_GRAPHS: usize = 600;
const REWIRE_TRIPLES: usize = 1200;
const FRACTION_SE: f64 = 3.0;
const SPEARMAN_BOUND: f64 = -0.9;
const DEGENERACY_TOL: f64 = 1e-12;
const FD_EPS: f64 = 1e-4;
const FD_REL_TOL: f64 = 1e-3;
const SPEEDUP_BAR: f64 = 1.2;
const DENSE_REDUCTION: f64 = 5.0;

/// Written past the test harness's output capture so passing criteria
/// report too.
fn verdict(n: usize, pass: bool, detail: &str, start: Instant) {
    let word = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n}: {word} ({detail}; {:.1}s)\n", start.elapsed().as_secs_f64());
    std::io::stderr().write_all(line.as_bytes()).unwrap();
}

// ---- criterion 1 ----

fn brute_metrics(n: usize, edges: &[(usize, usize)]) -> (f64, Option<f64>) {
    let mut a = vec![vec![false; n]; n];
    for &(x, y) in edges {
        if x != y {
            a[x][y] = true;
            a[y][x] = true;
        }
    }
    let mut c = 0.0;
    for v in 0..n {
        let nb: Vec<usize> = (0..n).filter(|&u| a[v][u]).collect();
        let d = nb.len();
        if d < 2 {
            continue;
        }
        let mut links = 0;
        for i in 0..d {
            for j in i + 1..d {
                links += a[nb[i]][nb[j]] as usize;
            }
        }
        c += 2.0 * links as f64 / (d * (d - 1)) as f64;
    }
    let inf = usize::MAX / 4;
    let mut dist: Vec<Vec<usize>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { 0 } else if a[i][j] { 1 } else { inf }).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                dist[i][j] = dist[i][j].min(dist[i][k] + dist[k][j]);
            }
        }
    }
    let (mut sum, mut count) = (0, 0);
    for i in 0..n {
        for j in 0..n {
            if i != j && dist[i][j] < inf {
                sum += dist[i][j];
                count += 1;
            }
        }
    }
    (c / n as f64, (count > 0).then(|| sum as f64 / count as f64))
}

#[test]
fn criterion_1_metric_oracles() {
    let start = Instant::now();
    let mut rng = stream_rng(2024, 0);
    let mut worst = 0.0f64;
    let mut mismatches = 0;
    for _ in 0..METRIC_GRAPHS {
        let n = rng.gen_range(2..=40);
        let density: f64 = rng.gen_range(0.02..0.9);
        let edges: Vec<(usize, usize)> =
            (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).filter(|_| rng.gen_bool(density)).collect();
        let g = UndirectedGraph::from_edges(n, edges.iter().copied());
        let (c, l) = brute_metrics(n, &edges);
        worst = worst.max((clustering_coefficient(&g) - c).abs());
        match (characteristic_path_length(&g).ok(), l) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            _ => mismatches += 1,
        }
    }
    let ring = UndirectedGraph::from_edges(10, (0..10).flat_map(|v| [(v, (v + 1) % 10), (v, (v + 2) % 10)]));
    let cycle = UndirectedGraph::from_edges(8, (0..8).map(|v| (v, (v + 1) % 8)));
    let complete = |n: usize| UndirectedGraph::from_edges(n, (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))));
    let closed = [
        (clustering_coefficient(&ring), 0.5),
        (characteristic_path_length(&cycle).unwrap(), 16.0 / 7.0),
        (clustering_coefficient(&complete(4)), 1.0),
        (characteristic_path_length(&complete(2)).unwrap(), 1.0),
        (characteristic_path_length(&complete(9)).unwrap(), 1.0),
        (characteristic_path_length(&complete(30)).unwrap(), 1.0),
    ];
    let closed_ok = closed.iter().all(|(got, want)| (got - want).abs() <= METRIC_TOL);
    let pass = worst <= METRIC_TOL && mismatches == 0 && closed_ok;
    verdict(
        1,
        pass,
        &format!("{METRIC_GRAPHS} graphs, max |diff| {worst:e}, reachability mismatches {mismatches}, closed forms ok {closed_ok}"),
        start,
    );
    assert!(pass);
}

// ---- criterion 2 ----

fn random_layered(rng: &mut impl Rng) -> LayeredGraph {
    let layers = rng.gen_range(2..=7);
    let sizes: Vec<usize> = (0..layers).map(|_| rng.gen_range(1..=6)).collect();
    let g = LayeredGraph::new(sizes.clone(), Vec::new());
    let keep: f64 = rng.gen_range(0.3..1.0);
    let skip: f64 = rng.gen_range(0.0..0.2);
    let mut edges = Vec::new();
    for a in 0..g.node_count() {
        for b in 0..g.node_count() {
            let gap = g.layer_of(b) as isize - g.layer_of(a) as isize;
            let prob = if gap == 1 { keep } else if gap > 1 { skip } else { 0.0 };
            if prob > 0.0 && rng.gen_bool(prob) {
                edges.push(Edge::new(a, b));
            }
        }
    }
    g.with_edges(edges)
}

fn sorted_edges(g: &LayeredGraph) -> Vec<(usize, usize)> {
    let mut e: Vec<_> = g.edges().iter().map(|e| (e.src, e.dst)).collect();
    e.sort_unstable();
    e
}

#[test]
fn criterion_2_rewiring_invariants() {
    let start = Instant::now();
    let probabilities = [0.0, 0.05, 0.2, 0.5, 0.8, 1.0];
    let mut rng = stream_rng(77, 0);
    let mut failures = Vec::new();
    // per probability: edges, edges drawn for rewiring, edges actually moved
    let mut tally = vec![(0usize, 0usize, 0usize); probabilities.len()];
    for t in 0..REWIRE_TRIPLES {
        let graph = random_layered(&mut rng);
        let k = t % probabilities.len();
        let p = probabilities[k];
        let topo = rewire(&graph, &RewireConfig::new(p, t as u64)).unwrap();
        if topo.graph.edge_count() != graph.edge_count() {
            failures.push(format!("triple {t}: edge count"));
        }
        let violations = topo.graph.validate();
        if !violations.is_empty() {
            failures.push(format!("triple {t}: {violations:?}"));
        }
        if p == 0.0 && sorted_edges(&topo.graph) != sorted_edges(&graph) {
            failures.push(format!("triple {t}: p=0 changed the graph"));
        }
        let moved = topo.rewired_count();
        let drawn = moved + topo.no_eligible_count();
        tally[k].0 += graph.edge_count();
        tally[k].1 += drawn;
        tally[k].2 += moved;
        if topo.provenance.iter().any(|t| matches!(t, EdgeTag::Rewired { .. })) && p == 0.0 {
            failures.push(format!("triple {t}: rewired at p=0"));
        }
    }
    let mut fractions = Vec::new();
    for (&p, &(m, drawn, moved)) in probabilities.iter().zip(&tally) {
        let frac = drawn as f64 / m as f64;
        let se = (p * (1.0 - p) / m as f64).sqrt();
        if (frac - p).abs() > FRACTION_SE * se {
            failures.push(format!("p={p}: drawn fraction {frac} vs {FRACTION_SE} SE {se}"));
        }
        fractions.push(format!("p={p}: drawn {frac:.4} moved {:.4}", moved as f64 / m as f64));
    }
    let pass = failures.is_empty();
    verdict(2, pass, &format!("{REWIRE_TRIPLES} triples; {}; failures {failures:?}", fractions.join(", ")), start);
    assert!(pass);
}

// ---- criterion 3 ----

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Input plus 13 conv layers of 16 channels.
fn fourteen_layer_arch() -> ArchitectureSpec {
    ArchitectureSpec::new([3, 8, 8], vec![LayerDecl::conv(16, 3); 13])
}

fn fourteen_layer_sweep() -> (LayeredGraph, SweepResult) {
    let graph = LayeredGraph::from_architecture(&fourteen_layer_arch()).unwrap();
    let sw = sweep(&graph, &default_grid(), 11, &BaselineConfig::monte_carlo(50, 11), &SweepOptions::default()).unwrap();
    (graph, sw)
}

#[test]
fn criterion_3_sweep_shape() {
    let start = Instant::now();
    let (graph, sw) = fourteen_layer_sweep();
    assert_eq!(graph.layer_count(), 14);
    let csv = sw.to_csv();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).collect())
        .collect();
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let (p, c, l, s) = (col(0), col(1), col(2), col(7));
    let rho_c = spearman(&p, &c);
    let rho_l = spearman(&p, &l);
    let (arg, s_max) = s.iter().enumerate().fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    let interior = arg > 0 && arg + 1 < s.len() && p[arg] > 0.0 && p[arg] < 1.0;
    let checks = [rho_c < SPEARMAN_BOUND, rho_l < SPEARMAN_BOUND, interior, s_max > 1.0];
    let pass = checks.iter().all(|&b| b);
    verdict(
        3,
        pass,
        &format!(
            "rho_C {rho_c:.3} (need < {SPEARMAN_BOUND}), rho_L {rho_l:.3} (need < {SPEARMAN_BOUND}), S_max {s_max:.3} at p={:.4} (need interior and > 1), C(0) {:.3} C(1) {:.3}",
            p[arg], c[0], c[c.len() - 1]
        ),
        start,
    );
    assert!(pass, "{csv}");
}

// ---- criterion 4 ----

/// Seven graph layers so the default bundle includes batch norm.
fn degeneracy_arch() -> ArchitectureSpec {
    ArchitectureSpec::new(
        [1, 8, 8],
        vec![
            LayerDecl::conv(4, 3),
            LayerDecl::conv(4, 3).with_pool(PoolKind::Max, 2, 2),
            LayerDecl::conv(5, 3),
            LayerDecl::conv(4, 3).with_pool(PoolKind::Average, 2, 2),
            LayerDecl::conv(4, 3),
            LayerDecl::conv(10, 3),
        ],
    )
}

fn digits(train_count: usize, test_count: usize) -> (Dataset, Dataset) {
    let cfg = DigitsConfig::default();
    (synthetic_digits(train_count, 1, &cfg), synthetic_digits(test_count, 2, &cfg))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn by_name<'a>(params: &'a ParamSet, grads: &'a [Vec<f64>], name: &str) -> Option<(&'a [f64], &'a [f64])> {
    let i = params.tensors.iter().position(|t| t.name == name)?;
    Some((&params.tensors[i].values, &grads[i]))
}

#[test]
fn criterion_4_unrewired_network_equals_dense_baseline() {
    let start = Instant::now();
    let arch = degeneracy_arch();
    let spec = realize_graph(&LayeredGraph::from_architecture(&arch).unwrap(), &arch).unwrap();
    let sparse = SwNetwork::new(&spec).unwrap();
    let dense = DenseNetwork::new(&arch).unwrap();
    let (train_set, test_set) = digits(600, 200);
    let mut worst = 0.0f64;
    let mut layout_ok = true;

    let (ps, pd) = (sparse.init_params(5), dense.init_params(5));
    layout_ok &= ps.tensors.len() == pd.tensors.len();
    let (x, y) = train_set.gather(&(0..16).collect::<Vec<_>>());
    for mode in [Mode::Train, Mode::Eval] {
        let (ss, sd) = (sparse.forward(&ps, &x, 16, mode), dense.forward(&pd, &x, 16, mode));
        worst = worst.max(max_diff(&ss.logits, &sd.logits));
        if mode == Mode::Train {
            let (_, dl) = softmax_cross_entropy(&ss.logits, &y, 10);
            let (gs, gd) = (sparse.backward(&ps, &ss, &dl), dense.backward(&pd, &sd, &dl));
            for t in &ps.tensors {
                match (by_name(&ps, &gs, &t.name), by_name(&pd, &gd, &t.name)) {
                    (Some((vs, a)), Some((vd, b))) => worst = worst.max(max_diff(vs, vd)).max(max_diff(a, b)),
                    _ => layout_ok = false,
                }
            }
        }
    }

    let config = TrainConfig { max_iterations: 200, eval_interval: 50, seed: 9, ..TrainConfig::default() };
    let rs = train(&sparse, &config, &train_set, &test_set).unwrap();
    let rd = train(&dense, &config, &train_set, &test_set).unwrap();
    worst = worst.max(max_diff(&rs.report.train_loss, &rd.report.train_loss));
    let errs = |r: &swnet::trainer::TrainReport| r.evaluations.iter().map(|e| e.test_error).collect::<Vec<_>>();
    worst = worst.max(max_diff(&errs(&rs.report), &errs(&rd.report)));
    for t in &rs.params.tensors {
        match rd.params.get(&t.name) {
            Some(u) => worst = worst.max(max_diff(&t.values, &u.values)),
            None => layout_ok = false,
        }
    }
    let pass = layout_ok && worst <= DEGENERACY_TOL;
    verdict(
        4,
        pass,
        &format!("max |diff| over logits, gradients, 200-step trace and final weights {worst:e}, layout match {layout_ok}"),
        start,
    );
    assert!(pass);
}

// ---- criterion 5 ----

/// Input -> 3 -> 4 channels with long-range filters from the input into
/// the last layer replacing some consecutive ones.
fn long_range_spec() -> SwNetSpec {
    let arch = ArchitectureSpec::new([2, 5, 5], vec![LayerDecl::conv(3, 3), LayerDecl::conv(4, 3)]);
    let graph = LayeredGraph::from_architecture(&arch).unwrap();
    let mut edges = graph.edges().to_vec();
    edges.retain(|e| !(e.src == 0 && e.dst == 2) && !(e.src == 3 && e.dst == 7));
    edges.push(Edge::new(0, 6));
    edges.push(Edge::new(1, 8));
    realize_graph(&graph.with_edges(edges), &arch).unwrap()
}

#[test]
fn criterion_5_finite_difference_gradients() {
    let start = Instant::now();
    let spec = long_range_spec();
    assert!(spec.connection(0, 2).is_some_and(|c| c.is_long_range()));
    let net = SwNetwork::new(&spec).unwrap();
    let mut params = net.init_params(21);
    let mut rng = stream_rng(21, 9);
    for t in params.tensors.iter_mut().filter(|t| t.name.ends_with("bias")) {
        t.values.iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
    }
    let batch = 4;
    let x: Vec<f64> = (0..batch * net.input_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<usize> = (0..batch).map(|b| (3 * b) % net.classes()).collect();
    let loss = |p: &ParamSet| softmax_cross_entropy(&net.forward(p, &x, batch, Mode::Train).logits, &y, net.classes()).0;
    let state = net.forward(&params, &x, batch, Mode::Train);
    let (_, dl) = softmax_cross_entropy(&state.logits, &y, net.classes());
    let grads = net.backward(&params, &state, &dl);
    let (mut worst, mut checked) = (0.0f64, 0);
    for t in 0..params.tensors.len() {
        for i in 0..params.tensors[t].values.len() {
            if !params.tensors[t].is_active(i) || !params.tensors[t].trainable {
                continue;
            }
            let orig = params.tensors[t].values[i];
            params.tensors[t].values[i] = orig + FD_EPS;
            let up = loss(&params);
            params.tensors[t].values[i] = orig - FD_EPS;
            let down = loss(&params);
            params.tensors[t].values[i] = orig;
            let numeric = (up - down) / (2.0 * FD_EPS);
            let analytic = grads[t][i];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
            checked += 1;
        }
    }
    let pass = worst < FD_REL_TOL && checked == params.trainable_count();
    verdict(5, pass, &format!("{checked} parameters, max relative error {worst:.2e} (need < {FD_REL_TOL})"), start);
    assert!(pass);
}

// ---- criterion 6 ----

const DESK_TARGET: f64 = 0.95;
const DESK_SEEDS: [u64; 3] = [0, 1, 2];
const DESK_VARIANTS: usize = 4;

/// Input plus four conv layers: 1-8-8-8-8-10 channels on 8x8 digits.
fn desk_arch() -> ArchitectureSpec {
    ArchitectureSpec::new(
        [1, 8, 8],
        vec![LayerDecl::conv(8, 3), LayerDecl::conv(8, 3), LayerDecl::conv(8, 3), LayerDecl::conv(8, 3), LayerDecl::conv(10, 3)],
    )
}

fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.02,
        max_iterations: 2560,
        thresholds: vec![0.8, 0.9, DESK_TARGET],
        stop_when_reached: true,
        seed,
        ..TrainConfig::default()
    }
}

fn iterations_to_target(spec: &SwNetSpec, train_set: &Dataset, test_set: &Dataset) -> Vec<Option<usize>> {
    let net = SwNetwork::new(spec).unwrap();
    DESK_SEEDS
        .iter()
        .map(|&seed| train(&net, &desk_config(seed), train_set, test_set).ok().and_then(|o| o.report.summary.iterations_for(DESK_TARGET)))
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 }
}

/// Per-seed speedups against the baseline; a run that never reaches the
/// target counts as zero speedup.
fn median_speedup(base: &[Option<usize>], other: &[Option<usize>]) -> Option<f64> {
    let per_seed: Option<Vec<f64>> = base
        .iter()
        .zip(other)
        .map(|(b, o)| b.map(|b| o.map_or(0.0, |o| speedup(Some(b), Some(o)).unwrap_or(0.0))))
        .collect();
    per_seed.map(median)
}

#[test]
fn criterion_6_desk_scale_convergence() {
    let start = Instant::now();
    let arch = desk_arch();
    let graph = LayeredGraph::from_architecture(&arch).unwrap();
    let sw = sweep(&graph, &default_grid(), 7, &BaselineConfig::monte_carlo(50, 7), &SweepOptions::default()).unwrap();
    let (selected, swn) = best_realizable(&sw, &arch);
    let is_selected = sw.selected == Some(selected);
    let base = realize_graph(&graph, &arch).unwrap();
    let (train_set, test_set) = digits(2000, 500);
    let params_equal = count_params_flops(&swn).unwrap().weights == count_params_flops(&base).unwrap().weights;
    let base_iters = iterations_to_target(&base, &train_set, &test_set);
    let swn_iters = iterations_to_target(&swn, &train_set, &test_set);
    let swn_speedup = median_speedup(&base_iters, &swn_iters);

    // evenly spaced rewired points other than p = 0 and the selected one
    let candidates: Vec<usize> =
        (1..sw.points.len()).filter(|&i| i != selected && realize(&sw.points[i].topology, &arch).is_ok()).collect();
    let picks: Vec<usize> =
        (0..DESK_VARIANTS).map(|k| candidates[(k * 2 + 1) * candidates.len() / (2 * DESK_VARIANTS)]).collect();
    let mut variant_speedups = Vec::new();
    let mut variant_text = Vec::new();
    for &i in &picks {
        let spec = realize(&sw.points[i].topology, &arch).unwrap();
        let iters = iterations_to_target(&spec, &train_set, &test_set);
        let s = median_speedup(&base_iters, &iters);
        variant_text.push(format!("p={:.4} {iters:?} -> {s:?}", sw.points[i].p));
        variant_speedups.push(s.unwrap_or(0.0));
    }
    let variant_median = median(variant_speedups);

    let pass = params_equal
        && swn_speedup.is_some_and(|s| s >= SPEEDUP_BAR && s >= variant_median);
    verdict(
        6,
        pass,
        &format!(
            "SWN p={:.4} S={:.3} (sweep argmax {is_selected}), equal params {params_equal}, base iterations {base_iters:?}, SWN iterations {swn_iters:?}, median SWN speedup {swn_speedup:?} (need >= {SPEEDUP_BAR}), variant median {variant_median:.3} [{}]",
            sw.points[selected].p,
            sw.points[selected].metrics.as_ref().map_or(f64::NAN, |m| m.s_g),
            variant_text.join("; ")
        ),
        start,
    );
    assert!(pass);
}

// ---- criterion 7 ----

/// Highest-S sweep point that realizes as a network. The selected point
/// itself may leave a layer without incoming edges.
fn best_realizable(sw: &SweepResult, arch: &ArchitectureSpec) -> (usize, SwNetSpec) {
    let mut order: Vec<usize> = (0..sw.points.len()).filter(|&i| sw.points[i].metrics.is_ok()).collect();
    order.sort_by(|&a, &b| {
        let s = |i: usize| sw.points[i].metrics.as_ref().unwrap().s_g;
        s(b).total_cmp(&s(a)).then(sw.points[a].p.total_cmp(&sw.points[b].p))
    });
    order.into_iter().find_map(|i| realize(&sw.points[i].topology, arch).ok().map(|spec| (i, spec))).unwrap()
}

#[test]
fn criterion_7_parameter_parity() {
    let start = Instant::now();
    let mut failures = Vec::new();
    let archs = [desk_arch(), fourteen_layer_arch(), degeneracy_arch()];
    let mut variants = 0;
    for (a, arch) in archs.iter().enumerate() {
        let graph = LayeredGraph::from_architecture(arch).unwrap();
        let base = count_params_flops(&realize_graph(&graph, arch).unwrap()).unwrap().weights;
        if base != arch.dense_weight_count().unwrap() {
            failures.push(format!("arch {a}: baseline count {base}"));
        }
        let sw = sweep(&graph, &default_grid(), a as u64, &BaselineConfig::analytic(), &SweepOptions::default()).unwrap();
        for pt in &sw.points {
            if let Ok(spec) = realize(&pt.topology, arch) {
                variants += 1;
                let n = count_params_flops(&spec).unwrap().weights;
                if n != base {
                    failures.push(format!("arch {a} p={}: {n} vs {base}", pt.p));
                }
            }
        }
    }
    // all-pairs dense analogue vs the selected sparse network at the same widths
    let arch = fourteen_layer_arch();
    let (_, sw) = fourteen_layer_sweep();
    let (_, spec) = best_realizable(&sw, &arch);
    let sparse = count_params_flops(&spec).unwrap().weights;
    let dense = count_params_flops(&dense_all_pairs(&arch).unwrap()).unwrap().weights;
    let reduction = dense as f64 / sparse as f64;
    let pass = failures.is_empty() && variants > 40 && reduction >= DENSE_REDUCTION;
    verdict(
        7,
        pass,
        &format!(
            "{variants} realized variants, mismatches {failures:?}, all-pairs {dense} vs sparse {sparse} weights = {reduction:.2}x (need >= {DENSE_REDUCTION}x)"
        ),
        start,
    );
    assert!(pass);
}

// ---- criterion 8 ----

#[test]
fn criterion_8_heatmap_contract() {
    let start = Instant::now();
    let arch = fourteen_layer_arch();
    let (graph, sw) = fourteen_layer_sweep();
    let selected = &sw.points[sw.selected.unwrap()].topology.graph;
    let mut input_targets: Vec<usize> = selected
        .edges()
        .iter()
        .filter(|e| graph.layer_of(e.src) == 0 && graph.layer_of(e.dst) >= 2)
        .map(|e| graph.layer_of(e.dst))
        .collect();
    input_targets.sort_unstable();
    input_targets.dedup();
    let (index, spec) = best_realizable(&sw, &arch);
    let net = SwNetwork::new(&spec).unwrap();
    let (train_set, test_set) = {
        let cfg = DigitsConfig::default();
        (synthetic_digits(200, 1, &cfg), synthetic_digits(100, 2, &cfg))
    };
    let (train_set, test_set) = (replicate_channels(&train_set, 3), replicate_channels(&test_set, 3));
    let config = TrainConfig { max_iterations: 20, eval_interval: 10, seed: 4, ..TrainConfig::default() };
    let trained = train(&net, &config, &train_set, &test_set).unwrap();
    let heat = weight_heatmap(&net, &trained.params);
    let layers = spec.layer_count();
    let mut bad = Vec::new();
    for (s, row) in heat.iter().enumerate() {
        for (d, &v) in row.iter().enumerate() {
            let connected = spec.connection(s, d).is_some();
            if connected != (v != 0.0) {
                bad.push((s, d, v));
            }
        }
    }
    let pass = heat.len() == layers && bad.is_empty() && input_targets.len() >= 2;
    verdict(
        8,
        pass,
        &format!(
            "{layers}x{layers} heatmap of the p={:.4} network, contract violations {bad:?}, selected topology's input row reaches non-consecutive layers {input_targets:?}",
            sw.points[index].p
        ),
        start,
    );
    assert!(pass);
}

/// Copies single-channel digits into `channels` identical planes.
fn replicate_channels(data: &Dataset, channels: usize) -> Dataset {
    let features = (0..data.len()).flat_map(|i| data.sample(i).repeat(channels)).collect();
    Dataset::new(features, data.labels.clone(), data.sample_len * channels, data.classes).unwrap()
}
