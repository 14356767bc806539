use proptest::prelude::*;

use swnet::graph::{Edge, LayeredGraph};
use swnet::metrics::{characteristic_path_length, clustering, ClusteringKind, UndirectedGraph};
use swnet::rewire::{rewire, EdgeTag, RewireConfig};

fn adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<bool>> {
    let mut a = vec![vec![false; n]; n];
    for &(x, y) in edges {
        if x != y {
            a[x][y] = true;
            a[y][x] = true;
        }
    }
    a
}

fn brute_clustering(a: &[Vec<bool>]) -> (f64, f64) {
    let n = a.len();
    let (mut local, mut closed, mut triples) = (0.0, 0usize, 0usize);
    for v in 0..n {
        let nb: Vec<usize> = (0..n).filter(|&u| a[v][u]).collect();
        let d = nb.len();
        let mut links = 0;
        for i in 0..d {
            for j in i + 1..d {
                if a[nb[i]][nb[j]] {
                    links += 1;
                }
            }
        }
        if d >= 2 {
            local += links as f64 / (d * (d - 1) / 2) as f64;
        }
        closed += links;
        triples += d * d.saturating_sub(1) / 2;
    }
    let trans = if triples == 0 { 0.0 } else { closed as f64 / triples as f64 };
    (local / n as f64, trans)
}

fn brute_path_length(a: &[Vec<bool>]) -> Option<f64> {
    let n = a.len();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for j in 0..n {
            if a[i][j] {
                d[i][j] = 1;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let (mut sum, mut count) = (0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i != j && d[i][j] < inf {
                sum += d[i][j];
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum as f64 / count as f64)
}

fn random_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..30).prop_flat_map(|n| (Just(n), proptest::collection::vec((0..n, 0..n), 0..n * 3)))
}

/// Layer sizes plus a subset of the forward node pairs.
fn layered_graph() -> impl Strategy<Value = LayeredGraph> {
    proptest::collection::vec(1usize..5, 2..6).prop_flat_map(|sizes| {
        let g = LayeredGraph::new(sizes.clone(), Vec::new());
        let pairs: Vec<(usize, usize)> = (0..g.node_count())
            .flat_map(|a| (0..g.node_count()).map(move |b| (a, b)))
            .filter(|&(a, b)| g.layer_of(a) < g.layer_of(b))
            .collect();
        let count = pairs.len();
        proptest::collection::vec(proptest::bool::weighted(0.5), count).prop_map(move |keep| {
            let edges = pairs.iter().zip(&keep).filter(|(_, &k)| k).map(|(&(a, b), _)| Edge::new(a, b)).collect();
            LayeredGraph::new(sizes.clone(), edges)
        })
    })
}

proptest! {
    #[test]
    fn clustering_matches_brute_force((n, edges) in random_graph()) {
        let g = UndirectedGraph::from_edges(n, edges.iter().copied());
        let (local, trans) = brute_clustering(&adjacency(n, &edges));
        prop_assert!((clustering(&g, ClusteringKind::AverageLocal) - local).abs() <= 1e-12);
        prop_assert!((clustering(&g, ClusteringKind::Transitivity) - trans).abs() <= 1e-12);
    }

    #[test]
    fn path_length_matches_floyd_warshall((n, edges) in random_graph()) {
        let g = UndirectedGraph::from_edges(n, edges.iter().copied());
        match (characteristic_path_length(&g), brute_path_length(&adjacency(n, &edges))) {
            (Ok(l), Some(b)) => prop_assert!((l - b).abs() <= 1e-12),
            (Err(_), None) => {}
            (got, want) => prop_assert!(false, "{got:?} vs {want:?}"),
        }
    }

    #[test]
    fn metrics_ignore_node_labels((n, edges) in random_graph(), shift in 1usize..29) {
        let g = UndirectedGraph::from_edges(n, edges.iter().copied());
        let relabel = |v: usize| (v * (2 * shift + 1) + shift) % n;
        let h = UndirectedGraph::from_edges(n, edges.iter().map(|&(a, b)| (relabel(a), relabel(b))));
        if (0..n).map(relabel).collect::<std::collections::HashSet<_>>().len() == n {
            prop_assert!((clustering_of(&g) - clustering_of(&h)).abs() <= 1e-12);
            prop_assert_eq!(characteristic_path_length(&g).ok(), characteristic_path_length(&h).ok());
        }
    }

    #[test]
    fn adding_an_edge_within_a_component_never_lengthens_paths(
        (n, edges) in random_graph(), a in 0usize..30, b in 0usize..30,
    ) {
        let (a, b) = (a % n, b % n);
        let g = UndirectedGraph::from_edges(n, edges.iter().copied());
        let mut more = edges.clone();
        more.push((a, b));
        let h = UndirectedGraph::from_edges(n, more);
        // joining two components adds new, possibly long, reachable pairs
        let connected = brute_path_length(&adjacency(n, &edges)).is_some()
            && reachable(&g, a, b);
        if connected {
            prop_assert!(characteristic_path_length(&h).unwrap() <= characteristic_path_length(&g).unwrap() + 1e-12);
        }
    }

    #[test]
    fn rewiring_preserves_structure(graph in layered_graph(), p in 0.0f64..=1.0, seed in any::<u64>()) {
        let topo = rewire(&graph, &RewireConfig::new(p, seed)).unwrap();
        prop_assert_eq!(topo.graph.edge_count(), graph.edge_count());
        prop_assert_eq!(topo.graph.layer_sizes(), graph.layer_sizes());
        prop_assert!(topo.graph.is_valid(), "{:?}", topo.graph.validate());
        prop_assert_eq!(topo.provenance.len(), graph.edge_count());
        for (e, tag) in topo.graph.edges().iter().zip(&topo.provenance) {
            if let EdgeTag::Rewired { original_dst } = tag {
                prop_assert!(graph.edges().contains(&Edge::new(e.src, *original_dst)));
            }
        }
        let again = rewire(&graph, &RewireConfig::new(p, seed)).unwrap();
        prop_assert_eq!(topo, again);
    }

    #[test]
    fn zero_probability_is_identity(graph in layered_graph(), seed in any::<u64>()) {
        let topo = rewire(&graph, &RewireConfig::new(0.0, seed)).unwrap();
        let mut before = graph.edges().to_vec();
        let mut after = topo.graph.edges().to_vec();
        before.sort_by_key(|e| (e.src, e.dst));
        after.sort_by_key(|e| (e.src, e.dst));
        prop_assert_eq!(before, after);
        prop_assert!(topo.provenance.iter().all(|t| *t == EdgeTag::Kept));
    }

    #[test]
    fn any_direction_rewiring_stays_simple(graph in layered_graph(), p in 0.0f64..=1.0, seed in any::<u64>()) {
        let config = RewireConfig { forward_only: false, ..RewireConfig::new(p, seed) };
        let topo = rewire(&graph, &config).unwrap();
        prop_assert_eq!(topo.graph.edge_count(), graph.edge_count());
        let u = topo.graph.undirected();
        prop_assert_eq!(u.edge_count(), graph.edge_count());
    }
}

fn clustering_of(g: &UndirectedGraph) -> f64 {
    clustering(g, ClusteringKind::AverageLocal)
}

fn reachable(g: &UndirectedGraph, a: usize, b: usize) -> bool {
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![a];
    seen[a] = true;
    while let Some(v) = stack.pop() {
        if v == b {
            return true;
        }
        for &u in g.neighbors(v) {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    false
}
