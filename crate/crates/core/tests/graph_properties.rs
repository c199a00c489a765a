mod common;

use nlcons_core::graph::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn edge_lists(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (1..=max_n, any::<u64>(), 0.05f64..0.9).prop_map(|(n, seed, p)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (n, common::random_digraph(&mut rng, n, p))
    })
}

/// Stationary distribution of `I − εL`, which is row-stochastic and
/// aperiodic for small `ε`; proportional to the left null vector of `L`.
fn power_iteration_oracle(l: &LaplacianMatrix) -> Vec<f64> {
    let n = l.dim();
    let eps = 0.5 / l.degrees().iter().cloned().fold(1.0, f64::max);
    let m = l.matrix();
    let mut w = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let wl = m.vec_mul(&w);
        let next: Vec<f64> = w.iter().zip(&wl).map(|(a, b)| a - eps * b).collect();
        let diff = next.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        w = next;
        if diff < 1e-15 {
            break;
        }
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn structure_matches_bfs((n, edges) in edge_lists(6)) {
        let g = build_graph(n, &edges).unwrap();
        let rep = analyze_structure(&g);
        let reach = common::bfs_reach(n, &edges);
        let roots = common::oracle_roots(&reach);
        prop_assert_eq!(rep.strongly_connected, common::oracle_strongly_connected(&reach));
        prop_assert_eq!(rep.has_spanning_tree, !roots.is_empty());
        prop_assert_eq!(&rep.root_set, &roots);
        // Components are the mutual-reachability classes.
        let mut comp_of = vec![usize::MAX; n];
        for (c, comp) in rep.scc_decomposition.iter().enumerate() {
            for &v in comp {
                prop_assert_eq!(comp_of[v], usize::MAX);
                comp_of[v] = c;
            }
        }
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(comp_of[a] == comp_of[b], reach[a][b] && reach[b][a]);
            }
        }
        // Sources first: edges never point to an earlier component.
        for &(s, t, _) in &edges {
            prop_assert!(comp_of[s] <= comp_of[t]);
        }
    }

    #[test]
    fn laplacian_rows_sum_to_zero((n, edges) in edge_lists(8)) {
        let g = build_graph(n, &edges).unwrap();
        let l = laplacian(&g);
        let ones = vec![1.0; n];
        for v in l.apply(&ones) {
            prop_assert!(v.abs() < 1e-12);
        }
        for i in 0..n {
            prop_assert!((l.entry(i, i) - g.in_degrees()[i]).abs() < 1e-14);
            for j in 0..n {
                if i != j {
                    prop_assert!(l.entry(i, j) <= 0.0);
                }
            }
        }
        // Sparse and dense products agree exactly.
        let v: Vec<f64> = (0..n).map(|k| (k as f64).sin()).collect();
        prop_assert_eq!(l.apply(&v), l.matrix().mul_vec(&v));
    }

    #[test]
    fn incidence_columns((n, edges) in edge_lists(6)) {
        let g = build_graph(n, &edges).unwrap();
        let b = incidence(&g).matrix;
        prop_assert_eq!(b.cols(), g.edges().len());
        for (k, e) in g.edges().iter().enumerate() {
            for i in 0..n {
                let want = if i == e.source { 1.0 } else if i == e.target { -1.0 } else { 0.0 };
                prop_assert_eq!(b[(i, k)], want);
            }
        }
    }

    #[test]
    fn perron_vector_on_strongly_connected(n in 2usize..=12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = common::random_strongly_connected(&mut rng, n);
        let g = build_graph(n, &edges).unwrap();
        let l = laplacian(&g);
        let w = left_perron(&l, 1e-10).unwrap();
        prop_assert!(w.w.iter().all(|&v| v > 0.0));
        prop_assert!((w.w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.residual <= 1e-10);
        prop_assert!(w.psd_certificate >= -1e-10);
        let oracle = power_iteration_oracle(&l);
        for (a, b) in w.w.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }
    }
}

#[test]
fn undirected_graph_has_uniform_perron_vector() {
    let g = build_graph(3, &[(0, 1, 2.0), (1, 0, 2.0), (1, 2, 0.5), (2, 1, 0.5)]).unwrap();
    assert!(g.is_symmetric());
    let w = left_perron(&laplacian(&g), 1e-10).unwrap();
    for v in w.w {
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn spanning_tree_without_strong_connectivity_is_rejected() {
    let g = build_graph(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
    assert!(analyze_structure(&g).has_spanning_tree);
    assert_eq!(left_perron(&laplacian(&g), 1e-10), Err(GraphError::NotStronglyConnected));
}
