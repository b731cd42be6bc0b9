//! Louvain against brute-force and matrix-form modularity oracles.

use gti_core::graph::generators::{gen_ba, gen_er};
use gti_core::graph::Graph;
use gti_core::hierarchy::{louvain_levels, modularity, CommunityAssignment};
use proptest::prelude::*;

/// `Q = 1/2m Σ_ij (A_ij − k_i k_j / 2m) δ(c_i, c_j)` over the dense matrix.
fn matrix_modularity(g: &Graph, labels: &[usize]) -> f64 {
    let n = g.node_count();
    let two_m = 2.0 * g.edge_count() as f64;
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                let a = if g.has_edge(i, j) { 1.0 } else { 0.0 };
                q += a - (g.degree(i) * g.degree(j)) as f64 / two_m;
            }
        }
    }
    q / two_m
}

fn two_k5_bridged() -> Graph {
    let mut edges = Vec::new();
    for base in [0, 5] {
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.push((4, 5));
    Graph::from_edges(10, edges).unwrap()
}

#[test]
fn two_cliques_match_best_bipartition() {
    let g = two_k5_bridged();
    let mut best = (f64::NEG_INFINITY, 0u32);
    for mask in 1..(1u32 << 10) - 1 {
        let labels: Vec<usize> = (0..10).map(|i| (mask >> i & 1) as usize).collect();
        let q = matrix_modularity(&g, &labels);
        if q > best.0 + 1e-12 {
            best = (q, mask);
        }
    }
    let expected: Vec<usize> = (0..10).map(|i| (best.1 >> i & 1) as usize).collect();
    for seed in 0..10 {
        let last = louvain_levels(&g, seed).unwrap().pop().unwrap();
        assert_eq!(last.community_count, 2);
        let got = last.assignment.membership();
        let same = (0..10).all(|i| (got[i] == got[0]) == (expected[i] == expected[0]));
        assert!(same, "seed {seed}: {got:?} vs {expected:?}");
        assert!((last.modularity - best.0).abs() < 1e-12);
    }
}

#[test]
fn components_are_never_merged() {
    // three disjoint 4-cycles
    let edges: Vec<(usize, usize)> = (0..3)
        .flat_map(|c| (0..4).map(move |i| (4 * c + i, 4 * c + (i + 1) % 4)))
        .collect();
    let g = Graph::from_edges(12, edges).unwrap();
    let last = louvain_levels(&g, 1).unwrap().pop().unwrap();
    assert!(last.community_count >= 3);
    for (u, v) in (0..12).flat_map(|u| (0..12).map(move |v| (u, v))) {
        if last.assignment.community_of(u) == last.assignment.community_of(v) {
            assert_eq!(u / 4, v / 4);
        }
    }
}

#[test]
fn deterministic_under_seed() {
    let g = gen_ba(300, 3, 2).unwrap();
    assert_eq!(louvain_levels(&g, 5).unwrap(), louvain_levels(&g, 5).unwrap());
}

fn check_levels(g: &Graph, seed: u64) {
    let levels = louvain_levels(g, seed).unwrap();
    assert!(!levels.is_empty());
    for (i, level) in levels.iter().enumerate() {
        assert_eq!(level.level, i);
        let a = &level.assignment;
        assert_eq!(a.node_count(), g.node_count());
        assert_eq!(a.community_count(), level.community_count);
        let mut seen = vec![false; a.community_count()];
        for &c in a.membership() {
            seen[c] = true;
        }
        assert!(seen.iter().all(|&s| s), "community ids not dense");
        let oracle = matrix_modularity(g, a.membership());
        assert!((level.modularity - oracle).abs() < 1e-12);
        assert!((modularity(g, a).unwrap() - oracle).abs() < 1e-12);
        assert!((-0.5..1.0).contains(&level.modularity));
    }
    for w in levels.windows(2) {
        assert!(w[0].modularity <= w[1].modularity);
        assert!(w[0].community_count >= w[1].community_count);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn levels_are_consistent(n in 2usize..60, p in 0.02f64..0.5, seed in 0u64..1000) {
        let g = gen_er(n, p, seed).unwrap();
        prop_assume!(g.edge_count() > 0);
        check_levels(&g, seed);
    }

    #[test]
    fn single_community_has_zero_modularity(n in 2usize..40, seed in 0u64..1000) {
        let g = gen_er(n, 0.3, seed).unwrap();
        prop_assume!(g.edge_count() > 0);
        let q = modularity(&g, &CommunityAssignment::from_labels(&vec![0; n])).unwrap();
        prop_assert!(q.abs() < 1e-12);
    }
}

#[test]
fn larger_graphs_are_consistent() {
    check_levels(&gen_ba(500, 2, 1).unwrap(), 1);
    check_levels(&gen_er(300, 0.03, 2).unwrap(), 2);
}
