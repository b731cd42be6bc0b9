//! Partitioner against brute-force optimal balanced cuts and structural
//! invariants on random graphs.

use gti_core::graph::generators::{gen_ba, gen_er, gen_ws};
use gti_core::graph::Graph;
use gti_core::partition::{max_part_size, partition_balanced, PartitionResult};
use proptest::prelude::*;

fn grid(side: usize) -> Graph {
    let mut edges = Vec::new();
    for r in 0..side {
        for c in 0..side {
            let u = r * side + c;
            if c + 1 < side {
                edges.push((u, u + 1));
            }
            if r + 1 < side {
                edges.push((u, u + side));
            }
        }
    }
    Graph::from_edges(side * side, edges).unwrap()
}

/// Minimum cut over all exactly-balanced bipartitions.
fn brute_force_bisection(g: &Graph) -> usize {
    let n = g.node_count();
    let edges: Vec<(usize, usize)> = g.edges().collect();
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == n / 2)
        .map(|m| edges.iter().filter(|&&(u, v)| (m >> u & 1) != (m >> v & 1)).count())
        .min()
        .unwrap()
}

fn check(g: &Graph, m: usize, tol: f64, r: &PartitionResult) {
    let n = g.node_count();
    assert_eq!(r.parts.len(), m);
    let mut seen = vec![0; n];
    for (p, nodes) in r.parts.iter().enumerate() {
        assert!(!nodes.is_empty(), "part {p} is empty");
        assert_eq!(r.part_sizes[p], nodes.len());
        for &u in nodes {
            seen[u] += 1;
            assert_eq!(r.assignment[u], p);
        }
    }
    assert!(seen.iter().all(|&c| c == 1), "parts are not a partition");
    let recount = g.edges().filter(|&(u, v)| r.assignment[u] != r.assignment[v]).count();
    assert_eq!(r.cut_edges, recount);
    assert!(r.max_part_size() <= max_part_size(n, m, tol));
    let bound = (1.0 + tol).max(n.div_ceil(m) as f64 * m as f64 / n as f64);
    assert!(r.balance <= bound + 1e-12, "balance {} > {bound}", r.balance);
    for &(before, after) in &r.refinement_trace {
        assert!(after <= before, "FM pass raised the cut {before} -> {after}");
    }
}

#[test]
fn path_and_grid_reach_brute_force_optimum() {
    let path = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
    assert_eq!(brute_force_bisection(&path), 1);
    let g = grid(4);
    let optimum = brute_force_bisection(&g);
    assert_eq!(optimum, 4);
    for seed in 0..10 {
        let r = partition_balanced(&path, 2, 0.05, seed).unwrap();
        check(&path, 2, 0.05, &r);
        assert_eq!(r.cut_edges, 1);
        let r = partition_balanced(&g, 2, 0.05, seed).unwrap();
        check(&g, 2, 0.05, &r);
        assert!(r.cut_edges <= optimum, "seed {seed}: cut {}", r.cut_edges);
    }
}

#[test]
fn disconnected_graphs_still_balance() {
    let g = Graph::from_edges(9, [(0, 1), (2, 3), (3, 4)]).unwrap();
    for m in 1..=9 {
        let r = partition_balanced(&g, m, 0.05, 3).unwrap();
        check(&g, m, 0.05, &r);
    }
}

#[test]
fn larger_graphs_coarsen_and_refine() {
    let g = gen_ba(2000, 3, 1).unwrap();
    let r = partition_balanced(&g, 8, 0.05, 1).unwrap();
    check(&g, 8, 0.05, &r);
    assert!(r.cut_edges < g.edge_count());
    let g = gen_ws(1000, 4, 0.05, 1).unwrap();
    let r = partition_balanced(&g, 4, 0.05, 1).unwrap();
    check(&g, 4, 0.05, &r);
    // a ring lattice splits into arcs; a random split would cut ~3/4 of 2000 edges
    assert!(r.cut_edges < 200, "cut {}", r.cut_edges);
}

#[test]
fn deterministic_under_seed() {
    let g = gen_er(200, 0.05, 4).unwrap();
    assert_eq!(
        partition_balanced(&g, 5, 0.05, 9).unwrap(),
        partition_balanced(&g, 5, 0.05, 9).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn invariants_hold(n in 1usize..120, p in 0.0f64..0.3, m_frac in 0.0f64..1.0, tol in 0.0f64..0.3, seed in 0u64..500) {
        let g = gen_er(n, p, seed).unwrap();
        let m = 1 + (m_frac * (n - 1) as f64) as usize;
        let r = partition_balanced(&g, m, tol, seed).unwrap();
        check(&g, m, tol, &r);
    }
}
