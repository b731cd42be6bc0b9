//! Sampler properties over many seeds.

use gti_core::graph::generators::{gen_ba, gen_er, gen_ws};
use gti_core::graph::Graph;
use gti_core::sampling::{forest_fire_sample, random_jump_sample, random_walk_sample, SampleMethod, SampleResult};
use proptest::prelude::*;

fn connected(g: &Graph) -> bool {
    if g.node_count() == 0 {
        return true;
    }
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.iter().all(|&s| s)
}

fn check_basic(g: &Graph, r: &SampleResult, n: usize) {
    assert_eq!(r.nodes.len(), n);
    let mut sorted = r.nodes.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), n, "duplicate nodes");
    assert_eq!(&r.subgraph, &g.induced_subgraph(&r.nodes).unwrap());
    for (u, v) in r.subgraph.edges() {
        assert!(g.has_edge(r.nodes[u], r.nodes[v]));
    }
}

#[test]
fn star_hub_is_always_walked_through() {
    let g = Graph::from_edges(51, (1..=50).map(|v| (0, v))).unwrap();
    for seed in 0..100 {
        let r = random_walk_sample(&g, 10, 0.15, seed).unwrap();
        assert!(r.nodes.contains(&0), "seed {seed}");
    }
}

#[test]
fn jump_probability_one_is_uniform_node_sampling() {
    let g = gen_ws(200, 4, 0.1, 1).unwrap();
    let r = random_jump_sample(&g, 50, 1.0, 3).unwrap();
    check_basic(&g, &r, 50);
}

#[test]
fn forest_fire_hits_exact_counts_on_a_social_like_graph() {
    let g = gen_ba(1000, 20, 1).unwrap();
    for seed in 0..50 {
        for n in [1, 20, 137, 1000] {
            let r = forest_fire_sample(&g, n, 0.35, seed).unwrap();
            check_basic(&g, &r, n);
        }
    }
}

#[test]
fn deterministic_per_seed() {
    let g = gen_er(100, 0.05, 2).unwrap();
    for m in SampleMethod::ALL {
        assert_eq!(m.sample(&g, 40, 9).unwrap(), m.sample(&g, 40, 9).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn walk_on_connected_graph_is_connected(n_frac in 0.0f64..1.0, seed in 0u64..10_000) {
        let g = gen_ba(80, 2, seed).unwrap();
        let n = 1 + (n_frac * 79.0) as usize;
        let r = random_walk_sample(&g, n, 0.15, seed).unwrap();
        check_basic(&g, &r, n);
        prop_assert!(!r.partial);
        prop_assert!(connected(&r.subgraph));
    }

    #[test]
    fn all_methods_reach_n_on_disconnected_graphs(nodes in 1usize..80, p in 0.0f64..0.08, frac in 0.0f64..1.0, seed in 0u64..10_000) {
        let g = gen_er(nodes, p, seed).unwrap();
        let n = 1 + (frac * (nodes - 1) as f64) as usize;
        for m in SampleMethod::ALL {
            let r = m.sample(&g, n, seed).unwrap();
            check_basic(&g, &r, n);
            if m != SampleMethod::RandomWalk {
                prop_assert!(!r.partial);
            }
        }
    }
}
