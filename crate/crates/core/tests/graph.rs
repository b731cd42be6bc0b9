use gti_core::graph::generators::{gen_ba, gen_er, gen_kron, gen_ws, standard_initiator};
use gti_core::graph::io::{load_edge_list, save_edge_list};
use gti_core::graph::Graph;
use proptest::prelude::*;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn er_mean_edge_count_matches_expectation() {
    let (n, p) = (500usize, 0.20123);
    let pairs = (n * (n - 1) / 2) as f64;
    let expected = p * pairs;
    let counts: Vec<f64> = (0..10).map(|s| gen_er(n, p, s).unwrap().edge_count() as f64).collect();
    // sd of the mean over 10 seeds is about 45 edges
    let sd = (pairs * p * (1.0 - p) / counts.len() as f64).sqrt();
    assert!(
        (mean(&counts) - expected).abs() < 4.0 * sd,
        "mean {} vs {expected}",
        mean(&counts)
    );
    assert!((expected - 25103.0).abs() < 1.0);
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = (1.0 - p).powi(n as i32);
    for k in 1..=n {
        pmf[k] = pmf[k - 1] * (n - k + 1) as f64 / k as f64 * p / (1.0 - p);
    }
    pmf
}

#[test]
fn er_degree_histogram_follows_binomial() {
    let (n, p, seeds) = (200usize, 0.05, 20);
    let mut freq = vec![0.0; n];
    for s in 0..seeds {
        for (d, c) in gen_er(n, p, s).unwrap().degree_distribution().0 {
            freq[d] += c as f64 / (n * seeds as usize) as f64;
        }
    }
    let pmf = binomial_pmf(n - 1, p);
    let tv: f64 = freq.iter().zip(&pmf).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    assert!(tv < 0.05, "total variation {tv}");
    let peak = (0..n).max_by(|&a, &b| freq[a].total_cmp(&freq[b])).unwrap();
    assert!((8..=12).contains(&peak), "peak at {peak}");
}

#[test]
fn ba_counts_and_hub_over_seeds() {
    assert_eq!(gen_ba(500, 2, 0).unwrap().edge_count(), 996);
    for s in 0..20 {
        let g = gen_ba(100, 2, s).unwrap();
        assert_eq!(g.edge_count(), 2 * 98);
        let avg = 2.0 * g.edge_count() as f64 / g.node_count() as f64;
        assert!(g.max_degree() >= 2);
        assert!(g.max_degree() as f64 >= avg);
    }
}

#[test]
fn ws_edge_count_ignores_beta() {
    for (i, beta) in [0.0, 0.1, 0.5, 1.0].into_iter().enumerate() {
        assert_eq!(gen_ws(500, 2, beta, i as u64).unwrap().edge_count(), 500);
        assert_eq!(gen_ws(100, 4, beta, i as u64).unwrap().edge_count(), 200);
    }
}

#[test]
fn kron_drops_to_near_power_of_two() {
    for s in 0..3 {
        let full = gen_kron(&standard_initiator(), 11, s, false).unwrap();
        assert_eq!(full.node_count(), 2048);
        let g = gen_kron(&standard_initiator(), 11, s, true).unwrap();
        assert!(g.node_count() < 2048);
        assert!(g.node_count() > 1024, "{} nodes", g.node_count());
        assert_eq!(g.edge_count(), full.edge_count());
        assert_eq!(g.non_isolated_count(), g.node_count());
    }
}

fn arb_graph() -> impl Strategy<Value = Graph> {
    (1usize..60, 0.0f64..0.5, any::<u64>()).prop_map(|(n, p, s)| gen_er(n, p, s).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn save_load_round_trip(g in arb_graph()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.txt");
        save_edge_list(&g, &path).unwrap();
        let loaded = load_edge_list(&path, false).unwrap();
        prop_assert_eq!(loaded.graph, g);
        prop_assert_eq!(loaded.self_loops_dropped, 0);
        prop_assert_eq!(loaded.duplicate_edges, 0);
    }

    #[test]
    fn degree_histogram_sums(g in arb_graph()) {
        let h = g.degree_distribution();
        prop_assert_eq!(h.0.iter().map(|&(_, c)| c).sum::<usize>(), g.node_count());
        prop_assert_eq!(h.0.iter().map(|&(d, c)| d * c).sum::<usize>(), 2 * g.edge_count());
    }

    #[test]
    fn generators_are_seed_deterministic(n in 5usize..40, s in any::<u64>()) {
        prop_assert_eq!(gen_er(n, 0.3, s).unwrap(), gen_er(n, 0.3, s).unwrap());
        prop_assert_eq!(gen_ba(n, 2, s).unwrap(), gen_ba(n, 2, s).unwrap());
        prop_assert_eq!(gen_ws(n, 2, 0.3, s).unwrap(), gen_ws(n, 2, 0.3, s).unwrap());
    }
}
