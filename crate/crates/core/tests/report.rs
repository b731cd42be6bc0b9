//! Emitters checked against the modules that produce their data.

use std::collections::BTreeSet;

use gti_core::graph::generators::gen_er;
use gti_core::graph::WeightedAdjacency;
use gti_core::report::{write_degree_csv, write_dot};
use gti_core::stages::{identify_stages, stage_degree_distribution};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dot_parses_back_to_the_graph(n in 0usize..40, p in 0.0f64..0.5, seed in 0u64..1000) {
        let g = gen_er(n, p, seed).unwrap();
        let mut buf = Vec::new();
        write_dot(&g, None, &BTreeSet::new(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let edges: BTreeSet<(usize, usize)> = text
            .lines()
            .filter_map(|l| l.trim().trim_end_matches(';').split_once(" -- "))
            .map(|(a, b)| (a.parse().unwrap(), b.parse().unwrap()))
            .collect();
        prop_assert_eq!(edges, g.edges().collect::<BTreeSet<_>>());
        prop_assert_eq!(text.lines().filter(|l| !l.contains("--")).count(), n + 2);
    }

    #[test]
    fn degree_csv_rows_match_stage_histograms(n in 3usize..40, seed in 0u64..1000) {
        let g = gen_er(n, 0.3, seed).unwrap();
        prop_assume!(g.edge_count() > 0);
        let mut re = WeightedAdjacency::zeros(n);
        for (i, (u, v)) in g.edges().enumerate() {
            re.set_symmetric(u, v, 0.1 * (1 + i % 5) as f64);
        }
        let stages = identify_stages(&re, &g, 8).unwrap();
        let mut buf = Vec::new();
        write_degree_csv(&g, &stages, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows = |series: &str| -> Vec<(usize, usize)> {
            text.lines()
                .skip(1)
                .filter_map(|l| {
                    let f: Vec<&str> = l.split(',').collect();
                    (f[0] == series).then(|| (f[1].parse().unwrap(), f[2].parse().unwrap()))
                })
                .collect()
        };
        prop_assert_eq!(rows("original"), g.degree_distribution().0);
        for s in &stages {
            prop_assert_eq!(rows(&format!("stage_{}", s.index)), stage_degree_distribution(s).0);
        }
    }
}
