//! Seeded random graph models: Erdős–Rényi, Barabási–Albert,
//! Watts–Strogatz and stochastic Kronecker.
//!
//! Every generator owns a fresh ChaCha PRNG seeded from its `seed`
//! argument, so identical arguments always give identical graphs.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("{name} = {p} is not in [0, 1]")));
    }
    Ok(())
}

/// G(n, p): each unordered pair present independently with probability `p`.
pub fn gen_er(n: usize, p: f64, seed: u64) -> Result<Graph> {
    check_probability("p", p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges)
}

/// Preferential attachment from `m` isolated seed nodes; every later node
/// attaches to `m` distinct existing nodes, giving exactly `m·(n − m)` edges.
pub fn gen_ba(n: usize, m: usize, seed: u64) -> Result<Graph> {
    if m < 1 || m >= n {
        return Err(Error::InvalidParameter(format!(
            "BA needs 1 <= m < n, got m = {m}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * (n - m));
    // each endpoint appears once per incident edge, so uniform draws from
    // this list are degree-proportional
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * m * (n - m));
    let mut targets: Vec<usize> = (0..m).collect();
    for source in m..n {
        for &t in &targets {
            edges.push((source, t));
            endpoints.push(t);
            endpoints.push(source);
        }
        let mut chosen = BTreeSet::new();
        while chosen.len() < m {
            chosen.insert(*endpoints.choose(&mut rng).expect("non-empty after first node"));
        }
        targets = chosen.into_iter().collect();
    }
    Graph::from_edges(n, edges)
}

/// Ring lattice with `k/2` neighbors per side, each lattice edge rewired with
/// probability `beta` to a uniform endpoint that creates neither a self-loop
/// nor a duplicate. Always `n·k/2` edges.
pub fn gen_ws(n: usize, k: usize, beta: f64, seed: u64) -> Result<Graph> {
    check_probability("beta", beta)?;
    if k == 0 || !k.is_multiple_of(2) || k >= n {
        return Err(Error::InvalidParameter(format!(
            "WS needs even k with 0 < k < n, got k = {k}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for u in 0..n {
        for j in 1..=k / 2 {
            let v = (u + j) % n;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if !rng.random_bool(beta) || !adj[u].contains(&v) || adj[u].len() >= n - 1 {
                continue;
            }
            let mut w = rng.random_range(0..n);
            while w == u || adj[u].contains(&w) {
                w = rng.random_range(0..n);
            }
            adj[u].remove(&v);
            adj[v].remove(&u);
            adj[u].insert(w);
            adj[w].insert(u);
        }
    }
    let edges: Vec<(usize, usize)> = adj
        .iter()
        .enumerate()
        .flat_map(|(u, s)| s.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
        .collect();
    Graph::from_edges(n, edges)
}

/// Stochastic Kronecker graph on `b^power` nodes, `b` the initiator side.
///
/// Pair `(u, v)`, `u < v`, is an edge with probability
/// `∏ₗ initiator[uₗ][vₗ]` over the base-`b` digits of `u` and `v`. With
/// `drop_isolated` the isolated nodes are removed and ids compacted.
pub fn gen_kron(initiator: &[Vec<f64>], power: u32, seed: u64, drop_isolated: bool) -> Result<Graph> {
    let b = initiator.len();
    if b == 0 || initiator.iter().any(|row| row.len() != b) {
        return Err(Error::InvalidParameter(
            "initiator must be a non-empty square matrix".into(),
        ));
    }
    for row in initiator {
        for &p in row {
            check_probability("initiator entry", p)?;
        }
    }
    if power < 1 {
        return Err(Error::InvalidParameter("power must be at least 1".into()));
    }
    let n = b
        .checked_pow(power)
        .filter(|&n| n <= 1 << 16)
        .ok_or_else(|| Error::InvalidParameter(format!("{b}^{power} nodes is too large")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let (mut a, mut c, mut p) = (u, v, 1.0);
            for _ in 0..power {
                p *= initiator[a % b][c % b];
                a /= b;
                c /= b;
            }
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let g = Graph::from_edges(n, edges)?;
    if !drop_isolated {
        return Ok(g);
    }
    let keep: Vec<usize> = (0..n).filter(|&u| g.degree(u) > 0).collect();
    g.induced_subgraph(&keep)
}

/// A generator invocation, as accepted by the CLI and run configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Er {
        nodes: usize,
        p: f64,
    },
    Ba {
        nodes: usize,
        m: usize,
    },
    Ws {
        nodes: usize,
        k: usize,
        beta: f64,
    },
    Kron {
        initiator: Vec<Vec<f64>>,
        power: u32,
        drop_isolated: bool,
    },
}

impl GeneratorSpec {
    pub fn generate(&self, seed: u64) -> Result<Graph> {
        match self {
            GeneratorSpec::Er { nodes, p } => gen_er(*nodes, *p, seed),
            GeneratorSpec::Ba { nodes, m } => gen_ba(*nodes, *m, seed),
            GeneratorSpec::Ws { nodes, k, beta } => gen_ws(*nodes, *k, *beta, seed),
            GeneratorSpec::Kron {
                initiator,
                power,
                drop_isolated,
            } => gen_kron(initiator, *power, seed, *drop_isolated),
        }
    }
}

/// The initiator commonly used for Kronecker fits of social networks.
pub fn standard_initiator() -> Vec<Vec<f64>> {
    vec![vec![0.9, 0.5], vec![0.5, 0.3]]
}

/// ER edge probability that gives `edges` expected edges on `n` nodes.
pub fn er_probability_for(n: usize, edges: usize) -> f64 {
    edges as f64 / (n * (n - 1) / 2) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes() {
        assert_eq!(gen_er(20, 0.0, 1).unwrap().edge_count(), 0);
        assert_eq!(gen_er(5, 1.0, 1).unwrap().edge_count(), 10);
        assert!(gen_er(5, 1.5, 1).is_err());
    }

    #[test]
    fn ba_small_and_table_sizes() {
        let g = gen_ba(3, 1, 9).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert!(g.degree_distribution().node_total() == 3 && g.non_isolated_count() == 3);
        assert_eq!(gen_ba(500, 2, 4).unwrap().edge_count(), 996);
        assert!(gen_ba(5, 5, 0).is_err());
        assert!(gen_ba(5, 0, 0).is_err());
    }

    #[test]
    fn ws_lattice_and_counts() {
        let ring = gen_ws(6, 2, 0.0, 0).unwrap();
        assert_eq!(ring.edge_count(), 6);
        assert!((0..6).all(|u| ring.has_edge(u, (u + 1) % 6)));
        for beta in [0.0, 0.3, 1.0] {
            assert_eq!(gen_ws(500, 2, beta, 11).unwrap().edge_count(), 500);
        }
        assert!(gen_ws(10, 3, 0.1, 0).is_err());
        assert!(gen_ws(4, 4, 0.1, 0).is_err());
    }

    #[test]
    fn kron_small_cases() {
        let k2 = gen_kron(&[vec![0.0, 1.0], vec![1.0, 0.0]], 1, 0, false).unwrap();
        assert_eq!((k2.node_count(), k2.edge_count()), (2, 1));
        let g = gen_kron(&standard_initiator(), 5, 3, false).unwrap();
        assert_eq!(g.node_count(), 32);
        assert!(gen_kron(&[vec![0.5, 2.0], vec![0.1, 0.1]], 2, 0, false).is_err());
        assert!(gen_kron(&[vec![0.5, 0.5]], 2, 0, false).is_err());
        assert!(gen_kron(&standard_initiator(), 0, 0, false).is_err());
    }

    #[test]
    fn same_seed_same_graph() {
        assert_eq!(gen_er(60, 0.1, 5).unwrap(), gen_er(60, 0.1, 5).unwrap());
        assert_eq!(gen_ba(60, 3, 5).unwrap(), gen_ba(60, 3, 5).unwrap());
        assert_eq!(gen_ws(60, 4, 0.2, 5).unwrap(), gen_ws(60, 4, 0.2, 5).unwrap());
        assert_ne!(gen_er(60, 0.1, 5).unwrap(), gen_er(60, 0.1, 6).unwrap());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = GeneratorSpec::Ws {
            nodes: 10,
            k: 2,
            beta: 0.1,
        };
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"model\":\"ws\""));
        assert_eq!(serde_json::from_str::<GeneratorSpec>(&s).unwrap(), spec);
    }
}
