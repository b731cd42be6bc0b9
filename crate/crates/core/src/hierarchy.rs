//! Louvain community detection. Each aggregation pass yields one level of
//! the hierarchy; the community count of a level is the partition count of
//! the corresponding layer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Dense community ids `0..count` for every node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    membership: Vec<usize>,
    count: usize,
}

impl CommunityAssignment {
    /// Renumbers arbitrary labels densely, in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let membership = labels
            .iter()
            .map(|&l| {
                let next = map.len();
                *map.entry(l).or_insert(next)
            })
            .collect();
        Self {
            membership,
            count: map.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            membership: (0..n).collect(),
            count: n,
        }
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn community_of(&self, node: usize) -> usize {
        self.membership[node]
    }

    pub fn community_count(&self) -> usize {
        self.count
    }

    pub fn node_count(&self) -> usize {
        self.membership.len()
    }

    /// Member lists, indexed by community id.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (u, &c) in self.membership.iter().enumerate() {
            out[c].push(u);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyLevel {
    /// 0 is the finest level.
    pub level: usize,
    pub assignment: CommunityAssignment,
    pub community_count: usize,
    pub modularity: f64,
}

/// Newman–Girvan modularity `Σ_c [e_c/m − (d_c/2m)²]`.
pub fn modularity(g: &Graph, a: &CommunityAssignment) -> Result<f64> {
    if a.node_count() != g.node_count() {
        return Err(Error::SizeMismatch(format!(
            "assignment covers {} nodes, graph has {}",
            a.node_count(),
            g.node_count()
        )));
    }
    let m = g.edge_count();
    if m == 0 {
        return Err(Error::Degenerate("modularity is undefined without edges".into()));
    }
    let mut intra = vec![0usize; a.community_count()];
    let mut degree = vec![0usize; a.community_count()];
    for u in 0..g.node_count() {
        degree[a.community_of(u)] += g.degree(u);
    }
    for (u, v) in g.edges() {
        if a.community_of(u) == a.community_of(v) {
            intra[a.community_of(u)] += 1;
        }
    }
    let m = m as f64;
    Ok(intra
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| e as f64 / m - (d as f64 / (2.0 * m)).powi(2))
        .sum())
}

/// Weighted multigraph that Louvain aggregates into.
struct WorkGraph {
    adj: Vec<Vec<(usize, f64)>>,
    /// Weight of edges folded inside each node, each edge counted once.
    inner: Vec<f64>,
}

impl WorkGraph {
    fn from_graph(g: &Graph) -> Self {
        Self {
            adj: (0..g.node_count())
                .map(|u| g.neighbors(u).iter().map(|&v| (v, 1.0)).collect())
                .collect(),
            inner: vec![0.0; g.node_count()],
        }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn strength(&self, u: usize) -> f64 {
        self.adj[u].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.inner[u]
    }

    /// Local-moving phase. Returns per-node community labels (not dense)
    /// and whether any node moved.
    fn local_moves(&self, total: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let strength: Vec<f64> = (0..n).map(|u| self.strength(u)).collect();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = strength.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);

        let mut links = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any_move = false;
        // each improving move raises modularity, so sweeps terminate; the cap
        // only guards against float ping-pong
        for _ in 0..1000 {
            let mut moved = false;
            for &u in &order {
                let own = comm[u];
                touched.clear();
                touched.push(own);
                links[own] = 0.0;
                for &(v, w) in &self.adj[u] {
                    let c = comm[v];
                    if links[c] == 0.0 && !touched.contains(&c) {
                        touched.push(c);
                    }
                    links[c] += w;
                }
                tot[own] -= strength[u];
                let scale = strength[u] / (2.0 * total);
                let gain = |c: usize| links[c] - tot[c] * scale;
                let mut best = own;
                let mut best_gain = gain(own);
                for &c in &touched[1..] {
                    let g = gain(c);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                tot[best] += strength[u];
                if best != own {
                    comm[u] = best;
                    moved = true;
                    any_move = true;
                }
                for &c in &touched {
                    links[c] = 0.0;
                }
            }
            if !moved {
                break;
            }
        }
        (comm, any_move)
    }

    fn aggregate(&self, a: &CommunityAssignment) -> WorkGraph {
        let k = a.community_count();
        let mut inner = vec![0.0; k];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); k];
        for u in 0..self.len() {
            let cu = a.community_of(u);
            inner[cu] += self.inner[u];
            for &(v, w) in &self.adj[u] {
                let cv = a.community_of(v);
                if cu == cv {
                    // seen from both endpoints
                    inner[cu] += w / 2.0;
                } else {
                    *maps[cu].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        WorkGraph {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            inner,
        }
    }
}

/// Runs Louvain to convergence, returning one level per aggregation pass,
/// finest first. The first pass is always reported; later passes only when
/// they raise modularity.
pub fn louvain_levels(g: &Graph, seed: u64) -> Result<Vec<HierarchyLevel>> {
    if g.edge_count() == 0 {
        return Err(Error::Degenerate(
            "graph has no edges; there is no community structure to interpolate".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = g.edge_count() as f64;
    let mut work = WorkGraph::from_graph(g);
    let mut original: Vec<usize> = (0..g.node_count()).collect();
    let mut levels: Vec<HierarchyLevel> = Vec::new();

    loop {
        let (labels, moved) = work.local_moves(total, &mut rng);
        if !moved && !levels.is_empty() {
            break;
        }
        let local = CommunityAssignment::from_labels(&labels);
        for c in original.iter_mut() {
            *c = local.community_of(*c);
        }
        let assignment = CommunityAssignment {
            membership: original.clone(),
            count: local.community_count(),
        };
        let q = modularity(g, &assignment)?;
        if let Some(prev) = levels.last() {
            if q <= prev.modularity + 1e-12 {
                break;
            }
        }
        levels.push(HierarchyLevel {
            level: levels.len(),
            community_count: assignment.community_count(),
            assignment,
            modularity: q,
        });
        if !moved || local.community_count() == 1 {
            break;
        }
        work = work.aggregate(&local);
    }
    Ok(levels)
}
