//! Undirected simple graphs, dense weighted adjacency matrices and degree
//! histograms.

pub mod generators;
pub mod io;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Undirected simple graph on nodes `0..node_count`.
///
/// Neighbor lists are kept sorted; edges have no direction, no duplicates and
/// no self-loops.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    edge_count: usize,
}

impl Graph {
    pub fn empty(node_count: usize) -> Self {
        Self {
            adj: vec![Vec::new(); node_count],
            edge_count: 0,
        }
    }

    /// Builds a graph from unordered pairs. Repeated and reversed pairs
    /// collapse into one edge.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = vec![Vec::new(); node_count];
        for (u, v) in edges {
            for id in [u, v] {
                if id >= node_count {
                    return Err(Error::NodeOutOfRange { id, node_count });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut twice = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            twice += list.len();
        }
        Ok(Self {
            adj,
            edge_count: twice / 2,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.adj.len() && self.adj[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Nodes with at least one incident edge.
    pub fn non_isolated_count(&self) -> usize {
        self.adj.iter().filter(|l| !l.is_empty()).count()
    }

    /// Number of nodes with each degree, isolated nodes included.
    pub fn degree_distribution(&self) -> DegreeHistogram {
        DegreeHistogram::from_degrees(self.adj.iter().map(Vec::len))
    }

    /// Subgraph induced by `nodes`, re-indexed to `0..nodes.len()` in list
    /// order.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let n = self.node_count();
        let mut position = vec![usize::MAX; n];
        for (i, &id) in nodes.iter().enumerate() {
            if id >= n {
                return Err(Error::NodeOutOfRange { id, node_count: n });
            }
            if position[id] != usize::MAX {
                return Err(Error::DuplicateNode(id));
            }
            position[id] = i;
        }
        let position = &position;
        let edges = nodes.iter().enumerate().flat_map(|(i, &u)| {
            self.adj[u]
                .iter()
                .filter_map(move |&v| Some(position[v]).filter(|&j| j != usize::MAX && j > i))
                .map(move |j| (i, j))
        });
        Graph::from_edges(nodes.len(), edges.collect::<Vec<_>>())
    }

    /// Binary adjacency matrix.
    pub fn to_adjacency(&self) -> WeightedAdjacency {
        let mut m = WeightedAdjacency::zeros(self.node_count());
        for (u, v) in self.edges() {
            m.set_symmetric(u, v, 1.0);
        }
        m
    }
}

/// Dense symmetric `N×N` matrix of non-negative weights with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedAdjacency {
    size: usize,
    entries: Vec<f64>,
}

impl WeightedAdjacency {
    pub fn zeros(size: usize) -> Self {
        Self {
            size,
            entries: vec![0.0; size * size],
        }
    }

    /// Validates symmetry, a zero diagonal and non-negative finite entries.
    pub fn from_dense(size: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != size * size {
            return Err(Error::SizeMismatch(format!(
                "{} entries for a {size}x{size} matrix",
                entries.len()
            )));
        }
        let m = Self { size, entries };
        for u in 0..size {
            if m.get(u, u) != 0.0 {
                return Err(Error::InvalidParameter(format!("nonzero diagonal at {u}")));
            }
            for v in 0..size {
                let w = m.get(u, v);
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidParameter(format!("entry ({u},{v}) = {w}")));
                }
                if w != m.get(v, u) {
                    return Err(Error::InvalidParameter(format!("asymmetric at ({u},{v})")));
                }
            }
        }
        Ok(m)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.entries[u * self.size + v]
    }

    pub fn set_symmetric(&mut self, u: usize, v: usize, w: f64) {
        debug_assert!(u != v || w == 0.0);
        self.entries[u * self.size + v] = w;
        self.entries[v * self.size + u] = w;
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.size).all(|u| (0..u).all(|v| self.get(u, v) == self.get(v, u)))
    }

    /// Nonzero upper-triangle entries as `(u, v, w)` with `u < v`.
    pub fn nonzero_upper(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size).flat_map(move |u| {
            (u + 1..self.size)
                .map(move |v| (u, v, self.get(u, v)))
                .filter(|t| t.2 != 0.0)
        })
    }
}

/// `(degree, count)` pairs with distinct degrees in ascending order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeHistogram(pub Vec<(usize, usize)>);

impl DegreeHistogram {
    pub fn from_degrees(degrees: impl IntoIterator<Item = usize>) -> Self {
        let mut counts = BTreeMap::new();
        for d in degrees {
            *counts.entry(d).or_insert(0usize) += 1;
        }
        Self(counts.into_iter().collect())
    }

    pub fn node_total(&self) -> usize {
        self.0.iter().map(|&(_, c)| c).sum()
    }

    pub fn max_degree(&self) -> usize {
        self.0.last().map_or(0, |&(d, _)| d)
    }

    /// L1 distance between the two histograms after normalizing each to
    /// frequencies; 0 for identical shapes, 2 for disjoint supports.
    pub fn l1_distance(&self, other: &DegreeHistogram) -> f64 {
        let (na, nb) = (self.node_total().max(1) as f64, other.node_total().max(1) as f64);
        let mut merged: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for &(d, c) in &self.0 {
            merged.entry(d).or_default().0 = c as f64 / na;
        }
        for &(d, c) in &other.0 {
            merged.entry(d).or_default().1 = c as f64 / nb;
        }
        merged.values().map(|(a, b)| (a - b).abs()).sum()
    }
}
