//! Nested edge stages obtained by thresholding the reconstruction at its
//! largest distinct weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeHistogram, Graph, WeightedAdjacency};

pub const DEFAULT_MAX_STAGES: usize = 8;

/// Edges whose reconstructed weight reaches the stage's cut value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// 1 for the highest cut value.
    pub index: usize,
    pub cut_value: f64,
    pub node_count: usize,
    /// `(u, v)` with `u < v`, ascending.
    pub edges: Vec<(usize, usize)>,
    pub deleted_edge_pct: f64,
}

impl Stage {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn to_graph(&self) -> Graph {
        Graph::from_edges(self.node_count, self.edges.iter().copied()).expect("stage edges come from a graph")
    }
}

/// Weight rounded to three decimals, as an integer number of thousandths.
fn milli(w: f64) -> i64 {
    (w * 1000.0).round() as i64
}

/// Indices of the kept cut values among `unique` distinct values: all of
/// them, or `max_stages` evenly spaced ones including both ends.
fn spaced_indices(unique: usize, max_stages: usize) -> Vec<usize> {
    if unique <= max_stages {
        return (0..unique).collect();
    }
    if max_stages == 1 {
        return vec![unique - 1];
    }
    (0..max_stages)
        .map(|j| ((j * (unique - 1)) as f64 / (max_stages - 1) as f64).round() as usize)
        .collect()
}

/// Masks `re_g` by the edges of `g`, rounds the surviving weights to three
/// decimals and cuts at up to `max_stages` distinct values, largest first.
/// Edges whose weight rounds to zero belong to no stage.
pub fn identify_stages(re_g: &WeightedAdjacency, g: &Graph, max_stages: usize) -> Result<Vec<Stage>> {
    let n = g.node_count();
    if re_g.size() != n {
        return Err(Error::SizeMismatch(format!(
            "re_G is {0}x{0}, graph has {n} nodes",
            re_g.size()
        )));
    }
    if max_stages < 1 {
        return Err(Error::InvalidParameter("max_stages must be at least 1".into()));
    }
    let weighted: Vec<((usize, usize), i64)> = g
        .edges()
        .map(|(u, v)| ((u, v), milli(re_g.get(u, v))))
        .filter(|&(_, key)| key >= 1)
        .collect();
    if weighted.is_empty() {
        return Err(Error::Degenerate(
            "the reconstruction gives every original edge a weight of about zero; inspect the sum-up parameters".into(),
        ));
    }
    let mut unique: Vec<i64> = weighted.iter().map(|&(_, k)| k).collect();
    unique.sort_unstable_by(|a, b| b.cmp(a));
    unique.dedup();

    let total = g.edge_count() as f64;
    Ok(spaced_indices(unique.len(), max_stages)
        .into_iter()
        .enumerate()
        .map(|(i, idx)| {
            let cut = unique[idx];
            let edges: Vec<(usize, usize)> = weighted.iter().filter(|&&(_, k)| k >= cut).map(|&(e, _)| e).collect();
            Stage {
                index: i + 1,
                cut_value: cut as f64 / 1000.0,
                node_count: n,
                deleted_edge_pct: 100.0 * (total - edges.len() as f64) / total,
                edges,
            }
        })
        .collect())
}

/// Percentage of `g`'s edges missing from the stage.
pub fn deleted_edge_percentage(stage: &Stage, g: &Graph) -> Result<f64> {
    if stage.node_count != g.node_count() {
        return Err(Error::SizeMismatch(format!(
            "stage has {} nodes, graph has {}",
            stage.node_count,
            g.node_count()
        )));
    }
    if g.edge_count() == 0 {
        return Err(Error::Degenerate("graph has no edges".into()));
    }
    let kept = stage.edges.iter().filter(|&&(u, v)| g.has_edge(u, v)).count();
    Ok(100.0 * (g.edge_count() - kept) as f64 / g.edge_count() as f64)
}

/// Degree histogram of the stage's edge set over all `N` nodes.
pub fn stage_degree_distribution(stage: &Stage) -> DegreeHistogram {
    let mut degree = vec![0; stage.node_count];
    for &(u, v) in &stage.edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    DegreeHistogram::from_degrees(degree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_with_weights(ws: [f64; 4]) -> (Graph, WeightedAdjacency) {
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let mut m = WeightedAdjacency::zeros(4);
        for ((u, v), w) in g.edges().zip(ws) {
            m.set_symmetric(u, v, w);
        }
        (g, m)
    }

    #[test]
    fn distinct_weights_give_nested_stages() {
        let (g, m) = square_with_weights([0.9, 0.5, 0.5, 0.2]);
        let stages = identify_stages(&m, &g, 8).unwrap();
        let counts: Vec<usize> = stages.iter().map(Stage::edge_count).collect();
        assert_eq!(counts, vec![1, 3, 4]);
        assert_eq!(stages[0].cut_value, 0.9);
        assert_eq!(stages[2].deleted_edge_pct, 0.0);
        assert_eq!(stages[0].deleted_edge_pct, 75.0);
    }

    #[test]
    fn equal_weights_give_one_stage() {
        let (g, m) = square_with_weights([0.4; 4]);
        let stages = identify_stages(&m, &g, 8).unwrap();
        assert_eq!(stages.len(), 1);
        assert_eq!(stages[0].edge_count(), 4);
    }

    #[test]
    fn non_edges_and_near_zero_weights_are_ignored() {
        let (g, mut m) = square_with_weights([0.9, 0.0004, 0.3, 0.3]);
        m.set_symmetric(0, 2, 5.0);
        let stages = identify_stages(&m, &g, 8).unwrap();
        assert_eq!(stages.len(), 2);
        assert!(stages.iter().all(|s| s.edges.iter().all(|&(u, v)| g.has_edge(u, v))));
        assert_eq!(stages[1].deleted_edge_pct, 25.0);
    }

    #[test]
    fn all_zero_reconstruction_is_degenerate() {
        let (g, m) = square_with_weights([0.0; 4]);
        assert!(matches!(identify_stages(&m, &g, 8), Err(Error::Degenerate(_))));
    }

    #[test]
    fn cut_values_are_spaced_when_capped() {
        assert_eq!(spaced_indices(3, 8), vec![0, 1, 2]);
        assert_eq!(spaced_indices(10, 4), vec![0, 3, 6, 9]);
        assert_eq!(spaced_indices(10, 2), vec![0, 9]);
        assert_eq!(spaced_indices(10, 1), vec![9]);
        let (g, m) = square_with_weights([0.9, 0.7, 0.5, 0.2]);
        let stages = identify_stages(&m, &g, 2).unwrap();
        assert_eq!(stages.iter().map(|s| s.cut_value).collect::<Vec<_>>(), vec![0.9, 0.2]);
    }

    #[test]
    fn percentages_and_histograms() {
        let (g, _) = square_with_weights([0.0; 4]);
        let full = Stage {
            index: 1,
            cut_value: 1.0,
            node_count: 4,
            edges: g.edges().collect(),
            deleted_edge_pct: 0.0,
        };
        assert_eq!(deleted_edge_percentage(&full, &g).unwrap(), 0.0);
        assert_eq!(stage_degree_distribution(&full), g.degree_distribution());
        let half = Stage {
            edges: vec![(0, 1), (2, 3)],
            ..full.clone()
        };
        assert_eq!(deleted_edge_percentage(&half, &g).unwrap(), 50.0);
        let empty = Stage {
            edges: Vec::new(),
            ..full
        };
        assert_eq!(deleted_edge_percentage(&empty, &g).unwrap(), 100.0);
        assert_eq!(stage_degree_distribution(&empty).0, vec![(0, 4)]);
        assert!(deleted_edge_percentage(&empty, &Graph::empty(4)).is_err());
    }
}
