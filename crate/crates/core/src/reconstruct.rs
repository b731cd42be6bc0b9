//! Fuses layer reconstructions and inter-part edges into one weighted
//! adjacency `re_G = Σ wᵢ G'ᵢ + w E + b` by gradient descent on a KL-style
//! divergence from the original adjacency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gan::LayerReconstruction;
use crate::graph::{Graph, WeightedAdjacency};
use crate::partition::PartitionResult;

pub const EPSILON: f64 = 1e-6;

/// Original edges that cross part boundaries in every layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterEdgeMatrix {
    size: usize,
    /// `(u, v)` with `u < v`, ascending.
    edges: Vec<(usize, usize)>,
}

impl InterEdgeMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        let key = if u < v { (u, v) } else { (v, u) };
        self.edges.binary_search(&key).is_ok()
    }

    pub fn to_adjacency(&self) -> WeightedAdjacency {
        let mut m = WeightedAdjacency::zeros(self.size);
        for &(u, v) in &self.edges {
            m.set_symmetric(u, v, 1.0);
        }
        m
    }
}

pub fn inter_edges(g: &Graph, partitions: &[PartitionResult]) -> Result<InterEdgeMatrix> {
    for (i, p) in partitions.iter().enumerate() {
        if p.assignment.len() != g.node_count() {
            return Err(Error::SizeMismatch(format!(
                "partition of layer {i} covers {} nodes, graph has {}",
                p.assignment.len(),
                g.node_count()
            )));
        }
    }
    let edges = g
        .edges()
        .filter(|&(u, v)| partitions.iter().all(|p| p.assignment[u] != p.assignment[v]))
        .collect();
    Ok(InterEdgeMatrix {
        size: g.node_count(),
        edges,
    })
}

/// `Σ (G + ε) ln((G + ε) / (re + ε))` over all `N²` entries.
pub fn kl_like_loss(re_g: &WeightedAdjacency, g: &Graph, epsilon: f64) -> Result<f64> {
    let n = g.node_count();
    if re_g.size() != n {
        return Err(Error::SizeMismatch(format!(
            "re_G is {0}x{0}, graph has {n} nodes",
            re_g.size()
        )));
    }
    let mut total = 0.0;
    for u in 0..n {
        for v in 0..n {
            let target = if g.has_edge(u, v) { 1.0 } else { 0.0 } + epsilon;
            total += target * (target / (re_g.get(u, v) + epsilon)).ln();
        }
    }
    Ok(total)
}

/// Which divergence a sum-up evaluation computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// `Σ (G+ε) ln((G+ε)/(re+ε))`, summed. Unbounded below in `re`.
    Literal,
    /// `mean[(G+ε) ln((G+ε)/(re+ε)) − G + re]`: the generalized KL
    /// divergence, non-negative and zero exactly at `re = G`.
    Generalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumUpParams {
    pub layer_weights: Vec<f64>,
    pub inter_weight: f64,
    pub bias: f64,
}

impl SumUpParams {
    pub fn initial(layers: usize) -> Self {
        Self {
            layer_weights: vec![1.0 / layers as f64; layers],
            inter_weight: 1.0,
            bias: 0.0,
        }
    }

    fn is_finite(&self) -> bool {
        self.layer_weights.iter().all(|w| w.is_finite()) && self.inter_weight.is_finite() && self.bias.is_finite()
    }
}

/// Gradient with the same layout as [`SumUpParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct SumUpGradient {
    pub layer_weights: Vec<f64>,
    pub inter_weight: f64,
    pub bias: f64,
}

impl SumUpGradient {
    pub fn norm(&self) -> f64 {
        let sq: f64 = self.layer_weights.iter().map(|g| g * g).sum();
        (sq + self.inter_weight * self.inter_weight + self.bias * self.bias).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub re_g: WeightedAdjacency,
    /// Generalized-KL objective at the returned parameters.
    pub final_loss: f64,
    /// The literal summed loss at the returned parameters.
    pub literal_loss: f64,
    /// Objective at every iterate, the initial one included.
    pub loss_history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumUpConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub epsilon: f64,
    /// Gradients longer than this are rescaled to it before each step. A
    /// true edge reconstructed as 0 contributes a gradient of order 1/ε, so
    /// unclipped steps overshoot by orders of magnitude.
    pub max_grad_norm: f64,
}

impl Default for SumUpConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            learning_rate: 0.1,
            epsilon: EPSILON,
            max_grad_norm: 1.0,
        }
    }
}

/// Inputs of the sum-up, checked for consistent sizes.
pub struct SumUpProblem<'a> {
    layers: Vec<&'a WeightedAdjacency>,
    inter: WeightedAdjacency,
    target: WeightedAdjacency,
}

impl<'a> SumUpProblem<'a> {
    pub fn new(layers: &'a [LayerReconstruction], e: &InterEdgeMatrix, g: &Graph) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("sum-up needs at least one layer".into()));
        }
        let n = g.node_count();
        for l in layers {
            if l.g_prime.size() != n {
                return Err(Error::SizeMismatch(format!(
                    "layer {} reconstruction is {1}x{1}, graph has {n} nodes",
                    l.layer_id,
                    l.g_prime.size()
                )));
            }
        }
        if e.size() != n {
            return Err(Error::SizeMismatch(format!(
                "inter-edge matrix is {0}x{0}, graph has {n} nodes",
                e.size()
            )));
        }
        Ok(Self {
            layers: layers.iter().map(|l| &l.g_prime).collect(),
            inter: e.to_adjacency(),
            target: g.to_adjacency(),
        })
    }

    fn size(&self) -> usize {
        self.target.size()
    }

    /// Unclamped off-diagonal entry of `Σ wᵢ G'ᵢ + w E + b`.
    fn raw(&self, p: &SumUpParams, u: usize, v: usize) -> f64 {
        let mut r = p.bias + p.inter_weight * self.inter.get(u, v);
        for (w, l) in p.layer_weights.iter().zip(&self.layers) {
            r += w * l.get(u, v);
        }
        r
    }

    /// `re_G` with negative entries clamped to 0 and a zero diagonal.
    pub fn reconstruct(&self, p: &SumUpParams) -> WeightedAdjacency {
        let n = self.size();
        let mut m = WeightedAdjacency::zeros(n);
        for u in 0..n {
            for v in u + 1..n {
                m.set_symmetric(u, v, self.raw(p, u, v).max(0.0));
            }
        }
        m
    }

    /// Objective value and its gradient. Entries whose raw value is negative
    /// are clamped and pass no gradient; diagonal entries are fixed at 0.
    pub fn loss_and_grad(&self, p: &SumUpParams, objective: Objective, epsilon: f64) -> (f64, SumUpGradient) {
        let n = self.size();
        let mut loss = 0.0;
        let mut grad = SumUpGradient {
            layer_weights: vec![0.0; self.layers.len()],
            inter_weight: 0.0,
            bias: 0.0,
        };
        // diagonal: G = re = 0, so the literal term is ε·ln 1 = 0 and the
        // generalized term is 0 as well
        for u in 0..n {
            for v in u + 1..n {
                let raw = self.raw(p, u, v);
                let re = raw.max(0.0);
                let target = self.target.get(u, v) + epsilon;
                let log_ratio = (target / (re + epsilon)).ln();
                let (term, d_re) = match objective {
                    Objective::Literal => (target * log_ratio, -target / (re + epsilon)),
                    Objective::Generalized => (
                        target * log_ratio - self.target.get(u, v) + re,
                        1.0 - target / (re + epsilon),
                    ),
                };
                // each off-diagonal pair appears twice in the N² sum
                loss += 2.0 * term;
                if raw < 0.0 {
                    continue;
                }
                let d = 2.0 * d_re;
                grad.bias += d;
                grad.inter_weight += d * self.inter.get(u, v);
                for (gw, l) in grad.layer_weights.iter_mut().zip(&self.layers) {
                    *gw += d * l.get(u, v);
                }
            }
        }
        if objective == Objective::Generalized {
            let scale = 1.0 / (n * n) as f64;
            loss *= scale;
            grad.bias *= scale;
            grad.inter_weight *= scale;
            grad.layer_weights.iter_mut().for_each(|g| *g *= scale);
        }
        (loss, grad)
    }
}

/// Full-batch gradient descent from `wᵢ = 1/L, w = 1, b = 0`, projecting the
/// weights onto `≥ 0` after each step. Returns the best iterate seen.
pub fn sum_up(
    layers: &[LayerReconstruction],
    e: &InterEdgeMatrix,
    g: &Graph,
    cfg: &SumUpConfig,
) -> Result<(SumUpParams, Reconstruction)> {
    if cfg.max_grad_norm.is_nan() || cfg.max_grad_norm <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "max_grad_norm {} must be positive",
            cfg.max_grad_norm
        )));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "sum-up learning rate {} must be positive",
            cfg.learning_rate
        )));
    }
    let problem = SumUpProblem::new(layers, e, g)?;
    let mut params = SumUpParams::initial(layers.len());
    let mut best: Option<(f64, SumUpParams)> = None;
    let mut history = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..=cfg.iterations {
        let (loss, grad) = problem.loss_and_grad(&params, Objective::Generalized, cfg.epsilon);
        if !loss.is_finite() || !params.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                detail: format!("sum-up loss is {loss}"),
            });
        }
        history.push(loss);
        if best.as_ref().is_none_or(|b| loss < b.0) {
            best = Some((loss, params.clone()));
        }
        if it == cfg.iterations {
            break;
        }
        let norm = grad.norm();
        let lr = if norm > cfg.max_grad_norm {
            cfg.learning_rate * cfg.max_grad_norm / norm
        } else {
            cfg.learning_rate
        };
        for (w, gw) in params.layer_weights.iter_mut().zip(&grad.layer_weights) {
            *w = (*w - lr * gw).max(0.0);
        }
        params.inter_weight = (params.inter_weight - lr * grad.inter_weight).max(0.0);
        params.bias -= lr * grad.bias;
    }
    let (final_loss, params) = best.expect("at least the initial iterate");
    let re_g = problem.reconstruct(&params);
    let literal_loss = kl_like_loss(&re_g, g, cfg.epsilon)?;
    Ok((
        params,
        Reconstruction {
            re_g,
            final_loss,
            literal_loss,
            loss_history: history,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_balanced;

    fn path4() -> Graph {
        Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn inter_edges_examples() {
        let g = path4();
        let one = partition_balanced(&g, 1, 0.05, 0).unwrap();
        assert!(inter_edges(&g, &[one]).unwrap().edges().is_empty());
        let two = partition_balanced(&g, 2, 0.05, 0).unwrap();
        let e = inter_edges(&g, &[two]).unwrap();
        assert_eq!(e.edges(), &[(1, 2)]);
        assert!(e.contains(2, 1));
    }

    #[test]
    fn kl_examples() {
        let k2 = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(kl_like_loss(&k2.to_adjacency(), &k2, EPSILON).unwrap(), 0.0);
        let zero = WeightedAdjacency::zeros(2);
        let expected = 2.0 * (1.0 + 1e-6) * ((1.0 + 1e-6) / 1e-6f64).ln();
        assert!((kl_like_loss(&zero, &k2, EPSILON).unwrap() - expected).abs() < 1e-9);
        // the per-entry term of the literal example
        assert!((expected / 2.0 - 13.8155).abs() < 1e-4);
        assert!(kl_like_loss(&zero, &path4(), EPSILON).is_err());
    }

    #[test]
    fn kl_decreases_with_larger_reconstruction() {
        let g = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]).unwrap();
        let scaled = |f: f64| {
            let mut m = WeightedAdjacency::zeros(5);
            for (u, v) in g.edges() {
                m.set_symmetric(u, v, f);
            }
            m
        };
        let high = kl_like_loss(&scaled(2.0), &g, EPSILON).unwrap();
        let low = kl_like_loss(&scaled(0.5), &g, EPSILON).unwrap();
        assert!(high < low);
    }

    #[test]
    fn sum_up_rejects_empty_and_mismatched_inputs() {
        let g = path4();
        let e = inter_edges(&g, &[]).unwrap();
        assert!(sum_up(&[], &e, &g, &SumUpConfig::default()).is_err());
        let bad = LayerReconstruction {
            layer_id: 0,
            g_prime: WeightedAdjacency::zeros(3),
        };
        assert!(sum_up(&[bad], &e, &g, &SumUpConfig::default()).is_err());
    }

    #[test]
    fn all_zero_inputs_terminate() {
        let g = path4();
        let e = InterEdgeMatrix {
            size: 4,
            edges: Vec::new(),
        };
        let layer = LayerReconstruction {
            layer_id: 0,
            g_prime: WeightedAdjacency::zeros(4),
        };
        let (p, r) = sum_up(&[layer], &e, &g, &SumUpConfig::default()).unwrap();
        assert!(r.final_loss.is_finite());
        assert!(r.final_loss <= r.loss_history[0]);
        assert!(p.bias.is_finite());
        // re_G = b everywhere off the diagonal
        let b = p.bias.max(0.0);
        assert!((0..4).all(|u| (0..4).all(|v| r.re_g.get(u, v) == if u == v { 0.0 } else { b })));
    }
}
