//! Random walk, random jump and forest fire node samplers that stop at a
//! requested node count.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const DEFAULT_RESTART_PROB: f64 = 0.15;
pub const DEFAULT_JUMP_PROB: f64 = 0.15;
pub const DEFAULT_BURN_PROB: f64 = 0.35;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    RandomWalk,
    RandomJump,
    ForestFire,
}

impl SampleMethod {
    pub const ALL: [SampleMethod; 3] = [
        SampleMethod::RandomWalk,
        SampleMethod::RandomJump,
        SampleMethod::ForestFire,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SampleMethod::RandomWalk => "random_walk",
            SampleMethod::RandomJump => "random_jump",
            SampleMethod::ForestFire => "forest_fire",
        }
    }

    /// Runs the method with its default probability.
    pub fn sample(self, g: &Graph, n: usize, seed: u64) -> Result<SampleResult> {
        match self {
            SampleMethod::RandomWalk => random_walk_sample(g, n, DEFAULT_RESTART_PROB, seed),
            SampleMethod::RandomJump => random_jump_sample(g, n, DEFAULT_JUMP_PROB, seed),
            SampleMethod::ForestFire => forest_fire_sample(g, n, DEFAULT_BURN_PROB, seed),
        }
    }
}

impl fmt::Display for SampleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rw" | "random_walk" => Ok(SampleMethod::RandomWalk),
            "rj" | "random_jump" => Ok(SampleMethod::RandomJump),
            "ff" | "forest_fire" => Ok(SampleMethod::ForestFire),
            other => Err(Error::InvalidParameter(format!("unknown sampling method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleResult {
    pub method: SampleMethod,
    /// Sampled node ids in visit order.
    pub nodes: Vec<usize>,
    /// Subgraph induced by `nodes`, re-indexed in visit order.
    pub subgraph: Graph,
    /// Set when the walk exhausted a component and had to restart elsewhere.
    pub partial: bool,
}

fn check_request(g: &Graph, n: usize) -> Result<()> {
    if n < 1 || n > g.node_count() {
        return Err(Error::InvalidParameter(format!(
            "cannot sample {n} nodes from a graph with {}",
            g.node_count()
        )));
    }
    Ok(())
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("{name} = {p} is not in [0, 1]")));
    }
    Ok(())
}

/// Component id of every node and the size of every component.
fn components(g: &Graph) -> (Vec<usize>, Vec<usize>) {
    let mut comp = vec![usize::MAX; g.node_count()];
    let mut sizes = Vec::new();
    for s in 0..g.node_count() {
        if comp[s] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        comp[s] = id;
        let mut stack = vec![s];
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for &v in g.neighbors(u) {
                if comp[v] == usize::MAX {
                    comp[v] = id;
                    stack.push(v);
                }
            }
        }
        sizes.push(size);
    }
    (comp, sizes)
}

/// Visit bookkeeping shared by the samplers.
struct Visits {
    seen: Vec<bool>,
    order: Vec<usize>,
    comp: Vec<usize>,
    comp_size: Vec<usize>,
    comp_seen: Vec<usize>,
}

impl Visits {
    fn new(g: &Graph) -> Self {
        let (comp, comp_size) = components(g);
        Self {
            seen: vec![false; g.node_count()],
            order: Vec::new(),
            comp_seen: vec![0; comp_size.len()],
            comp,
            comp_size,
        }
    }

    fn visit(&mut self, u: usize) {
        if !self.seen[u] {
            self.seen[u] = true;
            self.order.push(u);
            self.comp_seen[self.comp[u]] += 1;
        }
    }

    fn exhausted(&self, u: usize) -> bool {
        let c = self.comp[u];
        self.comp_seen[c] == self.comp_size[c]
    }

    fn random_unseen(&self, rng: &mut impl Rng) -> usize {
        let unseen: Vec<usize> = (0..self.seen.len()).filter(|&u| !self.seen[u]).collect();
        *unseen.choose(rng).expect("fewer than N nodes visited")
    }

    fn finish(self, g: &Graph, method: SampleMethod, partial: bool) -> Result<SampleResult> {
        Ok(SampleResult {
            method,
            subgraph: g.induced_subgraph(&self.order)?,
            nodes: self.order,
            partial,
        })
    }
}

/// Walks from a random start node, returning to it with probability
/// `restart_prob` at each step. If the start's component runs out of new
/// nodes, the walk restarts from a random unvisited node and the result is
/// flagged partial.
pub fn random_walk_sample(g: &Graph, n: usize, restart_prob: f64, seed: u64) -> Result<SampleResult> {
    check_request(g, n)?;
    check_probability("restart_prob", restart_prob)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visits = Visits::new(g);
    let mut start = rng.random_range(0..g.node_count());
    let mut current = start;
    let mut partial = false;
    visits.visit(start);
    while visits.order.len() < n {
        if visits.exhausted(current) {
            start = visits.random_unseen(&mut rng);
            current = start;
            partial = true;
            visits.visit(start);
            continue;
        }
        if rng.random_bool(restart_prob) {
            current = start;
            continue;
        }
        current = *g
            .neighbors(current)
            .choose(&mut rng)
            .expect("unexhausted component has edges");
        visits.visit(current);
    }
    visits.finish(g, SampleMethod::RandomWalk, partial)
}

/// Like the random walk, but with probability `jump_prob` the walker
/// teleports to a uniformly random node anywhere in the graph.
pub fn random_jump_sample(g: &Graph, n: usize, jump_prob: f64, seed: u64) -> Result<SampleResult> {
    check_request(g, n)?;
    check_probability("jump_prob", jump_prob)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visits = Visits::new(g);
    let mut current = rng.random_range(0..g.node_count());
    visits.visit(current);
    while visits.order.len() < n {
        current = if visits.exhausted(current) {
            // nothing new is reachable by walking; only a jump can help
            visits.random_unseen(&mut rng)
        } else if rng.random_bool(jump_prob) || g.degree(current) == 0 {
            rng.random_range(0..g.node_count())
        } else {
            *g.neighbors(current).choose(&mut rng).expect("degree checked")
        };
        visits.visit(current);
    }
    visits.finish(g, SampleMethod::RandomJump, false)
}

/// Forward-burning forest fire. Each burning node ignites a
/// geometrically distributed number of its unburned neighbors (mean
/// `burn_prob / (1 − burn_prob)`), breadth first. A dead fire is restarted
/// from a random unburned node, and the last wave is cut off at `n` nodes.
pub fn forest_fire_sample(g: &Graph, n: usize, burn_prob: f64, seed: u64) -> Result<SampleResult> {
    check_request(g, n)?;
    if !(0.0..1.0).contains(&burn_prob) {
        return Err(Error::InvalidParameter(format!(
            "burn_prob = {burn_prob} is not in [0, 1)"
        )));
    }
    let spread = Geometric::new(1.0 - burn_prob).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut visits = Visits::new(g);
    let mut queue = VecDeque::new();
    let first = rng.random_range(0..g.node_count());
    visits.visit(first);
    queue.push_back(first);
    while visits.order.len() < n {
        let Some(u) = queue.pop_front() else {
            let s = visits.random_unseen(&mut rng);
            visits.visit(s);
            queue.push_back(s);
            continue;
        };
        let burn = spread.sample(&mut rng) as usize;
        let mut fresh: Vec<usize> = g.neighbors(u).iter().copied().filter(|&v| !visits.seen[v]).collect();
        fresh.shuffle(&mut rng);
        for v in fresh.into_iter().take(burn) {
            if visits.order.len() == n {
                break;
            }
            visits.visit(v);
            queue.push_back(v);
        }
    }
    visits.finish(g, SampleMethod::ForestFire, false)
}
