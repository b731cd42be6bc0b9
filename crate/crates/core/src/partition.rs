//! Balanced k-way partitioning in the multilevel style: heavy-edge matching
//! coarsens the graph, greedy graph growing partitions the coarsest graph,
//! and boundary FM refinement cleans up each level on the way back.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const DEFAULT_TOLERANCE: f64 = 0.05;
const INITIAL_TRIES: usize = 8;
const MAX_FM_PASSES: usize = 12;
/// FM gives up on a pass after this many moves without a new best cut.
const FM_PATIENCE: usize = 64;

/// An initial partition scored by (over capacity, cut), with its refinement trace.
type Candidate = ((bool, u64), Vec<usize>, Vec<(u64, u64)>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    /// Node ids of each part, ascending.
    pub parts: Vec<Vec<usize>>,
    pub part_sizes: Vec<usize>,
    pub cut_edges: usize,
    /// Largest part size over the ideal size `N / M`.
    pub balance: f64,
    /// Part of each node.
    pub assignment: Vec<usize>,
    /// Weighted cut before and after every FM pass, over all levels.
    #[serde(skip)]
    pub refinement_trace: Vec<(u64, u64)>,
}

impl PartitionResult {
    pub fn max_part_size(&self) -> usize {
        self.part_sizes.iter().copied().max().unwrap_or(0)
    }

    fn from_assignment(g: &Graph, m: usize, assignment: Vec<usize>, trace: Vec<(u64, u64)>) -> Self {
        let mut parts = vec![Vec::new(); m];
        for (u, &p) in assignment.iter().enumerate() {
            parts[p].push(u);
        }
        let part_sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        let cut_edges = g.edges().filter(|&(u, v)| assignment[u] != assignment[v]).count();
        let ideal = g.node_count() as f64 / m as f64;
        Self {
            balance: *part_sizes.iter().max().unwrap_or(&0) as f64 / ideal,
            parts,
            part_sizes,
            cut_edges,
            assignment,
            refinement_trace: trace,
        }
    }
}

/// Largest allowed part: `(1 + tolerance)·N/M`, but never below `⌈N/M⌉`,
/// which no partition can beat.
pub fn max_part_size(n: usize, m: usize, tolerance: f64) -> usize {
    let relaxed = ((1.0 + tolerance) * n as f64 / m as f64 + 1e-9).floor() as usize;
    relaxed.max(n.div_ceil(m))
}

/// Node- and edge-weighted graph used across coarsening levels.
#[derive(Clone, Debug)]
struct WGraph {
    vw: Vec<usize>,
    adj: Vec<Vec<(usize, u64)>>,
}

impl WGraph {
    fn from_graph(g: &Graph) -> Self {
        Self {
            vw: vec![1; g.node_count()],
            adj: (0..g.node_count())
                .map(|u| g.neighbors(u).iter().map(|&v| (v, 1)).collect())
                .collect(),
        }
    }

    fn len(&self) -> usize {
        self.vw.len()
    }

    fn cut(&self, part: &[usize]) -> u64 {
        let twice: u64 = (0..self.len())
            .flat_map(|u| self.adj[u].iter().map(move |&(v, w)| (u, v, w)))
            .filter(|&(u, v, _)| part[u] != part[v])
            .map(|(_, _, w)| w)
            .sum();
        twice / 2
    }

    /// Heavy-edge matching. Returns the coarse graph and the fine→coarse map.
    fn coarsen(&self, max_node_weight: usize, rng: &mut impl Rng) -> (WGraph, Vec<usize>) {
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut mate = vec![usize::MAX; n];
        for &u in &order {
            if mate[u] != usize::MAX {
                continue;
            }
            let mut best: Option<(u64, usize)> = None;
            for &(v, w) in &self.adj[u] {
                if mate[v] == usize::MAX && self.vw[u] + self.vw[v] <= max_node_weight && best.is_none_or(|b| w > b.0) {
                    best = Some((w, v));
                }
            }
            let v = best.map_or(u, |b| b.1);
            mate[u] = v;
            mate[v] = u;
        }

        let mut cmap = vec![usize::MAX; n];
        let mut count = 0;
        for u in 0..n {
            if cmap[u] == usize::MAX {
                cmap[u] = count;
                cmap[mate[u]] = count;
                count += 1;
            }
        }
        let mut vw = vec![0; count];
        for u in 0..n {
            vw[cmap[u]] += self.vw[u];
        }
        let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); count];
        let mut slot = vec![usize::MAX; count];
        for u in 0..n {
            let cu = cmap[u];
            if mate[u] < u {
                continue;
            }
            let members = if mate[u] == u { vec![u] } else { vec![u, mate[u]] };
            let list = &mut adj[cu];
            for x in members {
                for &(v, w) in &self.adj[x] {
                    let cv = cmap[v];
                    if cv == cu {
                        continue;
                    }
                    if slot[cv] == usize::MAX {
                        slot[cv] = list.len();
                        list.push((cv, 0));
                    }
                    list[slot[cv]].1 += w;
                }
            }
            for &(cv, _) in list.iter() {
                slot[cv] = usize::MAX;
            }
        }
        (WGraph { vw, adj }, cmap)
    }
}

/// Mutable partition state with per-node connectivity to every part.
struct State<'a> {
    g: &'a WGraph,
    parts: usize,
    cap: usize,
    part: Vec<usize>,
    weight: Vec<usize>,
    conn: Vec<u64>,
}

impl<'a> State<'a> {
    fn new(g: &'a WGraph, parts: usize, cap: usize, part: Vec<usize>) -> Self {
        let mut weight = vec![0; parts];
        for (u, &p) in part.iter().enumerate() {
            weight[p] += g.vw[u];
        }
        let mut conn = vec![0; g.len() * parts];
        for u in 0..g.len() {
            for &(v, w) in &g.adj[u] {
                conn[u * parts + part[v]] += w;
            }
        }
        Self {
            g,
            parts,
            cap,
            part,
            weight,
            conn,
        }
    }

    fn conn(&self, u: usize, p: usize) -> u64 {
        self.conn[u * self.parts + p]
    }

    fn gain(&self, u: usize, to: usize) -> i64 {
        self.conn(u, to) as i64 - self.conn(u, self.part[u]) as i64
    }

    fn fits(&self, u: usize, to: usize) -> bool {
        let from = self.part[u];
        to != from && self.weight[to] + self.g.vw[u] <= self.cap && self.weight[from] > self.g.vw[u]
    }

    fn move_node(&mut self, u: usize, to: usize) {
        let from = self.part[u];
        self.part[u] = to;
        self.weight[from] -= self.g.vw[u];
        self.weight[to] += self.g.vw[u];
        for &(v, w) in &self.g.adj[u] {
            self.conn[v * self.parts + from] -= w;
            self.conn[v * self.parts + to] += w;
        }
    }

    /// Best feasible move of `u` into an adjacent part.
    fn best_move(&self, u: usize) -> Option<(i64, usize)> {
        let mut best: Option<(i64, usize)> = None;
        for &(v, _) in &self.g.adj[u] {
            let q = self.part[v];
            if self.fits(u, q) {
                let gain = self.gain(u, q);
                if best.is_none_or(|b| gain > b.0 || (gain == b.0 && self.weight[q] < self.weight[b.1])) {
                    best = Some((gain, q));
                }
            }
        }
        best
    }

    /// One FM pass. Moves are tentatively applied in gain order, then rolled
    /// back to the best prefix, so the cut never increases.
    fn fm_pass(&mut self) -> (u64, u64) {
        let before = self.g.cut(&self.part);
        let n = self.g.len();
        let mut heap = BinaryHeap::new();
        for u in 0..n {
            if let Some((gain, q)) = self.best_move(u) {
                heap.push((gain, Reverse(u), q));
            }
        }
        let mut locked = vec![false; n];
        let mut log: Vec<(usize, usize)> = Vec::new();
        let (mut total, mut best_total, mut best_len) = (0i64, 0i64, 0usize);
        while let Some((gain, Reverse(u), q)) = heap.pop() {
            if locked[u] {
                continue;
            }
            match self.best_move(u) {
                Some((g2, q2)) if (g2, q2) == (gain, q) => {}
                Some((g2, q2)) => {
                    heap.push((g2, Reverse(u), q2));
                    continue;
                }
                None => continue,
            }
            let from = self.part[u];
            self.move_node(u, q);
            locked[u] = true;
            log.push((u, from));
            total += gain;
            if total > best_total {
                best_total = total;
                best_len = log.len();
            } else if log.len() - best_len > FM_PATIENCE {
                break;
            }
            for &(v, _) in &self.g.adj[u] {
                if !locked[v] {
                    if let Some((g, q)) = self.best_move(v) {
                        heap.push((g, Reverse(v), q));
                    }
                }
            }
        }
        for &(u, from) in log[best_len..].iter().rev() {
            self.move_node(u, from);
        }
        let after = self.g.cut(&self.part);
        debug_assert!(after <= before);
        debug_assert_eq!(before as i64 - best_total, after as i64);
        (before, after)
    }

    fn refine(&mut self, trace: &mut Vec<(u64, u64)>) {
        for _ in 0..MAX_FM_PASSES {
            let (before, after) = self.fm_pass();
            trace.push((before, after));
            if after == before {
                break;
            }
        }
    }

    /// Moves nodes out of overweight parts, cheapest cut increase first.
    /// May leave parts over the cap on coarse levels where node weights
    /// are too lumpy.
    fn rebalance(&mut self) {
        loop {
            let Some(over) = (0..self.parts).find(|&p| self.weight[p] > self.cap) else {
                return;
            };
            let mut best: Option<(i64, usize, usize)> = None;
            for u in (0..self.g.len()).filter(|&u| self.part[u] == over) {
                for q in 0..self.parts {
                    if self.fits(u, q) {
                        let gain = self.gain(u, q);
                        if best.is_none_or(|b| gain > b.0) {
                            best = Some((gain, u, q));
                        }
                    }
                }
            }
            match best {
                Some((_, u, q)) => self.move_node(u, q),
                None => return,
            }
        }
    }

    /// Gives every empty part one node from the largest part.
    fn fill_empty(&mut self) {
        while let Some(empty) = (0..self.parts).find(|&p| self.weight[p] == 0) {
            let largest = (0..self.parts).max_by_key(|&p| (self.weight[p], Reverse(p))).unwrap();
            let u = (0..self.g.len())
                .filter(|&u| self.part[u] == largest)
                .max_by_key(|&u| (self.gain(u, empty), Reverse(u)))
                .expect("largest part is non-empty");
            self.move_node(u, empty);
        }
    }
}

/// Grows parts one at a time by BFS with max connectivity to the growing
/// part; the last part takes whatever remains.
fn grow_initial(g: &WGraph, parts: usize, cap: usize, rng: &mut impl Rng) -> Vec<usize> {
    let n = g.len();
    let unassigned = usize::MAX;
    let mut part = vec![unassigned; n];
    let mut remaining: usize = g.vw.iter().sum();
    let mut affinity = vec![0u64; n];
    for p in 0..parts - 1 {
        let target = remaining.div_ceil(parts - p).min(cap);
        let mut weight = 0;
        let mut frontier: Vec<usize> = Vec::new();
        while weight < target {
            frontier.retain(|&v| part[v] == unassigned);
            let next = frontier
                .iter()
                .copied()
                .filter(|&v| weight + g.vw[v] <= cap)
                .max_by_key(|&v| (affinity[v], Reverse(v)));
            let v = match next {
                Some(v) => v,
                None => {
                    let free: Vec<usize> = (0..n)
                        .filter(|&v| part[v] == unassigned && weight + g.vw[v] <= cap)
                        .collect();
                    match free.choose(rng) {
                        Some(&v) => v,
                        None => break,
                    }
                }
            };
            part[v] = p;
            weight += g.vw[v];
            for &(x, w) in &g.adj[v] {
                if part[x] == unassigned {
                    if affinity[x] == 0 {
                        frontier.push(x);
                    }
                    affinity[x] += w;
                }
            }
        }
        for &v in &frontier {
            affinity[v] = 0;
        }
        remaining -= weight;
    }
    for p in part.iter_mut().filter(|p| **p == unassigned) {
        *p = parts - 1;
    }
    part
}

/// Splits `g` into `parts` disjoint node sets of near-equal size with few
/// crossing edges. Deterministic for a fixed seed.
pub fn partition_balanced(g: &Graph, parts: usize, tolerance: f64, seed: u64) -> Result<PartitionResult> {
    let n = g.node_count();
    if parts < 1 || parts > n {
        return Err(Error::InvalidParameter(format!(
            "cannot split {n} nodes into {parts} parts"
        )));
    }
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {tolerance} must be a non-negative number"
        )));
    }
    if parts == 1 {
        return Ok(PartitionResult::from_assignment(g, 1, vec![0; n], Vec::new()));
    }
    if parts == n {
        return Ok(PartitionResult::from_assignment(g, n, (0..n).collect(), Vec::new()));
    }

    let cap = max_part_size(n, parts, tolerance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coarsen_to = (4 * parts).max(64);
    let max_node_weight = ((1.5 * n as f64 / coarsen_to as f64) as usize).clamp(1, cap);

    let mut levels = vec![WGraph::from_graph(g)];
    let mut maps: Vec<Vec<usize>> = Vec::new();
    while levels.last().unwrap().len() > coarsen_to {
        let fine = levels.last().unwrap();
        let (coarse, map) = fine.coarsen(max_node_weight, &mut rng);
        if coarse.len() as f64 > 0.95 * fine.len() as f64 {
            break;
        }
        levels.push(coarse);
        maps.push(map);
    }

    let mut trace = Vec::new();
    let coarsest = levels.last().unwrap();
    let mut best: Option<Candidate> = None;
    for _ in 0..INITIAL_TRIES {
        let mut try_trace = Vec::new();
        let mut st = State::new(coarsest, parts, cap, grow_initial(coarsest, parts, cap, &mut rng));
        st.rebalance();
        st.refine(&mut try_trace);
        let over = st.weight.iter().any(|&w| w > cap);
        let key = (over, coarsest.cut(&st.part));
        if best.as_ref().is_none_or(|b| key < b.0) {
            best = Some((key, st.part, try_trace));
        }
    }
    let (_, mut part, first_trace) = best.expect("at least one try");
    trace.extend(first_trace);

    for depth in (0..maps.len()).rev() {
        let fine = &levels[depth];
        part = maps[depth].iter().map(|&c| part[c]).collect();
        let mut st = State::new(fine, parts, cap, part);
        st.rebalance();
        if depth == 0 {
            st.fill_empty();
            st.rebalance();
        }
        st.refine(&mut trace);
        part = st.part;
    }
    if maps.is_empty() {
        let mut st = State::new(&levels[0], parts, cap, part);
        st.fill_empty();
        st.rebalance();
        st.refine(&mut trace);
        part = st.part;
    }
    Ok(PartitionResult::from_assignment(g, parts, part, trace))
}
