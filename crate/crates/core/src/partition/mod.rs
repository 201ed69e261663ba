//! Balanced p-way partitioners: random (RP), graph-model FM (GP),
//! hypergraph-model FM (HP) and stochastic hypergraph partitioning (SHP).
//!
//! GP and HP use recursive bisection (p must be a power of two) with flat
//! FM refinement, followed by a k-way repair pass that moves vertices out
//! of any part still above `(1 + epsilon) * W_avg`.

mod fm;

use std::cmp::Reverse;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    balance_cap, build_hypergraph_model, build_stochastic_hypergraph, connectivity_cut, Hypergraph, MiniBatchSpec,
    Partition, UGraph,
};
use crate::sparse::SparseMatrix;
use fm::SubProblem;

/// Seeded region-growing starts tried per bisection; subproblems of at most
/// `SMALL_SUBPROBLEM` vertices get four times as many.
const BISECTION_TRIES: usize = 4;
const SMALL_SUBPROBLEM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub p: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub fm_passes: usize,
    pub refinement: bool,
}

impl PartitionConfig {
    pub fn new(p: usize, seed: u64) -> Self {
        Self {
            p,
            epsilon: 0.01,
            seed,
            fm_passes: 8,
            refinement: true,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidArgument("p must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid epsilon {}", self.epsilon)));
        }
        if self.p > n {
            return Err(Error::InvalidArgument(format!(
                "p = {} exceeds {} vertices",
                self.p, n
            )));
        }
        Ok(())
    }
}

fn check_vertex_weights(weights: &[u64], cfg: &PartitionConfig) -> Result<f64> {
    let cap = balance_cap(weights.iter().sum(), cfg.p, cfg.epsilon);
    if let Some(v) = weights.iter().position(|&w| w as f64 > cap) {
        return Err(Error::Infeasible(format!(
            "vertex {v} weighs {} but parts may hold at most {cap}",
            weights[v]
        )));
    }
    Ok(cap)
}

/// Seeded uniform assignment followed by balance repair.
pub fn random_partition(weights: &[u64], cfg: &PartitionConfig) -> Result<Partition> {
    cfg.validate(weights.len())?;
    let cap = check_vertex_weights(weights, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut assignment: Vec<usize> = (0..weights.len()).map(|_| rng.random_range(0..cfg.p)).collect();
    repair(&mut assignment, weights, cfg.p, cap, None)?;
    Partition::new(cfg.p, assignment, weights, cfg.epsilon)
}

pub fn partition_graph_fm(g: &UGraph, cfg: &PartitionConfig) -> Result<Partition> {
    partition_hypergraph_fm(&g.as_hypergraph(), cfg)
}

pub fn partition_hypergraph_fm(h: &Hypergraph, cfg: &PartitionConfig) -> Result<Partition> {
    cfg.validate(h.n_vertices())?;
    if !cfg.p.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "recursive bisection needs p to be a power of two, got {}",
            cfg.p
        )));
    }
    let cap = check_vertex_weights(h.vertex_weight(), cfg)?;
    let root = SubProblem {
        global_ids: (0..h.n_vertices()).collect(),
        weights: h.vertex_weight().to_vec(),
        nets: h
            .nets()
            .iter()
            .filter(|pins| pins.len() >= 2)
            .map(|pins| pins.iter().map(|&v| v as u32).collect())
            .collect(),
        costs: h
            .nets()
            .iter()
            .zip(h.net_cost())
            .filter(|(pins, _)| pins.len() >= 2)
            .map(|(_, &c)| c)
            .collect(),
    };
    let levels = cfg.p.trailing_zeros();
    let level_eps = if levels == 0 {
        cfg.epsilon
    } else {
        (1.0 + cfg.epsilon).powf(1.0 / levels as f64) - 1.0
    };
    let mut assignment = vec![0usize; h.n_vertices()];
    recurse(&root, 0, cfg.p, level_eps, cfg, &mut assignment);
    repair(&mut assignment, h.vertex_weight(), cfg.p, cap, Some(h))?;
    Partition::new(cfg.p, assignment, h.vertex_weight(), cfg.epsilon)
}

fn recurse(sub: &SubProblem, first_part: usize, k: usize, level_eps: f64, cfg: &PartitionConfig, assignment: &mut [usize]) {
    if k == 1 || sub.n() == 0 {
        for &v in &sub.global_ids {
            assignment[v] = first_part;
        }
        return;
    }
    let total = sub.total_weight();
    let half = k / 2;
    let target0 = total / 2;
    let cap = (total as f64 / 2.0) * (1.0 + level_eps);
    let seed = cfg
        .seed
        .wrapping_add((first_part as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(k as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tries = if sub.n() <= SMALL_SUBPROBLEM { 4 * BISECTION_TRIES } else { BISECTION_TRIES };
    let side = fm::bisect(sub, target0, [cap, cap], cfg.fm_passes, cfg.refinement, tries, &mut rng);
    let left = sub.split(&side, 0);
    let right = sub.split(&side, 1);
    recurse(&left, first_part, half, level_eps, cfg, assignment);
    recurse(&right, first_part + half, half, level_eps, cfg, assignment);
}

/// Builds the merged hypergraph of `b` sampled batches (sampler seeded with
/// `cfg.seed`) and partitions it with the hypergraph partitioner. The
/// partition of the full column-net hypergraph is kept as a second
/// candidate; whichever cuts the merged hypergraph less is returned, ties
/// going to the merged partition.
pub fn partition_stochastic(a: &SparseMatrix, sampler: &MiniBatchSpec, b: usize, cfg: &PartitionConfig) -> Result<Partition> {
    let merged = build_stochastic_hypergraph(a, sampler, b, cfg.seed)?;
    let sampled = partition_hypergraph_fm(&merged, cfg)?;
    let mut coords: Vec<(usize, usize)> = a.iter().map(|(r, c, _)| (r, c)).collect();
    coords.extend((0..a.n_rows()).map(|i| (i, i)));
    let full_model = build_hypergraph_model(&SparseMatrix::from_pattern(a.n_rows(), a.n_cols(), &coords)?)?;
    let full = partition_hypergraph_fm(&full_model, cfg)?;
    if connectivity_cut(&merged, full.assignment())? < connectivity_cut(&merged, sampled.assignment())? {
        Ok(full)
    } else {
        Ok(sampled)
    }
}

/// k-way pin counters used to score repair moves.
struct KwayCounts<'a> {
    h: &'a Hypergraph,
    incidence: Vec<Vec<usize>>,
    counts: Vec<Vec<u32>>,
}

impl<'a> KwayCounts<'a> {
    fn new(h: &'a Hypergraph, assignment: &[usize], p: usize) -> Self {
        let mut incidence = vec![Vec::new(); h.n_vertices()];
        let mut counts = vec![vec![0u32; p]; h.n_nets()];
        for (j, pins) in h.nets().iter().enumerate() {
            for &v in pins {
                incidence[v].push(j);
                counts[j][assignment[v]] += 1;
            }
        }
        Self { h, incidence, counts }
    }

    fn gain(&self, v: usize, from: usize, to: usize) -> i64 {
        self.incidence[v]
            .iter()
            .map(|&j| {
                let c = self.h.net_cost()[j] as i64;
                let cnt = &self.counts[j];
                (if cnt[from] == 1 { c } else { 0 }) - (if cnt[to] == 0 { c } else { 0 })
            })
            .sum()
    }

    fn apply(&mut self, v: usize, from: usize, to: usize) {
        for &j in &self.incidence[v] {
            self.counts[j][from] -= 1;
            self.counts[j][to] += 1;
        }
    }
}

/// Fills empty parts, then rebalances until every part is within `cap`.
///
/// Each step works on the heaviest overweight part and takes the first
/// available of: a single move into a part with room, a swap with a lighter
/// vertex of a part that stays within `cap`, a move to a part whose new
/// weight stays below the source's current weight, or a swap with the same
/// property. As a last resort a chain of parts passes the same weight along
/// by moves and swaps until it reaches a part with room. Every step shrinks the
/// sorted part-weight vector lexicographically or lowers the total excess
/// over `cap` without raising any part above it, so the loop terminates. With
/// a model, candidates are ranked by connectivity gain; without one, by
/// destination weight.
fn repair(assignment: &mut [usize], weights: &[u64], p: usize, cap: f64, model: Option<&Hypergraph>) -> Result<()> {
    let mut state = RepairState::new(assignment, weights, p, model);

    while let Some(empty) = state.part_size.iter().position(|&s| s == 0) {
        let donor = (0..p)
            .filter(|&m| state.part_size[m] > 1)
            .max_by_key(|&m| (state.part_weight[m], Reverse(m)))
            .ok_or_else(|| Error::Infeasible("more parts than vertices".into()))?;
        let v = (0..state.assignment.len())
            .filter(|&v| state.assignment[v] == donor)
            .min_by_key(|&v| (weights[v], v))
            .unwrap();
        state.apply(v, empty);
    }

    while let Some(src) = (0..p)
        .filter(|&m| state.part_weight[m] as f64 > cap)
        .max_by_key(|&m| (state.part_weight[m], Reverse(m)))
    {
        if state.part_size[src] <= 1 {
            return Err(Error::Infeasible(format!("part {src} holds a single vertex above {cap}")));
        }
        if let Some((v, to)) = state.best_move(src, |w_to, w| (w_to + w) as f64 <= cap) {
            state.apply(v, to);
        } else if let Some((v, u)) = state.best_swap(src, |a, b| a as f64 <= cap && b as f64 <= cap) {
            state.swap(v, u);
        } else if let Some((v, to)) = state.best_move(src, |w_to, w| w_to + w < state.part_weight[src]) {
            state.apply(v, to);
        } else if let Some((v, u)) = state.best_swap(src, |_, b| b < state.part_weight[src]) {
            state.swap(v, u);
        } else if let Some(chain) = state.transfer_chain(src, cap) {
            for (v, to) in chain {
                state.apply(v, to);
            }
        } else {
            return Err(Error::Infeasible(format!(
                "part {src} weighs {} > {cap} and cannot be rebalanced",
                state.part_weight[src]
            )));
        }
    }
    Ok(())
}

/// Gain, then lighter vertex, lower vertex id, lower destination.
type MoveKey = (i64, Reverse<u64>, Reverse<usize>, Reverse<usize>);
type SwapKey = (i64, Reverse<usize>, Reverse<usize>);

struct RepairState<'a, 'h> {
    assignment: &'a mut [usize],
    weights: &'a [u64],
    p: usize,
    part_weight: Vec<u64>,
    part_size: Vec<usize>,
    counts: Option<KwayCounts<'h>>,
}

impl<'a, 'h> RepairState<'a, 'h> {
    fn new(assignment: &'a mut [usize], weights: &'a [u64], p: usize, model: Option<&'h Hypergraph>) -> Self {
        let mut part_weight = vec![0u64; p];
        let mut part_size = vec![0usize; p];
        for (v, &m) in assignment.iter().enumerate() {
            part_weight[m] += weights[v];
            part_size[m] += 1;
        }
        let counts = model.map(|h| KwayCounts::new(h, assignment, p));
        Self {
            assignment,
            weights,
            p,
            part_weight,
            part_size,
            counts,
        }
    }

    fn apply(&mut self, v: usize, to: usize) {
        let from = self.assignment[v];
        if let Some(c) = self.counts.as_mut() {
            c.apply(v, from, to);
        }
        self.part_weight[from] -= self.weights[v];
        self.part_weight[to] += self.weights[v];
        self.part_size[from] -= 1;
        self.part_size[to] += 1;
        self.assignment[v] = to;
    }

    fn swap(&mut self, v: usize, u: usize) {
        let (pv, pu) = (self.assignment[v], self.assignment[u]);
        self.apply(v, pu);
        self.apply(u, pv);
    }

    fn score(&self, v: usize, from: usize, to: usize) -> i64 {
        match &self.counts {
            Some(c) => c.gain(v, from, to),
            None => -(self.part_weight[to] as i64),
        }
    }

    fn members(&self, m: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&v| self.assignment[v] == m).collect()
    }

    /// Best single move out of `src` whose destination passes `fits`;
    /// ties go to the lighter, then lower-numbered vertex.
    fn best_move(&self, src: usize, fits: impl Fn(u64, u64) -> bool) -> Option<(usize, usize)> {
        let mut best: Option<(MoveKey, usize, usize)> = None;
        for v in self.members(src) {
            let w = self.weights[v];
            for to in (0..self.p).filter(|&t| t != src && fits(self.part_weight[t], w)) {
                let key = (self.score(v, src, to), Reverse(w), Reverse(v), Reverse(to));
                if best.as_ref().is_none_or(|(k, _, _)| key > *k) {
                    best = Some((key, v, to));
                }
            }
        }
        best.map(|(_, v, to)| (v, to))
    }

    /// Shortest sequence of parts `src = q0, q1, ..., qk` such that each `qi`
    /// can pass weight `d` to `q(i+1)`, by moving a vertex of weight `d` or
    /// by swapping vertices whose weights differ by `d`, and `qk` has room
    /// for `d`. Intermediate parts end where they started. Returns the moves
    /// in application order, trying the smallest `d` first.
    fn transfer_chain(&self, src: usize, cap: f64) -> Option<Vec<(usize, usize)>> {
        use std::collections::{BTreeMap, VecDeque};
        let mut classes: Vec<BTreeMap<u64, usize>> = vec![BTreeMap::new(); self.p];
        for (v, &m) in self.assignment.iter().enumerate() {
            classes[m].entry(self.weights[v]).or_insert(v);
        }
        let max_d = *classes[src].keys().next_back()?;
        for d in 1..=max_d {
            // hop i -> j: (vertex leaving i, optional vertex coming back from j)
            let hop = |i: usize, j: usize| -> Option<(usize, Option<usize>)> {
                if let Some(&v) = classes[i].get(&d) {
                    if i != src || self.part_size[i] > 1 {
                        return Some((v, None));
                    }
                }
                classes[i]
                    .iter()
                    .filter(|&(&w, _)| w > d)
                    .find_map(|(&w, &v)| classes[j].get(&(w - d)).map(|&u| (v, Some(u))))
            };
            let mut prev: Vec<Option<(usize, usize, Option<usize>)>> = vec![None; self.p];
            let mut seen = vec![false; self.p];
            seen[src] = true;
            let mut queue = VecDeque::from([src]);
            while let Some(i) = queue.pop_front() {
                for j in 0..self.p {
                    if seen[j] {
                        continue;
                    }
                    let Some((v, back)) = hop(i, j) else { continue };
                    seen[j] = true;
                    prev[j] = Some((i, v, back));
                    if (self.part_weight[j] + d) as f64 <= cap {
                        let mut moves = Vec::new();
                        let mut at = j;
                        while let Some((from, v, back)) = prev[at] {
                            moves.push((v, at));
                            if let Some(u) = back {
                                moves.push((u, from));
                            }
                            at = from;
                        }
                        return Some(moves);
                    }
                    queue.push_back(j);
                }
            }
        }
        None
    }

    /// Exchange of `v` in `src` with a lighter `u` elsewhere such that the
    /// resulting `(src, other)` weights pass `fits`.
    fn best_swap(&self, src: usize, fits: impl Fn(u64, u64) -> bool) -> Option<(usize, usize)> {
        let src_members = self.members(src);
        let mut best: Option<(SwapKey, usize, usize)> = None;
        for to in (0..self.p).filter(|&t| t != src) {
            let to_members = self.members(to);
            for &v in &src_members {
                for &u in &to_members {
                    let (wv, wu) = (self.weights[v], self.weights[u]);
                    if wu >= wv {
                        continue;
                    }
                    let new_src = self.part_weight[src] - wv + wu;
                    let new_to = self.part_weight[to] - wu + wv;
                    if !fits(new_src, new_to) {
                        continue;
                    }
                    let key = (self.score(v, src, to) + self.score(u, to, src), Reverse(v), Reverse(u));
                    if best.as_ref().is_none_or(|(k, _, _)| key > *k) {
                        best = Some((key, v, u));
                    }
                }
            }
        }
        best.map(|(_, v, u)| (v, u))
    }
}

/// Shuffled order of `0..n`; exposed for callers that need the same seeded
/// permutation as the partitioners.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}
