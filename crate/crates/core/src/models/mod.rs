//! Partitioning models of a (normalized) adjacency matrix: the undirected
//! graph model, the column-net hypergraph model and the stochastic
//! hypergraph merged from sampled mini-batches, plus the cut, balance and
//! volume metrics evaluated on them.

pub mod io;
pub mod sampling;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

pub use sampling::{BatchSampler, MiniBatchSpec};

/// Undirected graph with unit edge costs; edges are stored as `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct UGraph {
    n_vertices: usize,
    edges: Vec<(usize, usize)>,
    edge_cost: Vec<u64>,
    vertex_weight: Vec<u64>,
}

impl UGraph {
    pub fn new(n_vertices: usize, mut edges: Vec<(usize, usize)>, vertex_weight: Vec<u64>) -> Result<Self> {
        if vertex_weight.len() != n_vertices {
            return Err(Error::shape("UGraph::new", "one weight per vertex required"));
        }
        for e in edges.iter_mut() {
            if e.0 == e.1 {
                return Err(Error::InvalidArgument(format!("self loop on vertex {}", e.0)));
            }
            if e.0.max(e.1) >= n_vertices {
                return Err(Error::InvalidArgument(format!("edge {e:?} out of range")));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        let edge_cost = vec![1; edges.len()];
        Ok(Self {
            n_vertices,
            edges,
            edge_cost,
            vertex_weight,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_cost(&self) -> &[u64] {
        &self.edge_cost
    }

    pub fn vertex_weight(&self) -> &[u64] {
        &self.vertex_weight
    }

    /// Each edge as a two-pin net; the connectivity-1 cut of this
    /// hypergraph equals the edge cut of the graph.
    pub fn as_hypergraph(&self) -> Hypergraph {
        Hypergraph {
            n_vertices: self.n_vertices,
            nets: self.edges.iter().map(|&(i, j)| vec![i, j]).collect(),
            net_cost: self.edge_cost.clone(),
            vertex_weight: self.vertex_weight.clone(),
        }
    }
}

/// Hypergraph with sorted, duplicate-free pin lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    n_vertices: usize,
    nets: Vec<Vec<usize>>,
    net_cost: Vec<u64>,
    vertex_weight: Vec<u64>,
}

impl Hypergraph {
    /// Nets get unit cost. Pin lists are sorted and deduplicated.
    pub fn new(n_vertices: usize, nets: Vec<Vec<usize>>, vertex_weight: Vec<u64>) -> Result<Self> {
        let costs = vec![1; nets.len()];
        Self::with_costs(n_vertices, nets, costs, vertex_weight)
    }

    pub fn with_costs(
        n_vertices: usize,
        mut nets: Vec<Vec<usize>>,
        net_cost: Vec<u64>,
        vertex_weight: Vec<u64>,
    ) -> Result<Self> {
        if vertex_weight.len() != n_vertices {
            return Err(Error::shape("Hypergraph::new", "one weight per vertex required"));
        }
        if net_cost.len() != nets.len() {
            return Err(Error::shape("Hypergraph::new", "one cost per net required"));
        }
        for (j, pins) in nets.iter_mut().enumerate() {
            pins.sort_unstable();
            pins.dedup();
            if pins.is_empty() {
                return Err(Error::InvalidArgument(format!("net {j} has no pins")));
            }
            if *pins.last().unwrap() >= n_vertices {
                return Err(Error::InvalidArgument(format!("net {j} has a pin out of range")));
            }
        }
        Ok(Self {
            n_vertices,
            nets,
            net_cost,
            vertex_weight,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_nets(&self) -> usize {
        self.nets.len()
    }

    pub fn nets(&self) -> &[Vec<usize>] {
        &self.nets
    }

    pub fn pins(&self, net: usize) -> &[usize] {
        &self.nets[net]
    }

    pub fn net_cost(&self) -> &[u64] {
        &self.net_cost
    }

    pub fn vertex_weight(&self) -> &[u64] {
        &self.vertex_weight
    }

    pub fn n_pins(&self) -> usize {
        self.nets.iter().map(Vec::len).sum()
    }

    /// Appends all nets of `other`, which must share the vertex set.
    pub(crate) fn extend_nets(&mut self, other: Hypergraph) {
        debug_assert_eq!(self.n_vertices, other.n_vertices);
        self.nets.extend(other.nets);
        self.net_cost.extend(other.net_cost);
    }
}

/// p-way vertex partition with precomputed part weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    p: usize,
    assignment: Vec<usize>,
    part_weights: Vec<u64>,
    epsilon: f64,
}

impl Partition {
    /// Validates that every part id is `< p` and every part is non-empty.
    pub fn new(p: usize, assignment: Vec<usize>, vertex_weight: &[u64], epsilon: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("p must be at least 1".into()));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid epsilon {epsilon}")));
        }
        if vertex_weight.len() != assignment.len() {
            return Err(Error::Unassigned {
                vertex: assignment.len().min(vertex_weight.len()),
            });
        }
        let mut part_weights = vec![0u64; p];
        let mut sizes = vec![0usize; p];
        for (v, (&part, &w)) in assignment.iter().zip(vertex_weight).enumerate() {
            if part >= p {
                return Err(Error::InvalidArgument(format!(
                    "vertex {v} assigned to part {part} >= {p}"
                )));
            }
            part_weights[part] += w;
            sizes[part] += 1;
        }
        if let Some(m) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!("part {m} is empty")));
        }
        Ok(Self {
            p,
            assignment,
            part_weights,
            epsilon,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn part_of(&self, v: usize) -> usize {
        self.assignment[v]
    }

    pub fn part_weights(&self) -> &[u64] {
        &self.part_weights
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_vertices(&self) -> usize {
        self.assignment.len()
    }

    /// Vertices of part `m`, ascending.
    pub fn members(&self, m: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&v| self.assignment[v] == m).collect()
    }

    /// `max_m W(V_m) / W_avg - 1`.
    pub fn balance_ratio(&self) -> f64 {
        balance_ratio(&self.part_weights)
    }

    /// `W(V_m) <= (1 + epsilon) * W_avg` for every part.
    pub fn is_balanced(&self) -> bool {
        let cap = balance_cap(self.part_weights.iter().sum(), self.p, self.epsilon);
        self.part_weights.iter().all(|&w| w as f64 <= cap)
    }
}

/// Largest admissible part weight, `(1 + epsilon) * total / p`.
pub fn balance_cap(total_weight: u64, p: usize, epsilon: f64) -> f64 {
    (1.0 + epsilon) * total_weight as f64 / p as f64
}

pub(crate) fn balance_ratio(part_weights: &[u64]) -> f64 {
    let total: u64 = part_weights.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let avg = total as f64 / part_weights.len() as f64;
    *part_weights.iter().max().unwrap() as f64 / avg - 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutReport {
    pub cut_value: u64,
    /// Connectivity of every net; empty for graph cuts.
    pub per_net_lambda: Vec<usize>,
    pub balance_ratio: f64,
}

fn check_square(a: &SparseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    Ok(())
}

fn row_weights(a: &SparseMatrix) -> Vec<u64> {
    (0..a.n_rows()).map(|i| a.row_nnz(i) as u64).collect()
}

/// Undirected graph of the symmetrized off-diagonal pattern; vertex weights
/// are row nonzero counts of `a`.
pub fn build_graph_model(a: &SparseMatrix) -> Result<UGraph> {
    check_square(a)?;
    let edges = a.iter().filter(|&(r, c, _)| r != c).map(|(r, c, _)| (r, c)).collect();
    UGraph::new(a.n_rows(), edges, row_weights(a))
}

/// One net per column, pinning every row with a nonzero in that column.
pub fn build_hypergraph_model(a: &SparseMatrix) -> Result<Hypergraph> {
    check_square(a)?;
    if let Some(row) = (0..a.n_rows()).find(|&i| a.row_cols(i).binary_search(&i).is_err()) {
        return Err(Error::MissingDiagonal { row });
    }
    let mut nets = vec![Vec::new(); a.n_cols()];
    for (r, c, _) in a.iter() {
        nets[c].push(r);
    }
    Hypergraph::new(a.n_rows(), nets, row_weights(a))
}

/// Column-net model of `pattern(a) ∪ pattern(a^T)`, used to partition
/// directed inputs with a single hypergraph.
pub fn build_symmetrized_hypergraph_model(a: &SparseMatrix) -> Result<Hypergraph> {
    check_square(a)?;
    let mut coords: Vec<(usize, usize)> = a.iter().flat_map(|(r, c, _)| [(r, c), (c, r)]).collect();
    coords.extend((0..a.n_rows()).map(|i| (i, i)));
    let sym = SparseMatrix::from_pattern(a.n_rows(), a.n_cols(), &coords)?;
    let mut h = build_hypergraph_model(&sym)?;
    h.vertex_weight = row_weights(a);
    Ok(h)
}

/// Column nets weighted `forward_cost` plus row nets weighted
/// `backward_cost` over `pattern(a) ∪ I`. Its connectivity cut is the total
/// volume of a training step that multiplies by `Â` forward and by `Â^T`
/// backward, so it models directed inputs exactly.
pub fn build_bidirectional_hypergraph_model(a: &SparseMatrix, forward_cost: u64, backward_cost: u64) -> Result<Hypergraph> {
    check_square(a)?;
    let n = a.n_rows();
    let mut cols = vec![Vec::new(); n];
    let mut rows = vec![Vec::new(); n];
    for (r, c, _) in a.iter() {
        cols[c].push(r);
        rows[r].push(c);
    }
    for i in 0..n {
        cols[i].push(i);
        rows[i].push(i);
    }
    let costs = std::iter::repeat_n(forward_cost, n).chain(std::iter::repeat_n(backward_cost, n)).collect();
    cols.extend(rows);
    Hypergraph::with_costs(n, cols, costs, sampling::self_looped_row_weights(a))
}

fn check_assignment(n: usize, assignment: &[usize]) -> Result<()> {
    if assignment.len() < n {
        return Err(Error::Unassigned {
            vertex: assignment.len(),
        });
    }
    Ok(())
}

pub fn evaluate_graph_cut(g: &UGraph, pi: &Partition) -> Result<CutReport> {
    check_assignment(g.n_vertices(), pi.assignment())?;
    let cut_value = g
        .edges()
        .iter()
        .zip(g.edge_cost())
        .filter(|(&(i, j), _)| pi.part_of(i) != pi.part_of(j))
        .map(|(_, &c)| c)
        .sum();
    Ok(CutReport {
        cut_value,
        per_net_lambda: Vec::new(),
        balance_ratio: balance_ratio(&part_weights_of(g.vertex_weight(), pi)),
    })
}

/// Part weights recomputed from the model's own vertex weights.
fn part_weights_of(weights: &[u64], pi: &Partition) -> Vec<u64> {
    let mut out = vec![0; pi.p()];
    for (v, &w) in weights.iter().enumerate() {
        out[pi.part_of(v)] += w;
    }
    out
}

/// Connectivity of one net under a raw part assignment.
pub(crate) fn net_lambda(pins: &[usize], assignment: &[usize], seen: &mut Vec<usize>) -> usize {
    seen.clear();
    for &v in pins {
        let part = assignment[v];
        if !seen.contains(&part) {
            seen.push(part);
        }
    }
    seen.len()
}

/// `Σ cost(n) (λ(n) - 1)` under a raw assignment, without the non-empty
/// part requirement of [`Partition`].
pub fn connectivity_cut(h: &Hypergraph, assignment: &[usize]) -> Result<u64> {
    check_assignment(h.n_vertices(), assignment)?;
    let mut seen = Vec::new();
    Ok(h.nets()
        .iter()
        .zip(h.net_cost())
        .map(|(pins, &c)| c * (net_lambda(pins, assignment, &mut seen) as u64 - 1))
        .sum())
}

pub fn evaluate_hypergraph_cut(h: &Hypergraph, pi: &Partition) -> Result<CutReport> {
    check_assignment(h.n_vertices(), pi.assignment())?;
    let mut seen = Vec::new();
    let per_net_lambda: Vec<usize> = h
        .nets()
        .iter()
        .map(|pins| net_lambda(pins, pi.assignment(), &mut seen))
        .collect();
    let cut_value = per_net_lambda
        .iter()
        .zip(h.net_cost())
        .map(|(&l, &c)| c * (l as u64 - 1))
        .sum();
    Ok(CutReport {
        cut_value,
        per_net_lambda,
        balance_ratio: balance_ratio(&part_weights_of(h.vertex_weight(), pi)),
    })
}

/// Words moved in one epoch (feedforward + backprop, all layers):
/// `Σ_j (λ(n_j) - 1) · Σ_k (d_{k-1} + d_k)`.
pub fn predicted_total_volume(h: &Hypergraph, pi: &Partition, dims: &[usize]) -> Result<u64> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need dims d_0..d_L with L >= 1, got {dims:?}"
        )));
    }
    let per_net: u64 = dims.windows(2).map(|w| (w[0] + w[1]) as u64).sum();
    Ok(connectivity_cut(h, pi.assignment())? * per_net)
}

/// Volume the graph model attributes to sending `v`'s rows: the number of
/// cut edges incident to `v`.
pub fn graph_model_vertex_volume(g: &UGraph, pi: &Partition, v: usize) -> u64 {
    g.edges()
        .iter()
        .zip(g.edge_cost())
        .filter(|(&(i, j), _)| (i == v || j == v) && pi.part_of(i) != pi.part_of(j))
        .map(|(_, &c)| c)
        .sum()
}

/// Per-direction volume the graph model implies for one SpMM: each cut edge
/// is charged once in each direction.
pub fn graph_model_volume(g: &UGraph, pi: &Partition) -> Result<u64> {
    Ok(2 * evaluate_graph_cut(g, pi)?.cut_value)
}

/// Smallest net count giving `|λ' - λ| < theta` with probability `1 - delta`:
/// `ceil((p-1)^2 / (2 theta^2) · ln(2/delta))`.
pub fn hoeffding_min_nets(p: usize, theta: f64, delta: f64) -> Result<u64> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!(
            "p = {p}: with fewer than two parts every net has connectivity 1"
        )));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must be positive, got {theta}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let spread = (p - 1) as f64;
    let bound = spread * spread / (2.0 * theta * theta) * (2.0 / delta).ln();
    // values that are integral up to rounding noise must not round up
    let nearest = bound.round();
    let nets = if (bound - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        bound.ceil()
    };
    Ok(nets as u64)
}

/// Merges the column-net hypergraphs of `b` sampled mini-batches over the
/// full vertex set. Vertex weights are the full-batch row counts of `a + I`.
pub fn build_stochastic_hypergraph(
    a: &SparseMatrix,
    sampler: &MiniBatchSpec,
    b: usize,
    seed: u64,
) -> Result<Hypergraph> {
    check_square(a)?;
    if b == 0 {
        return Err(Error::InvalidArgument("need at least one mini-batch".into()));
    }
    let mut batches = BatchSampler::new(*sampler, a.n_rows(), seed)?;
    let weights = sampling::self_looped_row_weights(a);
    let mut merged = Hypergraph::new(a.n_rows(), Vec::new(), weights)?;
    for _ in 0..b {
        let batch = batches.next_batch();
        merged.extend_nets(sampling::batch_hypergraph(a, &batch, merged.vertex_weight().to_vec())?);
    }
    Ok(merged)
}
