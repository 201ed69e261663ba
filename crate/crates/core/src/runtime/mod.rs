//! Simulated distributed-memory GCN training.
//!
//! Each rank owns a block of rows of `Â`, of the features and of every
//! intermediate matrix, and keeps a replica of all weights. Per layer it
//! ships the rows its plan says other ranks need, multiplies its local
//! column block, then adds the contribution of each received block in
//! ascending sender order. Weight gradients are summed with an allreduce in
//! rank order, so every replica applies the same update.
//!
//! A step is a fixed sequence of stages. In stage `s` a rank consumes only
//! messages posted in stage `s - 1`, which lets the same code run either as
//! one thread per rank with blocking receives or as a single thread that
//! executes stage `s` for every rank before moving on.

pub mod network;

use std::ops::Range;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{nll_row, propagation_operators, GcnModel, LabelSet};
use crate::models::sampling::induced_subgraph;
use crate::models::{BatchSampler, MiniBatchSpec, Partition};
use crate::plan::{build_comm_plan_from_owner, CommPlan, RankOperators};
use crate::sparse::{dmm, dmm_nt, dmm_tn, hadamard, spmm_acc, DenseMatrix, RowBlock, SparseMatrix};

pub use network::{Delivery, Phase, SimNetwork, Tag, Traffic, TrafficLog};

/// How long a blocked rank waits before declaring a message lost.
const RECV_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    /// One OS thread per rank.
    #[default]
    Threaded,
    /// All ranks interleaved on the calling thread, stage by stage.
    Sequential,
}

impl Scheduler {
    pub fn network(self, p: usize) -> SimNetwork {
        match self {
            Scheduler::Threaded => SimNetwork::new(p, Delivery::Blocking { timeout: RECV_TIMEOUT }),
            Scheduler::Sequential => SimNetwork::new(p, Delivery::Immediate),
        }
    }
}

/// One rank's share of a plan: the split operator and, per destination, the
/// local positions of the rows to ship there.
#[derive(Debug, Clone)]
struct Exchange {
    ops: RankOperators,
    sends: Vec<(usize, Vec<usize>)>,
}

impl Exchange {
    fn new(plan: &CommPlan, a: &SparseMatrix, m: usize) -> Result<Self> {
        let ops = plan.local_operators(a, m)?;
        let rows = plan.members(m);
        let sends = plan
            .send_to(m)
            .map(|n| {
                let pos = plan.send(m, n).iter().map(|id| rows.binary_search(id).unwrap()).collect();
                (n, pos)
            })
            .collect();
        Ok(Self { ops, sends })
    }

    fn post(&self, net: &SimNetwork, m: usize, tag: Tag, x: &DenseMatrix) -> Result<()> {
        for (n, pos) in &self.sends {
            net.send(m, *n, tag, x.select_rows(pos))?;
        }
        Ok(())
    }

    /// Owned rows of `A X`, from the owned rows of `X` and the blocks
    /// received from every sender.
    fn multiply(&self, net: &SimNetwork, m: usize, tag: Tag, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(x.n_rows(), x.n_cols());
        spmm_acc(&self.ops.local, x, &mut out)?;
        for (n, op) in &self.ops.remote {
            let got = net.recv(*n, m, tag)?;
            if got.shape() != (op.n_cols(), x.n_cols()) {
                return Err(Error::shape(
                    "received block",
                    format!("{:?} from rank {n}, expected {}x{}", got.shape(), op.n_cols(), x.n_cols()),
                ));
            }
            spmm_acc(op, &got, &mut out)?;
        }
        Ok(out)
    }
}

/// State of one simulated processor.
#[derive(Debug, Clone)]
pub struct ProcState {
    rank: usize,
    p: usize,
    global_ids: Vec<usize>,
    a_m: RowBlock<SparseMatrix>,
    forward: Exchange,
    backward: Exchange,
    model: GcnModel,
    labels: Vec<(usize, usize)>,
    label_count: usize,
    h: Vec<DenseMatrix>,
    z: Vec<DenseMatrix>,
    g: Vec<DenseMatrix>,
    dw: Vec<DenseMatrix>,
    loss: f64,
}

impl ProcState {
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Owned rows, as ids of the original graph.
    pub fn global_ids(&self) -> &[usize] {
        &self.global_ids
    }

    /// Owned rows of `Â`.
    pub fn a_block(&self) -> &RowBlock<SparseMatrix> {
        &self.a_m
    }

    /// Owned rows of `H^k`.
    pub fn h(&self, k: usize) -> &DenseMatrix {
        &self.h[k]
    }

    pub fn model(&self) -> &GcnModel {
        &self.model
    }

    /// This rank's share of the last step's loss.
    pub fn loss(&self) -> f64 {
        self.loss
    }
}

/// Distributes `a_hat`, `a_back` (used by backpropagation), the features and
/// the labels by `pi`, and replicates `model` on every rank.
pub fn scatter(
    a_hat: &SparseMatrix,
    a_back: &SparseMatrix,
    h0: &DenseMatrix,
    labels: &LabelSet,
    pi: &Partition,
    model: &GcnModel,
) -> Result<Vec<ProcState>> {
    if pi.n_vertices() != a_hat.n_rows() {
        return Err(Error::shape(
            "scatter",
            format!("partition of {} vertices for {} rows", pi.n_vertices(), a_hat.n_rows()),
        ));
    }
    let ids: Vec<usize> = (0..a_hat.n_rows()).collect();
    scatter_rows(a_hat, a_back, h0, &labels.sorted_pairs(), labels.n_classes(), pi.assignment(), pi.p(), &ids, model)
}

#[allow(clippy::too_many_arguments)]
fn scatter_rows(
    a_hat: &SparseMatrix,
    a_back: &SparseMatrix,
    h0: &DenseMatrix,
    label_pairs: &[(usize, usize)],
    n_classes: usize,
    owner: &[usize],
    p: usize,
    global_ids: &[usize],
    model: &GcnModel,
) -> Result<Vec<ProcState>> {
    let n = a_hat.n_rows();
    if a_back.n_rows() != n || a_back.n_cols() != n {
        return Err(Error::shape("scatter", "backward operator does not match Â"));
    }
    if h0.n_rows() != n || h0.n_cols() != model.dims()[0] {
        return Err(Error::shape(
            "scatter",
            format!("features {:?} for {} rows and input width {}", h0.shape(), n, model.dims()[0]),
        ));
    }
    if n_classes != model.dims()[model.layers()] {
        return Err(Error::shape(
            "scatter",
            format!("{} classes for output width {}", n_classes, model.dims()[model.layers()]),
        ));
    }
    if let Some(&(id, _)) = label_pairs.iter().find(|(id, _)| *id >= n) {
        return Err(Error::InvalidLabel(format!("labeled id {id} out of range")));
    }
    let fwd_plan = build_comm_plan_from_owner(a_hat, owner, p)?;
    let back_plan = if a_back == a_hat {
        None
    } else {
        Some(build_comm_plan_from_owner(a_back, owner, p)?)
    };
    let layers = model.layers();
    (0..p)
        .map(|m| {
            let rows = fwd_plan.members(m).to_vec();
            let forward = Exchange::new(&fwd_plan, a_hat, m)?;
            let backward = match &back_plan {
                Some(plan) => Exchange::new(plan, a_back, m)?,
                None => forward.clone(),
            };
            let labels = label_pairs
                .iter()
                .filter_map(|&(id, c)| rows.binary_search(&id).ok().map(|pos| (pos, c)))
                .collect();
            let mut h = vec![DenseMatrix::zeros(0, 0); layers + 1];
            h[0] = h0.select_rows(&rows);
            Ok(ProcState {
                rank: m,
                p,
                global_ids: rows.iter().map(|&r| global_ids[r]).collect(),
                a_m: RowBlock::<SparseMatrix>::from_global(a_hat, rows)?,
                forward,
                backward,
                model: model.clone(),
                labels,
                label_count: label_pairs.len(),
                h,
                z: vec![DenseMatrix::zeros(0, 0); layers + 1],
                g: vec![DenseMatrix::zeros(0, 0); layers + 1],
                dw: vec![DenseMatrix::zeros(0, 0); layers],
                loss: 0.0,
            })
        })
        .collect()
}

/// Elementwise sum accumulated in ascending rank order.
pub fn allreduce_sum(contributions: &[DenseMatrix]) -> Result<DenseMatrix> {
    let (first, rest) = contributions
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("allreduce over zero ranks".into()))?;
    let mut acc = first.clone();
    for (r, c) in rest.iter().enumerate() {
        if c.shape() != acc.shape() {
            return Err(Error::shape(
                "allreduce_sum",
                format!("rank {} contributed {:?}, rank 0 {:?}", r + 1, c.shape(), acc.shape()),
            ));
        }
        acc.add_assign(c)?;
    }
    Ok(acc)
}

fn stage_count(layers: usize) -> usize {
    2 * layers + 3
}

/// Stages `0..=L` post `H^0` and compute layers `1..=L`; stage `L + 1` forms
/// the loss gradient; stages `L + 2 ..= 2L + 1` run layers `L..=1` backwards;
/// the last stage completes the allreduce and updates the weights.
fn run_stage(st: &mut ProcState, net: &SimNetwork, stage: usize) -> Result<()> {
    let l = st.model.layers();
    let m = st.rank;
    if stage == 0 {
        return st.forward.post(net, m, Tag::new(Phase::Forward, 1), &st.h[0]);
    }
    if stage <= l {
        let k = stage;
        let ah = st.forward.multiply(net, m, Tag::new(Phase::Forward, k), &st.h[k - 1])?;
        let z = dmm(&ah, &st.model.weights()[k - 1])?;
        st.h[k] = st.model.layer_activation(k).forward(&z);
        st.z[k] = z;
        if k < l {
            st.forward.post(net, m, Tag::new(Phase::Forward, k + 1), &st.h[k])?;
        }
        return Ok(());
    }
    if stage == l + 1 {
        let out = &st.h[l];
        let mut grad = DenseMatrix::zeros(out.n_rows(), out.n_cols());
        let mut total = 0.0;
        if st.label_count > 0 {
            let count = st.label_count as f64;
            for &(pos, label) in &st.labels {
                let (loss, g) = nll_row(out.row(pos), label);
                total += loss;
                for (o, v) in grad.row_mut(pos).iter_mut().zip(g) {
                    *o = v / count;
                }
            }
            total /= count;
        }
        st.loss = total;
        st.g[l] = hadamard(&grad, &st.model.layer_activation(l).derivative(&st.z[l]))?;
        return st.backward.post(net, m, Tag::new(Phase::Backward, l), &st.g[l]);
    }
    if stage <= 2 * l + 1 {
        let k = 2 * l + 2 - stage;
        let ag = st.backward.multiply(net, m, Tag::new(Phase::Backward, k), &st.g[k])?;
        st.dw[k - 1] = dmm_tn(&st.h[k - 1], &ag)?;
        if k > 1 {
            let s = dmm_nt(&ag, &st.model.weights()[k - 1])?;
            st.g[k - 1] = hadamard(&s, &st.model.layer_activation(k - 1).derivative(&st.z[k - 1]))?;
            st.backward.post(net, m, Tag::new(Phase::Backward, k - 1), &st.g[k - 1])?;
        } else {
            for n in (0..st.p).filter(|&n| n != m) {
                for (j, dw) in st.dw.iter().enumerate() {
                    net.send(m, n, Tag::new(Phase::Allreduce, j + 1), dw.clone())?;
                }
            }
        }
        return Ok(());
    }
    let mut summed = Vec::with_capacity(l);
    for j in 0..l {
        let tag = Tag::new(Phase::Allreduce, j + 1);
        let parts = (0..st.p)
            .map(|r| if r == m { Ok(st.dw[j].clone()) } else { net.recv(r, m, tag) })
            .collect::<Result<Vec<_>>>()?;
        summed.push(allreduce_sum(&parts)?);
    }
    crate::gcn::apply_update_in_place(&mut st.model, &summed)
}

fn run_stages(states: &mut [ProcState], net: &SimNetwork, stages: Range<usize>, scheduler: Scheduler) -> Result<()> {
    match scheduler {
        Scheduler::Sequential => {
            for s in stages {
                for st in states.iter_mut() {
                    run_stage(st, net, s)?;
                }
            }
        }
        Scheduler::Threaded => {
            let results: Vec<Result<()>> = std::thread::scope(|scope| {
                let handles: Vec<_> = states
                    .iter_mut()
                    .map(|st| {
                        let stages = stages.clone();
                        scope.spawn(move || {
                            let r = stages.into_iter().try_for_each(|s| run_stage(st, net, s));
                            if r.is_err() {
                                net.abort();
                            }
                            r
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Comm("rank thread panicked".into()))))
                    .collect()
            });
            // report the failure that caused the abort, not its echoes
            let mut errors: Vec<Error> = results.into_iter().filter_map(|r| r.err()).collect();
            if !errors.is_empty() {
                let root = errors
                    .iter()
                    .position(|e| !matches!(e, Error::Comm(msg) if msg == "network aborted"))
                    .unwrap_or(0);
                return Err(errors.swap_remove(root));
            }
        }
    }
    if net.is_aborted() {
        return Err(Error::Comm("network aborted".into()));
    }
    match net.pending() {
        0 => Ok(()),
        k => Err(Error::Comm(format!("{k} messages were sent but never received"))),
    }
}

/// Runs the forward pass on every rank; afterwards `h(L)` holds the output rows.
pub fn parallel_feedforward(states: &mut [ProcState], net: &SimNetwork, scheduler: Scheduler) -> Result<()> {
    let l = check_states(states, net)?;
    run_stages(states, net, 0..l + 1, scheduler)
}

/// Runs backpropagation and the weight update after `parallel_feedforward`.
/// Returns the loss, summed over ranks in rank order.
pub fn parallel_backprop(states: &mut [ProcState], net: &SimNetwork, scheduler: Scheduler) -> Result<f64> {
    let l = check_states(states, net)?;
    if states.iter().any(|st| st.z[l].n_cols() != st.model.dims()[l]) {
        return Err(Error::InvalidArgument("backprop requires a completed forward pass".into()));
    }
    run_stages(states, net, l + 1..stage_count(l), scheduler)?;
    Ok(states.iter().map(|st| st.loss).sum())
}

fn check_states(states: &[ProcState], net: &SimNetwork) -> Result<usize> {
    let first = states.first().ok_or_else(|| Error::InvalidArgument("no ranks".into()))?;
    if states.len() != net.p() || states.iter().enumerate().any(|(m, st)| st.rank != m || st.p != net.p()) {
        return Err(Error::InvalidArgument(format!(
            "{} rank states for a network of {} ranks",
            states.len(),
            net.p()
        )));
    }
    Ok(first.model.layers())
}

/// Reassembles `H^k` in row order of the distributed matrix.
pub fn gather_layer(states: &[ProcState], k: usize) -> Result<DenseMatrix> {
    let n: usize = states.iter().map(|st| st.a_m.global_row_ids().len()).sum();
    let d = states.first().map_or(0, |st| st.h[k].n_cols());
    let mut out = DenseMatrix::zeros(n, d);
    for st in states {
        for (pos, &r) in st.a_m.global_row_ids().iter().enumerate() {
            out.row_mut(r).copy_from_slice(st.h[k].row(pos));
        }
    }
    Ok(out)
}

/// Weights shared by all ranks; fails if any replica differs.
pub fn consensus_model(states: &[ProcState]) -> Result<GcnModel> {
    let first = states.first().ok_or_else(|| Error::InvalidArgument("no ranks".into()))?;
    if let Some(st) = states.iter().find(|st| st.model != first.model) {
        return Err(Error::Comm(format!("weight replica of rank {} diverged", st.rank)));
    }
    Ok(first.model.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TrainMode {
    FullBatch,
    /// `batches_per_epoch` steps per epoch, each on a fresh uniform sample.
    MiniBatch {
        batch_size: usize,
        batches_per_epoch: usize,
        seed: u64,
    },
}

/// Communication and loss of one epoch. Words and messages count the
/// forward and backward point-to-point exchanges; the weight allreduce is
/// reported separately.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    pub loss: f64,
    pub total_words: u64,
    pub forward_words: u64,
    pub backward_words: u64,
    pub words_per_proc: Vec<u64>,
    pub max_words_per_proc: u64,
    pub avg_words_per_proc: f64,
    pub total_msgs: u64,
    pub msgs_per_proc: Vec<u64>,
    pub max_msgs_per_proc: u64,
    pub avg_msgs_per_proc: f64,
    /// Largest number of messages one rank sent in a single layer and phase.
    pub max_rank_msgs_per_exchange: u64,
    /// Largest number of messages between one ordered pair in a single layer and phase.
    pub max_pair_msgs_per_exchange: u64,
    pub allreduce_words: u64,
    pub allreduce_msgs: u64,
}

impl EpochMetrics {
    fn new(epoch: usize, p: usize) -> Self {
        Self {
            epoch,
            steps: 0,
            loss: 0.0,
            total_words: 0,
            forward_words: 0,
            backward_words: 0,
            words_per_proc: vec![0; p],
            max_words_per_proc: 0,
            avg_words_per_proc: 0.0,
            total_msgs: 0,
            msgs_per_proc: vec![0; p],
            max_msgs_per_proc: 0,
            avg_msgs_per_proc: 0.0,
            max_rank_msgs_per_exchange: 0,
            max_pair_msgs_per_exchange: 0,
            allreduce_words: 0,
            allreduce_msgs: 0,
        }
    }

    fn add_step(&mut self, log: &TrafficLog) {
        self.steps += 1;
        let mut per_exchange: std::collections::BTreeMap<(Tag, usize), u64> = Default::default();
        for (&(tag, from, _), t) in log {
            match tag.phase {
                Phase::Allreduce => {
                    self.allreduce_words += t.words;
                    self.allreduce_msgs += t.msgs;
                    continue;
                }
                Phase::Forward => self.forward_words += t.words,
                Phase::Backward => self.backward_words += t.words,
            }
            self.words_per_proc[from] += t.words;
            self.msgs_per_proc[from] += t.msgs;
            self.max_pair_msgs_per_exchange = self.max_pair_msgs_per_exchange.max(t.msgs);
            *per_exchange.entry((tag, from)).or_default() += t.msgs;
        }
        if let Some(&most) = per_exchange.values().max() {
            self.max_rank_msgs_per_exchange = self.max_rank_msgs_per_exchange.max(most);
        }
    }

    fn finish(&mut self) {
        let p = self.words_per_proc.len().max(1) as f64;
        self.total_words = self.words_per_proc.iter().sum();
        self.total_msgs = self.msgs_per_proc.iter().sum();
        self.max_words_per_proc = self.words_per_proc.iter().copied().max().unwrap_or(0);
        self.max_msgs_per_proc = self.msgs_per_proc.iter().copied().max().unwrap_or(0);
        self.avg_words_per_proc = self.total_words as f64 / p;
        self.avg_msgs_per_proc = self.total_msgs as f64 / p;
    }
}

/// Graph, features and labels of a distributed training run, with the
/// fixed vertex partition. `adjacency` is the raw pattern; normalization
/// and self loops are added per step.
#[derive(Debug, Clone, Copy)]
pub struct DistProblem<'a> {
    pub adjacency: &'a SparseMatrix,
    pub features: &'a DenseMatrix,
    pub labels: &'a LabelSet,
    pub partition: &'a Partition,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GcnModel,
    pub metrics: Vec<EpochMetrics>,
    /// Per-epoch elapsed time; informational only.
    pub wallclock_secs: Vec<f64>,
}

pub fn train_epochs(
    model: &GcnModel,
    problem: &DistProblem<'_>,
    mode: TrainMode,
    epochs: usize,
    scheduler: Scheduler,
) -> Result<TrainOutcome> {
    let a = problem.adjacency;
    let pi = problem.partition;
    if pi.n_vertices() != a.n_rows() {
        return Err(Error::shape(
            "train_epochs",
            format!("partition of {} vertices for {} rows", pi.n_vertices(), a.n_rows()),
        ));
    }
    let p = pi.p();
    let mut model = model.clone();
    let mut metrics = Vec::with_capacity(epochs);
    let mut wallclock_secs = Vec::with_capacity(epochs);
    match mode {
        TrainMode::FullBatch => {
            let (a_hat, a_back) = propagation_operators(a)?;
            let mut states = scatter(&a_hat, &a_back, problem.features, problem.labels, pi, &model)?;
            for epoch in 0..epochs {
                let started = Instant::now();
                let net = scheduler.network(p);
                let mut em = EpochMetrics::new(epoch, p);
                parallel_feedforward(&mut states, &net, scheduler)?;
                em.loss = parallel_backprop(&mut states, &net, scheduler)?;
                em.add_step(&net.take_traffic());
                em.finish();
                wallclock_secs.push(started.elapsed().as_secs_f64());
                metrics.push(em);
            }
            if epochs > 0 {
                model = consensus_model(&states)?;
            }
        }
        TrainMode::MiniBatch {
            batch_size,
            batches_per_epoch,
            seed,
        } => {
            if batches_per_epoch == 0 {
                return Err(Error::InvalidArgument("mini-batch mode needs at least one batch per epoch".into()));
            }
            let mut sampler = BatchSampler::new(MiniBatchSpec::new(batch_size), a.n_rows(), seed)?;
            let pairs = problem.labels.sorted_pairs();
            for epoch in 0..epochs {
                let started = Instant::now();
                let mut em = EpochMetrics::new(epoch, p);
                let mut loss_sum = 0.0;
                for _ in 0..batches_per_epoch {
                    let batch = sampler.next_batch();
                    let net = scheduler.network(p);
                    let mut states = scatter_batch(problem, &batch, &pairs, &model)?;
                    parallel_feedforward(&mut states, &net, scheduler)?;
                    loss_sum += parallel_backprop(&mut states, &net, scheduler)?;
                    em.add_step(&net.take_traffic());
                    model = consensus_model(&states)?;
                }
                em.loss = loss_sum / batches_per_epoch as f64;
                em.finish();
                wallclock_secs.push(started.elapsed().as_secs_f64());
                metrics.push(em);
            }
        }
    }
    Ok(TrainOutcome {
        model,
        metrics,
        wallclock_secs,
    })
}

/// Rank states for the subgraph induced by the sorted vertex set `batch`,
/// keeping each vertex on its part of the global partition.
fn scatter_batch(
    problem: &DistProblem<'_>,
    batch: &[usize],
    label_pairs: &[(usize, usize)],
    model: &GcnModel,
) -> Result<Vec<ProcState>> {
    let sub = induced_subgraph(problem.adjacency, batch)?;
    let (a_hat, a_back) = propagation_operators(&sub)?;
    let owner: Vec<usize> = batch.iter().map(|&v| problem.partition.part_of(v)).collect();
    let h0 = problem.features.select_rows(batch);
    let local_pairs: Vec<(usize, usize)> = label_pairs
        .iter()
        .filter_map(|&(id, c)| batch.binary_search(&id).ok().map(|pos| (pos, c)))
        .collect();
    scatter_rows(
        &a_hat,
        &a_back,
        &h0,
        &local_pairs,
        problem.labels.n_classes(),
        &owner,
        problem.partition.p(),
        batch,
        model,
    )
}
