//! Point-to-point communication plan for row-partitioned SpMM.
//!
//! Rank `m` owns rows `rows(A_m)`. It must ship row `i` of the dense operand
//! to rank `n` whenever some row owned by `n` has a nonzero in column `i`,
//! and it ships each such row once no matter how many rows of `n` use it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::Partition;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommPlan {
    p: usize,
    owner: Vec<usize>,
    members: Vec<Vec<usize>>,
    send: Vec<Vec<Vec<usize>>>,
    recv_from: Vec<Vec<usize>>,
}

impl CommPlan {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    /// Sorted rows owned by rank `m`.
    pub fn members(&self, m: usize) -> &[usize] {
        &self.members[m]
    }

    /// Sorted rows rank `from` sends to rank `to`.
    pub fn send(&self, from: usize, to: usize) -> &[usize] {
        &self.send[from][to]
    }

    /// Ranks that send to `m`, ascending.
    pub fn recv_from(&self, m: usize) -> &[usize] {
        &self.recv_from[m]
    }

    /// Ranks `m` sends to, ascending.
    pub fn send_to(&self, m: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.p).filter(move |&n| !self.send[m][n].is_empty())
    }

    /// Splits the rows of `a` owned by `m` into the part that multiplies
    /// local rows and one part per sender that multiplies the rows received
    /// from it, with columns renumbered to positions in those row lists.
    pub fn local_operators(&self, a: &SparseMatrix, m: usize) -> Result<RankOperators> {
        if a.n_rows() != self.owner.len() || a.n_cols() != self.owner.len() {
            return Err(Error::shape(
                "local_operators",
                format!("{}x{} matrix for a plan over {} rows", a.n_rows(), a.n_cols(), self.owner.len()),
            ));
        }
        let rows = &self.members[m];
        let local = a.select(rows, rows.len(), |c| {
            (self.owner[c] == m).then(|| rows.binary_search(&c).unwrap())
        });
        let mut remote = Vec::with_capacity(self.recv_from[m].len());
        for &n in &self.recv_from[m] {
            let ids = &self.send[n][m];
            let op = a.select(rows, ids.len(), |c| {
                if self.owner[c] == n {
                    ids.binary_search(&c).ok()
                } else {
                    None
                }
            });
            remote.push((n, op));
        }
        // every column of A_m must land in exactly one operator
        let covered = local.nnz() + remote.iter().map(|(_, op)| op.nnz()).sum::<usize>();
        let expected: usize = rows.iter().map(|&r| a.row_nnz(r)).sum();
        if covered != expected {
            return Err(Error::Comm(format!(
                "plan does not cover the columns of rank {m}: {covered} of {expected} nonzeros"
            )));
        }
        Ok(RankOperators { local, remote })
    }

    pub fn summary(&self) -> PlanSummary {
        let mut pairs = Vec::new();
        for m in 0..self.p {
            for n in self.send_to(m) {
                pairs.push(PairRows {
                    from: m,
                    to: n,
                    rows: self.send[m][n].len(),
                });
            }
        }
        let volume = plan_volume(self, 1);
        PlanSummary {
            p: self.p,
            pairs,
            rows_sent: volume.sent_words.iter().map(|&w| w as usize).collect(),
            msgs_sent: volume.msg_count.iter().map(|&c| c as usize).collect(),
            total_rows: volume.total_words as usize,
            total_msgs: volume.total_msgs as usize,
        }
    }
}

/// Sparse operators of one rank: `local` acts on its own rows, `remote[i]`
/// on the rows received from sender `remote[i].0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOperators {
    pub local: SparseMatrix,
    pub remote: Vec<(usize, SparseMatrix)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairRows {
    pub from: usize,
    pub to: usize,
    pub rows: usize,
}

/// Plan digest written by `--emit-plan`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanSummary {
    pub p: usize,
    pub pairs: Vec<PairRows>,
    pub rows_sent: Vec<usize>,
    pub msgs_sent: Vec<usize>,
    pub total_rows: usize,
    pub total_msgs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PlanVolume {
    pub sent_words: Vec<u64>,
    pub total_words: u64,
    pub msg_count: Vec<u64>,
    pub total_msgs: u64,
}

pub fn build_comm_plan(a: &SparseMatrix, pi: &Partition) -> Result<CommPlan> {
    if pi.n_vertices() != a.n_rows() {
        return Err(Error::Unassigned {
            vertex: pi.n_vertices().min(a.n_rows()),
        });
    }
    build_comm_plan_from_owner(a, pi.assignment(), pi.p())
}

/// Plan for an explicit owner vector. Parts may be empty, as happens when a
/// fixed partition is restricted to a sampled batch.
pub fn build_comm_plan_from_owner(a: &SparseMatrix, owner: &[usize], p: usize) -> Result<CommPlan> {
    if !a.is_square() {
        return Err(Error::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        });
    }
    if owner.len() != a.n_rows() {
        return Err(Error::Unassigned {
            vertex: owner.len().min(a.n_rows()),
        });
    }
    if let Some(v) = owner.iter().position(|&m| m >= p) {
        return Err(Error::InvalidArgument(format!(
            "row {v} is owned by part {} but p = {p}",
            owner[v]
        )));
    }
    let mut members = vec![Vec::new(); p];
    for (v, &m) in owner.iter().enumerate() {
        members[m].push(v);
    }
    let mut send = vec![vec![Vec::new(); p]; p];
    for (n, rows) in members.iter().enumerate() {
        for &r in rows {
            for &c in a.row_cols(r) {
                let m = owner[c];
                if m != n {
                    send[m][n].push(c);
                }
            }
        }
    }
    for lists in &mut send {
        for ids in lists.iter_mut() {
            ids.sort_unstable();
            ids.dedup();
        }
    }
    let recv_from = (0..p)
        .map(|m| (0..p).filter(|&n| !send[n][m].is_empty()).collect())
        .collect();
    Ok(CommPlan {
        p,
        owner: owner.to_vec(),
        members,
        send,
        recv_from,
    })
}

/// Words and messages the plan moves when every row carries `d` values.
pub fn plan_volume(plan: &CommPlan, d: usize) -> PlanVolume {
    let p = plan.p;
    let sent_words: Vec<u64> = (0..p)
        .map(|m| plan.send[m].iter().map(|ids| (ids.len() * d) as u64).sum())
        .collect();
    let msg_count: Vec<u64> = (0..p).map(|m| plan.send_to(m).count() as u64).collect();
    PlanVolume {
        total_words: sent_words.iter().sum(),
        total_msgs: msg_count.iter().sum(),
        sent_words,
        msg_count,
    }
}
