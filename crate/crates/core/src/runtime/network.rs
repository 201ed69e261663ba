//! In-process message passing between simulated ranks.

use std::collections::{BTreeMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sparse::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forward,
    Backward,
    Allreduce,
}

/// Identifies which exchange a message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Tag {
    pub phase: Phase,
    pub layer: usize,
}

impl Tag {
    pub fn new(phase: Phase, layer: usize) -> Self {
        Self { phase, layer }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Traffic {
    pub msgs: u64,
    pub words: u64,
}

/// Counters keyed by `(tag, from, to)`.
pub type TrafficLog = BTreeMap<(Tag, usize, usize), Traffic>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    /// Receivers wait up to the timeout for a message to arrive.
    Blocking { timeout: Duration },
    /// The message must already be queued; used by the round-based scheduler.
    Immediate,
}

#[derive(Default)]
struct Channel {
    queue: Mutex<VecDeque<(Tag, DenseMatrix)>>,
    ready: Condvar,
}

/// One unbounded FIFO channel per ordered rank pair.
pub struct SimNetwork {
    p: usize,
    delivery: Delivery,
    channels: Vec<Channel>,
    log: Mutex<TrafficLog>,
    aborted: AtomicBool,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl SimNetwork {
    pub fn new(p: usize, delivery: Delivery) -> Self {
        Self {
            p,
            delivery,
            channels: (0..p * p).map(|_| Channel::default()).collect(),
            log: Mutex::new(TrafficLog::new()),
            aborted: AtomicBool::new(false),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    fn channel(&self, from: usize, to: usize) -> Result<&Channel> {
        if from >= self.p || to >= self.p || from == to {
            return Err(Error::Comm(format!("no channel from rank {from} to rank {to}")));
        }
        Ok(&self.channels[from * self.p + to])
    }

    pub fn send(&self, from: usize, to: usize, tag: Tag, payload: DenseMatrix) -> Result<()> {
        let ch = self.channel(from, to)?;
        let words = (payload.n_rows() * payload.n_cols()) as u64;
        {
            let mut log = lock(&self.log);
            let t = log.entry((tag, from, to)).or_default();
            t.msgs += 1;
            t.words += words;
        }
        lock(&ch.queue).push_back((tag, payload));
        ch.ready.notify_all();
        Ok(())
    }

    /// Takes the next message from `from` to `to`, which must carry `tag`.
    pub fn recv(&self, from: usize, to: usize, tag: Tag) -> Result<DenseMatrix> {
        let ch = self.channel(from, to)?;
        let mut queue = lock(&ch.queue);
        let started = Instant::now();
        loop {
            if let Some((got, _)) = queue.front() {
                if *got != tag {
                    return Err(Error::Comm(format!(
                        "rank {to} expected {tag:?} from rank {from} but found {got:?}"
                    )));
                }
                return Ok(queue.pop_front().unwrap().1);
            }
            if self.aborted.load(Ordering::SeqCst) {
                return Err(Error::Comm("network aborted".into()));
            }
            match self.delivery {
                Delivery::Immediate => {
                    return Err(Error::Comm(format!(
                        "rank {to} expected {tag:?} from rank {from} but nothing was sent"
                    )));
                }
                Delivery::Blocking { timeout } => {
                    let left = timeout.saturating_sub(started.elapsed());
                    if left.is_zero() {
                        return Err(Error::Comm(format!(
                            "rank {to} timed out waiting for {tag:?} from rank {from}"
                        )));
                    }
                    queue = ch
                        .ready
                        .wait_timeout(queue, left.min(Duration::from_millis(50)))
                        .unwrap_or_else(|e| e.into_inner())
                        .0;
                }
            }
        }
    }

    /// Wakes every blocked receiver with an error.
    pub fn abort(&self) {
        self.aborted.store(true, Ordering::SeqCst);
        for ch in &self.channels {
            let _guard = lock(&ch.queue);
            ch.ready.notify_all();
        }
    }

    pub(crate) fn is_aborted(&self) -> bool {
        self.aborted.load(Ordering::SeqCst)
    }

    /// Messages sent but not yet received.
    pub fn pending(&self) -> usize {
        self.channels.iter().map(|ch| lock(&ch.queue).len()).sum()
    }

    /// Returns the counters accumulated since the last call and resets them.
    pub fn take_traffic(&self) -> TrafficLog {
        std::mem::take(&mut *lock(&self.log))
    }
}
