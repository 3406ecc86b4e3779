//! Simulated one-ported, bidirectional, lockstep fabric.
//!
//! In every round each rank posts exactly one combined send/receive: a
//! payload for its to-rank and the name of its from-rank. A round completes
//! once all `p` ranks have posted and the pairing is consistent (whoever `r`
//! sends to must expect to receive from `r`). Pairing is checked when the
//! round closes, so a mismatched pattern surfaces as a
//! [`TransportError::Deadlock`] instead of a hang.

use std::io;
use std::sync::{Barrier, Mutex, MutexGuard};

use serde::Serialize;

use crate::error::TransportError;
use crate::ops::Element;

/// One rank's combined send/receive for a round.
#[derive(Debug, Clone, PartialEq)]
pub struct Post<E> {
    pub to: usize,
    pub from: usize,
    /// Skip that produced this exchange, recorded in the trace.
    pub skip: usize,
    pub blocks: usize,
    pub payload: Vec<E>,
}

/// Local work a rank did after a delivery (or during setup).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LocalWork {
    pub op_applications: usize,
    pub elements_reduced: usize,
    pub elements_copied: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub rank: usize,
    pub to: usize,
    pub from: usize,
    pub blocks: usize,
    pub elements: usize,
    #[serde(skip)]
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    pub skip: usize,
    pub entries: Vec<TraceEntry>,
}

impl RoundTrace {
    /// The single skip `s` with `to = r + s` and `from = r − s` (mod p) for
    /// every rank, if one exists. Reversed allgather rounds report `p − s`.
    pub fn circulant_skip(&self, p: usize) -> Option<usize> {
        let first = self.entries.first()?;
        let s = (first.to + p - first.rank) % p;
        self.entries
            .iter()
            .all(|e| e.to == (e.rank + s) % p && e.from == (e.rank + p - s) % p)
            .then_some(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RankMetrics {
    pub blocks_sent: usize,
    pub blocks_received: usize,
    pub elements_sent: usize,
    pub elements_received: usize,
    pub bytes_sent: usize,
    pub op_applications: usize,
    pub elements_reduced: usize,
    pub elements_copied: usize,
}

/// Largest per-rank volume in one round; the cost model charges rounds by these.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RoundVolume {
    pub skip: usize,
    pub max_elements_sent: usize,
    pub max_elements_reduced: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub p: usize,
    pub rounds: usize,
    pub per_rank: Vec<RankMetrics>,
    pub per_round: Vec<RoundVolume>,
}

impl Metrics {
    fn new(p: usize) -> Self {
        Self {
            p,
            rounds: 0,
            per_rank: vec![RankMetrics::default(); p],
            per_round: Vec::new(),
        }
    }

    pub fn total_elements_sent(&self) -> usize {
        self.per_rank.iter().map(|m| m.elements_sent).sum()
    }

    pub fn total_elements_received(&self) -> usize {
        self.per_rank.iter().map(|m| m.elements_received).sum()
    }

    /// `Some(v)` if `f` gives the same value on every rank.
    pub fn uniform<T: PartialEq + Copy>(&self, f: impl Fn(&RankMetrics) -> T) -> Option<T> {
        let mut it = self.per_rank.iter().map(f);
        let first = it.next()?;
        it.all(|v| v == first).then_some(first)
    }
}

pub struct Network<E> {
    p: usize,
    round: usize,
    slots: Vec<Option<Post<E>>>,
    trace: Vec<RoundTrace>,
    metrics: Metrics,
}

impl<E: Element> Network<E> {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            round: 0,
            slots: (0..p).map(|_| None).collect(),
            trace: Vec::new(),
            metrics: Metrics::new(p),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// Posts `rank`'s exchange for the current round. The payload is owned by
    /// the network from here on.
    pub fn post(&mut self, rank: usize, post: Post<E>) -> Result<(), TransportError> {
        let round = self.round;
        for peer in [rank, post.to, post.from] {
            if peer >= self.p {
                return Err(TransportError::InvalidPeer {
                    round,
                    rank,
                    peer,
                    p: self.p,
                });
            }
        }
        let slot = &mut self.slots[rank];
        if slot.is_some() {
            return Err(TransportError::DoublePost { round, rank });
        }
        *slot = Some(post);
        Ok(())
    }

    /// Validates the pairing, delivers every payload and advances the round.
    /// Returns each rank's received payload, indexed by rank.
    ///
    /// On error the round's posts are discarded.
    pub fn complete_round(&mut self) -> Result<Vec<Vec<E>>, TransportError> {
        let round = self.round;
        let missing: Vec<usize> = (0..self.p).filter(|&r| self.slots[r].is_none()).collect();
        if !missing.is_empty() {
            self.clear_slots();
            return Err(TransportError::IncompleteRound { round, missing });
        }
        let posts: Vec<Post<E>> = self.slots.iter_mut().map(|s| s.take().expect("checked")).collect();

        for (sender, post) in posts.iter().enumerate() {
            let expected = posts[post.to].from;
            if expected != sender {
                return Err(TransportError::Deadlock {
                    round,
                    sender,
                    receiver: post.to,
                    expected,
                });
            }
        }

        let skip = posts.first().map_or(0, |p| p.skip);
        let mut entries = Vec::with_capacity(self.p);
        let mut inbox: Vec<Option<Vec<E>>> = (0..self.p).map(|_| None).collect();
        let mut max_sent = 0;
        for (rank, post) in posts.into_iter().enumerate() {
            let elements: usize = post.payload.iter().map(Element::units).sum();
            let bytes: usize = post.payload.iter().map(Element::byte_len).sum();
            entries.push(TraceEntry {
                rank,
                to: post.to,
                from: post.from,
                blocks: post.blocks,
                elements,
                bytes,
            });
            let sender = &mut self.metrics.per_rank[rank];
            sender.blocks_sent += post.blocks;
            sender.elements_sent += elements;
            sender.bytes_sent += bytes;
            let receiver = &mut self.metrics.per_rank[post.to];
            receiver.blocks_received += post.blocks;
            receiver.elements_received += elements;
            max_sent = max_sent.max(elements);
            inbox[post.to] = Some(post.payload);
        }
        self.trace.push(RoundTrace { round, skip, entries });
        self.metrics.per_round.push(RoundVolume {
            skip,
            max_elements_sent: max_sent,
            max_elements_reduced: 0,
        });
        self.metrics.rounds += 1;
        self.round += 1;
        Ok(inbox.into_iter().map(|m| m.expect("pairing is a permutation")).collect())
    }

    /// Records local work; `round` is `None` for setup work before round 0.
    pub fn record_work(&mut self, rank: usize, round: Option<usize>, work: LocalWork) {
        let m = &mut self.metrics.per_rank[rank];
        m.op_applications += work.op_applications;
        m.elements_reduced += work.elements_reduced;
        m.elements_copied += work.elements_copied;
        if let Some(vol) = round.and_then(|k| self.metrics.per_round.get_mut(k)) {
            vol.max_elements_reduced = vol.max_elements_reduced.max(work.elements_reduced);
        }
    }

    fn clear_slots(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
    }

    pub fn trace(&self) -> &[RoundTrace] {
        &self.trace
    }

    pub fn collect_metrics(&self) -> Metrics {
        self.metrics.clone()
    }

    pub fn into_parts(self) -> (Metrics, Vec<RoundTrace>) {
        (self.metrics, self.trace)
    }
}

enum Outcome<E> {
    Idle,
    Delivered(Vec<Option<Vec<E>>>),
    Failed(TransportError),
}

/// A [`Network`] shared by `p` concurrently running rank contexts, with a
/// barrier at every round boundary.
pub struct SharedNetwork<E> {
    net: Mutex<Network<E>>,
    barrier: Barrier,
    pending_error: Mutex<Option<TransportError>>,
    outcome: Mutex<Outcome<E>>,
}

impl<E: Element> SharedNetwork<E> {
    pub fn new(p: usize) -> Self {
        Self {
            net: Mutex::new(Network::new(p)),
            barrier: Barrier::new(p),
            pending_error: Mutex::new(None),
            outcome: Mutex::new(Outcome::Idle),
        }
    }

    /// Blocks until every rank has posted for this round; returns what `rank`
    /// received. `None` aborts the round for everyone.
    ///
    /// Must be called by all `p` ranks once per round, even after an error.
    pub fn exchange(&self, rank: usize, post: Option<Post<E>>) -> Result<Vec<E>, TransportError> {
        let posted = {
            let mut net = lock(&self.net);
            let round = net.round();
            match post {
                Some(post) => net.post(rank, post),
                None => Err(TransportError::Aborted { round, rank }),
            }
        };
        if let Err(e) = posted {
            lock(&self.pending_error).get_or_insert(e);
        }

        if self.barrier.wait().is_leader() {
            let mut net = lock(&self.net);
            let result = match lock(&self.pending_error).take() {
                Some(e) => {
                    net.clear_slots();
                    Err(e)
                }
                None => net.complete_round(),
            };
            *lock(&self.outcome) = match result {
                Ok(inbox) => Outcome::Delivered(inbox.into_iter().map(Some).collect()),
                Err(e) => Outcome::Failed(e),
            };
        }
        self.barrier.wait();

        match &mut *lock(&self.outcome) {
            Outcome::Delivered(inbox) => Ok(inbox[rank].take().expect("each inbox is taken once")),
            Outcome::Failed(e) => Err(e.clone()),
            Outcome::Idle => unreachable!("leader publishes an outcome before the second barrier"),
        }
    }

    /// All-ranks barrier outside of any communication round.
    pub fn barrier(&self) {
        self.barrier.wait();
    }

    pub fn record_work(&self, rank: usize, round: Option<usize>, work: LocalWork) {
        lock(&self.net).record_work(rank, round, work);
    }

    pub fn into_inner(self) -> Network<E> {
        self.net.into_inner().unwrap_or_else(|e| e.into_inner())
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// One JSON object per round:
/// `{"round":k,"skip":s,"entries":[{"rank":r,"to":t,"from":f,"blocks":b,"elements":e}]}`.
pub fn write_trace_jsonl<W: io::Write>(trace: &[RoundTrace], mut out: W) -> io::Result<()> {
    for round in trace {
        serde_json::to_writer(&mut out, round)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Same content as the JSON lines, flattened to one row per (round, rank).
pub fn write_trace_csv<W: io::Write>(trace: &[RoundTrace], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["round", "skip", "rank", "to", "from", "blocks", "elements"])?;
    for round in trace {
        for e in &round.entries {
            w.write_record(
                [round.round, round.skip, e.rank, e.to, e.from, e.blocks, e.elements].map(|v| v.to_string()),
            )?;
        }
    }
    w.flush()
}
