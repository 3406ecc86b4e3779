//! Drives a set of rank programs through their lockstep rounds.
//!
//! Three execution modes produce identical results and traces:
//! - [`ExecMode::Sequential`]: one coordinator visits every rank each round.
//! - [`ExecMode::Parallel`]: the coordinator fans the per-rank post and
//!   deliver work out over rayon (sequential without the `parallel` feature).
//! - [`ExecMode::Threaded`]: one OS thread per rank, meeting at a barrier
//!   every round through a [`SharedNetwork`].

use std::fmt;
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{EngineError, TransportError};
use crate::ops::Element;
use crate::transport::{LocalWork, Metrics, Network, Post, RoundTrace, SharedNetwork};

/// A rank's side of a collective as a sequential state machine.
pub trait RankProgram: Send {
    type Elem: Element;
    type Output: Send;

    fn rank(&self) -> usize;

    fn p(&self) -> usize;

    /// Digest of everything all ranks must agree on (kind, p, layout, schedule, operator).
    fn fingerprint(&self) -> u64;

    fn rounds(&self) -> usize;

    /// Work done before the first round (the initial rotated copy).
    fn setup_work(&self) -> LocalWork;

    fn post(&mut self, round: usize) -> Post<Self::Elem>;

    fn deliver(&mut self, round: usize, received: Vec<Self::Elem>) -> Result<LocalWork, EngineError>;

    fn finish(self) -> Self::Output;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
    Threaded,
}

impl ExecMode {
    pub const ALL: [ExecMode; 3] = [ExecMode::Sequential, ExecMode::Parallel, ExecMode::Threaded];
}

impl fmt::Display for ExecMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecMode::Sequential => "sequential",
            ExecMode::Parallel => "parallel",
            ExecMode::Threaded => "threaded",
        })
    }
}

impl FromStr for ExecMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Ok(ExecMode::Sequential),
            "parallel" | "par" => Ok(ExecMode::Parallel),
            "threaded" | "threads" => Ok(ExecMode::Threaded),
            other => Err(format!("unknown execution mode `{other}` (sequential, parallel, threaded)")),
        }
    }
}

/// Per-rank outputs of a finished collective plus what the fabric observed.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveRun<T> {
    pub outputs: Vec<T>,
    pub metrics: Metrics,
    pub trace: Vec<RoundTrace>,
}

impl<T> CollectiveRun<T> {
    pub fn try_map<U, E>(self, f: impl FnMut(T) -> Result<U, E>) -> Result<CollectiveRun<U>, E> {
        Ok(CollectiveRun {
            outputs: self.outputs.into_iter().map(f).collect::<Result<_, _>>()?,
            metrics: self.metrics,
            trace: self.trace,
        })
    }
}

/// Checks the rank set and the collective fingerprints, then runs every
/// program to completion.
pub fn run<P: RankProgram>(programs: Vec<P>, mode: ExecMode) -> Result<CollectiveRun<P::Output>, EngineError> {
    handshake(&programs)?;
    match mode {
        ExecMode::Sequential => run_coordinated(programs, false),
        ExecMode::Parallel => run_coordinated(programs, true),
        ExecMode::Threaded => run_threaded(programs),
    }
}

/// Collective misuse check before round 0: ranks `0..p` each appear once and
/// agree with rank 0 on the fingerprint and round count.
fn handshake<P: RankProgram>(programs: &[P]) -> Result<(), EngineError> {
    let first = programs.first().ok_or(EngineError::NoRanks)?;
    let p = first.p();
    if programs.len() != p {
        return Err(EngineError::RankCountMismatch {
            what: "programs",
            expected: p,
            found: programs.len(),
        });
    }
    let mut seen = vec![false; p];
    for prog in programs {
        let r = prog.rank();
        if r >= p || prog.p() != p {
            return Err(EngineError::RankOutOfRange { rank: r, p });
        }
        if std::mem::replace(&mut seen[r], true) {
            return Err(EngineError::RankSet { rank: r });
        }
        if prog.fingerprint() != first.fingerprint() || prog.rounds() != first.rounds() {
            return Err(EngineError::CollectiveMismatch {
                rank: r,
                expected: first.fingerprint(),
                found: prog.fingerprint(),
            });
        }
    }
    Ok(())
}

fn by_rank<P: RankProgram>(mut programs: Vec<P>) -> Vec<P> {
    programs.sort_by_key(|p| p.rank());
    programs
}

#[cfg(feature = "parallel")]
fn post_all<P: RankProgram>(programs: &mut [P], round: usize, parallel: bool) -> Vec<Post<P::Elem>> {
    if parallel {
        programs.par_iter_mut().map(|prog| prog.post(round)).collect()
    } else {
        programs.iter_mut().map(|prog| prog.post(round)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn post_all<P: RankProgram>(programs: &mut [P], round: usize, _parallel: bool) -> Vec<Post<P::Elem>> {
    programs.iter_mut().map(|prog| prog.post(round)).collect()
}

type Delivered = Result<LocalWork, EngineError>;

#[cfg(feature = "parallel")]
fn deliver_all<P: RankProgram>(programs: &mut [P], round: usize, inbox: Vec<Vec<P::Elem>>, parallel: bool) -> Vec<Delivered> {
    if parallel {
        programs
            .par_iter_mut()
            .zip(inbox)
            .map(|(prog, msg)| prog.deliver(round, msg))
            .collect()
    } else {
        programs.iter_mut().zip(inbox).map(|(prog, msg)| prog.deliver(round, msg)).collect()
    }
}

#[cfg(not(feature = "parallel"))]
fn deliver_all<P: RankProgram>(programs: &mut [P], round: usize, inbox: Vec<Vec<P::Elem>>, _parallel: bool) -> Vec<Delivered> {
    programs.iter_mut().zip(inbox).map(|(prog, msg)| prog.deliver(round, msg)).collect()
}

fn run_coordinated<P: RankProgram>(programs: Vec<P>, parallel: bool) -> Result<CollectiveRun<P::Output>, EngineError> {
    let mut programs = by_rank(programs);
    let p = programs.len();
    let rounds = programs[0].rounds();
    let mut net = Network::new(p);
    for prog in &programs {
        net.record_work(prog.rank(), None, prog.setup_work());
    }
    for round in 0..rounds {
        let posts = post_all(&mut programs, round, parallel);
        for (rank, post) in posts.into_iter().enumerate() {
            net.post(rank, post)?;
        }
        let inbox = net.complete_round()?;
        for (rank, work) in deliver_all(&mut programs, round, inbox, parallel).into_iter().enumerate() {
            net.record_work(rank, Some(round), work?);
        }
    }
    let (metrics, trace) = net.into_parts();
    Ok(CollectiveRun {
        outputs: programs.into_iter().map(RankProgram::finish).collect(),
        metrics,
        trace,
    })
}

fn run_threaded<P: RankProgram>(programs: Vec<P>) -> Result<CollectiveRun<P::Output>, EngineError> {
    let programs = by_rank(programs);
    let p = programs.len();
    let rounds = programs[0].rounds();
    let shared = SharedNetwork::new(p);

    let results: Vec<Result<P::Output, EngineError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = programs
            .into_iter()
            .map(|mut prog| {
                let shared = &shared;
                scope.spawn(move || {
                    let rank = prog.rank();
                    shared.record_work(rank, None, prog.setup_work());
                    let mut failure: Option<EngineError> = None;
                    for round in 0..rounds {
                        // A rank that failed locally keeps showing up at the
                        // barrier and aborts the round, so nobody waits forever.
                        let post = failure.is_none().then(|| prog.post(round));
                        match shared.exchange(rank, post) {
                            Ok(msg) => match prog.deliver(round, msg) {
                                Ok(work) => shared.record_work(rank, Some(round), work),
                                Err(e) => failure = Some(e),
                            },
                            Err(e) => return Err(failure.unwrap_or(EngineError::Transport(e))),
                        }
                    }
                    // Work records of the last round land before anyone reads metrics.
                    shared.barrier();
                    match failure {
                        Some(e) => Err(e),
                        None => Ok(prog.finish()),
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank thread panicked"))
            .collect()
    });

    let mut outputs = Vec::with_capacity(p);
    let mut errors = Vec::new();
    for res in results {
        match res {
            Ok(out) => outputs.push(out),
            Err(e) => errors.push(e),
        }
    }
    // Report the rank that failed, not the ranks it dragged down with it.
    let aborted = |e: &EngineError| matches!(e, EngineError::Transport(TransportError::Aborted { .. }));
    if let Some(e) = errors.iter().find(|e| !aborted(e)).or(errors.first()) {
        return Err(e.clone());
    }
    let (metrics, trace) = shared.into_inner().into_parts();
    Ok(CollectiveRun { outputs, metrics, trace })
}
