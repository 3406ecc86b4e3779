use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("rank count must be at least 1")]
    ZeroRanks,
    #[error("unknown scheme `{0}` (expected halving, doubling, linear, sqrt or custom)")]
    UnknownScheme(String),
    #[error("skips must be strictly decreasing: {prev} followed by {next}")]
    NotDecreasing { prev: usize, next: usize },
    #[error("skip {skip} must lie in 1..{p}")]
    SkipOutOfRange { skip: usize, p: usize },
    #[error("round {round}: block {node} is hooked below {target}, which is no longer a root")]
    HookTargetNotRoot {
        round: usize,
        node: usize,
        target: usize,
    },
    #[error("round {round}: block {node} was already hooked in an earlier round")]
    AlreadyHooked { round: usize, node: usize },
    #[error("hooking left {roots} separate trees instead of one")]
    NotSpanning { roots: usize },
    #[error("rank {rank} out of range for p = {p}")]
    RankOutOfRange { rank: usize, p: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("round {round}: rank {rank} posted twice")]
    DoublePost { round: usize, rank: usize },
    #[error("round {round}: ranks {missing:?} did not post")]
    IncompleteRound { round: usize, missing: Vec<usize> },
    #[error("round {round}: rank {rank} names peer {peer}, outside 0..{p}")]
    InvalidPeer {
        round: usize,
        rank: usize,
        peer: usize,
        p: usize,
    },
    #[error(
        "round {round}: deadlock, rank {sender} sends to {receiver} but rank {receiver} expects from {expected}"
    )]
    Deadlock {
        round: usize,
        sender: usize,
        receiver: usize,
        expected: usize,
    },
    #[error("round {round}: rank {rank} aborted the collective")]
    Aborted { round: usize, rank: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("operator `{op}` is not commutative; enable allow_non_commutative to run it anyway")]
    NonCommutative { op: String },
    #[error("rank count mismatch: {what} has p = {found}, expected {expected}")]
    RankCountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("rank {rank} out of range for p = {p}")]
    RankOutOfRange { rank: usize, p: usize },
    #[error("rank {rank} was given twice or a rank is missing from the collective")]
    RankSet { rank: usize },
    #[error(
        "collective mismatch: rank {rank} disagrees with rank 0 on layout, schedule or operator (fingerprint {found:#x} vs {expected:#x})"
    )]
    CollectiveMismatch { rank: usize, expected: u64, found: u64 },
    #[error("rank {rank}, round {round}: received {found} elements, expected {expected}")]
    PayloadLength {
        rank: usize,
        round: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("all-to-all needs equal block sizes; block {block} has {found} elements, block 0 has {expected}")]
    IrregularAlltoall {
        block: usize,
        expected: usize,
        found: usize,
    },
    #[error("no ranks given")]
    NoRanks,
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Transport(#[from] TransportError),
}
