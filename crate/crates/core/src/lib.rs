//! Circulant-graph collectives over a simulated lockstep fabric.
//!
//! The reduce-scatter (partitioned all-reduce) runs in `⌈log₂ p⌉` rounds on a
//! circulant graph whose skips come from repeatedly halving `p` with rounding
//! up. Every rank sends, receives and reduces exactly `p − 1` blocks. The
//! allreduce appends the reversed rounds as an allgather phase, and the same
//! schedule with concatenation as the operator gives a round-optimal
//! all-to-all.
//!
//! Modules:
//! - [`schedule`]: skip schedules, validation, implicit reduction trees.
//! - [`engine`]: per-rank programs for the four collectives.
//! - [`transport`]: the one-ported bidirectional network, traces and metrics.
//! - [`runner`]: drives rank programs sequentially, on rayon, or one thread per rank.
//! - [`costmodel`]: linear-affine (α, β, γ) time estimates.
//! - [`oracle`]: brute-force reference results.

pub mod costmodel;
pub mod engine;
pub mod error;
pub mod ops;
pub mod oracle;
pub mod runner;
pub mod schedule;
pub mod term;
pub mod transport;

pub use engine::{BlockLayout, BlockVector, EngineOptions, RankContext};
pub use error::{EngineError, ScheduleError, TransportError};
pub use ops::{Element, ReductionOp};
pub use runner::{CollectiveRun, ExecMode};
pub use schedule::{ReductionTree, Scheme, SkipSchedule};
pub use term::Term;
pub use transport::{Metrics, RoundTrace};
