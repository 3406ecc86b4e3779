//! Homogeneous linear-affine cost model.
//!
//! A round in which every rank concurrently sends and receives `n` elements
//! costs `α + β·n`; reducing `n` received elements costs `γ·n`. Times are
//! exact rationals so analytic and simulated costs can be compared with `==`.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;

use crate::schedule::{ceil_log2, SkipSchedule};
use crate::transport::Metrics;

pub type Time = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostParams {
    /// Start-up latency charged once per round.
    pub alpha: Time,
    /// Transmission time per element.
    pub beta: Time,
    /// Reduction time per element.
    pub gamma: Time,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeCost(pub &'static str);

impl fmt::Display for NegativeCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cost parameter {} must be non-negative", self.0)
    }
}

impl std::error::Error for NegativeCost {}

impl CostParams {
    pub fn new(alpha: Time, beta: Time, gamma: Time) -> Result<Self, NegativeCost> {
        for (name, v) in [("alpha", &alpha), ("beta", &beta), ("gamma", &gamma)] {
            if *v < Time::from_integer(0) {
                return Err(NegativeCost(name));
            }
        }
        Ok(Self { alpha, beta, gamma })
    }

    pub fn from_integers(alpha: i128, beta: i128, gamma: i128) -> Result<Self, NegativeCost> {
        Self::new(alpha.into(), beta.into(), gamma.into())
    }
}

fn int(n: usize) -> Time {
    Time::from_integer(n as i128)
}

/// `α·q + (β + γ)·m·(p−1)/p` for a schedule with `q` rounds.
fn reduce_scatter_closed_form(p: usize, rounds: usize, m: usize, c: &CostParams) -> Time {
    let volume = int(m) * int(p - 1) / int(p);
    c.alpha * int(rounds) + (c.beta + c.gamma) * volume
}

/// `α⌈log₂ p⌉ + β·m(p−1)/p + γ·m(p−1)/p` for `m` elements in `p` equal blocks.
pub fn uniform_reduce_scatter_cost(p: usize, m: usize, c: &CostParams) -> Time {
    reduce_scatter_closed_form(p.max(1), ceil_log2(p), m, c)
}

/// The initial rotated copy of the input, at most `γ·m`.
pub fn initial_copy_cost(m: usize, c: &CostParams) -> Time {
    c.gamma * int(m)
}

/// Same accounting as [`uniform_reduce_scatter_cost`] with the schedule's own round count.
pub fn schedule_reduce_scatter_cost(schedule: &SkipSchedule, m: usize, c: &CostParams) -> Time {
    reduce_scatter_closed_form(schedule.p(), schedule.rounds(), m, c)
}

/// `⌈log₂ p⌉·(α + β·m + γ·m)`: no round moves or reduces more than `m` elements.
pub fn irregular_upper_bound(p: usize, m: usize, c: &CostParams) -> Time {
    int(ceil_log2(p)) * (c.alpha + c.beta * int(m) + c.gamma * int(m))
}

/// `q·(α + β·m + γ·m)` for a schedule with `q` rounds.
pub fn schedule_upper_bound(schedule: &SkipSchedule, m: usize, c: &CostParams) -> Time {
    int(schedule.rounds()) * (c.alpha + c.beta * int(m) + c.gamma * int(m))
}

/// `α·2⌈log₂ p⌉ + β·2m(p−1)/p + γ·m(p−1)/p`: both phases move `p − 1`
/// blocks, only the first reduces.
pub fn allreduce_cost(p: usize, m: usize, c: &CostParams) -> Time {
    let p = p.max(1);
    let volume = int(m) * int(p - 1) / int(p);
    c.alpha * int(2 * ceil_log2(p)) + c.beta * int(2) * volume + c.gamma * volume
}

/// [`allreduce_cost`] with the schedule's own round count `q` per phase.
pub fn schedule_allreduce_cost(schedule: &SkipSchedule, m: usize, c: &CostParams) -> Time {
    let (p, q) = (schedule.p(), schedule.rounds());
    let volume = int(m) * int(p - 1) / int(p);
    c.alpha * int(2 * q) + c.beta * int(2) * volume + c.gamma * volume
}

/// `q·(α + β·m + γ·m) + q·(α + β·m)`: the reduction phase as in
/// [`schedule_upper_bound`], then `q` gather rounds that reduce nothing.
pub fn schedule_allreduce_upper_bound(schedule: &SkipSchedule, m: usize, c: &CostParams) -> Time {
    schedule_upper_bound(schedule, m, c) + int(schedule.rounds()) * (c.alpha + c.beta * int(m))
}

/// Charges each simulated round `α + β·(max elements sent by a rank) +
/// γ·(max elements reduced by a rank)`.
pub fn measured_cost(metrics: &Metrics, c: &CostParams) -> Time {
    metrics
        .per_round
        .iter()
        .map(|r| c.alpha + c.beta * int(r.max_elements_sent) + c.gamma * int(r.max_elements_reduced))
        .sum()
}

pub fn to_f64(t: &Time) -> f64 {
    *t.numer() as f64 / *t.denom() as f64
}

/// Parses `"3"`, `"0.25"`, `"-1.5"` or `"1/3"` exactly.
pub fn parse_time(s: &str) -> Result<Time, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i128 = n.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        let d: i128 = d.trim().parse().map_err(|e| format!("`{s}`: {e}"))?;
        if d == 0 {
            return Err(format!("`{s}`: zero denominator"));
        }
        return Ok(Time::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (whole, frac) = body.split_once('.').unwrap_or((body, ""));
    if whole.is_empty() && frac.is_empty() || !whole.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(format!("`{s}` is not a decimal number"));
    }
    if frac.len() > 30 {
        return Err(format!("`{s}` has too many decimal places"));
    }
    let digits = format!("{whole}{frac}");
    let numer: i128 = digits.parse().map_err(|e| format!("`{s}`: {e}"))?;
    let t = Time::new(numer, 10i128.pow(frac.len() as u32));
    Ok(if neg { -t } else { t })
}

impl FromStr for CostParams {
    type Err = String;

    /// `"alpha,beta,gamma"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').collect();
        let [a, b, g] = parts.as_slice() else {
            return Err(format!("expected alpha,beta,gamma, got `{s}`"));
        };
        CostParams::new(parse_time(a)?, parse_time(b)?, parse_time(g)?).map_err(|e| e.to_string())
    }
}
