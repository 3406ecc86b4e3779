//! Skip schedules for circulant communication graphs.
//!
//! In round `k` rank `r` sends to `(r + s_k) mod p` and receives from
//! `(r − s_k + p) mod p`. A schedule stores the skips actually used in
//! communication rounds; the loop-entry value `s₀ = p` is implicit and is
//! reconstructed wherever run lengths are needed.
//!
//! Replaying a schedule's hooking rounds yields the reduction tree that every
//! rank builds implicitly (see [`ReductionTree`]).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;
use crate::term::Term;

/// `⌈log₂ p⌉`, with `ceil_log2(1) = 0`.
pub fn ceil_log2(p: usize) -> usize {
    if p <= 1 {
        0
    } else {
        (usize::BITS - (p - 1).leading_zeros()) as usize
    }
}

fn ceil_sqrt(p: usize) -> usize {
    let s = p.isqrt();
    if s * s < p {
        s + 1
    } else {
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Halving,
    Doubling,
    Linear,
    Sqrt,
    Custom,
}

impl Scheme {
    pub const GENERATED: [Scheme; 4] = [Scheme::Halving, Scheme::Doubling, Scheme::Linear, Scheme::Sqrt];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Halving => "halving",
            Scheme::Doubling => "doubling",
            Scheme::Linear => "linear",
            Scheme::Sqrt => "sqrt",
            Scheme::Custom => "custom",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "halving" => Ok(Scheme::Halving),
            "doubling" => Ok(Scheme::Doubling),
            "linear" => Ok(Scheme::Linear),
            "sqrt" => Ok(Scheme::Sqrt),
            "custom" => Ok(Scheme::Custom),
            other => Err(ScheduleError::UnknownScheme(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SkipSchedule {
    p: usize,
    skips: Vec<usize>,
    scheme: Scheme,
}

impl SkipSchedule {
    /// Repeated halving of `p` with rounding up, `s ← ⌈s/2⌉`, until 1.
    pub fn halving(p: usize) -> Result<Self, ScheduleError> {
        check_ranks(p)?;
        Ok(Self {
            p,
            skips: halving_from(p),
            scheme: Scheme::Halving,
        })
    }

    /// Largest power of two below `p`, then straight halving.
    pub fn doubling(p: usize) -> Result<Self, ScheduleError> {
        check_ranks(p)?;
        let mut skips = Vec::new();
        if p > 1 {
            let mut s = 1usize << (ceil_log2(p) - 1);
            while s >= 1 {
                skips.push(s);
                s /= 2;
            }
        }
        Ok(Self {
            p,
            skips,
            scheme: Scheme::Doubling,
        })
    }

    /// `p − 1, p − 2, …, 1`: one block per round.
    pub fn linear(p: usize) -> Result<Self, ScheduleError> {
        check_ranks(p)?;
        Ok(Self {
            p,
            skips: (1..p).rev().collect(),
            scheme: Scheme::Linear,
        })
    }

    /// `p − k⌈√p⌉` while that exceeds `⌈√p⌉`, then halving from the last value.
    pub fn sqrt(p: usize) -> Result<Self, ScheduleError> {
        check_ranks(p)?;
        let c = ceil_sqrt(p);
        let mut skips: Vec<usize> = (1..)
            .map(|k| p.saturating_sub(k * c))
            .take_while(|&s| s > c)
            .collect();
        let last = skips.last().copied().unwrap_or(p);
        skips.extend(halving_from(last));
        Ok(Self {
            p,
            skips,
            scheme: Scheme::Sqrt,
        })
    }

    /// An arbitrary skip list. Not validated; see [`SkipSchedule::validate`].
    pub fn custom(p: usize, skips: Vec<usize>) -> Result<Self, ScheduleError> {
        check_ranks(p)?;
        Ok(Self {
            p,
            skips,
            scheme: Scheme::Custom,
        })
    }

    pub fn generate(scheme: Scheme, p: usize) -> Result<Self, ScheduleError> {
        match scheme {
            Scheme::Halving => Self::halving(p),
            Scheme::Doubling => Self::doubling(p),
            Scheme::Linear => Self::linear(p),
            Scheme::Sqrt => Self::sqrt(p),
            Scheme::Custom => Self::custom(p, Vec::new()),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn skips(&self) -> &[usize] {
        &self.skips
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn rounds(&self) -> usize {
        self.skips.len()
    }

    /// `(s', s)` per round, with `s'` the previous skip (`p` for the first round).
    pub fn round_bounds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.p)
            .chain(self.skips.iter().copied())
            .zip(self.skips.iter().copied())
    }

    /// Blocks exchanged per round: `s_{k−1} − s_k` with `s₀ = p`.
    pub fn run_lengths(&self) -> Vec<usize> {
        self.round_bounds()
            .map(|(prev, s)| prev.saturating_sub(s))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.skips).expect("skip list serializes")
    }

    pub fn validate(&self) -> ValidationReport {
        validate_schedule(self)
    }
}

fn check_ranks(p: usize) -> Result<(), ScheduleError> {
    if p == 0 {
        Err(ScheduleError::ZeroRanks)
    } else {
        Ok(())
    }
}

fn halving_from(mut s: usize) -> Vec<usize> {
    let mut skips = Vec::new();
    while s > 1 {
        s = s.div_ceil(2);
        skips.push(s);
    }
    skips
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Invariant {
    StrictlyDecreasing,
    EndsAtOne,
    FirstRunPositive,
    /// Each round's received run `R[0 … s'−s−1]` lies below the next skip `s`.
    RunsFit,
    Representable,
    RunsSumToPMinusOne,
}

impl Invariant {
    pub const ALL: [Invariant; 6] = [
        Invariant::StrictlyDecreasing,
        Invariant::EndsAtOne,
        Invariant::FirstRunPositive,
        Invariant::RunsFit,
        Invariant::Representable,
        Invariant::RunsSumToPMinusOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Invariant::StrictlyDecreasing => "strictly-decreasing",
            Invariant::EndsAtOne => "ends-at-one",
            Invariant::FirstRunPositive => "first-run-positive",
            Invariant::RunsFit => "runs-fit",
            Invariant::Representable => "representable",
            Invariant::RunsSumToPMinusOne => "runs-sum-to-p-minus-1",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub invariant: Invariant,
    /// `None` when the check passed.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub p: usize,
    pub checks: Vec<CheckOutcome>,
    /// Offsets `0 < i < p` that are not a sum of distinct skips.
    pub unrepresentable: Vec<usize>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.failure.is_none())
    }

    pub fn passed(&self, invariant: Invariant) -> bool {
        self.checks
            .iter()
            .find(|c| c.invariant == invariant)
            .is_some_and(|c| c.failure.is_none())
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.failure.is_some())
    }

    pub fn summary(&self) -> String {
        self.failures()
            .map(|c| format!("{}: {}", c.invariant.name(), c.failure.as_deref().unwrap_or("")))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            match &c.failure {
                None => writeln!(f, "{}: ok", c.invariant.name())?,
                Some(why) => writeln!(f, "{}: FAIL ({why})", c.invariant.name())?,
            }
        }
        Ok(())
    }
}

/// Checks every schedule invariant; never aborts early.
pub fn validate_schedule(schedule: &SkipSchedule) -> ValidationReport {
    let p = schedule.p;
    let skips = &schedule.skips;
    let mut checks = Vec::with_capacity(Invariant::ALL.len());
    let mut push = |invariant, failure: Option<String>| checks.push(CheckOutcome { invariant, failure });

    let descents: Vec<String> = skips
        .windows(2)
        .filter(|w| w[0] <= w[1])
        .map(|w| format!("{} then {}", w[0], w[1]))
        .collect();
    push(
        Invariant::StrictlyDecreasing,
        (!descents.is_empty()).then(|| descents.join(", ")),
    );

    let ends = match (p, skips.last()) {
        (1, None) => None,
        (1, Some(_)) => Some("p = 1 needs an empty schedule".to_string()),
        (_, Some(1)) => None,
        (_, Some(&last)) => Some(format!("last skip is {last}")),
        (_, None) => Some("no rounds for p > 1".to_string()),
    };
    push(Invariant::EndsAtOne, ends);

    let first = match skips.first() {
        Some(&s) if s == 0 || s >= p => Some(format!("first skip {s} must lie in 1..{p}")),
        _ => None,
    };
    push(Invariant::FirstRunPositive, first);

    let overfull: Vec<String> = schedule
        .round_bounds()
        .enumerate()
        .filter(|(_, (prev, s))| prev.saturating_sub(*s) > *s)
        .map(|(k, (prev, s))| format!("round {k} run {} exceeds skip {s}", prev - s))
        .collect();
    push(Invariant::RunsFit, (!overfull.is_empty()).then(|| overfull.join(", ")));

    let unrepresentable = unrepresentable_offsets(p, skips);
    push(
        Invariant::Representable,
        (!unrepresentable.is_empty()).then(|| {
            unrepresentable
                .iter()
                .map(|i| format!("i={i} unrepresentable"))
                .collect::<Vec<_>>()
                .join(", ")
        }),
    );

    let total: usize = schedule.run_lengths().iter().sum();
    let expected = p - 1;
    let decreasing_from_p = skips.first().is_none_or(|&s| s <= p) && descents.is_empty();
    push(
        Invariant::RunsSumToPMinusOne,
        (!decreasing_from_p || total != expected)
            .then(|| format!("runs sum to {total}, expected {expected}")),
    );

    ValidationReport {
        p,
        checks,
        unrepresentable,
    }
}

/// 0/1 subset-sum over the distinct skips, `O(q·p)`.
fn unrepresentable_offsets(p: usize, skips: &[usize]) -> Vec<usize> {
    let mut reachable = vec![false; p];
    reachable[0] = true;
    let mut seen = Vec::with_capacity(skips.len());
    for &s in skips {
        if s == 0 || s >= p || seen.contains(&s) {
            continue;
        }
        seen.push(s);
        for v in (s..p).rev() {
            if reachable[v - s] {
                reachable[v] = true;
            }
        }
    }
    (1..p).filter(|&i| !reachable[i]).collect()
}

/// The spanning tree every rank implicitly builds: node `i` stands for the
/// partial result destined `i` ranks ahead, and the edge `i → parent(i)` is
/// labelled with the skip of the round in which `T_i` was hooked below `T_parent`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionTree {
    p: usize,
    parent: Vec<Option<usize>>,
    edge_skip: Vec<usize>,
    /// Children in hooking order: largest skip first.
    children: Vec<Vec<usize>>,
}

impl ReductionTree {
    /// Replays the hooking rounds: in the round with bounds `(s', s)` every
    /// root `j ∈ [s, s')` is attached below `j − s` with edge label `s`.
    pub fn build(schedule: &SkipSchedule) -> Result<Self, ScheduleError> {
        let p = schedule.p;
        let mut parent = vec![None; p];
        let mut edge_skip = vec![0; p];
        let mut children = vec![Vec::new(); p];
        let mut is_root = vec![true; p];

        for w in schedule.skips.windows(2) {
            if w[0] <= w[1] {
                return Err(ScheduleError::NotDecreasing { prev: w[0], next: w[1] });
            }
        }
        if let Some(&first) = schedule.skips.first() {
            if first == 0 || first >= p {
                return Err(ScheduleError::SkipOutOfRange { skip: first, p });
            }
        }
        for (round, (prev, s)) in schedule.round_bounds().enumerate() {
            for node in s..prev.min(p) {
                if !is_root[node] {
                    return Err(ScheduleError::AlreadyHooked { round, node });
                }
                let target = node - s;
                if target >= s || !is_root[target] {
                    return Err(ScheduleError::HookTargetNotRoot { round, node, target });
                }
                parent[node] = Some(target);
                edge_skip[node] = s;
                children[target].push(node);
                is_root[node] = false;
            }
        }
        let roots = is_root.iter().filter(|&&r| r).count();
        if roots != 1 {
            return Err(ScheduleError::NotSpanning { roots });
        }
        Ok(Self {
            p,
            parent,
            edge_skip,
            children,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    /// Skip labelling the edge from `node` to its parent; 0 for the root.
    pub fn edge_skip(&self, node: usize) -> usize {
        self.edge_skip[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Edge skips on the path from `node` up to the root.
    pub fn path_skips(&self, node: usize) -> Vec<usize> {
        let mut skips = Vec::new();
        let mut cur = node;
        while let Some(up) = self.parent[cur] {
            skips.push(self.edge_skip[cur]);
            cur = up;
        }
        skips
    }

    /// `(child, parent, skip)` for every non-root node, by child label.
    pub fn edges(&self) -> Vec<(usize, usize, usize)> {
        (0..self.p)
            .filter_map(|i| self.parent[i].map(|up| (i, up, self.edge_skip[i])))
            .collect()
    }

    /// Graphviz rendering with edges drawn child → parent, labelled by skip.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph reduction_tree {\n    node [shape=circle];\n");
        for i in 0..self.p {
            out.push_str(&format!("    {i};\n"));
        }
        for (child, up, skip) in self.edges() {
            out.push_str(&format!("    {child} -> {up} [label=\"{skip}\"];\n"));
        }
        out.push_str("}\n");
        out
    }

    /// Bracketed expression rank `r` computes for its own result block.
    ///
    /// Node `i` contributes `x_{(r − i) mod p}`; each node's own input is
    /// combined with its children's partial results in arrival order.
    pub fn reduction_order(&self, r: usize) -> Result<Term, ScheduleError> {
        if r >= self.p {
            return Err(ScheduleError::RankOutOfRange { rank: r, p: self.p });
        }
        Ok(self.subtree_term(0, r))
    }

    fn subtree_term(&self, node: usize, r: usize) -> Term {
        let own = Term::leaf((r + self.p - node) % self.p);
        self.children[node]
            .iter()
            .fold(own, |acc, &child| Term::combine(&acc, &self.subtree_term(child, r)))
    }
}
