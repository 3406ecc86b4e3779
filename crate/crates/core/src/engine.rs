//! Per-rank programs for the circulant collectives.
//!
//! Every rank keeps its partial results `R` in one contiguous buffer in
//! rotated order: block `R[i]` holds data destined for rank `(r + i) mod p`.
//! A reduce round with bounds `(s', s)` sends the consecutive run
//! `R[s … s'−1]` to `(r + s) mod p` and folds the same number of received
//! blocks into `R[0 … s'−s−1]`. No block is ever reordered between rounds,
//! so every send is a single slice copy and every reduction a single bulk
//! pass. The allgather phase replays the rounds backwards with the edge
//! direction reversed.

use std::hash::{DefaultHasher, Hash, Hasher};

use crate::error::EngineError;
use crate::ops::{Bundle, Concat, Element, ReductionOp};
use crate::runner::{self, CollectiveRun, ExecMode, RankProgram};
use crate::schedule::SkipSchedule;
use crate::transport::{LocalWork, Post};

/// Shared partition of every rank's vector into `p` blocks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockLayout {
    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self, EngineError> {
        if sizes.is_empty() {
            return Err(EngineError::Layout("a layout needs at least one block".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        let mut acc = 0usize;
        for &s in &sizes {
            acc += s;
            offsets.push(acc);
        }
        Ok(Self { sizes, offsets })
    }

    /// `p` blocks of `block_len` elements each.
    pub fn uniform(p: usize, block_len: usize) -> Result<Self, EngineError> {
        Self::from_sizes(vec![block_len; p])
    }

    /// `m` elements spread over `p` blocks; the first `m mod p` blocks get one extra.
    pub fn even(p: usize, m: usize) -> Result<Self, EngineError> {
        if p == 0 {
            return Self::from_sizes(Vec::new());
        }
        let (q, rem) = (m / p, m % p);
        Self::from_sizes((0..p).map(|i| q + usize::from(i < rem)).collect())
    }

    pub fn p(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.offsets[self.sizes.len()]
    }

    pub fn size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    pub fn is_uniform(&self) -> bool {
        self.sizes.windows(2).all(|w| w[0] == w[1])
    }
}

/// A rank's vector of `p` blocks laid out back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector<E> {
    layout: BlockLayout,
    data: Vec<E>,
}

impl<E> BlockVector<E> {
    pub fn new(layout: BlockLayout, data: Vec<E>) -> Result<Self, EngineError> {
        if data.len() != layout.total() {
            return Err(EngineError::Layout(format!(
                "vector has {} elements, layout totals {}",
                data.len(),
                layout.total()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn from_blocks(blocks: Vec<Vec<E>>) -> Result<Self, EngineError> {
        let layout = BlockLayout::from_sizes(blocks.iter().map(Vec::len).collect())?;
        let data = blocks.into_iter().flatten().collect();
        Ok(Self { layout, data })
    }

    /// Fills every position from `f(block, index_within_block)`.
    pub fn from_fn(layout: BlockLayout, mut f: impl FnMut(usize, usize) -> E) -> Self {
        let data = (0..layout.p())
            .flat_map(|b| (0..layout.size(b)).map(move |j| (b, j)))
            .map(|(b, j)| f(b, j))
            .collect();
        Self { layout, data }
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn block(&self, i: usize) -> &[E] {
        &self.data[self.layout.range(i)]
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[E]> {
        (0..self.layout.p()).map(|i| self.block(i))
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineOptions {
    /// Run operators that do not declare themselves commutative. Results are
    /// then only meaningful for order experiments (e.g. the symbolic operator).
    pub allow_non_commutative: bool,
    /// Skip the initial rotated copy: the first round sends straight from the
    /// input and writes `input ⊕ received` into the fresh buffer, so only the
    /// blocks between the first run and the first skip are copied.
    pub fused_first_round: bool,
}

/// Identity of one rank inside a collective.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankContext {
    rank: usize,
    schedule: SkipSchedule,
}

impl RankContext {
    /// Fails if `rank ≥ p` or the schedule does not pass validation.
    pub fn new(rank: usize, schedule: SkipSchedule) -> Result<Self, EngineError> {
        let p = schedule.p();
        if rank >= p {
            return Err(EngineError::RankOutOfRange { rank, p });
        }
        let report = schedule.validate();
        if !report.is_valid() {
            return Err(EngineError::InvalidSchedule(report.summary()));
        }
        Ok(Self { rank, schedule })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn p(&self) -> usize {
        self.schedule.p()
    }

    pub fn schedule(&self) -> &SkipSchedule {
        &self.schedule
    }

    fn ahead(&self, skip: usize) -> usize {
        (self.rank + skip) % self.p()
    }

    fn behind(&self, skip: usize) -> usize {
        (self.rank + self.p() - skip % self.p()) % self.p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Send `R[s … s'−1]` forward, reduce into `R[0 … s'−s−1]`.
    Reduce,
    /// Send `R[0 … s'−s−1]` backward, store into `R[s … s'−1]`.
    Gather,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Step {
    phase: Phase,
    skip: usize,
    upper: usize,
}

impl Step {
    fn run(&self) -> usize {
        self.upper - self.skip
    }
}

fn reduce_steps(schedule: &SkipSchedule) -> Vec<Step> {
    schedule
        .round_bounds()
        .map(|(upper, skip)| Step {
            phase: Phase::Reduce,
            skip,
            upper,
        })
        .collect()
}

/// Reduce rounds that push each `s'` on a stack, followed by gather rounds
/// that pop it back.
fn allreduce_steps(schedule: &SkipSchedule) -> Vec<Step> {
    let mut steps = Vec::with_capacity(2 * schedule.rounds());
    let mut stack = Vec::with_capacity(schedule.rounds());
    let mut s = schedule.p();
    for &next in schedule.skips() {
        stack.push(s);
        steps.push(Step {
            phase: Phase::Reduce,
            skip: next,
            upper: s,
        });
        s = next;
    }
    steps.extend(gather_steps_from(s, stack));
    steps
}

fn gather_steps_from(mut s: usize, mut stack: Vec<usize>) -> Vec<Step> {
    let mut steps = Vec::with_capacity(stack.len());
    while let Some(upper) = stack.pop() {
        steps.push(Step {
            phase: Phase::Gather,
            skip: s,
            upper,
        });
        s = upper;
    }
    steps
}

fn gather_steps(schedule: &SkipSchedule) -> Vec<Step> {
    let stack: Vec<usize> = std::iter::once(schedule.p())
        .chain(schedule.skips().iter().copied())
        .take(schedule.rounds())
        .collect();
    gather_steps_from(schedule.skips().last().copied().unwrap_or(1), stack)
}

/// `R` in rotated order. May hold only a prefix of its blocks; writes at the
/// end of the stored prefix append.
#[derive(Debug, Clone)]
struct RotatedBuffer<E> {
    offsets: Vec<usize>,
    data: Vec<E>,
}

impl<E: Clone> RotatedBuffer<E> {
    fn layout(layout: &BlockLayout, r: usize) -> Vec<usize> {
        let p = layout.p();
        let mut offsets = Vec::with_capacity(p + 1);
        offsets.push(0);
        let mut acc = 0;
        for i in 0..p {
            acc += layout.size((r + i) % p);
            offsets.push(acc);
        }
        offsets
    }

    /// `R[i] ← V[(r + i) mod p]` for all `i`.
    fn rotated_copy(input: &BlockVector<E>, r: usize) -> Self {
        let layout = input.layout();
        let p = layout.p();
        let mut data = Vec::with_capacity(layout.total());
        for i in 0..p {
            data.extend_from_slice(input.block((r + i) % p));
        }
        Self {
            offsets: Self::layout(layout, r),
            data,
        }
    }

    fn empty(layout: &BlockLayout, r: usize) -> Self {
        Self {
            offsets: Self::layout(layout, r),
            data: Vec::new(),
        }
    }

    fn span(&self, lo: usize, hi: usize) -> std::ops::Range<usize> {
        self.offsets[lo]..self.offsets[hi]
    }

    fn run(&self, lo: usize, hi: usize) -> &[E] {
        &self.data[self.span(lo, hi)]
    }

    fn run_mut(&mut self, lo: usize, hi: usize) -> &mut [E] {
        let span = self.span(lo, hi);
        &mut self.data[span]
    }

    fn run_len(&self, lo: usize, hi: usize) -> usize {
        self.offsets[hi] - self.offsets[lo]
    }

    fn write_run(&mut self, lo: usize, hi: usize, payload: Vec<E>) {
        let span = self.span(lo, hi);
        if self.data.len() == span.start {
            self.data.extend(payload);
        } else {
            self.data[span].clone_from_slice(&payload);
        }
    }

    /// Global vector order: `W[(r + i) mod p] ← R[i]`.
    fn unrotate(&self, r: usize) -> Vec<E> {
        let p = self.offsets.len() - 1;
        (0..p).flat_map(|j| self.run((j + p - r) % p, (j + p - r) % p + 1).iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Kind {
    ReduceScatter,
    Allreduce,
    Allgather,
}

fn fingerprint(kind: Kind, ctx: &RankContext, layout: &BlockLayout, op: &str) -> u64 {
    let mut h = DefaultHasher::new();
    kind.hash(&mut h);
    ctx.p().hash(&mut h);
    ctx.schedule().skips().hash(&mut h);
    layout.sizes().hash(&mut h);
    op.hash(&mut h);
    h.finish()
}

fn check_common<E, O: ReductionOp<E>>(
    ctx: &RankContext,
    layout: &BlockLayout,
    op: &O,
    options: &EngineOptions,
) -> Result<(), EngineError> {
    if layout.p() != ctx.p() {
        return Err(EngineError::RankCountMismatch {
            what: "layout",
            expected: ctx.p(),
            found: layout.p(),
        });
    }
    if !op.is_commutative() && !options.allow_non_commutative {
        return Err(EngineError::NonCommutative { op: op.name().to_string() });
    }
    Ok(())
}

/// Rank program for the reduce-scatter (partitioned all-reduce) and allreduce.
pub struct ReduceRank<'op, E, O> {
    ctx: RankContext,
    op: &'op O,
    kind: Kind,
    steps: Vec<Step>,
    buf: RotatedBuffer<E>,
    /// Input held back until the fused first round consumes it.
    pending_input: Option<BlockVector<E>>,
    setup_copied: usize,
    fingerprint: u64,
}

impl<'op, E: Element, O: ReductionOp<E>> ReduceRank<'op, E, O> {
    /// Rank program returning `⊕_i V_i[r]`, the reduced block `r`.
    pub fn reduce_scatter(
        ctx: RankContext,
        input: BlockVector<E>,
        op: &'op O,
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        let steps = reduce_steps(ctx.schedule());
        Self::build(ctx, input, op, options, Kind::ReduceScatter, steps)
    }

    /// Rank program returning the whole reduced vector.
    pub fn allreduce(
        ctx: RankContext,
        input: BlockVector<E>,
        op: &'op O,
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        let steps = allreduce_steps(ctx.schedule());
        Self::build(ctx, input, op, options, Kind::Allreduce, steps)
    }

    fn build(
        ctx: RankContext,
        input: BlockVector<E>,
        op: &'op O,
        options: EngineOptions,
        kind: Kind,
        steps: Vec<Step>,
    ) -> Result<Self, EngineError> {
        check_common(&ctx, input.layout(), op, &options)?;
        let fingerprint = fingerprint(kind, &ctx, input.layout(), op.name());
        let r = ctx.rank();
        let (buf, pending_input, setup_copied) = if options.fused_first_round && !steps.is_empty() {
            (RotatedBuffer::empty(input.layout(), r), Some(input), 0)
        } else {
            let buf = RotatedBuffer::rotated_copy(&input, r);
            let copied = buf.data.iter().map(Element::units).sum();
            (buf, None, copied)
        };
        Ok(Self {
            ctx,
            op,
            kind,
            steps,
            buf,
            pending_input,
            setup_copied,
            fingerprint,
        })
    }

    /// First reduce round without the rotated copy: the run is gathered
    /// straight from the input, and `R[i] ← V[r+i] ⊕ T[i]` is written fresh.
    fn deliver_fused(&mut self, input: BlockVector<E>, step: Step, round: usize, received: Vec<E>) -> Result<LocalWork, EngineError> {
        let (r, p) = (self.ctx.rank(), self.ctx.p());
        let run = step.run();
        let expected = self.buf.run_len(0, run);
        if received.len() != expected {
            return Err(EngineError::PayloadLength {
                rank: r,
                round,
                expected,
                found: received.len(),
            });
        }
        let mut data = Vec::with_capacity(self.buf.run_len(0, step.skip));
        for i in 0..run {
            let local = input.block((r + i) % p);
            let incoming = &received[self.buf.span(i, i + 1)];
            data.extend(local.iter().zip(incoming).map(|(a, b)| self.op.apply(a, b)));
        }
        let mut copied = 0;
        for i in run..step.skip {
            let block = input.block((r + i) % p);
            copied += block.iter().map(Element::units).sum::<usize>();
            data.extend_from_slice(block);
        }
        self.buf.data = data;
        Ok(LocalWork {
            op_applications: run,
            elements_reduced: received.iter().map(Element::units).sum(),
            elements_copied: copied,
        })
    }
}

impl<E: Element, O: ReductionOp<E>> RankProgram for ReduceRank<'_, E, O> {
    type Elem = E;
    type Output = Vec<E>;

    fn rank(&self) -> usize {
        self.ctx.rank()
    }

    fn p(&self) -> usize {
        self.ctx.p()
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn rounds(&self) -> usize {
        self.steps.len()
    }

    fn setup_work(&self) -> LocalWork {
        LocalWork {
            elements_copied: self.setup_copied,
            ..LocalWork::default()
        }
    }

    fn post(&mut self, round: usize) -> Post<E> {
        let step = self.steps[round];
        let p = self.ctx.p();
        match step.phase {
            Phase::Reduce => {
                let payload = match &self.pending_input {
                    Some(input) => (step.skip..step.upper)
                        .flat_map(|i| input.block((self.ctx.rank() + i) % p).iter().cloned())
                        .collect(),
                    None => self.buf.run(step.skip, step.upper).to_vec(),
                };
                Post {
                    to: self.ctx.ahead(step.skip),
                    from: self.ctx.behind(step.skip),
                    skip: step.skip,
                    blocks: step.run(),
                    payload,
                }
            }
            Phase::Gather => Post {
                to: self.ctx.behind(step.skip),
                from: self.ctx.ahead(step.skip),
                skip: step.skip,
                blocks: step.run(),
                payload: self.buf.run(0, step.run()).to_vec(),
            },
        }
    }

    fn deliver(&mut self, round: usize, received: Vec<E>) -> Result<LocalWork, EngineError> {
        let step = self.steps[round];
        if let Some(input) = self.pending_input.take() {
            return self.deliver_fused(input, step, round, received);
        }
        let (lo, hi) = match step.phase {
            Phase::Reduce => (0, step.run()),
            Phase::Gather => (step.skip, step.upper),
        };
        let expected = self.buf.run_len(lo, hi);
        if received.len() != expected {
            return Err(EngineError::PayloadLength {
                rank: self.ctx.rank(),
                round,
                expected,
                found: received.len(),
            });
        }
        match step.phase {
            Phase::Reduce => {
                // W ← W ⊕ T[0] and R[i] ← R[i] ⊕ T[i] in one pass over the run.
                self.op.combine_block(self.buf.run_mut(0, step.run()), &received);
                Ok(LocalWork {
                    op_applications: step.run(),
                    elements_reduced: received.iter().map(Element::units).sum(),
                    elements_copied: 0,
                })
            }
            Phase::Gather => {
                self.buf.write_run(lo, hi, received);
                Ok(LocalWork::default())
            }
        }
    }

    fn finish(self) -> Vec<E> {
        match self.kind {
            Kind::ReduceScatter => match self.pending_input {
                Some(input) => input.block(self.ctx.rank()).to_vec(),
                None => self.buf.run(0, 1).to_vec(),
            },
            _ => self.buf.unrotate(self.ctx.rank()),
        }
    }
}

/// Rank program for the standalone allgather: the reduce-scatter rounds run
/// backwards, starting from the rank's own block only.
pub struct AllgatherRank<E> {
    ctx: RankContext,
    steps: Vec<Step>,
    buf: RotatedBuffer<E>,
    fingerprint: u64,
}

impl<E: Element> AllgatherRank<E> {
    /// `own` must have `layout.size(rank)` elements.
    pub fn new(ctx: RankContext, layout: BlockLayout, own: Vec<E>) -> Result<Self, EngineError> {
        if layout.p() != ctx.p() {
            return Err(EngineError::RankCountMismatch {
                what: "layout",
                expected: ctx.p(),
                found: layout.p(),
            });
        }
        let r = ctx.rank();
        if own.len() != layout.size(r) {
            return Err(EngineError::Layout(format!(
                "rank {r} contributes {} elements, layout block {r} has {}",
                own.len(),
                layout.size(r)
            )));
        }
        let mut buf = RotatedBuffer::empty(&layout, r);
        buf.data = own;
        Ok(Self {
            fingerprint: fingerprint(Kind::Allgather, &ctx, &layout, ""),
            steps: gather_steps(ctx.schedule()),
            ctx,
            buf,
        })
    }
}

impl<E: Element> RankProgram for AllgatherRank<E> {
    type Elem = E;
    type Output = Vec<E>;

    fn rank(&self) -> usize {
        self.ctx.rank()
    }

    fn p(&self) -> usize {
        self.ctx.p()
    }

    fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    fn rounds(&self) -> usize {
        self.steps.len()
    }

    fn setup_work(&self) -> LocalWork {
        LocalWork::default()
    }

    fn post(&mut self, round: usize) -> Post<E> {
        let step = self.steps[round];
        Post {
            to: self.ctx.behind(step.skip),
            from: self.ctx.ahead(step.skip),
            skip: step.skip,
            blocks: step.run(),
            payload: self.buf.run(0, step.run()).to_vec(),
        }
    }

    fn deliver(&mut self, round: usize, received: Vec<E>) -> Result<LocalWork, EngineError> {
        let step = self.steps[round];
        let expected = self.buf.run_len(step.skip, step.upper);
        if received.len() != expected {
            return Err(EngineError::PayloadLength {
                rank: self.ctx.rank(),
                round,
                expected,
                found: received.len(),
            });
        }
        self.buf.write_run(step.skip, step.upper, received);
        Ok(LocalWork::default())
    }

    fn finish(self) -> Vec<E> {
        self.buf.unrotate(self.ctx.rank())
    }
}

fn contexts(schedule: &SkipSchedule) -> Result<Vec<RankContext>, EngineError> {
    (0..schedule.p()).map(|r| RankContext::new(r, schedule.clone())).collect()
}

fn check_rank_count(schedule: &SkipSchedule, found: usize) -> Result<(), EngineError> {
    if found != schedule.p() {
        return Err(EngineError::RankCountMismatch {
            what: "inputs",
            expected: schedule.p(),
            found,
        });
    }
    Ok(())
}

/// Runs the reduce-scatter on all ranks; output `r` is `⊕_i inputs[i].block(r)`.
pub fn partitioned_allreduce<E: Element, O: ReductionOp<E>>(
    schedule: &SkipSchedule,
    inputs: Vec<BlockVector<E>>,
    op: &O,
    options: EngineOptions,
    mode: ExecMode,
) -> Result<CollectiveRun<Vec<E>>, EngineError> {
    check_rank_count(schedule, inputs.len())?;
    let programs = contexts(schedule)?
        .into_iter()
        .zip(inputs)
        .map(|(ctx, v)| ReduceRank::reduce_scatter(ctx, v, op, options))
        .collect::<Result<Vec<_>, _>>()?;
    runner::run(programs, mode)
}

/// Reduce-scatter followed by the reversed allgather; every rank ends with
/// the full reduced vector.
pub fn allreduce<E: Element, O: ReductionOp<E>>(
    schedule: &SkipSchedule,
    inputs: Vec<BlockVector<E>>,
    op: &O,
    options: EngineOptions,
    mode: ExecMode,
) -> Result<CollectiveRun<BlockVector<E>>, EngineError> {
    check_rank_count(schedule, inputs.len())?;
    let layout = inputs.first().map(|v| v.layout().clone()).ok_or(EngineError::NoRanks)?;
    let programs = contexts(schedule)?
        .into_iter()
        .zip(inputs)
        .map(|(ctx, v)| ReduceRank::allreduce(ctx, v, op, options))
        .collect::<Result<Vec<_>, _>>()?;
    runner::run(programs, mode)?.try_map(|data| BlockVector::new(layout.clone(), data))
}

/// Every rank contributes block `r` of `layout` and receives all blocks.
pub fn allgather<E: Element>(
    schedule: &SkipSchedule,
    layout: &BlockLayout,
    own_blocks: Vec<Vec<E>>,
    mode: ExecMode,
) -> Result<CollectiveRun<BlockVector<E>>, EngineError> {
    check_rank_count(schedule, own_blocks.len())?;
    let programs = contexts(schedule)?
        .into_iter()
        .zip(own_blocks)
        .map(|(ctx, own)| AllgatherRank::new(ctx, layout.clone(), own))
        .collect::<Result<Vec<_>, _>>()?;
    runner::run(programs, mode)?.try_map(|data| BlockVector::new(layout.clone(), data))
}

/// Regular all-to-all: output block `i` on rank `r` is input block `r` of
/// rank `i`. Runs the reduce-scatter rounds with tagged concatenation as the
/// operator, then sorts the collected segments by source rank.
pub fn alltoall<E: Element>(
    schedule: &SkipSchedule,
    inputs: Vec<BlockVector<E>>,
    mode: ExecMode,
) -> Result<CollectiveRun<BlockVector<E>>, EngineError> {
    check_rank_count(schedule, inputs.len())?;
    let layout = inputs.first().map(|v| v.layout().clone()).ok_or(EngineError::NoRanks)?;
    for v in &inputs {
        let l = v.layout();
        if let Some(block) = (0..l.p()).find(|&b| l.size(b) != l.size(0)) {
            return Err(EngineError::IrregularAlltoall {
                block,
                expected: l.size(0),
                found: l.size(block),
            });
        }
    }
    let p = schedule.p();
    let unit = BlockLayout::uniform(p, 1)?;
    let bundled: Vec<BlockVector<Bundle<E>>> = inputs
        .iter()
        .enumerate()
        .map(|(r, v)| {
            let blocks = (0..v.layout().p()).map(|i| Bundle::single(r, v.block(i).to_vec())).collect();
            BlockVector::new(unit.clone(), blocks)
        })
        .collect::<Result<_, _>>()?;
    let run = partitioned_allreduce(schedule, bundled, &Concat, EngineOptions::default(), mode)?;
    run.try_map(|mut result| {
        let mut bundle = result.pop().expect("one bundle per rank");
        bundle.sort_by_source();
        let data = bundle.0.into_iter().flat_map(|t| t.data).collect();
        BlockVector::new(layout.clone(), data)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{make_symbolic_op, FloatAdd, FnOp, WrappingAdd};
    use crate::schedule::ReductionTree;
    use crate::term::Term;

    fn seq() -> ExecMode {
        ExecMode::Sequential
    }

    fn unit_inputs(p: usize, f: impl Fn(usize, usize) -> i64) -> Vec<BlockVector<i64>> {
        let layout = BlockLayout::uniform(p, 1).unwrap();
        (0..p).map(|r| BlockVector::from_fn(layout.clone(), |b, _| f(r, b))).collect()
    }

    #[test]
    fn layout_offsets() {
        let l = BlockLayout::from_sizes(vec![2, 0, 3]).unwrap();
        assert_eq!(l.offsets(), &[0, 2, 2, 5]);
        assert_eq!(l.total(), 5);
        assert_eq!(l.range(2), 2..5);
        assert_eq!(BlockLayout::even(4, 10).unwrap().sizes(), &[3, 3, 2, 2]);
        assert!(BlockLayout::from_sizes(vec![]).is_err());
        assert!(BlockVector::new(l, vec![1i64; 4]).is_err());
    }

    #[test]
    fn allreduce_step_plan_mirrors_stack() {
        let sched = SkipSchedule::halving(22).unwrap();
        let steps = allreduce_steps(&sched);
        let plan: Vec<(Phase, usize, usize)> = steps.iter().map(|s| (s.phase, s.skip, s.upper)).collect();
        use Phase::*;
        assert_eq!(
            plan,
            vec![
                (Reduce, 11, 22),
                (Reduce, 6, 11),
                (Reduce, 3, 6),
                (Reduce, 2, 3),
                (Reduce, 1, 2),
                (Gather, 1, 2),
                (Gather, 2, 3),
                (Gather, 3, 6),
                (Gather, 6, 11),
                (Gather, 11, 22),
            ]
        );
        assert_eq!(gather_steps(&sched), steps[5..].to_vec());
    }

    #[test]
    fn p6_reduce_scatter_closed_form() {
        let sched = SkipSchedule::halving(6).unwrap();
        let run = partitioned_allreduce(
            &sched,
            unit_inputs(6, |r, i| (100 * r + i) as i64),
            &WrappingAdd,
            EngineOptions::default(),
            seq(),
        )
        .unwrap();
        for (r, out) in run.outputs.iter().enumerate() {
            assert_eq!(out, &vec![1500 + 6 * r as i64]);
        }
    }

    #[test]
    fn single_rank_is_identity() {
        let sched = SkipSchedule::halving(1).unwrap();
        let input = BlockVector::new(BlockLayout::uniform(1, 3).unwrap(), vec![4i64, 5, 6]).unwrap();
        let run = partitioned_allreduce(&sched, vec![input.clone()], &WrappingAdd, EngineOptions::default(), seq()).unwrap();
        assert_eq!(run.outputs[0], vec![4, 5, 6]);
        assert_eq!(run.metrics.rounds, 0);
        let run = allreduce(&sched, vec![input.clone()], &WrappingAdd, EngineOptions::default(), seq()).unwrap();
        assert_eq!(run.outputs[0], input);
        let run = alltoall(&sched, vec![input.clone()], seq()).unwrap();
        assert_eq!(run.outputs[0], input);
        let run = allgather(&sched, input.layout(), vec![vec![4i64, 5, 6]], seq()).unwrap();
        assert_eq!(run.outputs[0], input);
    }

    #[test]
    fn p22_rank21_from_processors() {
        let sched = SkipSchedule::halving(22).unwrap();
        let run = partitioned_allreduce(&sched, unit_inputs(22, |r, _| r as i64), &WrappingAdd, EngineOptions::default(), seq()).unwrap();
        let froms: Vec<usize> = run.trace.iter().map(|t| t.entries[21].from).collect();
        assert_eq!(froms, vec![10, 15, 18, 19, 20]);
    }

    #[test]
    fn symbolic_requires_override() {
        let sched = SkipSchedule::halving(2).unwrap();
        let layout = BlockLayout::uniform(2, 1).unwrap();
        let inputs = || (0..2).map(|r| BlockVector::new(layout.clone(), vec![Term::leaf(r); 2]).unwrap()).collect::<Vec<_>>();
        let err = partitioned_allreduce(&sched, inputs(), &make_symbolic_op(), EngineOptions::default(), seq()).unwrap_err();
        assert!(matches!(err, EngineError::NonCommutative { .. }));
        let opts = EngineOptions {
            allow_non_commutative: true,
            ..Default::default()
        };
        let run = partitioned_allreduce(&sched, inputs(), &make_symbolic_op(), opts, seq()).unwrap();
        assert_eq!(run.outputs[0][0].to_string(), "x0+x1");
        assert_eq!(run.outputs[1][0].to_string(), "x1+x0");
    }

    #[test]
    fn symbolic_matches_tree_for_every_rank_p22() {
        let sched = SkipSchedule::halving(22).unwrap();
        let tree = ReductionTree::build(&sched).unwrap();
        let layout = BlockLayout::uniform(22, 1).unwrap();
        let inputs = (0..22).map(|r| BlockVector::new(layout.clone(), vec![Term::leaf(r); 22]).unwrap()).collect();
        let opts = EngineOptions {
            allow_non_commutative: true,
            ..Default::default()
        };
        let run = partitioned_allreduce(&sched, inputs, &make_symbolic_op(), opts, seq()).unwrap();
        for (r, out) in run.outputs.iter().enumerate() {
            assert_eq!(out[0], tree.reduction_order(r).unwrap(), "rank {r}");
        }
    }

    #[test]
    fn fused_first_round_matches_plain_and_copies_less() {
        for p in [2usize, 3, 7, 22, 33] {
            let sched = SkipSchedule::halving(p).unwrap();
            let layout = BlockLayout::uniform(p, 2).unwrap();
            let inputs: Vec<_> = (0..p)
                .map(|r| BlockVector::from_fn(layout.clone(), |b, j| (r * 1000 + b * 10 + j) as i64))
                .collect();
            let fused = EngineOptions {
                fused_first_round: true,
                ..Default::default()
            };
            for opts in [EngineOptions::default(), fused] {
                let rs = partitioned_allreduce(&sched, inputs.clone(), &WrappingAdd, opts, seq()).unwrap();
                let ar = allreduce(&sched, inputs.clone(), &WrappingAdd, opts, seq()).unwrap();
                for r in 0..p {
                    assert_eq!(rs.outputs[r], ar.outputs[r].block(r), "p={p} r={r}");
                }
            }
            let plain = partitioned_allreduce(&sched, inputs.clone(), &WrappingAdd, EngineOptions::default(), seq()).unwrap();
            let lean = partitioned_allreduce(&sched, inputs.clone(), &WrappingAdd, fused, seq()).unwrap();
            assert_eq!(plain.outputs, lean.outputs);
            assert_eq!(plain.trace, lean.trace);
            let copied = |m: &crate::Metrics| m.per_rank[0].elements_copied;
            assert_eq!(copied(&plain.metrics), 2 * p);
            // At most one block (odd p) sits between the first run and the first skip.
            assert!(copied(&lean.metrics) <= 2, "p={p}: {}", copied(&lean.metrics));
        }
    }

    #[test]
    fn float_sum_close_to_exact() {
        let p = 9;
        let sched = SkipSchedule::halving(p).unwrap();
        let layout = BlockLayout::uniform(p, 2).unwrap();
        let inputs = (0..p).map(|r| BlockVector::from_fn(layout.clone(), |b, j| 0.1 * (r + b + j) as f64)).collect();
        let run = allreduce(&sched, inputs, &FloatAdd, EngineOptions::default(), seq()).unwrap();
        for (b, x) in run.outputs[3].data().iter().enumerate() {
            let (blk, j) = (b / 2, b % 2);
            let exact: f64 = (0..p).map(|r| 0.1 * (r + blk + j) as f64).sum();
            assert!((x - exact).abs() <= 1e-12 * exact.abs());
        }
    }

    #[test]
    fn operand_order_is_local_then_received() {
        // (a, b) ↦ a, i.e. "keep left": with the local operand on the left, the
        // reduce-scatter leaves every rank with its own initial block value.
        let keep_left = FnOp::new("keep-left", false, |a: &i64, _b: &i64| *a);
        let sched = SkipSchedule::halving(10).unwrap();
        let opts = EngineOptions {
            allow_non_commutative: true,
            ..Default::default()
        };
        let run = partitioned_allreduce(&sched, unit_inputs(10, |r, i| (r * 100 + i) as i64), &keep_left, opts, seq()).unwrap();
        for (r, out) in run.outputs.iter().enumerate() {
            assert_eq!(out, &vec![(r * 100 + r) as i64]);
        }
    }

    #[test]
    fn alltoall_transposes_pairs() {
        let p = 3;
        let sched = SkipSchedule::halving(p).unwrap();
        let layout = BlockLayout::uniform(p, 2).unwrap();
        let inputs = (0..p).map(|r| BlockVector::from_fn(layout.clone(), |i, j| if j == 0 { r as i64 } else { i as i64 })).collect();
        let run = alltoall(&sched, inputs, seq()).unwrap();
        for (r, out) in run.outputs.iter().enumerate() {
            for i in 0..p {
                assert_eq!(out.block(i), &[i as i64, r as i64]);
            }
        }
        assert_eq!(run.metrics.rounds, 2);
    }

    #[test]
    fn alltoall_rejects_irregular_blocks() {
        let sched = SkipSchedule::halving(2).unwrap();
        let layout = BlockLayout::from_sizes(vec![1, 2]).unwrap();
        let inputs = vec![BlockVector::new(layout.clone(), vec![1i64, 2, 3]).unwrap(); 2];
        assert!(matches!(alltoall(&sched, inputs, seq()), Err(EngineError::IrregularAlltoall { .. })));
    }

    #[test]
    fn invalid_schedule_and_rank_errors() {
        let bad = SkipSchedule::custom(8, vec![5, 1]).unwrap();
        assert!(matches!(RankContext::new(0, bad), Err(EngineError::InvalidSchedule(_))));
        assert!(matches!(
            RankContext::new(4, SkipSchedule::halving(4).unwrap()),
            Err(EngineError::RankOutOfRange { .. })
        ));
        let sched = SkipSchedule::halving(4).unwrap();
        assert!(matches!(
            partitioned_allreduce(&sched, unit_inputs(3, |_, _| 0), &WrappingAdd, EngineOptions::default(), seq()),
            Err(EngineError::RankCountMismatch { .. })
        ));
    }

    #[test]
    fn layout_mismatch_is_detected() {
        let sched = SkipSchedule::halving(4).unwrap();
        let mut inputs = unit_inputs(4, |_, _| 1);
        inputs[2] = BlockVector::new(BlockLayout::from_sizes(vec![1, 1, 2, 0]).unwrap(), vec![1; 4]).unwrap();
        for mode in [ExecMode::Sequential, ExecMode::Threaded] {
            let err = partitioned_allreduce(&sched, inputs.clone(), &WrappingAdd, EngineOptions::default(), mode).unwrap_err();
            assert!(matches!(err, EngineError::CollectiveMismatch { rank: 2, .. }), "{err}");
        }
    }
}
