use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use circulant::engine::{allgather, allreduce, alltoall, partitioned_allreduce};
use circulant::ops::{make_symbolic_op, FloatAdd, WrappingAdd};
use circulant::oracle::{oracle_allgather, oracle_alltoall, oracle_reduce_scatter, GlobalInput};
use circulant::transport::{write_trace_csv, write_trace_jsonl, RankMetrics};
use circulant::{
    BlockLayout, BlockVector, Element, EngineError, EngineOptions, ExecMode, Metrics, ReductionOp,
    ReductionTree, RoundTrace, SkipSchedule, Term,
};
use clap::{Args, ValueEnum};

use crate::{exec_mode, synth, Collective, Failure, ScheduleSpec};

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    spec: ScheduleSpec,
    #[arg(long, value_enum, default_value_t = Collective::ReduceScatter)]
    collective: Collective,
    /// Total elements split as evenly as possible over the blocks [default: p].
    #[arg(short = 'm', conflicts_with_all = ["sizes", "random_sizes"])]
    m: Option<usize>,
    /// Explicit block sizes, one per rank.
    #[arg(long, value_delimiter = ',', conflicts_with = "random_sizes")]
    sizes: Option<Vec<usize>>,
    /// Block sizes drawn from the seed in 0..=MAX.
    #[arg(long, value_name = "MAX")]
    random_sizes: Option<usize>,
    #[arg(long, value_enum, default_value_t = Elem::Int64)]
    elem: Elem,
    /// Compare every rank's result with the brute-force oracle.
    #[arg(long)]
    verify: bool,
    #[arg(long, env = "CIRCULANT_SEED", default_value_t = 0)]
    seed: u64,
    /// sequential, parallel or threaded.
    #[arg(long, value_parser = exec_mode, default_value = "parallel")]
    mode: ExecMode,
    /// Reduce straight from the input in the first round instead of copying it first.
    #[arg(long)]
    fused_first_round: bool,
    #[arg(long, value_name = "PATH")]
    trace_jsonl: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    trace_csv: Option<PathBuf>,
    /// Print the blocks every rank ends up holding.
    #[arg(long)]
    show: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Elem {
    Int64,
    Float64,
    /// Leaf `x_r` on rank `r`; results show the combination order.
    Symbolic,
}

/// Blocks held by each rank after the collective, as `(block index, data)`.
type Held<E> = Vec<Vec<(usize, Vec<E>)>>;

struct Outcome<E> {
    held: Held<E>,
    metrics: Metrics,
    trace: Vec<RoundTrace>,
}

fn layout(args: &RunArgs, p: usize) -> Result<BlockLayout, Failure> {
    let usage = |e: EngineError| Failure::Usage(e.to_string());
    if let Some(sizes) = &args.sizes {
        if sizes.len() != p {
            return Err(Failure::Usage(format!("--sizes lists {} blocks for p={p}", sizes.len())));
        }
        return BlockLayout::from_sizes(sizes.clone()).map_err(usage);
    }
    if let Some(max) = args.random_sizes {
        return BlockLayout::from_sizes(synth::block_sizes(args.seed, p, max)).map_err(usage);
    }
    BlockLayout::even(p, args.m.unwrap_or(p)).map_err(usage)
}

fn whole<E: Clone>(v: &BlockVector<E>) -> Vec<(usize, Vec<E>)> {
    v.blocks().enumerate().map(|(b, data)| (b, data.to_vec())).collect()
}

fn execute<E: Element, O: ReductionOp<E>>(
    collective: Collective,
    schedule: &SkipSchedule,
    g: &GlobalInput<E>,
    op: &O,
    options: EngineOptions,
    mode: ExecMode,
) -> Result<Outcome<E>, EngineError> {
    let inputs = g.vectors.clone();
    let (held, metrics, trace): (Held<E>, _, _) = match collective {
        Collective::ReduceScatter => {
            let run = partitioned_allreduce(schedule, inputs, op, options, mode)?;
            let held = run.outputs.into_iter().enumerate().map(|(r, b)| vec![(r, b)]).collect();
            (held, run.metrics, run.trace)
        }
        Collective::Allreduce => {
            let run = allreduce(schedule, inputs, op, options, mode)?;
            (run.outputs.iter().map(whole).collect(), run.metrics, run.trace)
        }
        Collective::Allgather => {
            let own = inputs.iter().enumerate().map(|(r, v)| v.block(r).to_vec()).collect();
            let run = allgather(schedule, &g.layout, own, mode)?;
            (run.outputs.iter().map(whole).collect(), run.metrics, run.trace)
        }
        Collective::Alltoall => {
            let run = alltoall(schedule, inputs, mode)?;
            (run.outputs.iter().map(whole).collect(), run.metrics, run.trace)
        }
    };
    Ok(Outcome { held, metrics, trace })
}

/// What every rank should hold. `reduced[b]` is the reduction of block `b`
/// over all ranks, used by the two reducing collectives.
fn expected<E: Element>(collective: Collective, g: &GlobalInput<E>, reduced: Vec<Vec<E>>) -> Held<E> {
    let p = g.p();
    match collective {
        Collective::ReduceScatter => reduced.into_iter().enumerate().map(|(r, b)| vec![(r, b)]).collect(),
        Collective::Allreduce => {
            let all: Vec<_> = reduced.into_iter().enumerate().collect();
            vec![all; p]
        }
        Collective::Allgather => {
            let own: Vec<Vec<E>> = (0..p).map(|r| g.vectors[r].block(r).to_vec()).collect();
            vec![whole(&oracle_allgather(&g.layout, &own)); p]
        }
        Collective::Alltoall => oracle_alltoall(g).iter().map(whole).collect(),
    }
}

/// First `(rank, block)` whose contents differ.
fn first_mismatch<E>(got: &Held<E>, want: &Held<E>, eq: impl Fn(&E, &E) -> bool) -> Option<(usize, usize)> {
    for (rank, (g, w)) in got.iter().zip(want).enumerate() {
        for ((gb, gd), (wb, wd)) in g.iter().zip(w) {
            if gb != wb || gd.len() != wd.len() || !gd.iter().zip(wd).all(|(a, b)| eq(a, b)) {
                return Some((rank, *wb));
            }
        }
        if g.len() != w.len() {
            return Some((rank, w.get(g.len()).map_or(g.len(), |b| b.0)));
        }
    }
    None
}

fn exact<E: PartialEq>(a: &E, b: &E) -> bool {
    a == b
}

/// Relative tolerance for reassociated float sums.
const FLOAT_RTOL: f64 = 1e-12;

fn close(a: &f64, b: &f64) -> bool {
    a == b || (a - b).abs() <= FLOAT_RTOL * a.abs().max(b.abs())
}

fn per_rank(m: &Metrics, f: impl Fn(&RankMetrics) -> usize) -> String {
    match m.uniform(&f) {
        Some(v) => v.to_string(),
        None => {
            let lo = m.per_rank.iter().map(&f).min().unwrap_or(0);
            let hi = m.per_rank.iter().map(&f).max().unwrap_or(0);
            format!("{lo}..{hi}")
        }
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), Failure> {
    let fail = |e: std::io::Error| Failure::Usage(format!("{}: {e}", path.display()));
    let mut out = BufWriter::new(File::create(path).map_err(fail)?);
    f(&mut out).and_then(|_| out.flush()).map_err(fail)
}

fn report<E: Element + Display>(
    args: &RunArgs,
    schedule: &SkipSchedule,
    g: GlobalInput<E>,
    op: &impl ReductionOp<E>,
    reduced: impl FnOnce(&GlobalInput<E>) -> Vec<Vec<E>>,
    eq: impl Fn(&E, &E) -> bool,
) -> Result<(), Failure> {
    let options = EngineOptions {
        allow_non_commutative: args.elem == Elem::Symbolic,
        fused_first_round: args.fused_first_round,
    };
    let out = execute(args.collective, schedule, &g, op, options, args.mode).map_err(|e| Failure::Failed(e.to_string()))?;

    if let Some(path) = &args.trace_jsonl {
        write_file(path, |w| write_trace_jsonl(&out.trace, w))?;
    }
    if let Some(path) = &args.trace_csv {
        write_file(path, |w| write_trace_csv(&out.trace, w))?;
    }
    if args.show {
        for (rank, blocks) in out.held.iter().enumerate() {
            for (b, data) in blocks {
                let items: Vec<String> = data.iter().map(ToString::to_string).collect();
                println!("rank {rank} block {b}: {}", items.join(" "));
            }
        }
    }

    let m = &out.metrics;
    let mut line = format!("rounds={}", m.rounds);
    if m.rounds > 0 {
        line += &format!(
            " blocks/rank={} ops/rank={}",
            per_rank(m, |r| r.blocks_sent),
            per_rank(m, |r| r.op_applications)
        );
    }
    if !args.verify {
        println!("{line}");
        return Ok(());
    }
    let want = expected(args.collective, &g, reduced(&g));
    match first_mismatch(&out.held, &want, eq) {
        None => {
            println!("{line} VERIFIED");
            Ok(())
        }
        Some((rank, block)) => {
            println!("{line} MISMATCH");
            Err(Failure::Failed(format!("first differing block: {block} (rank {rank})")))
        }
    }
}

fn inputs<E: Clone>(layout: &BlockLayout, data: impl Fn(usize, usize) -> Vec<E>) -> GlobalInput<E> {
    let vectors = (0..layout.p())
        .map(|r| BlockVector::new(layout.clone(), data(r, layout.total())).expect("generator fills the layout"))
        .collect();
    GlobalInput::new(layout.clone(), vectors)
}

pub fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let schedule = args.spec.build_valid()?;
    let p = schedule.p();
    let layout = layout(args, p)?;
    if args.collective == Collective::Alltoall && !layout.is_uniform() {
        return Err(Failure::Usage(format!("alltoall needs equal block sizes, got {:?}", layout.sizes())));
    }
    println!(
        "{} p={p} m={} scheme={} skips={} elem={} seed={}",
        args.collective,
        layout.total(),
        schedule.scheme(),
        schedule.to_json(),
        args.elem.to_possible_value().expect("named").get_name(),
        args.seed
    );
    let seed = args.seed;
    match args.elem {
        Elem::Int64 => {
            let g = inputs(&layout, |r, n| synth::int64(seed, r, n));
            report(args, &schedule, g, &WrappingAdd, |g| oracle_reduce_scatter(g, &WrappingAdd), exact)
        }
        Elem::Float64 => {
            let g = inputs(&layout, |r, n| synth::float64(seed, r, n));
            report(args, &schedule, g, &FloatAdd, |g| oracle_reduce_scatter(g, &FloatAdd), close)
        }
        Elem::Symbolic => {
            let g = inputs(&layout, |r, n| vec![Term::leaf(r); n]);
            // The order is fixed by the schedule, so the reference is the tree's order.
            let tree = ReductionTree::build(&schedule).map_err(|e| Failure::Failed(e.to_string()))?;
            let reduced = |g: &GlobalInput<Term>| -> Vec<Vec<Term>> {
                (0..p)
                    .map(|b| vec![tree.reduction_order(b).expect("rank in range"); g.layout.size(b)])
                    .collect()
            };
            report(args, &schedule, g, &make_symbolic_op(), reduced, exact)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn held(blocks: &[&[i64]]) -> Held<i64> {
        vec![blocks.iter().enumerate().map(|(b, d)| (b, d.to_vec())).collect()]
    }

    #[test]
    fn mismatch_reports_first_differing_block() {
        let want = held(&[&[1], &[], &[2, 3]]);
        assert_eq!(first_mismatch(&want, &want, exact), None);
        assert_eq!(first_mismatch(&held(&[&[1], &[], &[2, 4]]), &want, exact), Some((0, 2)));
        assert_eq!(first_mismatch(&held(&[&[1], &[9]]), &want, exact), Some((0, 1)));
        assert_eq!(first_mismatch(&held(&[&[1], &[]]), &want, exact), Some((0, 2)));
    }

    #[test]
    fn float_tolerance_is_relative() {
        assert!(close(&1e6, &(1e6 * (1.0 + 1e-13))));
        assert!(!close(&1.0, &(1.0 + 1e-11)));
        assert!(close(&0.0, &0.0));
        assert!(!close(&0.0, &1e-300));
    }
}
