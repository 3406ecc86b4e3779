use std::collections::HashMap;
use std::io;

use circulant::costmodel::{
    measured_cost, schedule_allreduce_cost, schedule_allreduce_upper_bound, schedule_reduce_scatter_cost,
    schedule_upper_bound, to_f64, CostParams, Time,
};
use circulant::engine::{allreduce, partitioned_allreduce};
use circulant::ops::WrappingAdd;
use circulant::{BlockLayout, BlockVector, EngineOptions, ExecMode, Metrics, Scheme, SkipSchedule};
use clap::Args;

use crate::{time_value, Collective, Failure};

#[derive(Args)]
pub struct CostArgs {
    /// Rank counts.
    #[arg(short = 'p', value_delimiter = ',', required = true)]
    p: Vec<usize>,
    /// Vector lengths [default: m = p for each row].
    #[arg(short = 'm', value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "halving")]
    scheme: Vec<Scheme>,
    /// Per-round latency values; decimals or fractions like 1/3.
    #[arg(long, value_delimiter = ',', value_parser = time_value, default_value = "1")]
    alpha: Vec<Time>,
    /// Per-element transfer times.
    #[arg(long, value_delimiter = ',', value_parser = time_value, default_value = "1")]
    beta: Vec<Time>,
    /// Per-element reduction times.
    #[arg(long, value_delimiter = ',', value_parser = time_value, default_value = "1")]
    gamma: Vec<Time>,
    /// reduce_scatter or allreduce.
    #[arg(long, value_enum, default_value_t = Collective::ReduceScatter)]
    collective: Collective,
    /// Print times as exact fractions instead of decimals.
    #[arg(long)]
    exact: bool,
}

fn format_time(t: &Time, exact: bool) -> String {
    if t.is_integer() {
        t.numer().to_string()
    } else if exact {
        format!("{}/{}", t.numer(), t.denom())
    } else {
        let s = format!("{:.9}", to_f64(t));
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Simulates once on zeros; every cost row for the same shape reuses the counts.
fn simulate(collective: Collective, schedule: &SkipSchedule, m: usize) -> Result<Metrics, Failure> {
    let p = schedule.p();
    let layout = BlockLayout::even(p, m).map_err(|e| Failure::Usage(e.to_string()))?;
    let inputs = vec![BlockVector::new(layout.clone(), vec![0i64; m]).expect("zeros fill the layout"); p];
    let opts = EngineOptions::default();
    let fail = |e: circulant::EngineError| Failure::Failed(e.to_string());
    Ok(match collective {
        Collective::Allreduce => allreduce(schedule, inputs, &WrappingAdd, opts, ExecMode::Parallel).map_err(fail)?.metrics,
        _ => partitioned_allreduce(schedule, inputs, &WrappingAdd, opts, ExecMode::Parallel).map_err(fail)?.metrics,
    })
}

pub fn cmd_cost(args: &CostArgs) -> Result<(), Failure> {
    if !matches!(args.collective, Collective::ReduceScatter | Collective::Allreduce) {
        return Err(Failure::Usage(format!("no cost model for {}", args.collective)));
    }
    if args.scheme.contains(&Scheme::Custom) {
        return Err(Failure::Usage("cost grids take generated schemes only".into()));
    }
    if args.p.contains(&0) {
        return Err(Failure::Usage("p must be at least 1".into()));
    }
    let mut params = Vec::new();
    for a in &args.alpha {
        for b in &args.beta {
            for g in &args.gamma {
                params.push(CostParams::new(*a, *b, *g).map_err(|e| Failure::Usage(e.to_string()))?);
            }
        }
    }

    let mut out = csv::Writer::from_writer(io::stdout().lock());
    let io_fail = |e: csv::Error| Failure::Usage(e.to_string());
    out.write_record(["p", "m", "scheme", "alpha", "beta", "gamma", "analytic", "measured", "upper_bound"])
        .map_err(io_fail)?;
    let mut cache: HashMap<(usize, usize, Scheme), Metrics> = HashMap::new();
    for &p in &args.p {
        let ms = if args.m.is_empty() { vec![p] } else { args.m.clone() };
        for &m in &ms {
            for &scheme in &args.scheme {
                let schedule = SkipSchedule::generate(scheme, p).map_err(|e| Failure::Usage(e.to_string()))?;
                let metrics = match cache.get(&(p, m, scheme)) {
                    Some(metrics) => metrics.clone(),
                    None => {
                        let metrics = simulate(args.collective, &schedule, m)?;
                        cache.insert((p, m, scheme), metrics.clone());
                        metrics
                    }
                };
                for c in &params {
                    let (analytic, bound) = match args.collective {
                        Collective::Allreduce => (
                            schedule_allreduce_cost(&schedule, m, c),
                            schedule_allreduce_upper_bound(&schedule, m, c),
                        ),
                        _ => (schedule_reduce_scatter_cost(&schedule, m, c), schedule_upper_bound(&schedule, m, c)),
                    };
                    let measured = measured_cost(&metrics, c);
                    let t = |x: &Time| format_time(x, args.exact);
                    out.write_record([
                        p.to_string(),
                        m.to_string(),
                        scheme.to_string(),
                        t(&c.alpha),
                        t(&c.beta),
                        t(&c.gamma),
                        t(&analytic),
                        t(&measured),
                        t(&bound),
                    ])
                    .map_err(io_fail)?;
                }
            }
        }
    }
    out.flush().map_err(|e| Failure::Usage(e.to_string()))
}
