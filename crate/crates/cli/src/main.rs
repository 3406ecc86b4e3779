mod cost;
mod run;
mod synth;

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use circulant::costmodel::{parse_time, Time};
use circulant::{ExecMode, ReductionTree, Scheme, SkipSchedule};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Circulant-graph collectives: schedule inspection, simulated runs, cost sweeps.
#[derive(Parser)]
#[command(name = "circulant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a skip schedule, its run lengths and validation verdict.
    Schedule(ScheduleArgs),
    /// Run a collective on synthetic data and optionally verify it.
    Run(run::RunArgs),
    /// Emit a CSV of analytic, simulated and bounded costs over a parameter grid.
    Cost(cost::CostArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ScheduleSpec {
    /// Number of ranks.
    #[arg(short = 'p', value_parser = positive)]
    pub p: usize,
    /// Skip generator: halving, doubling, linear, sqrt or custom [default: halving].
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Explicit skips, largest first; implies `--scheme custom`.
    #[arg(long, value_delimiter = ',')]
    pub skips: Option<Vec<usize>>,
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<SkipSchedule, Failure> {
        let built = match (&self.skips, self.scheme) {
            (Some(skips), None | Some(Scheme::Custom)) => SkipSchedule::custom(self.p, skips.clone()),
            (Some(_), Some(other)) => return Err(Failure::Usage(format!("--skips conflicts with --scheme {other}"))),
            (None, Some(Scheme::Custom)) => return Err(Failure::Usage("--scheme custom needs --skips".into())),
            (None, scheme) => SkipSchedule::generate(scheme.unwrap_or(Scheme::Halving), self.p),
        };
        built.map_err(|e| Failure::Usage(e.to_string()))
    }

    /// Builds the schedule and insists that it validates.
    pub fn build_valid(&self) -> Result<SkipSchedule, Failure> {
        let schedule = self.build()?;
        let report = schedule.validate();
        if report.is_valid() {
            Ok(schedule)
        } else {
            Err(Failure::Failed(format!("invalid schedule {}:\n{report}", schedule.to_json())))
        }
    }
}

#[derive(Args)]
struct ScheduleArgs {
    #[command(flatten)]
    spec: ScheduleSpec,
    /// Print a JSON object instead of text.
    #[arg(long)]
    json: bool,
    /// Write the reduction tree as Graphviz DOT.
    #[arg(long, value_name = "PATH")]
    dot: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Collective {
    #[value(name = "reduce_scatter")]
    ReduceScatter,
    Allreduce,
    Allgather,
    Alltoall,
}

impl fmt::Display for Collective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Debug)]
pub enum Failure {
    /// Bad flags or an impossible configuration: exit 2.
    Usage(String),
    /// Validation or verification failed: exit 1.
    Failed(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Failed(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

pub fn exec_mode(s: &str) -> Result<ExecMode, String> {
    s.parse()
}

pub fn time_value(s: &str) -> Result<Time, String> {
    parse_time(s)
}

fn join(xs: &[usize]) -> String {
    if xs.is_empty() {
        return "none".into();
    }
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<(), Failure> {
    let schedule = args.spec.build()?;
    let report = schedule.validate();
    if args.json {
        let failures: Vec<_> = report
            .failures()
            .map(|c| serde_json::json!({ "invariant": c.invariant.name(), "detail": c.failure }))
            .collect();
        let doc = serde_json::json!({
            "p": schedule.p(),
            "scheme": schedule.scheme(),
            "skips": schedule.skips(),
            "rounds": schedule.rounds(),
            "run_lengths": schedule.run_lengths(),
            "valid": report.is_valid(),
            "unrepresentable": report.unrepresentable,
            "failures": failures,
        });
        println!("{doc}");
    } else {
        println!("p: {}, scheme: {}", schedule.p(), schedule.scheme());
        println!("skips: {}, rounds: {}", join(schedule.skips()), schedule.rounds());
        println!("run lengths: {}", join(&schedule.run_lengths()));
    }
    if !report.is_valid() {
        return Err(Failure::Failed(format!("invalid schedule {}:\n{report}", schedule.to_json())));
    }
    if !args.json {
        println!("valid: yes");
    }
    if let Some(path) = &args.dot {
        let tree = ReductionTree::build(&schedule).map_err(|e| Failure::Failed(e.to_string()))?;
        fs::write(path, tree.to_dot()).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Schedule(args) => cmd_schedule(args),
        Command::Run(args) => run::cmd_run(args),
        Command::Cost(args) => cost::cmd_cost(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                // Reports belong on stdout next to the rest of the output.
                Failure::Failed(msg) => println!("{msg}"),
                Failure::Usage(msg) => eprintln!("error: {msg}"),
            }
            ExitCode::from(failure.code())
        }
    }
}
