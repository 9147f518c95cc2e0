//! `taxonet`: run simulations, replay the worked example, verify.
//!
//! Exit codes: 0 success, 1 verification failure or runtime error,
//! 2 malformed configuration or input, 3 infeasible topology.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use taxonet_core::bgraph::source_graph;
use taxonet_core::model::{parse_query, parse_source};
use taxonet_core::simnet::{run, RunOptions, RunReport, Stop, TopologyError};
use taxonet_core::sources::EvalMode;
use taxonet_core::trace::replay;
use taxonet_core::verify::{self, Check};

use config::{ArchChoice, RunConfig};

#[derive(Parser)]
#[command(name = "taxonet", version, about = "Taxonomy-based source networks: simulation and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or all architectures and write JSON and CSV reports.
    Run(RunArgs),
    /// Run the self-checking suites.
    Verify(VerifyArgs),
    /// Replay a query on a single source and print the message trace.
    Trace(TraceArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; built-in defaults when absent.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// CCD, CDR, DCR, DDR, DDD or ALL.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed run length in minutes of virtual time.
    #[arg(long, value_name = "MIN", conflicts_with = "until_stable")]
    duration: Option<f64>,
    /// Stop at stabilization.
    #[arg(long)]
    until_stable: bool,
    /// Also write the message trace of every run.
    #[arg(long)]
    trace: bool,
    /// Report directory.
    #[arg(short, long, value_name = "DIR")]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scale {
    Small,
    Default,
}

#[derive(Args)]
struct VerifyArgs {
    /// Only the replays of the worked example.
    #[arg(long)]
    tables: bool,
    /// Only the path family, up to `n=K`.
    #[arg(long, value_name = "n=K", value_parser = parse_paths)]
    paths: Option<usize>,
    #[arg(long, value_enum, default_value = "default")]
    scale: Scale,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Direct,
    Rewrite,
}

#[derive(Args)]
struct TraceArgs {
    /// Source file.
    #[arg(short, long)]
    source: PathBuf,
    /// Query, e.g. `a2 & a3 | b1`.
    #[arg(short, long)]
    query: String,
    #[arg(long, value_enum, default_value = "direct")]
    mode: Mode,
    /// Print the source's B-graph in DOT instead of the trace.
    #[arg(long)]
    dot: bool,
}

fn parse_paths(s: &str) -> Result<usize, String> {
    let k: usize = s.strip_prefix("n=").unwrap_or(s).parse().map_err(|_| format!("expected n=K, got {s:?}"))?;
    if (2..=40).contains(&k) {
        Ok(k)
    } else {
        Err("K must lie in 2..=40".into())
    }
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn input(error: impl Into<anyhow::Error>) -> Failure {
        Failure { code: 2, error: error.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Failure {
        Failure { code: 1, error }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Trace(a) => cmd_trace(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|e| Failure::input(anyhow!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(a) = args.arch {
        cfg.run.architecture = a;
    }
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(d) = args.duration {
        cfg.run.duration_min = Some(d);
    }
    if args.until_stable {
        cfg.run.duration_min = None;
    }
    if let Some(o) = args.output {
        cfg.run.output = o;
    }
    let choice: ArchChoice = cfg.arch().map_err(|e| Failure::input(anyhow!(e)))?;
    let sim = cfg.sim_config();
    sim.validate().map_err(|e| Failure::input(anyhow!("invalid configuration: {e}")))?;
    let topology = sim.build_topology().map_err(|e| match e {
        TopologyError::Infeasible(_) => Failure { code: 3, error: e.into() },
        TopologyError::Invalid(_) => Failure::input(e),
    })?;
    let opts = RunOptions { trace: args.trace, answers: false };
    let archs = choice.architectures();
    // Independent deterministic simulations; one worker each.
    let reports: Vec<RunReport> = std::thread::scope(|scope| {
        let handles: Vec<_> = archs.iter().map(|&a| {
            let (topology, sim) = (&topology, &sim);
            scope.spawn(move || run(a, topology, sim, opts))
        }).collect();
        handles.into_iter().map(|h| h.join().expect("simulation worker panicked")).collect()
    });
    if reports.windows(2).any(|w| w[0].network_hash != w[1].network_hash || w[0].workload_hash != w[1].workload_hash) {
        return Err(anyhow!("architectures saw different inputs").into());
    }
    write_reports(&cfg.run.output, &reports, args.trace)?;
    print!("{}", summary(&reports, sim.stop));
    Ok(())
}

fn write_reports(dir: &Path, reports: &[RunReport], trace: bool) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for r in reports {
        let stem = dir.join(format!("{}-seed{}", r.architecture, r.seed));
        let write = |ext: &str, body: String| {
            let path = stem.with_extension(ext);
            fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
        };
        write("json", r.to_json())?;
        write("csv", r.to_csv())?;
        if trace {
            let mut lines = r.trace.join("\n");
            lines.push('\n');
            write("trace", lines)?;
        }
    }
    Ok(())
}

fn summary(reports: &[RunReport], stop: Stop) -> String {
    let opt = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
    let mut out = String::new();
    if let Some(r) = reports.first() {
        let _ = writeln!(out, "seed {}  network {}  workload {}", r.seed, r.network_hash, r.workload_hash);
    }
    let _ = writeln!(out, "{:<6} {:>18} {:>20} {:>14} {:>10}", "Method", "Stabilized (min)", "Avg rt/object (ms)", "St. dev. (ms)", "Queries");
    for r in reports {
        let stabilized = match (r.stabilized_min, stop) {
            (Some(m), _) => format!("{m:.0}"),
            (None, Stop::Duration { .. }) => "n/a".into(),
            (None, Stop::UntilStable { .. }) => "not reached".into(),
        };
        let _ = writeln!(
            out,
            "{:<6} {:>18} {:>20} {:>14} {:>10}",
            r.architecture.name(),
            stabilized,
            opt(r.avg_rt_per_object_ms, 3),
            opt(r.std_dev_ms, 3),
            r.queries_answered
        );
    }
    out
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let (sources, networks, queries) = match args.scale {
        Scale::Small => (200, 5, 20),
        Scale::Default => (1_000, 30, 50),
    };
    let mut suites: Vec<(&str, Check)> = Vec::new();
    let all = !args.tables && args.paths.is_none();
    if all {
        suites.push(("oracle", verify::oracle(sources, 1)));
        suites.push(("architectures", verify::architectures(networks, queries, 1_000, false)));
    }
    if all || args.tables {
        suites.push(("qe table", verify::qe_table()));
        suites.push(("direct messages", verify::direct_messages()));
        suites.push(("rewrite messages", verify::rewrite_messages()));
    }
    if all || args.paths.is_some() {
        suites.push(("paths", verify::paths(2..=args.paths.unwrap_or(12))));
    }
    for (name, c) in &suites {
        println!("{} {name}: {}", if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    let failed = suites.iter().filter(|(_, c)| !c.passed).count();
    if failed > 0 {
        return Err(anyhow!("{failed} suite(s) failed").into());
    }
    Ok(())
}

fn cmd_trace(args: TraceArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.source)
        .with_context(|| format!("reading {}", args.source.display()))
        .map_err(Failure::input)?;
    let source = parse_source(&text).map_err(|e| Failure::input(anyhow!("{}: {e}", args.source.display())))?;
    let query = parse_query(&args.query, &source.vocabulary).map_err(|e| Failure::input(anyhow!("query: {e}")))?;
    if args.dot {
        print!("{}", source_graph(&source).to_dot(&source.vocabulary));
        return Ok(());
    }
    let mode = match args.mode {
        Mode::Direct => EvalMode::Direct,
        Mode::Rewrite => EvalMode::Rewrite,
    };
    print!("{}", replay(&source, &query, mode).canonical());
    Ok(())
}
