use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use yodo::engine::TAPE_ENTRY_LIMIT;
use yodo::exec::with_thread_cap;
use yodo::oracle::{verify_report, VerifyConfig};
use yodo::parser::{ranked_rows, QueryError};
use yodo::sensmetrics::{analyze_all_with, metrics, AnalysisError, SensFunction};
use yodo::synth::NetworkSpec;
use yodo::{
    elimination_order, marginalize, moralize, parse_bif, parse_query, serialize_report, BayesianNetwork, Execution,
    ReportFormat, SensitivityReport, VarId,
};

#[derive(Parser)]
#[command(
    name = "yodo",
    version,
    about = "One-pass sensitivity analysis for discrete Bayesian networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute every sensitivity metric for one query and print the ranked report.
    Analyze(AnalyzeArgs),
    /// Check the report against finite differences and re-inference.
    Verify(VerifyArgs),
    /// Time the one-pass analysis against the finite-difference cost model.
    Bench(BenchArgs),
}

#[derive(Args)]
struct QueryArgs {
    /// Network in BIF format.
    #[arg(short = 'n', long)]
    network: PathBuf,
    /// Query target, `VAR=state`.
    #[arg(short = 't', long)]
    target: String,
    /// Evidence, `VAR=state`; repeatable.
    #[arg(short = 'e', long)]
    evidence: Vec<String>,
    /// Compute rows on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Print only the N highest-ranked rows.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    top: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Check a random subset of K parameters.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fault injection for tests: perturb the top-ranked row before checking.
    #[arg(long, hide = true)]
    corrupt_gradient: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Network files in BIF format.
    files: Vec<PathBuf>,
    /// Random network `KIND:NODES:MAX_PARENTS:MAX_STATES`, KIND is dag or polytree; repeatable.
    #[arg(long)]
    synthetic: Vec<NetworkSpec>,
    /// Seeds query selection and synthetic generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Timed repetitions; the median is reported.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
}

/// Failure with its exit code: 1 for analysis or verification, 2 for input.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn analysis(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        Failure::input(format!("invalid query: {e}"))
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        Failure::analysis(format!("analysis failed: {e}"))
    }
}

fn load(path: &Path) -> Result<BayesianNetwork, Failure> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
    parse_bif(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn run_query(args: &QueryArgs) -> Result<(BayesianNetwork, SensitivityReport), Failure> {
    let bn = load(&args.network)?;
    let q = parse_query(&bn, &args.target, &args.evidence)?;
    let report = analyze_all_with(&bn, &q, execution(args.sequential))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok((bn, report))
}

fn write_stdout(bytes: &[u8]) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| Failure::analysis(format!("cannot write output: {e}")))
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let (bn, mut report) = run_query(&args.query)?;
    log::info!(
        "{} = {} over {} parameters (induced width {})",
        report.query.display(&bn),
        report.probability,
        report.rows.len(),
        report.induced_width
    );
    if let Some(n) = args.top {
        let keep: Vec<_> = ranked_rows(&report).into_iter().take(n as usize).cloned().collect();
        report.rows = keep;
    }
    write_stdout(&serialize_report(&report, args.format))
}

fn cmd_verify(args: &VerifyArgs) -> Result<(), Failure> {
    let (bn, mut report) = run_query(&args.query)?;
    if args.corrupt_gradient {
        let top = ranked_rows(&report)[0].param;
        let row = report
            .rows
            .iter_mut()
            .find(|r| r.param == top)
            .expect("ranked rows come from the report");
        if let Some(m) = row.metrics {
            let f = m.function;
            let bumped = SensFunction::new(f.c1 + 0.01 * f.c1.abs().max(1.0), f.c2, f.c3, f.c4);
            row.metrics = Some(metrics(bumped, row.value));
        }
    }
    let cfg = VerifyConfig {
        sample: args.sample,
        seed: args.seed,
        exec: execution(args.query.sequential),
        ..VerifyConfig::default()
    };
    let summary = verify_report(&bn, &report, &cfg).map_err(|e| Failure::analysis(format!("oracle failed: {e}")))?;
    let mut out = format!(
        "query {} = {}\nchecked {} parameters ({} degenerate skipped)\n",
        report.query.display(&bn),
        report.probability,
        summary.checked,
        summary.skipped
    );
    let describe = |name: &str, d: &Option<yodo::oracle::Discrepancy>, tol: f64| match d {
        Some(d) => format!("max {name} error {:e} at {} (tolerance {tol:e})\n", d.error, d.label),
        None => format!("max {name} error: nothing checked\n"),
    };
    out.push_str(&describe(
        "derivative",
        &summary.worst_derivative,
        cfg.derivative_tolerance,
    ));
    out.push_str(&describe("curve", &summary.worst_curve, cfg.curve_tolerance));
    if summary.passed() {
        out.push_str("PASS\n");
        write_stdout(out.as_bytes())
    } else {
        out.push_str(&format!("FAIL: {} checks out of tolerance\n", summary.failures.len()));
        write_stdout(out.as_bytes())?;
        Err(Failure::analysis(format!("worst offender: {}", summary.failures[0])))
    }
}

/// Target and one evidence variable with random states, drawn until the
/// evidence has positive probability.
fn bench_query(bn: &BayesianNetwork, seed: u64) -> Option<yodo::Query> {
    let n = bn.num_variables();
    if n < 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = moralize(bn);
    let order = elimination_order(&m);
    for _ in 0..20 {
        let t = rng.gen_range(0..n);
        let mut e = rng.gen_range(0..n - 1);
        if e >= t {
            e += 1;
        }
        let (t, e) = (VarId(t), VarId(e));
        let target = (t, rng.gen_range(0..bn.cardinality(t)));
        let evidence = (e, rng.gen_range(0..bn.cardinality(e)));
        let Ok((p, _)) = marginalize(&m.apply_evidence(&[evidence, target]), &order) else {
            continue;
        };
        if p > 0.0 {
            return yodo::Query::new(bn, target, vec![evidence]).ok();
        }
    }
    None
}

fn median(mut times: Vec<Duration>) -> Duration {
    times.sort();
    times[times.len() / 2]
}

fn time<T>(runs: u64, mut f: impl FnMut() -> T) -> Duration {
    median(
        (0..runs)
            .map(|_| {
                let start = Instant::now();
                std::hint::black_box(f());
                start.elapsed()
            })
            .collect(),
    )
}

struct BenchRow {
    name: String,
    result: Result<String, String>,
}

fn bench_one(name: &str, bn: &BayesianNetwork, seed: u64, runs: u64) -> Result<String, String> {
    let entries = elimination_order(&moralize(bn)).cluster_entries();
    if entries > TAPE_ENTRY_LIMIT {
        return Err(format!(
            "{entries} table entries exceed the limit of {TAPE_ENTRY_LIMIT}"
        ));
    }
    let q = bench_query(bn, seed).ok_or("no query with positive probability found")?;
    let report = analyze_all_with(bn, &q, Execution::Sequential).map_err(|e| e.to_string())?;
    let yodo = time(runs, || analyze_all_with(bn, &q, Execution::Sequential));
    let single = time(runs, || {
        let m = moralize(bn).apply_evidence(&q.joint_assignment());
        marginalize(&m, &elimination_order(&m)).map(|(p, _)| p)
    });
    let params = bn.param_count();
    let fd = single.as_secs_f64() * 2.0 * params as f64;
    let secs = yodo.as_secs_f64();
    Ok(format!(
        "{name}\t{}\t{}\t{params}\t{}\t{}\t{secs:.6}\t{:.6}\t{fd:.3}\t{:.1}",
        bn.num_variables(),
        bn.moral_edge_count(),
        report.induced_width,
        q.display(bn),
        single.as_secs_f64(),
        fd / secs.max(1e-12),
    ))
}

fn cmd_bench(args: &BenchArgs) -> Result<(), Failure> {
    if args.files.is_empty() && args.synthetic.is_empty() {
        return Err(Failure::input("bench needs network files and/or --synthetic specs"));
    }
    let mut jobs: Vec<(String, Result<BayesianNetwork, String>)> = args
        .files
        .iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
            (name, load(p).map_err(|f| f.message))
        })
        .collect();
    jobs.extend(
        args.synthetic
            .iter()
            .map(|s| (s.to_string(), Ok(s.generate(args.seed)))),
    );
    let threads = std::env::var("YODO_THREADS").ok().and_then(|v| v.parse::<usize>().ok());
    let rows: Vec<BenchRow> = with_thread_cap(threads, || {
        Execution::Parallel.map(&jobs, |(name, bn)| BenchRow {
            name: name.clone(),
            result: bn
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|bn| bench_one(name, bn, args.seed, args.runs)),
        })
    });
    let mut out = String::from(
        "network\tnodes\tarcs\tparameters\tinduced_width\tquery\tyodo_s\tmarginal_s\tfd_estimate_s\tspeedup\n",
    );
    for row in rows {
        match row.result {
            Ok(line) => out.push_str(&line),
            Err(e) => out.push_str(&format!("{}\terror: {e}", row.name)),
        }
        out.push('\n');
    }
    write_stdout(out.as_bytes())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
