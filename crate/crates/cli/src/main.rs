//! `regret-lab`: experiment driver for prediction games over de Bruijn and
//! general Eulerian out-degree-2 graphs.
//!
//! Every run echoes a JSON manifest (resolved parameters, config hash, seeds,
//! output paths) to stdout, writes outputs atomically, and never mutates its
//! inputs. Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 capacity or numeric error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use regret_lab_core::calculus::{self, NodeFunction};
use regret_lab_core::corrector::{self, Convention};
use regret_lab_core::digraph::LabeledDigraph;
use regret_lab_core::error::Error as CoreError;
use regret_lab_core::game::{
    self, Adversary, GameConfig, InvestorStrategy, MarketStrategy, Side,
};
use regret_lab_core::selftest;
use regret_lab_core::value::{ExpertPanel, Payoff, StrategyContext};
use regret_lab_core::MarketState;

const EXIT_VERIFICATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_CAPACITY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "regret-lab",
    version,
    about = "Prediction-with-expert-advice strategies over de Bruijn graphs"
)]
struct Cli {
    /// Emit diagnostics as line-delimited JSON instead of plain text.
    #[arg(long, global = true)]
    json_logs: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a graph, optionally check the Euler conditions, and emit it.
    Graph(GraphArgs),
    /// Solve the graph Poisson equation by solver, representation, or both.
    Poisson(PoissonArgs),
    /// Certify LP indifference of the Poisson corrector over simple cycles.
    LpVerify(LpVerifyArgs),
    /// Evaluate the continuum value and optimal strategy on a grid (CSV).
    Value(ValueArgs),
    /// Exact small-horizon minimax value bracket.
    Minimax(MinimaxArgs),
    /// Play one game and record the transcript.
    Simulate(SimulateArgs),
    /// Gap-versus-epsilon convergence experiment (CSV).
    Rate(RateArgs),
    /// Run the built-in invariant battery.
    Selftest,
}

#[derive(Args)]
struct GraphArgs {
    /// de Bruijn depth d.
    #[arg(long, conflicts_with = "random")]
    debruijn: Option<usize>,
    /// Random Eulerian graph with this many nodes (requires --seed).
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the graph JSON here.
    #[arg(long)]
    emit: Option<PathBuf>,
    /// Verify in-degrees and connectivity.
    #[arg(long)]
    check_eulerian: bool,
}

#[derive(Args)]
struct PoissonArgs {
    /// Graph: a JSON path, `debruijn:<d>`, or `random:<nodes>:<seed>`.
    #[arg(long)]
    graph: String,
    /// Right-hand side: a JSON path or `random:<seed>`.
    #[arg(long)]
    h: String,
    #[arg(long, value_parser = ["solve", "representation", "both"], default_value = "solve")]
    method: String,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct LpVerifyArgs {
    #[arg(long)]
    graph: String,
    #[arg(long)]
    h: String,
    #[arg(long, value_parser = ["investor-lp", "general-lp"], default_value = "investor-lp")]
    convention: String,
    /// Simple-cycle enumeration cap.
    #[arg(long, default_value_t = 1_000_000)]
    cap: usize,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct ValueArgs {
    /// Panel JSON path.
    #[arg(long)]
    panel: PathBuf,
    #[arg(long, value_parser = ["max", "lse"], default_value = "max")]
    payoff: String,
    /// Horizon N fixing the strategy scale epsilon = N^{-1/2}.
    #[arg(long = "N", default_value_t = 10_000)]
    n_steps: usize,
    /// Grid spec lo:hi:count for x1.
    #[arg(long, default_value = "-1:1:5", allow_hyphen_values = true)]
    x1: String,
    #[arg(long, default_value = "-1:1:5", allow_hyphen_values = true)]
    x2: String,
    #[arg(long, default_value = "0:0.9:4", allow_hyphen_values = true)]
    t: String,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct MinimaxArgs {
    /// Game config JSON path.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 21)]
    fgrid: usize,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// `fstar`, `const:<v>`, `perturbed:<amplitude>`, or `script:<path>`.
    #[arg(long, default_value = "fstar")]
    investor: String,
    /// `bstar`, `all-plus`, `random:<seed>`, `greedy`, or `exhaustive`.
    #[arg(long, default_value = "bstar")]
    market: String,
    /// Override the config's horizon N.
    #[arg(long = "N")]
    n_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    emit: Option<PathBuf>,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = ["investor", "market"], default_value = "investor")]
    side: String,
    #[arg(long, value_parser = ["exhaustive", "bstar"], default_value = "exhaustive")]
    adversary: String,
    /// Comma-separated horizons, e.g. 4,8,12,16,20.
    #[arg(long = "N-list", value_delimiter = ',', required = true)]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = game::DEFAULT_LOOKAHEAD)]
    lookahead: usize,
    #[arg(long, default_value_t = game::DEFAULT_RATE_F_GRID)]
    fgrid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    emit: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.json_logs);
    init_thread_pool();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            log::error!("{err}");
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn init_logging(json: bool) {
    let mut builder = env_logger::Builder::from_default_env();
    if json {
        builder.format(|buf, record| {
            writeln!(
                buf,
                "{}",
                serde_json::json!({
                    "level": record.level().to_string(),
                    "target": record.target(),
                    "message": record.args().to_string(),
                })
            )
        });
    }
    let _ = builder.try_init();
}

/// REGRET_LAB_THREADS caps the rayon worker count.
fn init_thread_pool() {
    if let Ok(raw) = std::env::var("REGRET_LAB_THREADS") {
        if let Ok(threads) = raw.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build_global();
        } else {
            log::warn!("ignoring non-numeric REGRET_LAB_THREADS={raw}");
        }
    }
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Capacity { .. } | CoreError::Numeric(_) | CoreError::Generation { .. } => {
            EXIT_CAPACITY
        }
        _ => EXIT_USAGE,
    }
}

fn run(command: Command) -> Result<ExitCode, CoreError> {
    match command {
        Command::Graph(args) => cmd_graph(args),
        Command::Poisson(args) => cmd_poisson(args),
        Command::LpVerify(args) => cmd_lp_verify(args),
        Command::Value(args) => cmd_value(args),
        Command::Minimax(args) => cmd_minimax(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Rate(args) => cmd_rate(args),
        Command::Selftest => cmd_selftest(),
    }
}

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<String, CoreError> {
    std::fs::read_to_string(path)
        .map_err(|e| CoreError::Config(format!("cannot read {}: {e}", path.display())))
}

/// Graph argument: a JSON file path or an inline generator shorthand
/// (`debruijn:<d>` or `random:<nodes>:<seed>`).
fn load_graph(spec: &str) -> Result<LabeledDigraph, CoreError> {
    if let Some(rest) = spec.strip_prefix("debruijn:") {
        let d = rest
            .parse()
            .map_err(|_| CoreError::Config(format!("bad depth in {spec:?}")))?;
        return LabeledDigraph::debruijn(d);
    }
    if let Some(rest) = spec.strip_prefix("random:") {
        let (nodes, seed) = rest
            .split_once(':')
            .ok_or_else(|| CoreError::Config(format!("expected random:<nodes>:<seed>, got {spec:?}")))?;
        let nodes = nodes
            .parse()
            .map_err(|_| CoreError::Config(format!("bad node count in {spec:?}")))?;
        let seed = seed
            .parse()
            .map_err(|_| CoreError::Config(format!("bad seed in {spec:?}")))?;
        return LabeledDigraph::random_eulerian(nodes, seed);
    }
    LabeledDigraph::from_json_str(&read_file(Path::new(spec))?)
}

/// Node-function argument: a JSON file path or `random:<seed>`.
fn load_node_function(spec: &str, node_count: usize) -> Result<NodeFunction, CoreError> {
    if let Some(rest) = spec.strip_prefix("random:") {
        let seed = rest
            .parse()
            .map_err(|_| CoreError::Config(format!("bad seed in {spec:?}")))?;
        return Ok(NodeFunction::random(node_count, seed));
    }
    let f = NodeFunction::from_json_str(&read_file(Path::new(spec))?)?;
    if f.len() != node_count {
        return Err(CoreError::Config(format!(
            "node function covers {} nodes, graph has {node_count}",
            f.len()
        )));
    }
    Ok(f)
}

fn parse_investor(spec: &str) -> Result<InvestorStrategy, CoreError> {
    if spec == "fstar" {
        return Ok(InvestorStrategy::FStar);
    }
    if let Some(rest) = spec.strip_prefix("const:") {
        let v: f64 = rest
            .parse()
            .map_err(|_| CoreError::Config(format!("bad constant in {spec:?}")))?;
        if !(-1.0..=1.0).contains(&v) {
            return Err(CoreError::Config(format!(
                "constant prediction {v} outside [-1, 1]"
            )));
        }
        return Ok(InvestorStrategy::Constant(v));
    }
    if let Some(rest) = spec.strip_prefix("perturbed:") {
        let amplitude = rest
            .parse()
            .map_err(|_| CoreError::Config(format!("bad amplitude in {spec:?}")))?;
        return Ok(InvestorStrategy::PerturbedFStar { amplitude });
    }
    if let Some(rest) = spec.strip_prefix("script:") {
        let text = read_file(Path::new(rest))?;
        let values = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| CoreError::Config(format!("bad script entry {tok:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(InvestorStrategy::Script(values));
    }
    Err(CoreError::Config(format!(
        "unknown investor {spec:?} (expected fstar, const:<v>, perturbed:<amp>, script:<path>)"
    )))
}

/// Markets; `random:<seed>` also overrides the run seed.
fn parse_market(spec: &str) -> Result<(Option<MarketStrategy>, Option<u64>), CoreError> {
    match spec {
        "bstar" => Ok((Some(MarketStrategy::BStar), None)),
        "all-plus" => Ok((Some(MarketStrategy::AllPlus), None)),
        "greedy" => Ok((Some(MarketStrategy::Greedy), None)),
        "exhaustive" => Ok((None, None)),
        other => {
            if let Some(rest) = other.strip_prefix("random:") {
                let seed = rest
                    .parse()
                    .map_err(|_| CoreError::Config(format!("bad seed in {other:?}")))?;
                Ok((Some(MarketStrategy::Random), Some(seed)))
            } else {
                Err(CoreError::Config(format!(
                    "unknown market {other:?} (expected bstar, all-plus, random:<seed>, greedy, exhaustive)"
                )))
            }
        }
    }
}

/// `lo:hi:count` grid.
fn parse_grid(spec: &str) -> Result<Vec<f64>, CoreError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CoreError::Config(format!(
            "expected lo:hi:count, got {spec:?}"
        )));
    }
    let lo: f64 = parts[0]
        .parse()
        .map_err(|_| CoreError::Config(format!("bad grid bound in {spec:?}")))?;
    let hi: f64 = parts[1]
        .parse()
        .map_err(|_| CoreError::Config(format!("bad grid bound in {spec:?}")))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| CoreError::Config(format!("bad grid count in {spec:?}")))?;
    if count == 0 || hi < lo {
        return Err(CoreError::Config(format!("degenerate grid {spec:?}")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count).map(|i| lo + i as f64 * step).collect())
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Temp-then-rename so a crash never leaves a truncated output.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CoreError> {
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    let io_err = |e: std::io::Error| CoreError::Config(format!("cannot write {}: {e}", path.display()));
    {
        let mut file = std::fs::File::create(&tmp).map_err(io_err)?;
        file.write_all(bytes).map_err(io_err)?;
        file.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

/// Echo the run manifest to stdout: resolved parameters, their hash, seeds,
/// and output paths. Re-running the same command reproduces the outputs byte
/// for byte.
fn print_manifest(
    command: &str,
    params: serde_json::Value,
    seeds: &[u64],
    outputs: &[&Option<PathBuf>],
    result: serde_json::Value,
) {
    let mut hasher = Sha256::new();
    hasher.update(params.to_string().as_bytes());
    let manifest = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "params": params,
        "config_hash": format!("{:x}", hasher.finalize()),
        "seeds": seeds,
        "outputs": outputs
            .iter()
            .filter_map(|p| p.as_ref().map(|p| p.display().to_string()))
            .collect::<Vec<_>>(),
        "result": result,
    });
    println!("{manifest}");
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_graph(args: GraphArgs) -> Result<ExitCode, CoreError> {
    let (graph, params) = match (args.debruijn, args.random) {
        (Some(d), None) => (
            LabeledDigraph::debruijn(d)?,
            serde_json::json!({"debruijn": d}),
        ),
        (None, Some(n)) => (
            LabeledDigraph::random_eulerian(n, args.seed)?,
            serde_json::json!({"random": n, "seed": args.seed}),
        ),
        _ => {
            return Err(CoreError::Config(
                "exactly one of --debruijn or --random is required".into(),
            ))
        }
    };
    if args.check_eulerian {
        graph.check_eulerian()?;
    }
    if let Some(path) = &args.emit {
        write_atomic(path, graph.to_json_value().to_string().as_bytes())?;
    }
    print_manifest(
        "graph",
        params,
        &[args.seed],
        &[&args.emit],
        serde_json::json!({
            "nodes": graph.node_count(),
            "edges": graph.edge_count(),
            "eulerian_checked": args.check_eulerian,
        }),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_poisson(args: PoissonArgs) -> Result<ExitCode, CoreError> {
    let graph = load_graph(&args.graph)?;
    let h = load_node_function(&args.h, graph.node_count())?;
    let params = serde_json::json!({
        "graph": args.graph, "h": args.h, "method": args.method,
    });

    let mut result = serde_json::Map::new();
    let mut emitted = serde_json::Map::new();
    if args.method == "solve" || args.method == "both" {
        let sol = calculus::solve_poisson(&graph, &h)?;
        let mean_h = calculus::mean(&h);
        let residual = (0..graph.node_count())
            .map(|x| (calculus::laplacian(&graph, &sol, x).unwrap() - (h.get(x) - mean_h)).abs())
            .fold(0.0f64, f64::max);
        result.insert("solve_residual".into(), serde_json::json!(residual));
        emitted.insert("solve".into(), sol.to_json_value());
    }
    if args.method == "representation" || args.method == "both" {
        let d = (graph.node_count() as f64).log2() as usize;
        if graph.node_count() != 1 << d || LabeledDigraph::debruijn(d)? != graph {
            return Err(CoreError::Structure(
                "representation method requires a de Bruijn graph".into(),
            ));
        }
        let rep = calculus::debruijn_representation(&h, d)?;
        emitted.insert("representation".into(), rep.to_json_value());
        if let Some(serde_json::Value::Object(solved)) = emitted.get("solve") {
            let centered = rep.centered();
            let deviation = solved
                .iter()
                .map(|(k, v)| {
                    let i: usize = k.parse().unwrap();
                    (v.as_f64().unwrap() - centered.get(i)).abs()
                })
                .fold(0.0f64, f64::max);
            result.insert("methods_gap".into(), serde_json::json!(deviation));
        }
    }
    if let Some(path) = &args.emit {
        write_atomic(
            path,
            serde_json::Value::Object(emitted).to_string().as_bytes(),
        )?;
    }
    print_manifest(
        "poisson",
        params,
        &[],
        &[&args.emit],
        serde_json::Value::Object(result),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_lp_verify(args: LpVerifyArgs) -> Result<ExitCode, CoreError> {
    let graph = load_graph(&args.graph)?;
    let h = load_node_function(&args.h, graph.node_count())?;
    let convention = match args.convention.as_str() {
        "general-lp" => Convention::GeneralLp,
        _ => Convention::InvestorLp,
    };
    let report = corrector::verify_indifference(&graph, &h, convention, args.cap)?;
    let report_json = serde_json::to_value(&report)
        .map_err(|e| CoreError::Config(format!("report serialization: {e}")))?;
    if let Some(path) = &args.report {
        write_atomic(path, report_json.to_string().as_bytes())?;
    }
    print_manifest(
        "lp-verify",
        serde_json::json!({
            "graph": args.graph, "h": args.h,
            "convention": args.convention, "cap": args.cap,
        }),
        &[],
        &[&args.report],
        serde_json::json!({
            "indifferent": report.indifferent,
            "mean_h": report.mean_h,
            "m_investor": report.m_investor,
            "m_market": report.m_market,
            "cycles": report.cycle_rows.len(),
        }),
    );
    Ok(if report.indifferent {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFICATION)
    })
}

fn cmd_value(args: ValueArgs) -> Result<ExitCode, CoreError> {
    let panel = ExpertPanel::from_json_str(&read_file(&args.panel)?)?;
    let payoff = Payoff::parse(&args.payoff)?;
    let ctx = StrategyContext::new(panel.clone(), payoff, args.n_steps)?;
    let x1_grid = parse_grid(&args.x1)?;
    let x2_grid = parse_grid(&args.x2)?;
    let t_grid = parse_grid(&args.t)?;

    let mut csv = String::from("x1,x2,t,m,u,f_star,H\n");
    let mut rows = 0usize;
    for &t in &t_grid {
        for &x1 in &x1_grid {
            for &x2 in &x2_grid {
                for idx in 0..panel.node_count() {
                    let m = MarketState::from_index(idx, panel.depth())?;
                    let u = ctx.value().u([x1, x2], t)?;
                    let f = ctx.f_star([x1, x2], t, m)?;
                    let big_h = ctx.potential([x1, x2], t, m)?;
                    writeln!(csv, "{x1},{x2},{t},{m},{u},{f},{big_h}")
                        .expect("string write cannot fail");
                    rows += 1;
                }
            }
        }
    }
    if let Some(path) = &args.emit {
        write_atomic(path, csv.as_bytes())?;
    }
    print_manifest(
        "value",
        serde_json::json!({
            "panel": args.panel.display().to_string(),
            "payoff": args.payoff, "N": args.n_steps,
            "x1": args.x1, "x2": args.x2, "t": args.t,
        }),
        &[],
        &[&args.emit],
        serde_json::json!({"rows": rows, "clamp_events": ctx.clamp_events()}),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_minimax(args: MinimaxArgs) -> Result<ExitCode, CoreError> {
    let cfg = GameConfig::from_json_str(&read_file(&args.config)?)?;
    let bracket = game::exact_value(&cfg, args.fgrid)?;
    let result = serde_json::json!({
        "lower": bracket.lower,
        "upper": bracket.upper,
        "epsilon": cfg.epsilon(),
        "steps": cfg.steps(),
    });
    if let Some(path) = &args.emit {
        write_atomic(path, result.to_string().as_bytes())?;
    }
    print_manifest(
        "minimax",
        serde_json::json!({
            "config": args.config.display().to_string(),
            "fgrid": args.fgrid,
        }),
        &[],
        &[&args.emit],
        result,
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, CoreError> {
    let mut cfg = GameConfig::from_json_str(&read_file(&args.config)?)?;
    if let Some(n) = args.n_steps {
        cfg = GameConfig::new(
            cfg.panel.clone(),
            cfg.payoff.clone(),
            n,
            cfg.start_x,
            cfg.start_t,
            cfg.start_m,
        )?;
    }
    let investor = parse_investor(&args.investor)?;
    let (market, seed_override) = parse_market(&args.market)?;
    let seed = seed_override.unwrap_or(args.seed);
    let transcript = match market {
        Some(market) => game::simulate(&cfg, &investor, market, seed)?,
        None => game::worst_case_transcript(&cfg, &investor, seed)?,
    };
    let json = transcript.to_json_value();
    if let Some(path) = &args.emit {
        write_atomic(path, json.to_string().as_bytes())?;
    }
    print_manifest(
        "simulate",
        serde_json::json!({
            "config": args.config.display().to_string(),
            "investor": args.investor, "market": args.market,
            "N": cfg.n_steps, "seed": seed,
        }),
        &[seed],
        &[&args.emit],
        serde_json::json!({
            "final_payoff": transcript.final_payoff,
            "final_x": transcript.final_x,
            "steps": transcript.steps.len(),
        }),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_rate(args: RateArgs) -> Result<ExitCode, CoreError> {
    let cfg = GameConfig::from_json_str(&read_file(&args.config)?)?;
    let side = if args.side == "market" {
        Side::Market
    } else {
        Side::Investor
    };
    let adversary = if args.adversary == "bstar" {
        Adversary::BStar
    } else {
        Adversary::Exhaustive
    };
    let table = game::rate_experiment(
        &cfg,
        &args.n_list,
        adversary,
        side,
        args.lookahead,
        args.fgrid,
        args.seed,
    )?;
    let mut csv = String::from("N,epsilon,gap,gap_over_eps,slope\n");
    for row in &table.rows {
        writeln!(
            csv,
            "{},{},{},{},{}",
            row.n_steps, row.epsilon, row.gap, row.gap_over_eps, table.slope
        )
        .expect("string write cannot fail");
    }
    if let Some(path) = &args.emit {
        write_atomic(path, csv.as_bytes())?;
    }
    print_manifest(
        "rate",
        serde_json::json!({
            "config": args.config.display().to_string(),
            "side": args.side, "adversary": args.adversary,
            "N_list": args.n_list, "lookahead": args.lookahead,
            "fgrid": args.fgrid, "seed": args.seed,
        }),
        &[args.seed],
        &[&args.emit],
        serde_json::json!({"slope": table.slope, "r_squared": table.r_squared}),
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest() -> Result<ExitCode, CoreError> {
    let results = selftest::run();
    for r in &results {
        println!(
            "{} {} — {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.details
        );
    }
    if selftest::all_passed(&results) {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_VERIFICATION))
    }
}
