//! `qwsearch`: quantum-walk search under random telegraph noise.
//!
//! Subcommands write CSV (or a plain-text table for `rtn-check`) to `--out`
//! or stdout. Every CSV starts with `# key = value` lines recording the
//! configuration and seed, so identical commands give identical data rows.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 I/O failure.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qwsearch::analysis::{ensemble_metrics, run_point, GraphSpec, GridSpec, SweepSpec};
use qwsearch::ensemble::{default_trajectories, noiseless_trace, run_ensemble};
use qwsearch::graph::Graph;
use qwsearch::output::{sweep_csv, theory_csv, trace_csv, Header};
use qwsearch::propagator::Backend;
use qwsearch::rtn::{autocorrelation_with_error, poisson_chi_square, sample_trajectories};
use qwsearch::theory::theory_row;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

/// Smallest trajectory count `rtn-check` accepts.
const RTN_MIN_TRAJECTORIES: usize = 1000;

#[derive(Debug, Parser)]
#[command(
    name = "qwsearch",
    version,
    about = "Quantum-walk spatial search under random telegraph noise"
)]
struct Cli {
    /// Worker threads for the trajectory loop (default: available parallelism).
    #[arg(long, env = "QWSEARCH_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ensemble-averaged target probability over time for one (N, μ, ν).
    Trace(RunArgs),
    /// Success metrics over every combination of the listed N, μ and ν.
    Sweep(RunArgs),
    /// Reduced star-graph spectrum and two-level predictions.
    Theory(TheoryArgs),
    /// Statistical self-check of the telegraph-noise sampler.
    RtnCheck(RtnArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Exact,
    Stepped,
    Auto,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// complete, star-central, star-external, or a path to an edge-list file.
    #[arg(long, default_value = "complete")]
    graph: String,
    /// Graph order(s), comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    n: Vec<usize>,
    /// Switching rate(s) μ, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    mu: Vec<f64>,
    /// Noise strength(s) ν in [0, 1], comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    nu: Vec<f64>,
    /// Hopping rate; defaults to the graph's noiseless optimum.
    #[arg(long)]
    gamma: Option<f64>,
    /// Trajectories per point (default: 10000 for μ ≥ 1, 20000 otherwise).
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long, default_value_t = 1024)]
    grid_samples: usize,
    /// Horizon in units of the noiseless optimal time π√N/2.
    #[arg(long, default_value_t = 4.0)]
    horizon_factor: f64,
    #[arg(long, value_enum, default_value_t = BackendKind::Auto)]
    backend: BackendKind,
    /// Step for the stepped backend (default: min(1/(20μ), horizon/10⁴)).
    #[arg(long)]
    step: Option<f64>,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    /// Star orders, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
    n: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RtnArgs {
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Length of each sampled trajectory.
    #[arg(long, default_value_t = 2.0)]
    horizon: f64,
    #[arg(long, default_value_t = 100_000)]
    trajectories: usize,
    /// Lags τ at which the autocorrelation is checked, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.5,1")]
    lags: Vec<f64>,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) | Failure::Io(m) => m,
        }
    }
}

impl From<qwsearch::Error> for Failure {
    fn from(e: qwsearch::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| config(format!("cannot size worker pool: {e}")))?;
    }
    match cli.command {
        Command::Trace(args) => cmd_trace(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Theory(args) => cmd_theory(&args),
        Command::RtnCheck(args) => cmd_rtn_check(&args),
    }
}

fn write_output(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Io(format!("stdout: {e}"))),
    }
}

fn graph_spec(arg: &str) -> Result<GraphSpec, Failure> {
    Ok(match arg {
        "complete" => GraphSpec::Complete,
        "star-central" => GraphSpec::StarCentral,
        "star-external" => GraphSpec::StarExternal,
        path => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{path}: {e}")))?;
            let graph = Graph::parse_edge_list(&text).map_err(|e| config(format!("{path}: {e}")))?;
            GraphSpec::EdgeList(graph)
        }
    })
}

fn check_backend(args: &RunArgs) -> Result<(), Failure> {
    match (args.backend, args.step) {
        (BackendKind::Stepped, Some(step)) if !(step.is_finite() && step > 0.0) => {
            Err(config(format!("--step must be positive, got {step}")))
        }
        (BackendKind::Stepped, _) | (_, None) => Ok(()),
        (_, Some(_)) => Err(config("--step only applies to --backend stepped")),
    }
}

/// Backend for one point; the default step depends on μ and the horizon.
fn point_backend(args: &RunArgs, rate: f64, horizon: f64) -> Backend {
    match args.backend {
        BackendKind::Exact => Backend::Exact,
        BackendKind::Auto => Backend::Auto,
        BackendKind::Stepped => Backend::Stepped {
            step: args.step.unwrap_or_else(|| (1.0 / (20.0 * rate)).min(horizon / 1e4)),
        },
    }
}

fn sweep_spec(args: &RunArgs) -> Result<SweepSpec, Failure> {
    for (flag, empty) in [
        ("--n", args.n.is_empty()),
        ("--mu", args.mu.is_empty()),
        ("--nu", args.nu.is_empty()),
    ] {
        if empty {
            return Err(config(format!("{flag} needs at least one value")));
        }
    }
    if let Some(&mu) = args.mu.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
        return Err(config(format!("--mu must be finite and ≥ 0, got {mu}")));
    }
    if !(args.horizon_factor.is_finite() && args.horizon_factor > 0.0) {
        return Err(config(format!(
            "--horizon-factor must be positive, got {}",
            args.horizon_factor
        )));
    }
    if args.grid_samples < 2 {
        return Err(config("--grid-samples must be at least 2"));
    }
    if args.trajectories == Some(0) {
        return Err(config("--trajectories must be at least 1"));
    }
    check_backend(args)?;
    let graph = graph_spec(&args.graph)?;
    let orders = match &graph {
        // The edge list fixes N; `--n` is ignored unless it contradicts it.
        GraphSpec::EdgeList(g) if args.n == [10] => vec![g.order()],
        _ => args.n.clone(),
    };
    Ok(SweepSpec {
        graph,
        orders,
        rates: args.mu.clone(),
        strengths: args.nu.clone(),
        gamma: args.gamma,
        trajectories: args.trajectories,
        seed: args.seed,
        grid: GridSpec {
            horizon_factor: args.horizon_factor,
            samples: args.grid_samples,
        },
        backend: Backend::Auto,
    })
}

fn run_header(command: &str, args: &RunArgs, spec: &SweepSpec) -> Header {
    let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    let mut header = Header::new()
        .with("command", command)
        .with("graph", &args.graph)
        .with(
            "n",
            spec.orders.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        )
        .with("mu", list(&spec.rates))
        .with("nu", list(&spec.strengths))
        .with("gamma", args.gamma.map_or("default".to_owned(), |g| g.to_string()))
        .with(
            "trajectories",
            args.trajectories.map_or("default".to_owned(), |m| m.to_string()),
        )
        .with("seed", args.seed)
        .with("grid_samples", args.grid_samples)
        .with("horizon_factor", args.horizon_factor)
        .with("backend", format!("{:?}", args.backend).to_lowercase());
    if let Some(step) = args.step {
        header.push("step", step);
    }
    header
}

fn cmd_trace(args: &RunArgs) -> Result<(), Failure> {
    let mut spec = sweep_spec(args)?;
    let points = spec.points();
    let [point] = points[..] else {
        return Err(config(format!(
            "trace needs a single (N, μ, ν) point, got {}; use `sweep` for several",
            points.len()
        )));
    };
    spec.backend = point_backend(args, point.rate, spec.grid.grid(point.n)?.horizon());
    let cfg = spec.ensemble_config(point)?;
    let ens = run_ensemble(&cfg)?;
    let reference = noiseless_trace(&cfg.graph, &cfg.params, &cfg.grid)?;
    let metrics = ensemble_metrics(&ens)?;

    let mut header = run_header("trace", args, &spec);
    header.push("gamma_used", cfg.params.gamma());
    header.push("trajectories_used", ens.trajectories);
    header.push("backend_used", format!("{:?}", ens.backend));
    header.push("p_succ", metrics.p_succ);
    header.push("t_max", metrics.t_max);
    for w in &ens.warnings {
        eprintln!("warning: {w}");
        header.push("warning", w);
    }
    write_output(args.out.as_ref(), &trace_csv(&header, &ens.trace, Some(&reference.p)))
}

fn cmd_sweep(args: &RunArgs) -> Result<(), Failure> {
    let spec = sweep_spec(args)?;
    let mut rows = Vec::new();
    for point in spec.points() {
        let backend = point_backend(args, point.rate, spec.grid.grid(point.n)?.horizon());
        rows.push(run_point(
            &SweepSpec {
                backend,
                ..spec.clone()
            },
            point,
        )?);
    }
    let mut header = run_header("sweep", args, &spec);
    if args.trajectories.is_none() {
        let defaults: Vec<String> = spec
            .rates
            .iter()
            .map(|&mu| format!("{mu}:{}", default_trajectories(mu)))
            .collect();
        header.push("trajectories_by_mu", defaults.join(","));
    }
    write_output(args.out.as_ref(), &sweep_csv(&header, &rows))
}

fn cmd_theory(args: &TheoryArgs) -> Result<(), Failure> {
    if args.n.is_empty() {
        return Err(config("--n needs at least one value"));
    }
    let rows = args.n.iter().map(|&n| theory_row(n)).collect::<Result<Vec<_>, _>>()?;
    let ns: Vec<String> = args.n.iter().map(usize::to_string).collect();
    let header = Header::new()
        .with("command", "theory")
        .with("graph", "star-external")
        .with("n", ns.join(","));
    write_output(args.out.as_ref(), &theory_csv(&header, &rows))
}

fn cmd_rtn_check(args: &RtnArgs) -> Result<(), Failure> {
    if args.trajectories < RTN_MIN_TRAJECTORIES {
        return Err(config(format!(
            "--trajectories must be at least {RTN_MIN_TRAJECTORIES}, got {}",
            args.trajectories
        )));
    }
    if let Some(&lag) = args.lags.iter().find(|&&l| !(0.0..args.horizon).contains(&l)) {
        return Err(config(format!("lag {lag} outside [0, horizon)")));
    }
    let sample = sample_trajectories(args.mu, args.horizon, args.trajectories, args.seed)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# rtn-check mu = {} horizon = {} trajectories = {} seed = {}",
        args.mu, args.horizon, args.trajectories, args.seed
    );

    let counts: Vec<usize> = sample.iter().map(|s| s.switch_times().len()).collect();
    let mean_count = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let expected = args.mu * args.horizon;
    let _ = writeln!(out, "switch count: mean {mean_count:.5}, expected {expected:.5}");
    if expected > 0.0 {
        let chi = poisson_chi_square(&counts, expected)?;
        let _ = writeln!(
            out,
            "poisson chi-square: statistic {:.3}, dof {}, p-value {:.4}",
            chi.statistic, chi.degrees_of_freedom, chi.p_value
        );
    } else {
        let _ = writeln!(out, "poisson chi-square: not applicable (no switches expected)");
    }

    // Probe early enough that every lag fits inside the horizon.
    let largest_lag = args.lags.iter().copied().fold(0.0, f64::max);
    let probe = (args.horizon - largest_lag) / 2.0;
    let _ = writeln!(
        out,
        "{:>8} {:>10} {:>10} {:>10} {:>8}",
        "tau", "estimate", "expected", "stderr", "z"
    );
    for &lag in &args.lags {
        let est = autocorrelation_with_error(&sample, lag, probe)?;
        let target = (-2.0 * args.mu * lag).exp();
        let residual = est.mean - target;
        let z = if est.stderr > 0.0 { residual / est.stderr } else { 0.0 };
        let _ = writeln!(
            out,
            "{lag:>8} {:>10.5} {target:>10.5} {:>10.2e} {z:>8.2}",
            est.mean, est.stderr
        );
    }
    write_output(args.out.as_ref(), &out)
}
