//! Command-line harness for operator scaling: instance generation, solver
//! runs with trace export, multi-method comparisons with SVG plots, and
//! instance diagnostics.
//!
//! Exit codes: 0 converged (or report written), 2 iteration budget
//! exhausted, 3 cone violation, 4 input/configuration error.

mod plot;

use clap::{Args, Parser, Subcommand};
use opscale::*;
use rayon::prelude::*;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "opscale",
    about = "Operator scaling solvers and benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance and write it as JSON.
    Gen(GenArgs),
    /// Run one solver on an instance and write CSV + JSON traces.
    Run(RunArgs),
    /// Run several methods with repetitions; write aggregates and SVG plots.
    Compare(CompareArgs),
    /// Diagnose an instance: assumptions, positivity, contraction factors.
    Check(CheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[command(subcommand)]
    kind: GenKind,
}

#[derive(Subcommand)]
enum GenKind {
    /// Gaussian frame embedded as rank-one Kraus operators (m = k).
    Frame {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rotated Hilbert-matrix operators (ill-conditioned, m = n).
    Hilbert {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dense i.i.d. Gaussian operators.
    Gaussian {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    instance: PathBuf,
    /// osi | ffpi | pd_or | cholesky_or | geodesic_or
    #[arg(long)]
    method: String,
    /// "fixed:W", a bare number, or "adaptive[:p=P[,l=L]]".
    #[arg(long, default_value = "adaptive:p=10")]
    omega: String,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    /// Record a balanced iterate snapshot every N iterations (0 = never).
    #[arg(long, default_value_t = 0)]
    snapshot_every: usize,
    /// Retry a cone-violating step once with the overshoot halved.
    #[arg(long, default_value_t = false)]
    safeguard: bool,
    /// Output directory for trace.csv and trace.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated method list.
    #[arg(long, default_value = "osi,pd_or,cholesky_or,geodesic_or")]
    methods: String,
    #[arg(long, default_value = "adaptive:p=10")]
    omega: String,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    /// Repetitions per method for the timing statistics.
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = false)]
    safeguard: bool,
    /// Output directory for report.json, aggregate.csv and the SVG plots.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Sample count for the positivity and contraction estimates.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Optional path for the JSON report (also printed to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_omega(text: &str) -> Result<OmegaPolicy> {
    let text = text.trim();
    if let Ok(w) = f64::from_str(text) {
        return Ok(OmegaPolicy::Fixed(w));
    }
    if let Some(rest) = text.strip_prefix("fixed:") {
        let w = f64::from_str(rest.trim())
            .map_err(|_| Error::InvalidConfig(format!("bad fixed omega '{rest}'")))?;
        return Ok(OmegaPolicy::Fixed(w));
    }
    if text == "adaptive" {
        return Ok(OmegaPolicy::adaptive(10));
    }
    if let Some(rest) = text.strip_prefix("adaptive:") {
        let mut activation = 10usize;
        let mut lag = 2usize;
        for part in rest.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("bad omega option '{part}'")))?;
            let value: usize = value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad omega option '{part}'")))?;
            match key.trim() {
                "p" => activation = value,
                "l" => lag = value,
                other => {
                    return Err(Error::InvalidConfig(format!("unknown omega key '{other}'")))
                }
            }
        }
        return Ok(OmegaPolicy::Adaptive { activation, lag });
    }
    Err(Error::InvalidConfig(format!("cannot parse omega policy '{text}'")))
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode> {
    let (instance, out) = match args.kind {
        GenKind::Frame { n, k, seed, out } => {
            (frame_to_kraus(&gen_frame_instance(n, k, seed)?)?, out)
        }
        GenKind::Hilbert { n, k, seed, out } => (gen_hilbert_instance(n, k, seed)?, out),
        GenKind::Gaussian { m, n, k, seed, out } => (gen_gaussian_instance(m, n, k, seed)?, out),
    };
    instance.save(&out)?;
    eprintln!(
        "wrote {} ({}x{} operators, k={})",
        out.display(),
        instance.m(),
        instance.n(),
        instance.k()
    );
    Ok(ExitCode::SUCCESS)
}

fn status_code(status: TerminalStatus) -> ExitCode {
    match status {
        TerminalStatus::Converged => ExitCode::SUCCESS,
        TerminalStatus::MaxIter => ExitCode::from(2),
        TerminalStatus::ConeViolation => ExitCode::from(3),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let instance = KrausCollection::load(&args.instance)?;
    let cfg = SolverConfig::new(args.method.parse()?)
        .with_omega(parse_omega(&args.omega)?)
        .with_max_iter(args.max_iter)
        .with_tol(args.tol)
        .with_snapshots(args.snapshot_every)
        .with_safeguard(args.safeguard);
    cfg.validate()?;
    let outcome = solve(&instance, &cfg)?;
    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("trace.csv"), outcome.trace.to_csv())?;
    std::fs::write(args.out.join("trace.json"), outcome.trace.to_json(&cfg))?;
    eprintln!(
        "{}: {} after {} iterations, err {:.3e}",
        cfg.method,
        outcome.trace.status.as_str(),
        outcome.trace.iterations(),
        outcome.trace.final_err()
    );
    Ok(status_code(outcome.trace.status))
}

#[derive(Serialize)]
struct MethodReport {
    method: String,
    status: String,
    omega_hat: Option<AdaptiveOmega>,
    t: Vec<usize>,
    err_mean: Vec<f64>,
    err_std: Vec<f64>,
    wall_mean_nanos: Vec<f64>,
    wall_std_nanos: Vec<f64>,
}

#[derive(Serialize)]
struct ComparisonReport {
    instance: String,
    label: Option<String>,
    max_iter: usize,
    tol: f64,
    omega: String,
    repetitions: usize,
    methods: Vec<MethodReport>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(method: Method, traces: &[IterationTrace]) -> MethodReport {
    let len = traces.iter().map(|t| t.records.len()).min().unwrap_or(0);
    let mut t = Vec::with_capacity(len);
    let mut err_mean = Vec::with_capacity(len);
    let mut err_std = Vec::with_capacity(len);
    let mut wall_mean = Vec::with_capacity(len);
    let mut wall_std = Vec::with_capacity(len);
    for i in 0..len {
        t.push(traces[0].records[i].t);
        let errs: Vec<f64> = traces.iter().map(|tr| tr.records[i].err).collect();
        let walls: Vec<f64> = traces
            .iter()
            .map(|tr| tr.records[i].wall_nanos as f64)
            .collect();
        let (em, es) = mean_std(&errs);
        let (wm, ws) = mean_std(&walls);
        err_mean.push(em);
        err_std.push(es);
        wall_mean.push(wm);
        wall_std.push(ws);
    }
    MethodReport {
        method: method.to_string(),
        status: traces[0].status.as_str().to_string(),
        omega_hat: traces[0].omega_hat,
        t,
        err_mean,
        err_std,
        wall_mean_nanos: wall_mean,
        wall_std_nanos: wall_std,
    }
}

fn cmd_compare(args: CompareArgs) -> Result<ExitCode> {
    let instance = KrausCollection::load(&args.instance)?;
    let omega = parse_omega(&args.omega)?;
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    if methods.is_empty() || args.reps == 0 {
        return Err(Error::InvalidConfig("need at least one method and one repetition".into()));
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Ok(threads) = std::env::var("OPSCALE_THREADS") {
        let threads: usize = threads
            .parse()
            .map_err(|_| Error::InvalidConfig("OPSCALE_THREADS must be an integer".into()))?;
        pool = pool.num_threads(threads.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let jobs: Vec<(Method, usize)> = methods
        .iter()
        .flat_map(|&m| (0..args.reps).map(move |r| (m, r)))
        .collect();
    let results: Vec<(Method, usize, Result<IterationTrace>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(method, rep)| {
                let cfg = SolverConfig::new(method)
                    .with_omega(omega)
                    .with_max_iter(args.max_iter)
                    .with_tol(args.tol)
                    .with_safeguard(args.safeguard);
                (method, rep, solve(&instance, &cfg).map(|o| o.trace))
            })
            .collect()
    });

    let mut reports = Vec::new();
    for &method in &methods {
        let mut traces = Vec::new();
        let mut failure: Option<String> = None;
        for (m, _, res) in &results {
            if *m == method {
                match res {
                    Ok(trace) => traces.push(trace.clone()),
                    Err(e) => failure = Some(e.to_string()),
                }
            }
        }
        if let Some(msg) = failure {
            reports.push(MethodReport {
                method: method.to_string(),
                status: format!("error: {msg}"),
                omega_hat: None,
                t: vec![],
                err_mean: vec![],
                err_std: vec![],
                wall_mean_nanos: vec![],
                wall_std_nanos: vec![],
            });
        } else {
            reports.push(aggregate(method, &traces));
        }
    }

    std::fs::create_dir_all(&args.out)?;
    let report = ComparisonReport {
        instance: args.instance.display().to_string(),
        label: instance.label().map(|s| s.to_string()),
        max_iter: args.max_iter,
        tol: args.tol,
        omega: args.omega.clone(),
        repetitions: args.reps,
        methods: reports,
    };
    std::fs::write(
        args.out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serialization"),
    )?;

    let mut csv = String::from("method,t,err_mean,err_std,wall_mean_nanos,wall_std_nanos\n");
    for m in &report.methods {
        for i in 0..m.t.len() {
            csv.push_str(&format!(
                "{},{},{:e},{:e},{},{}\n",
                m.method, m.t[i], m.err_mean[i], m.err_std[i], m.wall_mean_nanos[i], m.wall_std_nanos[i]
            ));
        }
    }
    std::fs::write(args.out.join("aggregate.csv"), csv)?;

    let iter_series: Vec<plot::Series> = report
        .methods
        .iter()
        .filter(|m| !m.t.is_empty())
        .map(|m| plot::Series {
            name: m.method.clone(),
            xs: m.t.iter().map(|&t| t as f64).collect(),
            ys: m.err_mean.clone(),
            x_band: None,
            y_band: Some(m.err_std.clone()),
        })
        .collect();
    std::fs::write(
        args.out.join("err_vs_iterations.svg"),
        plot::render(
            report.label.as_deref().unwrap_or("operator scaling"),
            "iteration",
            &iter_series,
        ),
    )?;

    let time_series: Vec<plot::Series> = report
        .methods
        .iter()
        .filter(|m| !m.t.is_empty())
        .map(|m| plot::Series {
            name: m.method.clone(),
            xs: m.wall_mean_nanos.iter().map(|&w| w * 1e-9).collect(),
            ys: m.err_mean.clone(),
            x_band: Some(m.wall_std_nanos.iter().map(|&w| w * 1e-9).collect()),
            y_band: None,
        })
        .collect();
    std::fs::write(
        args.out.join("err_vs_time.svg"),
        plot::render(
            report.label.as_deref().unwrap_or("operator scaling"),
            "wall time (s)",
            &time_series,
        ),
    )?;

    for m in &report.methods {
        eprintln!(
            "{}: {} ({} recorded iterations)",
            m.method,
            m.status,
            m.t.len().saturating_sub(1)
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct CheckReport {
    instance: String,
    label: Option<String>,
    m: usize,
    n: usize,
    k: usize,
    assumption1: bool,
    trials: usize,
    positivity_improving: String,
    counterexample: Option<Vec<f64>>,
    lambda1_hat: f64,
    lambda2_hat: f64,
    safe_omega_upper_bound: f64,
}

fn cmd_check(args: CheckArgs) -> Result<ExitCode> {
    // loading validates the Gram-sum assumption eagerly
    let instance = KrausCollection::load(&args.instance)?;
    let verdict = check_positivity_improving(&instance, args.trials, args.seed);
    let (l1, l2) = sample_contraction(&instance, args.trials.max(1), args.seed)?;
    let report = CheckReport {
        instance: args.instance.display().to_string(),
        label: instance.label().map(|s| s.to_string()),
        m: instance.m(),
        n: instance.n(),
        k: instance.k(),
        assumption1: true,
        trials: args.trials,
        positivity_improving: match &verdict {
            PositivityCheck::LikelyYes => "likely_yes".into(),
            PositivityCheck::Counterexample(_) => "counterexample".into(),
        },
        counterexample: match &verdict {
            PositivityCheck::LikelyYes => None,
            PositivityCheck::Counterexample(v) => Some(v.iter().copied().collect()),
        },
        lambda1_hat: l1,
        lambda2_hat: l2,
        safe_omega_upper_bound: 2.0 / (1.0 + (l1 * l2).sqrt()),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serialization");
    println!("{text}");
    if let Some(path) = &args.out {
        std::fs::write(path, &text)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Check(args) => cmd_check(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits with 2 by default; keep 2 reserved for max_iter
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(4)
        }
    }
}
