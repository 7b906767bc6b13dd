use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use saddletd::domains::{Domain, DomainName};
use saddletd::harness::{self, ExperimentConfig, SummaryRow, Task};
use saddletd::learners::{Algorithm, LearnerConfig, Schedule};
use saddletd::objectives::{norm_bounds, MetricMode};

/// Gradient-TD saddle-point experiments on exact finite MDPs.
#[derive(Parser)]
#[command(name = "saddletd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write curves, summary, bounds and config.
    Run(RunArgs),
    /// Rerun an experiment for each value of one parameter.
    Sweep(SweepArgs),
    /// Print the bound constants of a domain.
    CheckBounds(BoundsArgs),
    /// Summarize the curves of a finished run.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct Overrides {
    /// JSON experiment configuration; unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    domain: Option<DomainName>,
    /// Replaces the configured learners; repeatable.
    #[arg(long = "algo")]
    algos: Vec<Algorithm>,
    /// Constant step size for learners given with --algo.
    #[arg(long, default_value_t = 0.005)]
    alpha: f64,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cadence: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    PolicyEval,
    Control,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    Alpha,
    Lambda,
    RhoBias,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, value_enum)]
    param: SweepParam,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    values: Vec<f64>,
    /// Each value writes into its own subdirectory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    domain: DomainName,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Step-size constant.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

fn build_config(o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(d) = o.domain {
        cfg.domain = d;
    }
    if !o.algos.is_empty() {
        cfg.learners = o.algos.iter().map(|&a| LearnerConfig::constant(a, o.alpha)).collect();
    }
    if let Some(n) = o.steps {
        cfg.n_steps = n;
        if o.cadence.is_none() && n % cfg.cadence != 0 {
            cfg.cadence = (1..=n.min(100)).rev().find(|c| n % c == 0).unwrap_or(1);
        }
    }
    if let Some(r) = o.runs {
        cfg.n_runs = r;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(c) = o.cadence {
        cfg.cadence = c;
    }
    if o.threads.is_some() {
        cfg.threads = o.threads;
    }
    match o.task {
        Some(TaskArg::PolicyEval) => cfg.task = Task::PolicyEval,
        Some(TaskArg::Control) => cfg.task = Task::Control,
        None => {}
    }
    Ok(cfg)
}

fn print_summary(summary: &[SummaryRow]) {
    println!("{:<22} {:<11} {:>13} {:>13} {:>5}", "algorithm", "metric", "mean", "std", "rank");
    for s in summary {
        println!("{:<22} {:<11} {:>13.5e} {:>13.5e} {:>5}", s.algorithm, s.metric, s.mean, s.std, s.rank);
    }
}

/// Runs one configuration; returns the number of audit violations.
fn run_once(cfg: &ExperimentConfig) -> Result<usize> {
    let (exp, summary) = harness::execute(cfg)?;
    print_summary(&summary);
    let diverged: Vec<String> = exp
        .results
        .iter()
        .filter(|r| r.diverged())
        .map(|r| format!("{}#{}@{}", r.algorithm, r.run_id, r.diverged_at.unwrap_or(0)))
        .collect();
    if !diverged.is_empty() {
        println!("diverged: {}", diverged.join(" "));
    }
    let checks: usize = exp.results.iter().map(|r| r.audit_checks).sum();
    let violations: usize = exp.results.iter().map(|r| r.audit_violations).sum();
    if checks > 0 {
        println!("residual audit: {violations} violations in {checks} checks");
    }
    if let Some(dir) = &cfg.out_dir {
        println!("artifacts written to {}", dir.display());
    }
    Ok(violations)
}

fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = build_config(&args.overrides)?;
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    let violations = run_once(&cfg)?;
    Ok(if violations > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode> {
    let base = build_config(&args.overrides)?;
    let mut violations = 0;
    for &v in &args.values {
        let mut cfg = base.clone();
        let tag = match args.param {
            SweepParam::Alpha => {
                for l in &mut cfg.learners {
                    l.schedule = Schedule::Constant { alpha: v };
                }
                "alpha"
            }
            SweepParam::Lambda => {
                for l in &mut cfg.learners {
                    l.lambda = v;
                }
                "lambda"
            }
            SweepParam::RhoBias => {
                cfg.rho_bias = v;
                "rho_bias"
            }
        };
        let dir = args.out.as_ref().or(base.out_dir.as_ref()).map(|d| d.join(format!("{tag}={v}")));
        cfg.out_dir = dir;
        println!("== {tag} = {v}");
        violations += run_once(&cfg)?;
    }
    Ok(if violations > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn cmd_check_bounds(args: BoundsArgs) -> Result<ExitCode> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let dom = Domain::build(args.domain, &Default::default())?;
    let p = &dom.problem;
    let ex = p.exact_quantities()?;
    println!("domain {}  d {}  γ {}  ρ_max {:.4}  L {:.4}", args.domain, p.dim(), p.gamma(), ex.rho_max, p.features.bound());
    println!(
        "‖A‖ {:.5e}  ‖b‖ {:.5e}  ν {:.5e}  τ_C {:.5e}  ξ_max {:.5e}  LMI λ_min {:.5e}",
        ex.norm_a,
        ex.norm_b,
        ex.nu,
        ex.tau_c,
        ex.xi_max,
        p.lmi_min_eigenvalue()
    );
    println!(
        "{:<10} {:>10} {:>10} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11}",
        "metric", "R_θ", "R_y", "‖A‖ bound", "‖b‖ bound", "σ₁", "σ₂", "M*", "α", "Err bound"
    );
    for metric in [MetricMode::Identity, MetricMode::Covariance] {
        let radii = harness::default_radii(&dom.theta0, &ex, metric);
        let row = harness::bound_row(&dom, &ex, metric_name(metric), metric, radii, args.n, args.c, args.delta)?;
        println!(
            "{:<10} {:>10.4} {:>10.4} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e}",
            metric_name(metric),
            row.r_theta,
            row.r_y,
            row.norm_a_bound,
            row.norm_b_bound,
            row.sigma1,
            row.sigma2,
            row.m_star,
            row.alpha,
            row.err_bound
        );
    }
    let (bound_a, bound_b) = norm_bounds(p.features.bound(), p.dim(), p.gamma(), ex.rho_max, p.mdp.r_max());
    let dominated = ex.norm_a <= bound_a && ex.norm_b <= bound_b;
    println!("norms dominated by their bounds: {dominated}");
    Ok(if dominated { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn metric_name(m: MetricMode) -> &'static str {
    match m {
        MetricMode::Identity => "identity",
        MetricMode::Covariance => "covariance",
    }
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let curves = args.input.join("curves.csv");
    let results = harness::read_curves(&curves)?;
    let fraction = read_window_fraction(&args.input).unwrap_or(0.1);
    let points = results.first().map_or(1, |r| r.steps.len());
    let summary = harness::summarize_steady_state(&results, harness::window_len(points, fraction));
    println!("{} runs from {}", results.len(), curves.display());
    print_summary(&summary);
    Ok(ExitCode::SUCCESS)
}

fn read_window_fraction(dir: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(dir.join("config.json")).ok()?;
    ExperimentConfig::from_json(&text).ok().map(|c| c.window_fraction)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::CheckBounds(a) => cmd_check_bounds(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
