//! Seeded multi-run experiments: policy evaluation against exact
//! quantities, Greedy-GQ control with greedy-policy rollouts, steady-state
//! summaries and CSV artifacts.
//!
//! Every run draws its samples from the substream `(seed, run_id)`, so all
//! learners in one experiment see the same transitions, and runs are
//! independent of the number of worker threads.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domains::{Domain, DomainError, DomainName, DomainOverrides};
use crate::learners::{Learner, LearnerConfig, LearnerError, Schedule, DIVERGENCE_THRESHOLD};
use crate::linalg;
use crate::mdp::{self, MdpError, SamplingMode, StreamPurpose};
use crate::objectives::{self, BoundInputs, ExactQuantities, MetricMode, ObjectiveError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("io error on {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid experiment configuration: {0}")]
    Config(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    PolicyEval,
    Control,
}

/// Which iterate the per-step metrics are evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportIterate {
    #[default]
    Last,
    Averaged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub domain: DomainName,
    pub domain_config: DomainOverrides,
    pub task: Task,
    pub learners: Vec<LearnerConfig>,
    pub n_steps: usize,
    pub n_runs: usize,
    pub seed: u64,
    pub sampling: SamplingMode,
    /// Metrics are logged at step 0 and every `cadence` steps.
    pub cadence: usize,
    /// Bias `ε` added to every importance weight.
    pub rho_bias: f64,
    pub report_iterate: ReportIterate,
    /// Fraction of the logged points forming the steady-state window.
    pub window_fraction: f64,
    /// Confidence parameter of the high-probability bound in `bounds.csv`.
    pub delta: f64,
    /// Greedy-policy rollout length in control runs.
    pub eval_horizon: usize,
    /// Rollouts per evaluation point in control runs.
    pub eval_seeds: usize,
    /// Worker threads; `None` uses every core, `Some(1)` runs serially.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: DomainName::Baird,
            domain_config: DomainOverrides::default(),
            task: Task::PolicyEval,
            learners: vec![LearnerConfig::constant(crate::learners::Algorithm::Gtd2, 0.005)],
            n_steps: 8000,
            n_runs: 20,
            seed: 0,
            sampling: SamplingMode::Iid,
            cadence: 100,
            rho_bias: 0.0,
            report_iterate: ReportIterate::Last,
            window_fraction: 0.1,
            delta: 0.05,
            eval_horizon: 10_000,
            eval_seeds: 10,
            threads: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_steps == 0 || self.n_runs == 0 {
            return Err(HarnessError::Config("n_steps and n_runs must be at least 1".into()));
        }
        if self.cadence == 0 || self.n_steps % self.cadence != 0 {
            return Err(HarnessError::Config(format!(
                "cadence {} must divide n_steps {}",
                self.cadence, self.n_steps
            )));
        }
        if self.learners.is_empty() {
            return Err(HarnessError::Config("no learners configured".into()));
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(HarnessError::Config("window_fraction must lie in (0, 1]".into()));
        }
        if !(self.rho_bias >= 0.0) {
            return Err(HarnessError::Config("rho_bias must be nonnegative".into()));
        }
        for l in &self.learners {
            l.validate()?;
            if self.task == Task::PolicyEval && l.lambda > 0.0 && self.sampling == SamplingMode::Iid {
                return Err(HarnessError::Config("eligibility traces need trajectory sampling".into()));
            }
        }
        if self.task == Task::Control && (self.eval_seeds == 0 || self.eval_horizon == 0) {
            return Err(HarnessError::Config("control runs need eval_seeds and eval_horizon ≥ 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn n_points(&self) -> usize {
        self.n_steps / self.cadence + 1
    }
}

/// One learner's run: metric series at the logged steps and the final
/// averaged pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub algorithm: String,
    pub learner_index: usize,
    pub run_id: usize,
    pub seed: u64,
    pub alpha: f64,
    pub steps: Vec<usize>,
    pub mspbe: Vec<f64>,
    pub msbe: Vec<f64>,
    pub neu: Vec<f64>,
    pub err: Vec<f64>,
    pub theta_norm: Vec<f64>,
    /// Mean greedy-policy return at each logged step (control only).
    pub returns: Vec<f64>,
    pub theta_bar: DVector<f64>,
    pub y_bar: DVector<f64>,
    pub diverged_at: Option<usize>,
    /// Logged points at which the residual audit inequality failed.
    pub audit_violations: usize,
    /// Logged points at which it was checked.
    pub audit_checks: usize,
}

impl RunResult {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }
}

/// Radii that make the residual audit inequality a consequence of the saddle
/// structure: `R_θ` covers `θ₀` and the minimum-norm solution of `Aθ = b`
/// twice over, and `R_y ≥ (‖A‖R_θ + ‖b‖)/τ` contains `(b - Aθ)/τ` for every
/// feasible `θ`.
pub fn default_radii(theta0: &DVector<f64>, exact: &ExactQuantities, metric: MetricMode) -> (f64, f64) {
    let fixed = linalg::solve_or_lstsq(&exact.a, &exact.b);
    let r_theta = theta0.norm().max(2.0 * fixed.norm()).max(1.0);
    let r_y = (exact.norm_a * r_theta + exact.norm_b) / exact.tau(metric);
    (r_theta, r_y)
}

/// Bound-related constants of one learner configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub domain: String,
    pub algorithm: String,
    pub metric: MetricMode,
    pub r_theta: f64,
    pub r_y: f64,
    pub norm_a: f64,
    pub norm_a_bound: f64,
    pub norm_b: f64,
    pub norm_b_bound: f64,
    pub nu: f64,
    pub tau: f64,
    pub xi_max: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub m_star: f64,
    pub alpha: f64,
    pub err_bound: f64,
    pub n: usize,
    pub delta: f64,
}

/// Computes the bound constants for radii `(r_theta, r_y)` (finite) and
/// horizon `n`.
pub fn bound_row(
    domain: &Domain,
    exact: &ExactQuantities,
    algorithm: &str,
    metric: MetricMode,
    (r_theta, r_y): (f64, f64),
    n: usize,
    c: f64,
    delta: f64,
) -> Result<BoundRow, HarnessError> {
    let p = &domain.problem;
    let inputs = BoundInputs::for_balls(p, exact, metric, r_theta, r_y);
    let (norm_a_bound, norm_b_bound) = objectives::norm_bounds(p.features.bound(), p.dim(), p.gamma(), exact.rho_max, p.mdp.r_max());
    let (m_star, alpha) = objectives::m_star_and_stepsize(&inputs, exact.norm_a, exact.norm_b, n, c)?;
    let err_bound = objectives::high_prob_bound(&inputs, n, delta)?;
    Ok(BoundRow {
        domain: domain.name.to_string(),
        algorithm: algorithm.to_string(),
        metric,
        r_theta,
        r_y,
        norm_a: exact.norm_a,
        norm_a_bound,
        norm_b: exact.norm_b,
        norm_b_bound,
        nu: exact.nu,
        tau: exact.tau(metric),
        xi_max: exact.xi_max,
        sigma1: inputs.sigma1,
        sigma2: inputs.sigma2,
        m_star,
        alpha,
        err_bound,
        n,
        delta,
    })
}

/// A learner configuration with its step size resolved and its bound row.
struct Prepared {
    config: LearnerConfig,
    alpha: f64,
    bounds: Option<BoundRow>,
}

fn prepare(cfg: &ExperimentConfig, domain: &Domain, exact: Option<&ExactQuantities>) -> Result<Vec<Prepared>, HarnessError> {
    cfg.learners
        .iter()
        .map(|l| {
            let finite = l.r_theta.is_some() && l.r_y.is_some();
            let theoretical_c = match l.schedule {
                Schedule::Theoretical { c } => Some(c),
                _ => None,
            };
            let bounds = match (exact, finite) {
                (Some(ex), true) => Some(bound_row(
                    domain,
                    ex,
                    &l.label(),
                    l.metric_mode(),
                    (l.radius_theta(), l.radius_y()),
                    cfg.n_steps,
                    theoretical_c.unwrap_or(1.0),
                    cfg.delta,
                )?),
                _ => None,
            };
            let config = match theoretical_c {
                Some(_) => {
                    let row = bounds.as_ref().ok_or_else(|| {
                        HarnessError::Config(format!(
                            "{}: the theoretical step size needs finite radii and a policy-evaluation task",
                            l.label()
                        ))
                    })?;
                    l.resolve(row.alpha)
                }
                None => l.clone(),
            };
            let alpha = config.schedule.alpha(0)?;
            Ok(Prepared { config, alpha, bounds })
        })
        .collect()
}

/// Runs every `(run, learner)` pair, in parallel when the `parallel` feature
/// is on, and returns results ordered by run then learner.
fn run_all<F>(cfg: &ExperimentConfig, n_learners: usize, job: F) -> Result<Vec<RunResult>, HarnessError>
where
    F: Fn(usize, usize) -> Result<RunResult, HarnessError> + Sync,
{
    let jobs: Vec<(usize, usize)> = (0..cfg.n_runs).flat_map(|r| (0..n_learners).map(move |l| (r, l))).collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || jobs.par_iter().map(|&(r, l)| job(r, l)).collect::<Result<Vec<_>, _>>();
        match cfg.threads {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| HarnessError::Config(e.to_string()))?
                .install(run),
            None => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(|&(r, l)| job(r, l)).collect()
    }
}

/// Result of a policy-evaluation experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub results: Vec<RunResult>,
    pub bounds: Vec<BoundRow>,
}

/// Policy-evaluation experiment on the configured domain.
pub fn run_policy_eval(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    cfg.validate()?;
    let domain = Domain::build(cfg.domain, &cfg.domain_config)?;
    run_policy_eval_on(cfg, &domain)
}

/// Policy-evaluation experiment on an already built domain.
pub fn run_policy_eval_on(cfg: &ExperimentConfig, domain: &Domain) -> Result<Experiment, HarnessError> {
    cfg.validate()?;
    let exact = domain.problem.exact_quantities()?;
    let prepared = prepare(cfg, domain, Some(&exact))?;
    let results = run_all(cfg, prepared.len(), |run_id, li| eval_run(cfg, domain, &exact, &prepared[li], li, run_id))?;
    Ok(Experiment { results, bounds: prepared.into_iter().filter_map(|p| p.bounds).collect() })
}

fn eval_run(
    cfg: &ExperimentConfig,
    domain: &Domain,
    exact: &ExactQuantities,
    prep: &Prepared,
    learner_index: usize,
    run_id: usize,
) -> Result<RunResult, HarnessError> {
    let p = &domain.problem;
    let seed = prep.config.seed.unwrap_or(cfg.seed);
    let mut learner = Learner::new(prep.config.clone(), p.gamma(), domain.theta0.clone())?;
    let setup = p.sampler().with_rho_bias(cfg.rho_bias);
    let mut source = setup.source(cfg.sampling, Some(&p.xi), domain.start_state, seed, run_id as u64)?;
    let mut out = empty_result(prep, learner_index, run_id, seed, cfg.n_points());
    let metric = prep.config.metric_mode();
    let (r_theta, r_y) = (prep.config.radius_theta(), prep.config.radius_y());
    let audit = cfg.sampling == SamplingMode::Iid
        && prep.config.algorithm.is_saddle()
        && r_theta.is_finite()
        && r_y.is_finite();
    let log = |learner: &Learner, step: usize, out: &mut RunResult| {
        let it = &learner.iterate;
        let theta = match cfg.report_iterate {
            ReportIterate::Last => it.theta.clone(),
            ReportIterate::Averaged => it.theta_bar(),
        };
        let (theta_bar, y_bar) = (it.theta_bar(), it.y_bar());
        let err = if r_theta.is_finite() && r_y.is_finite() {
            exact.saddle_error(&theta_bar, &y_bar, metric, r_theta, r_y)
        } else {
            f64::NAN
        };
        if audit {
            let (lhs, rhs) = exact.residual_audit_sides(&theta_bar, &y_bar, metric, r_theta, r_y);
            out.audit_checks += 1;
            if !(lhs <= rhs * (1.0 + 1e-9) + 1e-12) {
                out.audit_violations += 1;
            }
        }
        out.steps.push(step);
        out.mspbe.push(exact.mspbe(&theta));
        out.msbe.push(p.msbe(&theta));
        out.neu.push(exact.neu(&theta));
        out.err.push(err);
        out.theta_norm.push(theta.norm());
        let blown = !(out.mspbe.last().copied().unwrap_or(0.0) < DIVERGENCE_THRESHOLD);
        if out.diverged_at.is_none() && (learner.diverged() || blown) {
            out.diverged_at = Some(step);
        }
    };
    log(&learner, 0, &mut out);
    for step in 1..=cfg.n_steps {
        let smp = source.next_sample();
        learner.step(&smp)?;
        if step % cfg.cadence == 0 {
            log(&learner, step, &mut out);
        }
    }
    out.theta_bar = learner.iterate.theta_bar();
    out.y_bar = learner.iterate.y_bar();
    Ok(out)
}

fn empty_result(prep: &Prepared, learner_index: usize, run_id: usize, seed: u64, points: usize) -> RunResult {
    let series = || Vec::<f64>::with_capacity(points);
    RunResult {
        algorithm: prep.config.label(),
        learner_index,
        run_id,
        seed,
        alpha: prep.alpha,
        steps: Vec::with_capacity(points),
        mspbe: series(),
        msbe: series(),
        neu: series(),
        err: series(),
        theta_norm: series(),
        returns: series(),
        theta_bar: DVector::zeros(0),
        y_bar: DVector::zeros(0),
        diverged_at: None,
        audit_violations: 0,
        audit_checks: 0,
    }
}

/// Greedy-GQ control experiment: trains on behavior transitions, restarting
/// at the start state whenever a terminal state is reached, and every
/// `cadence` steps rolls out the greedy policy of the current `θ`.
pub fn run_control(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    cfg.validate()?;
    let domain = Domain::build(cfg.domain, &cfg.domain_config)?;
    run_control_on(cfg, &domain)
}

pub fn run_control_on(cfg: &ExperimentConfig, domain: &Domain) -> Result<Experiment, HarnessError> {
    cfg.validate()?;
    let cp = domain
        .control
        .as_ref()
        .ok_or_else(|| HarnessError::Config(format!("domain {} has no control problem", domain.name)))?;
    let xi = domain.control_xi.as_ref().expect("control domains carry a state weighting");
    let prepared = prepare(cfg, domain, None)?;
    let results = run_all(cfg, prepared.len(), |run_id, li| {
        let prep = &prepared[li];
            let seed = prep.config.seed.unwrap_or(cfg.seed);
        let mut learner = Learner::new(prep.config.clone(), cp.mdp.gamma(), DVector::zeros(cp.dim()))?;
        let mut rng = mdp::substream(seed, run_id as u64, StreamPurpose::Transitions);
        let mut out = empty_result(prep, li, run_id, seed, cfg.n_points());
        let log = |learner: &Learner, step: usize, out: &mut RunResult| {
            let theta = match cfg.report_iterate {
                ReportIterate::Last => learner.iterate.theta.clone(),
                ReportIterate::Averaged => learner.iterate.theta_bar(),
            };
            let msbe = cp.msbe(&theta, xi);
            out.steps.push(step);
            out.msbe.push(msbe);
            out.mspbe.push(f64::NAN);
            out.neu.push(f64::NAN);
            out.err.push(f64::NAN);
            out.theta_norm.push(theta.norm());
            out.returns.push(greedy_return(cp, &theta, cfg.eval_horizon, cfg.eval_seeds, seed));
            if out.diverged_at.is_none() && (learner.diverged() || !(msbe < DIVERGENCE_THRESHOLD)) {
                out.diverged_at = Some(step);
            }
        };
        log(&learner, 0, &mut out);
        let mut s = cp.start_state;
        learner.reset_trace();
        for step in 1..=cfg.n_steps {
            if cp.terminal[s] {
                s = cp.start_state;
                learner.reset_trace();
            }
            let (smp, next) = cp.transition_sample(learner.theta(), s, &mut rng)?;
            learner.step(&smp)?;
            s = next;
            if step % cfg.cadence == 0 {
                log(&learner, step, &mut out);
            }
        }
        out.theta_bar = learner.iterate.theta_bar();
        out.y_bar = learner.iterate.y_bar();
            Ok(out)
    })?;
    Ok(Experiment { results, bounds: Vec::new() })
}

/// Mean total reward of the greedy policy of `θ` over `seeds` rollouts. The
/// rollout streams depend only on `(seed, k)`, so every evaluation point and
/// every learner faces the same price paths.
pub fn greedy_return(cp: &crate::learners::ControlProblem, theta: &DVector<f64>, horizon: usize, seeds: usize, seed: u64) -> f64 {
    let policy = cp.greedy_policy(theta);
    policy_return(cp, &policy, horizon, seeds, seed)
}

pub fn policy_return(
    cp: &crate::learners::ControlProblem,
    policy: &mdp::Policy,
    horizon: usize,
    seeds: usize,
    seed: u64,
) -> f64 {
    let total: f64 = (0..seeds)
        .map(|k| {
            let mut rng = mdp::substream(seed, k as u64, StreamPurpose::Evaluation);
            cp.rollout(policy, horizon, &mut rng)
        })
        .sum();
    total / seeds as f64
}

pub fn run(cfg: &ExperimentConfig) -> Result<Experiment, HarnessError> {
    match cfg.task {
        Task::PolicyEval => run_policy_eval(cfg),
        Task::Control => run_control(cfg),
    }
}

/// Steady-state statistics of one metric for one learner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_runs: usize,
    /// Position among the learners for this metric, 1 = best.
    pub rank: usize,
}

/// Number of trailing logged points forming the window.
pub fn window_len(points: usize, fraction: f64) -> usize {
    ((points as f64 * fraction).ceil() as usize).clamp(1, points.max(1))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per learner and metric: the mean over runs of each run's mean over its
/// final `window` logged points, with the across-run standard deviation.
/// Learners are ranked per metric (lowest mean first, highest for `return`).
pub fn summarize_steady_state(results: &[RunResult], window: usize) -> Vec<SummaryRow> {
    let mut learners: Vec<(usize, String)> = Vec::new();
    for r in results {
        if !learners.iter().any(|(i, _)| *i == r.learner_index) {
            learners.push((r.learner_index, r.algorithm.clone()));
        }
    }
    learners.sort_by_key(|(i, _)| *i);
    let metrics: [(&str, fn(&RunResult) -> &Vec<f64>); 6] = [
        ("mspbe", |r| &r.mspbe),
        ("msbe", |r| &r.msbe),
        ("neu", |r| &r.neu),
        ("err", |r| &r.err),
        ("theta_norm", |r| &r.theta_norm),
        ("return", |r| &r.returns),
    ];
    let mut rows = Vec::new();
    for (name, get) in metrics {
        let mut block: Vec<SummaryRow> = Vec::new();
        for (li, label) in &learners {
            let per_run: Vec<f64> = results
                .iter()
                .filter(|r| r.learner_index == *li)
                .filter_map(|r| {
                    let s = get(r);
                    if s.is_empty() {
                        return None;
                    }
                    let w = window.clamp(1, s.len());
                    Some(s[s.len() - w..].iter().sum::<f64>() / w as f64)
                })
                .collect();
            if per_run.is_empty() || per_run.iter().all(|v| v.is_nan()) {
                continue;
            }
            let (mean, std) = mean_std(&per_run);
            block.push(SummaryRow { algorithm: label.clone(), metric: name.to_string(), mean, std, n_runs: per_run.len(), rank: 0 });
        }
        let mut order: Vec<usize> = (0..block.len()).collect();
        let higher_better = name == "return";
        order.sort_by(|&a, &b| {
            let (x, y) = (block[a].mean, block[b].mean);
            let ord = x.partial_cmp(&y).unwrap_or(std::cmp::Ordering::Equal);
            if higher_better { ord.reverse() } else { ord }
        });
        for (rank, &i) in order.iter().enumerate() {
            block[i].rank = rank + 1;
        }
        rows.extend(block);
    }
    rows
}

pub const CURVES_HEADER: [&str; 9] = ["algorithm", "run_id", "step", "mspbe", "msbe", "neu", "err", "theta_norm", "return"];

fn fmt_f(v: f64) -> String {
    format!("{v:e}")
}

/// Writes `curves.csv`, `summary.csv`, `bounds.csv` and `config.json` into
/// `out_dir`. Reruns with the same configuration produce identical bytes.
pub fn emit_artifacts(
    cfg: &ExperimentConfig,
    results: &[RunResult],
    summary: &[SummaryRow],
    bounds: &[BoundRow],
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let curves = out_dir.join("curves.csv");
    {
        let mut w = csv::Writer::from_path(&curves).map_err(|e| io_err(&curves, e))?;
        w.write_record(CURVES_HEADER).map_err(|e| io_err(&curves, e))?;
        for r in results {
            for i in 0..r.steps.len() {
                let ret = r.returns.get(i).copied().unwrap_or(f64::NAN);
                w.write_record([
                    r.algorithm.clone(),
                    r.run_id.to_string(),
                    r.steps[i].to_string(),
                    fmt_f(r.mspbe[i]),
                    fmt_f(r.msbe[i]),
                    fmt_f(r.neu[i]),
                    fmt_f(r.err[i]),
                    fmt_f(r.theta_norm[i]),
                    fmt_f(ret),
                ])
                .map_err(|e| io_err(&curves, e))?;
            }
        }
        w.flush().map_err(|e| io_err(&curves, e))?;
    }
    let summary_path = out_dir.join("summary.csv");
    {
        let mut w = csv::Writer::from_path(&summary_path).map_err(|e| io_err(&summary_path, e))?;
        w.write_record(["algorithm", "metric", "mean", "std", "n_runs", "rank"]).map_err(|e| io_err(&summary_path, e))?;
        for s in summary {
            w.write_record([
                s.algorithm.clone(),
                s.metric.clone(),
                fmt_f(s.mean),
                fmt_f(s.std),
                s.n_runs.to_string(),
                s.rank.to_string(),
            ])
            .map_err(|e| io_err(&summary_path, e))?;
        }
        w.flush().map_err(|e| io_err(&summary_path, e))?;
    }
    let bounds_path = out_dir.join("bounds.csv");
    {
        let mut w = csv::Writer::from_path(&bounds_path).map_err(|e| io_err(&bounds_path, e))?;
        w.write_record([
            "domain", "algorithm", "metric", "r_theta", "r_y", "norm_a", "norm_a_bound", "norm_b", "norm_b_bound", "nu", "tau",
            "xi_max", "sigma1", "sigma2", "m_star", "alpha", "err_bound", "n", "delta",
        ])
        .map_err(|e| io_err(&bounds_path, e))?;
        for b in bounds {
            let metric = match b.metric {
                MetricMode::Identity => "identity",
                MetricMode::Covariance => "covariance",
            };
            let mut rec = vec![b.domain.clone(), b.algorithm.clone(), metric.to_string()];
            rec.extend(
                [
                    b.r_theta, b.r_y, b.norm_a, b.norm_a_bound, b.norm_b, b.norm_b_bound, b.nu, b.tau, b.xi_max, b.sigma1,
                    b.sigma2, b.m_star, b.alpha, b.err_bound,
                ]
                .into_iter()
                .map(fmt_f),
            );
            rec.push(b.n.to_string());
            rec.push(fmt_f(b.delta));
            w.write_record(&rec).map_err(|e| io_err(&bounds_path, e))?;
        }
        w.flush().map_err(|e| io_err(&bounds_path, e))?;
    }
    let config_path = out_dir.join("config.json");
    fs::write(&config_path, cfg.to_json()).map_err(|e| io_err(&config_path, e))?;
    Ok(vec![curves, summary_path, bounds_path, config_path])
}

/// One row of `curves.csv`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CurveRow {
    pub algorithm: String,
    pub run_id: usize,
    pub step: usize,
    pub mspbe: f64,
    pub msbe: f64,
    pub neu: f64,
    pub err: f64,
    pub theta_norm: f64,
    #[serde(rename = "return")]
    pub ret: f64,
}

/// Rebuilds run results from `curves.csv` (series only).
pub fn read_curves(path: &Path) -> Result<Vec<RunResult>, HarnessError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out: Vec<RunResult> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for row in rdr.deserialize::<CurveRow>() {
        let row = row.map_err(|e| io_err(path, e))?;
        let li = match labels.iter().position(|l| *l == row.algorithm) {
            Some(i) => i,
            None => {
                labels.push(row.algorithm.clone());
                labels.len() - 1
            }
        };
        let idx = match out.iter().position(|r| r.learner_index == li && r.run_id == row.run_id) {
            Some(i) => i,
            None => {
                out.push(RunResult {
                    algorithm: row.algorithm.clone(),
                    learner_index: li,
                    run_id: row.run_id,
                    seed: 0,
                    alpha: f64::NAN,
                    steps: Vec::new(),
                    mspbe: Vec::new(),
                    msbe: Vec::new(),
                    neu: Vec::new(),
                    err: Vec::new(),
                    theta_norm: Vec::new(),
                    returns: Vec::new(),
                    theta_bar: DVector::zeros(0),
                    y_bar: DVector::zeros(0),
                    diverged_at: None,
                    audit_violations: 0,
                    audit_checks: 0,
                });
                out.len() - 1
            }
        };
        let r = &mut out[idx];
        r.steps.push(row.step);
        r.mspbe.push(row.mspbe);
        r.msbe.push(row.msbe);
        r.neu.push(row.neu);
        r.err.push(row.err);
        r.theta_norm.push(row.theta_norm);
        if !row.ret.is_nan() {
            r.returns.push(row.ret);
        }
    }
    Ok(out)
}

/// Runs the configured experiment, summarizes it and writes the artifacts
/// when an output directory is configured. Returns the experiment and its
/// summary.
pub fn execute(cfg: &ExperimentConfig) -> Result<(Experiment, Vec<SummaryRow>), HarnessError> {
    let exp = run(cfg)?;
    let window = window_len(cfg.n_points(), cfg.window_fraction);
    let summary = summarize_steady_state(&exp.results, window);
    if let Some(dir) = &cfg.out_dir {
        emit_artifacts(cfg, &exp.results, &summary, &exp.bounds, dir)?;
    }
    Ok((exp, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::Algorithm;

    fn series_result(li: usize, run: usize, values: Vec<f64>) -> RunResult {
        let n = values.len();
        RunResult {
            algorithm: format!("a{li}"),
            learner_index: li,
            run_id: run,
            seed: 0,
            alpha: 0.1,
            steps: (0..n).collect(),
            mspbe: values.clone(),
            msbe: values.clone(),
            neu: values.clone(),
            err: values.clone(),
            theta_norm: values,
            returns: Vec::new(),
            theta_bar: DVector::zeros(0),
            y_bar: DVector::zeros(0),
            diverged_at: None,
            audit_violations: 0,
            audit_checks: 0,
        }
    }

    #[test]
    fn summary_of_constant_series() {
        let results = vec![series_result(0, 0, vec![2.0; 10]), series_result(0, 1, vec![2.0; 10])];
        let rows = summarize_steady_state(&results, 3);
        let m = rows.iter().find(|r| r.metric == "mspbe").unwrap();
        assert_eq!((m.mean, m.std, m.n_runs), (2.0, 0.0, 2));
    }

    #[test]
    fn window_one_is_last_point_and_ranking() {
        let results = vec![
            series_result(0, 0, vec![5.0, 4.0, 3.0]),
            series_result(1, 0, vec![5.0, 1.0, 9.0]),
        ];
        let rows = summarize_steady_state(&results, 1);
        let a0 = rows.iter().find(|r| r.metric == "mspbe" && r.algorithm == "a0").unwrap();
        let a1 = rows.iter().find(|r| r.metric == "mspbe" && r.algorithm == "a1").unwrap();
        assert_eq!((a0.mean, a0.rank), (3.0, 1));
        assert_eq!((a1.mean, a1.rank), (9.0, 2));
        assert_eq!(window_len(81, 0.1), 9);
        assert_eq!(window_len(5, 0.01), 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig { n_steps: 100, cadence: 30, ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.cadence = 25;
        assert!(cfg.validate().is_ok());
        cfg.learners = vec![LearnerConfig::constant(Algorithm::GqLambda, 0.1).with_lambda(0.5)];
        assert!(cfg.validate().is_err());
        cfg.sampling = SamplingMode::Trajectory;
        assert!(cfg.validate().is_ok());
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let partial = ExperimentConfig::from_json(r#"{"domain": "chain50", "n_steps": 10, "cadence": 5}"#).unwrap();
        assert_eq!(partial.domain, DomainName::Chain50);
        assert_eq!(partial.n_runs, 20);
    }

    #[test]
    fn zero_step_metrics_at_theta0() {
        let cfg = ExperimentConfig { n_steps: 1, cadence: 1, n_runs: 1, ..Default::default() };
        let exp = run_policy_eval(&cfg).unwrap();
        let r = &exp.results[0];
        let dom = Domain::build(DomainName::Baird, &DomainOverrides::default()).unwrap();
        let ex = dom.problem.exact_quantities().unwrap();
        assert_eq!(r.mspbe[0], ex.mspbe(&dom.theta0));
        assert_eq!(r.steps, vec![0, 1]);
    }
}
