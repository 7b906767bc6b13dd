//! Incremental learners: TD(0), GTD/GTD2 (projected, Polyak-averaged), TDC,
//! the mirror-prox variants, trace-based GQ updates and the Greedy-GQ(λ)
//! control loop.
//!
//! Every saddle learner reads `(θ_t, y_t)` for both of its updates; the
//! Polyak accumulators weight the pre-step iterate by its step size, so
//! `θ̄_n = Σ_{t<n} α_t θ_t / Σ_{t<n} α_t`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::mdp::{self, FiniteMdp, MdpError, Policy, Sample};
use crate::objectives::MetricMode;

/// Norm above which an iterate is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("dimension mismatch: learner has d = {expected}, sample has d = {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error("the theoretical step size must be resolved against exact quantities first")]
    UnresolvedSchedule,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Td0,
    Gtd,
    Gtd2,
    Tdc,
    GtdMp,
    Gtd2Mp,
    /// GQ-MP-LEARN: mirror-prox with eligibility traces.
    GqLambda,
    /// TD(λ) with traces, the TD variant of GQ-learning.
    GqTd,
    /// TDC with traces.
    GqTdc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::Td0,
        Algorithm::Gtd,
        Algorithm::Gtd2,
        Algorithm::Tdc,
        Algorithm::GtdMp,
        Algorithm::Gtd2Mp,
        Algorithm::GqLambda,
        Algorithm::GqTd,
        Algorithm::GqTdc,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Td0 => "td0",
            Algorithm::Gtd => "gtd",
            Algorithm::Gtd2 => "gtd2",
            Algorithm::Tdc => "tdc",
            Algorithm::GtdMp => "gtd_mp",
            Algorithm::Gtd2Mp => "gtd2_mp",
            Algorithm::GqLambda => "gq_lambda",
            Algorithm::GqTd => "gq_td",
            Algorithm::GqTdc => "gq_tdc",
        }
    }

    /// `M` of the objective the algorithm descends.
    pub fn default_metric(self) -> MetricMode {
        match self {
            Algorithm::Gtd | Algorithm::GtdMp => MetricMode::Identity,
            _ => MetricMode::Covariance,
        }
    }

    pub fn is_saddle(self) -> bool {
        matches!(
            self,
            Algorithm::Gtd | Algorithm::Gtd2 | Algorithm::GtdMp | Algorithm::Gtd2Mp | Algorithm::GqLambda
        )
    }

    pub fn uses_traces(self) -> bool {
        matches!(self, Algorithm::GqLambda | Algorithm::GqTd | Algorithm::GqTdc)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Algorithm {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| LearnerError::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

/// Step-size schedule `α_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant { alpha: f64 },
    /// `α = 2c / (M_* √(5n))`; resolved by the harness from exact quantities.
    Theoretical {
        #[serde(default = "one")]
        c: f64,
    },
    /// `α_t = α₀ / (1 + t)^{0.5 + ε}`.
    RobbinsMonro { alpha0: f64, epsilon: f64 },
}

fn one() -> f64 {
    1.0
}

impl Schedule {
    pub fn alpha(&self, t: usize) -> Result<f64, LearnerError> {
        match *self {
            Schedule::Constant { alpha } => Ok(alpha),
            Schedule::Theoretical { .. } => Err(LearnerError::UnresolvedSchedule),
            Schedule::RobbinsMonro { alpha0, epsilon } => Ok(alpha0 / (1.0 + t as f64).powf(0.5 + epsilon)),
        }
    }

    fn validate(&self) -> Result<(), LearnerError> {
        let ok = match *self {
            Schedule::Constant { alpha } => alpha > 0.0 && alpha.is_finite(),
            Schedule::Theoretical { c } => c > 0.0 && c.is_finite(),
            Schedule::RobbinsMonro { alpha0, epsilon } => alpha0 > 0.0 && (0.0..=0.5).contains(&epsilon),
        };
        if ok {
            Ok(())
        } else {
            Err(LearnerError::InvalidConfig(format!("bad schedule {self:?}")))
        }
    }
}

/// Learner hyperparameters. Radii of `None` mean no projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    /// Overrides the algorithm's default `M`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricMode>,
    pub schedule: Schedule,
    /// `β = beta_ratio · α` for TDC.
    #[serde(default = "default_beta_ratio")]
    pub beta_ratio: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_y: Option<f64>,
    /// Per-learner seed override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_beta_ratio() -> f64 {
    4.0
}

impl LearnerConfig {
    pub fn new(algorithm: Algorithm, schedule: Schedule) -> Self {
        Self {
            algorithm,
            metric: None,
            schedule,
            beta_ratio: default_beta_ratio(),
            lambda: 0.0,
            r_theta: None,
            r_y: None,
            seed: None,
        }
    }

    pub fn constant(algorithm: Algorithm, alpha: f64) -> Self {
        Self::new(algorithm, Schedule::Constant { alpha })
    }

    pub fn with_radii(mut self, r_theta: f64, r_y: f64) -> Self {
        self.r_theta = Some(r_theta);
        self.r_y = Some(r_y);
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_metric(mut self, metric: MetricMode) -> Self {
        self.metric = Some(metric);
        self
    }

    pub fn metric_mode(&self) -> MetricMode {
        self.metric.unwrap_or(self.algorithm.default_metric())
    }

    pub fn radius_theta(&self) -> f64 {
        self.r_theta.unwrap_or(f64::INFINITY)
    }

    pub fn radius_y(&self) -> f64 {
        self.r_y.unwrap_or(f64::INFINITY)
    }

    /// Display label, e.g. `gtd2` or `gtd2_mp`.
    pub fn label(&self) -> String {
        match self.metric {
            Some(m) if m != self.algorithm.default_metric() => format!("{}[{m:?}]", self.algorithm).to_lowercase(),
            _ => self.algorithm.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        self.schedule.validate()?;
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(LearnerError::InvalidConfig(format!("λ = {} outside [0, 1)", self.lambda)));
        }
        if self.algorithm == Algorithm::Tdc || self.algorithm == Algorithm::GqTdc {
            if !(self.beta_ratio >= 1.0) {
                return Err(LearnerError::InvalidConfig("TDC needs β ≥ α".into()));
            }
        }
        for r in [self.r_theta, self.r_y].into_iter().flatten() {
            if !(r > 0.0) {
                return Err(LearnerError::InvalidConfig(format!("radius {r} must be positive")));
            }
        }
        Ok(())
    }

    /// Replaces a theoretical schedule by the given constant step size.
    pub fn resolve(&self, theoretical_alpha: f64) -> LearnerConfig {
        let mut out = self.clone();
        if let Schedule::Theoretical { .. } = self.schedule {
            out.schedule = Schedule::Constant { alpha: theoretical_alpha };
        }
        out
    }
}

/// Primal-dual iterate with its step-size-weighted running sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleIterate {
    pub theta: DVector<f64>,
    pub y: DVector<f64>,
    pub theta_sum: DVector<f64>,
    pub y_sum: DVector<f64>,
    pub weight_sum: f64,
    pub t: usize,
}

impl SaddleIterate {
    pub fn new(theta: DVector<f64>, y: DVector<f64>) -> Self {
        let d = theta.len();
        Self { theta, y, theta_sum: DVector::zeros(d), y_sum: DVector::zeros(d), weight_sum: 0.0, t: 0 }
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(DVector::zeros(d), DVector::zeros(d))
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Adds `α·(θ_t, y_t)` to the running sums and advances `t`.
    fn record(&mut self, alpha: f64) {
        self.theta_sum.axpy(alpha, &self.theta, 1.0);
        self.y_sum.axpy(alpha, &self.y, 1.0);
        self.weight_sum += alpha;
        self.t += 1;
    }

    /// `θ̄`; the current iterate before any step.
    pub fn theta_bar(&self) -> DVector<f64> {
        if self.weight_sum > 0.0 {
            &self.theta_sum / self.weight_sum
        } else {
            self.theta.clone()
        }
    }

    pub fn y_bar(&self) -> DVector<f64> {
        if self.weight_sum > 0.0 {
            &self.y_sum / self.weight_sum
        } else {
            self.y.clone()
        }
    }

    fn check(&self, sample: &Sample) -> Result<(), LearnerError> {
        if sample.dim() != self.dim() || sample.phi_next.len() != self.dim() {
            return Err(LearnerError::DimensionMismatch { expected: self.dim(), got: sample.dim() });
        }
        Ok(())
    }

    pub fn checkpoint_header(d: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for prefix in ["theta", "y", "theta_bar"] {
            h.extend((0..d).map(|i| format!("{prefix}_{i}")));
        }
        h
    }

    pub fn checkpoint_row(&self) -> Vec<String> {
        let mut row = vec![self.t.to_string()];
        let bar = self.theta_bar();
        for v in [&self.theta, &self.y, &bar] {
            row.extend(v.iter().map(|x| format!("{x:e}")));
        }
        row
    }

    /// Writes checkpoint rows `(t, θ…, y…, θ̄…)` with a header.
    pub fn write_checkpoints<W: Write>(checkpoints: &[SaddleIterate], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if let Some(first) = checkpoints.first() {
            w.write_record(Self::checkpoint_header(first.dim()))?;
        }
        for c in checkpoints {
            w.write_record(c.checkpoint_row())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Eligibility trace `e_t = γλρ_{t-1} e_{t-1} + φ_t`, with `e_0 = 0`.
///
/// The weight carried into the decay is the previous transition's `ρ`; the
/// current one multiplies `δ_t e_t` in the update.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub e: DVector<f64>,
    pub prev_rho: f64,
}

impl TraceState {
    pub fn new(d: usize) -> Self {
        Self { e: DVector::zeros(d), prev_rho: 1.0 }
    }

    pub fn reset(&mut self) {
        self.e.fill(0.0);
        self.prev_rho = 1.0;
    }
}

pub fn trace_update(tr: &mut TraceState, sample: &Sample, gamma: f64, lambda: f64) {
    let decay = gamma * lambda * tr.prev_rho;
    tr.e *= decay;
    tr.e += &sample.phi;
    tr.prev_rho = sample.rho;
}

/// Euclidean projection onto the ball of the given radius.
pub fn project_ball(v: &mut DVector<f64>, radius: f64) {
    if radius.is_finite() {
        let n = v.norm();
        if n > radius {
            *v *= radius / n;
        }
    }
}

/// Per-step constants shared by the update rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub metric: MetricMode,
    pub r_theta: f64,
    pub r_y: f64,
}

impl StepParams {
    pub fn new(alpha: f64, gamma: f64, metric: MetricMode) -> Self {
        Self {
            alpha,
            beta: 4.0 * alpha,
            gamma,
            lambda: 0.0,
            metric,
            r_theta: f64::INFINITY,
            r_y: f64::INFINITY,
        }
    }
}

/// `M̂ y` for the sample: `y` or `φ(φᵀy)`.
fn metric_times(metric: MetricMode, phi: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    match metric {
        MetricMode::Identity => y.clone(),
        MetricMode::Covariance => phi * phi.dot(y),
    }
}

/// One projected GTD/GTD2 step:
/// `y ← Π(y + α(b̂ - Âθ - M̂y))`, `θ ← Π(θ + αÂᵀy)`, both from `(θ_t, y_t)`.
pub fn gtd_family_step(it: &mut SaddleIterate, sample: &Sample, p: &StepParams) -> Result<(), LearnerError> {
    it.check(sample)?;
    it.record(p.alpha);
    let delta = sample.td_error(&it.theta, p.gamma);
    let phi_y = sample.phi.dot(&it.y);
    let m_y = metric_times(p.metric, &sample.phi, &it.y);
    let dy = (&sample.phi * (sample.rho * delta) - m_y) * p.alpha;
    it.theta.axpy(p.alpha * sample.rho * phi_y, &sample.delta_phi(p.gamma), 1.0);
    it.y += dy;
    project_ball(&mut it.theta, p.r_theta);
    project_ball(&mut it.y, p.r_y);
    Ok(())
}

/// One mirror-prox step on the sample: extrapolate `(θ^m, y^m)` from
/// `(θ_t, y_t)`, re-evaluate `δ` at `θ^m`, and correct from `(θ_t, y_t)`.
/// Projections act on the corrected point.
pub fn mirror_prox_step(it: &mut SaddleIterate, sample: &Sample, p: &StepParams) -> Result<(), LearnerError> {
    it.check(sample)?;
    let e = sample.phi.clone();
    extragradient(it, sample, &e, p);
    Ok(())
}

/// Shared body of mirror-prox and GQ-MP-LEARN, where `e` is `φ` or the trace.
fn extragradient(it: &mut SaddleIterate, sample: &Sample, e: &DVector<f64>, p: &StepParams) {
    it.record(p.alpha);
    let dphi = sample.delta_phi(p.gamma);
    let rho = sample.rho;
    let delta = sample.reward - it.theta.dot(&dphi);
    let y_m = &it.y + (e * (rho * delta) - metric_times(p.metric, &sample.phi, &it.y)) * p.alpha;
    let theta_m = &it.theta + &dphi * (p.alpha * rho * e.dot(&it.y));
    let delta_m = sample.reward - theta_m.dot(&dphi);
    let y_new = &it.y + (e * (rho * delta_m) - metric_times(p.metric, &sample.phi, &y_m)) * p.alpha;
    it.theta.axpy(p.alpha * rho * e.dot(&y_m), &dphi, 1.0);
    it.y = y_new;
    project_ball(&mut it.theta, p.r_theta);
    project_ball(&mut it.y, p.r_y);
}

/// Importance-weighted TD(0): `θ ← θ + αρδφ`.
pub fn td0_step(theta: &mut DVector<f64>, sample: &Sample, alpha: f64, gamma: f64) {
    let delta = sample.td_error(theta, gamma);
    theta.axpy(alpha * sample.rho * delta, &sample.phi, 1.0);
}

/// TDC: `θ ← θ + αρδφ - αγρφ'(φᵀy)`, `y ← y + β(ρδ - φᵀy)φ`.
pub fn tdc_step(it: &mut SaddleIterate, sample: &Sample, p: &StepParams) -> Result<(), LearnerError> {
    it.check(sample)?;
    it.record(p.alpha);
    let delta = sample.td_error(&it.theta, p.gamma);
    let phi_y = sample.phi.dot(&it.y);
    let rho = sample.rho;
    it.theta.axpy(p.alpha * rho * delta, &sample.phi, 1.0);
    it.theta.axpy(-p.alpha * p.gamma * rho * phi_y, &sample.phi_next, 1.0);
    it.y.axpy(p.beta * (rho * delta - phi_y), &sample.phi, 1.0);
    Ok(())
}

/// GQ-MP-LEARN: advances the trace with the sample, then a mirror-prox step
/// with `ρeδ` in place of `ρφδ` and `ρΔφ(eᵀy)` in place of `ρΔφ(φᵀy)`.
pub fn gq_mp_learn_step(
    it: &mut SaddleIterate,
    tr: &mut TraceState,
    sample: &Sample,
    p: &StepParams,
) -> Result<(), LearnerError> {
    it.check(sample)?;
    trace_update(tr, sample, p.gamma, p.lambda);
    let e = tr.e.clone();
    extragradient(it, sample, &e, p);
    Ok(())
}

/// TD(λ) with the trace: `θ ← θ + αρδe`.
pub fn gq_td_step(it: &mut SaddleIterate, tr: &mut TraceState, sample: &Sample, p: &StepParams) -> Result<(), LearnerError> {
    it.check(sample)?;
    trace_update(tr, sample, p.gamma, p.lambda);
    it.record(p.alpha);
    let delta = sample.td_error(&it.theta, p.gamma);
    it.theta.axpy(p.alpha * sample.rho * delta, &tr.e, 1.0);
    Ok(())
}

/// TDC with traces: `θ ← θ + α(ρδe - γ(1-λ)ρ(eᵀy)φ')`, `y ← y + β(ρδe - (φᵀy)φ)`.
pub fn gq_tdc_step(it: &mut SaddleIterate, tr: &mut TraceState, sample: &Sample, p: &StepParams) -> Result<(), LearnerError> {
    it.check(sample)?;
    trace_update(tr, sample, p.gamma, p.lambda);
    it.record(p.alpha);
    let delta = sample.td_error(&it.theta, p.gamma);
    let rho = sample.rho;
    let e_y = tr.e.dot(&it.y);
    let phi_y = sample.phi.dot(&it.y);
    it.theta.axpy(p.alpha * rho * delta, &tr.e, 1.0);
    it.theta.axpy(-p.alpha * p.gamma * (1.0 - p.lambda) * rho * e_y, &sample.phi_next, 1.0);
    it.y.axpy(p.beta * rho * delta, &tr.e, 1.0);
    it.y.axpy(-p.beta * phi_y, &sample.phi, 1.0);
    Ok(())
}

/// A configured learner: iterate, optional trace and divergence flag.
#[derive(Debug, Clone)]
pub struct Learner {
    pub config: LearnerConfig,
    pub iterate: SaddleIterate,
    pub trace: TraceState,
    gamma: f64,
    diverged: bool,
}

impl Learner {
    pub fn new(config: LearnerConfig, gamma: f64, theta0: DVector<f64>) -> Result<Self, LearnerError> {
        config.validate()?;
        if let Schedule::Theoretical { .. } = config.schedule {
            return Err(LearnerError::UnresolvedSchedule);
        }
        let d = theta0.len();
        Ok(Self {
            config,
            iterate: SaddleIterate::new(theta0, DVector::zeros(d)),
            trace: TraceState::new(d),
            gamma,
            diverged: false,
        })
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.iterate.theta
    }

    pub fn params(&self) -> Result<StepParams, LearnerError> {
        let alpha = self.config.schedule.alpha(self.iterate.t)?;
        Ok(StepParams {
            alpha,
            beta: self.config.beta_ratio * alpha,
            gamma: self.gamma,
            lambda: self.config.lambda,
            metric: self.config.metric_mode(),
            r_theta: self.config.radius_theta(),
            r_y: self.config.radius_y(),
        })
    }

    /// Starts a new episode: the trace returns to zero.
    pub fn reset_trace(&mut self) {
        self.trace.reset();
    }

    /// Applies one update. After divergence the learner is frozen and the
    /// call is a no-op.
    pub fn step(&mut self, sample: &Sample) -> Result<(), LearnerError> {
        if self.diverged {
            return Ok(());
        }
        let p = self.params()?;
        let it = &mut self.iterate;
        match self.config.algorithm {
            Algorithm::Td0 => {
                it.check(sample)?;
                it.record(p.alpha);
                td0_step(&mut it.theta, sample, p.alpha, p.gamma);
            }
            Algorithm::Gtd | Algorithm::Gtd2 => gtd_family_step(it, sample, &p)?,
            Algorithm::GtdMp | Algorithm::Gtd2Mp => mirror_prox_step(it, sample, &p)?,
            Algorithm::Tdc => tdc_step(it, sample, &p)?,
            Algorithm::GqLambda => gq_mp_learn_step(it, &mut self.trace, sample, &p)?,
            Algorithm::GqTd => gq_td_step(it, &mut self.trace, sample, &p)?,
            Algorithm::GqTdc => gq_tdc_step(it, &mut self.trace, sample, &p)?,
        }
        let size = it.theta.amax().max(it.y.amax());
        if !(size < DIVERGENCE_THRESHOLD) {
            self.diverged = true;
        }
        Ok(())
    }
}

/// State-action control problem for Greedy-GQ. Feature rows are indexed
/// `s * n_actions + a`; terminal states restart the episode at `start_state`.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub mdp: FiniteMdp,
    pub behavior: Policy,
    pub features: FeatureMatrix,
    pub start_state: usize,
    pub terminal: Vec<bool>,
}

impl ControlProblem {
    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn sa_features(&self, s: usize, a: usize) -> DVector<f64> {
        self.features.row(s * self.mdp.n_actions() + a)
    }

    fn q_value(&self, theta: &DVector<f64>, s: usize, a: usize) -> f64 {
        self.features.as_matrix().row(s * self.mdp.n_actions() + a).transpose().dot(theta)
    }

    /// `argmax_a θᵀφ(s, a)` over available actions, lowest index on ties.
    pub fn greedy_action(&self, theta: &DVector<f64>, s: usize) -> usize {
        let mut best = (usize::MAX, f64::NEG_INFINITY);
        for a in self.mdp.available_actions(s) {
            let q = self.q_value(theta, s, a);
            if best.0 == usize::MAX || q > best.1 {
                best = (a, q);
            }
        }
        best.0
    }

    /// Greedy action at `s` and the importance weight of the behavior's
    /// `taken` action: `1/π_b(a|s)` if it is greedy, otherwise 0.
    pub fn greedy_action_and_rho(&self, theta: &DVector<f64>, s: usize, taken: usize) -> Result<(usize, f64), MdpError> {
        let pb = self.behavior.prob(s, taken);
        if pb <= 0.0 {
            return Err(MdpError::BehaviorZero { state: s, action: taken });
        }
        let greedy = self.greedy_action(theta, s);
        Ok((greedy, if taken == greedy { 1.0 / pb } else { 0.0 }))
    }

    /// Deterministic greedy policy over the whole state space.
    pub fn greedy_policy(&self, theta: &DVector<f64>) -> Policy {
        let actions: Vec<usize> = (0..self.mdp.n_states()).map(|s| self.greedy_action(theta, s)).collect();
        Policy::deterministic(self.mdp.n_actions(), &actions).expect("greedy actions are in range")
    }

    /// Samples one behavior transition from `s` and featurizes it for the
    /// greedy target of `θ`. Returns the sample and the successor state.
    pub fn transition_sample(&self, theta: &DVector<f64>, s: usize, rng: &mut ChaCha8Rng) -> Result<(Sample, usize), MdpError> {
        let a = self.behavior.sample_action(s, rng);
        let next = sample_successor(&self.mdp, s, a, rng);
        let (_, rho) = self.greedy_action_and_rho(theta, s, a)?;
        let phi_next = if self.terminal[next] {
            DVector::zeros(self.dim())
        } else {
            self.sa_features(next, self.greedy_action(theta, next))
        };
        let mut smp = Sample::new(self.sa_features(s, a), phi_next, self.mdp.reward(s, a), rho);
        smp.state = Some(s);
        smp.action = Some(a);
        smp.next_state = Some(next);
        Ok((smp, next))
    }

    /// Mean squared Bellman optimality error
    /// `Σ_s ξ(s) Σ_a π_b(a|s) (r + γ E max_a' Q(s', a') - Q(s, a))²`.
    pub fn msbe(&self, theta: &DVector<f64>, xi: &DVector<f64>) -> f64 {
        let n_a = self.mdp.n_actions();
        let q = self.features.as_matrix() * theta;
        let v: Vec<f64> = (0..self.mdp.n_states())
            .map(|s| {
                if self.terminal[s] {
                    0.0
                } else {
                    self.mdp.available_actions(s).map(|a| q[s * n_a + a]).fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect();
        let gamma = self.mdp.gamma();
        let mut total = 0.0;
        for s in 0..self.mdp.n_states() {
            if xi[s] == 0.0 {
                continue;
            }
            for a in 0..n_a {
                let pb = self.behavior.prob(s, a);
                if pb == 0.0 {
                    continue;
                }
                let backup: f64 = self.mdp.successors(s, a).iter().map(|&(j, p)| p * v[j]).sum();
                let err = self.mdp.reward(s, a) + gamma * backup - q[s * n_a + a];
                total += xi[s] * pb * err * err;
            }
        }
        total
    }

    /// Total undiscounted reward of `policy` over `horizon` steps from the
    /// start state, stopping early at a terminal state.
    pub fn rollout(&self, policy: &Policy, horizon: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mut s = self.start_state;
        let mut total = 0.0;
        for _ in 0..horizon {
            if self.terminal[s] {
                break;
            }
            let a = policy.sample_action(s, rng);
            total += self.mdp.reward(s, a);
            s = sample_successor(&self.mdp, s, a, rng);
        }
        total
    }
}

fn sample_successor<R: Rng + ?Sized>(mdp: &FiniteMdp, s: usize, a: usize, rng: &mut R) -> usize {
    let succ = mdp.successors(s, a);
    if succ.len() == 1 {
        return succ[0].0;
    }
    let probs: Vec<f64> = succ.iter().map(|&(_, p)| p).collect();
    succ[mdp::sample_categorical(&probs, rng)].0
}

/// Per-episode summary of [`run_greedy_gq_episode`].
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub steps: usize,
    pub total_reward: f64,
    pub terminated: bool,
}

/// One Greedy-GQ(λ) episode from the start state: the trace starts at zero,
/// each behavior transition is weighted for the current greedy policy and fed
/// to the learner. Stops at a terminal state or after `max_steps`.
pub fn run_greedy_gq_episode(
    problem: &ControlProblem,
    learner: &mut Learner,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeLog, LearnerError> {
    learner.reset_trace();
    let mut s = problem.start_state;
    let mut log = EpisodeLog { steps: 0, total_reward: 0.0, terminated: false };
    while log.steps < max_steps {
        if problem.terminal[s] {
            log.terminated = true;
            break;
        }
        let (smp, next) = problem.transition_sample(learner.theta(), s, rng)?;
        log.total_reward += smp.reward;
        learner.step(&smp)?;
        log.steps += 1;
        s = next;
    }
    if problem.terminal[s] {
        log.terminated = true;
    }
    Ok(log)
}
