//! Finite MDPs, stationary policies, seeded transition sampling and the exact
//! solves (true values, stationary distributions) that back every oracle.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;

/// Tolerance on transition and policy row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance on sampling distributions supplied by callers.
pub const DISTRIBUTION_TOL: f64 = 1e-9;
/// Name and version of the generator behind every sample stream. Changing the
/// generator or the way substreams are derived must bump this tag.
pub const RNG_ALGORITHM: &str = "chacha8-stream/v1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("transition row (state {state}, action {action}) sums to {sum}")]
    TransitionRow { state: usize, action: usize, sum: f64 },
    #[error("successor state {0} out of range")]
    SuccessorOutOfRange(usize),
    #[error("discount {0} outside [0, 1)")]
    Discount(f64),
    #[error("policy row {state} sums to {sum} or has a negative entry")]
    PolicyRow { state: usize, sum: f64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("behavior policy gives zero probability to action {action} in state {state}")]
    BehaviorZero { state: usize, action: usize },
    #[error("distribution sums to {0}, expected 1")]
    InvalidDistribution(f64),
    #[error("power iteration did not converge within {0} iterations")]
    NotConverged(usize),
    #[error("the induced chain has no unique stationary distribution")]
    NoUniqueStationary,
    #[error("state {0} out of range")]
    OutOfRange(usize),
    #[error("sample count must be at least 1")]
    EmptyStream,
    #[error("malformed MDP file: {0}")]
    Parse(String),
}

/// Enumerable MDP. Transitions are stored as sparse successor lists, one per
/// state-action pair; the serialized form is the dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    n_states: usize,
    n_actions: usize,
    successors: Vec<Vec<(usize, f64)>>,
    reward: Vec<f64>,
    gamma: f64,
    available: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct MdpFile {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    available: Option<Vec<Vec<bool>>>,
}

impl FiniteMdp {
    /// Builds an MDP from a dense `P[s][a][s']` tensor and `R[s][a]`.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
    ) -> Result<Self, MdpError> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let mut successors = Vec::with_capacity(n_states * n_actions);
        for (s, row) in transition.iter().enumerate() {
            if row.len() != n_actions {
                return Err(MdpError::Shape(format!("state {s} has {} actions", row.len())));
            }
            for next in row {
                if next.len() != n_states {
                    return Err(MdpError::Shape(format!("state {s} successor row length {}", next.len())));
                }
                successors.push(
                    next.iter()
                        .enumerate()
                        .filter(|(_, &p)| p != 0.0)
                        .map(|(j, &p)| (j, p))
                        .collect(),
                );
            }
        }
        if reward.len() != n_states || reward.iter().any(|r| r.len() != n_actions) {
            return Err(MdpError::Shape("reward must be n_states x n_actions".into()));
        }
        let reward = reward.into_iter().flatten().collect();
        Self::from_sparse(n_states, n_actions, successors, reward, gamma)
    }

    /// Builds an MDP from successor lists indexed by `s * n_actions + a` and
    /// a flat reward table with the same indexing.
    pub fn from_sparse(
        n_states: usize,
        n_actions: usize,
        successors: Vec<Vec<(usize, f64)>>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 {
            return Err(MdpError::Shape("empty state or action set".into()));
        }
        if successors.len() != n_states * n_actions || reward.len() != n_states * n_actions {
            return Err(MdpError::Shape("tables must have n_states * n_actions rows".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::Discount(gamma));
        }
        for (idx, row) in successors.iter().enumerate() {
            let (state, action) = (idx / n_actions, idx % n_actions);
            let mut sum = 0.0;
            for &(j, p) in row {
                if j >= n_states {
                    return Err(MdpError::SuccessorOutOfRange(j));
                }
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(MdpError::TransitionRow { state, action, sum: p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::TransitionRow { state, action, sum });
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(MdpError::Shape("non-finite reward".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            successors,
            reward,
            gamma,
            available: vec![true; n_states * n_actions],
        })
    }

    /// Restricts the admissible actions. Unavailable actions keep their
    /// (well-formed) transition rows but policies and greedy selection must
    /// avoid them.
    pub fn with_available(mut self, available: Vec<bool>) -> Result<Self, MdpError> {
        if available.len() != self.n_states * self.n_actions {
            return Err(MdpError::Shape("availability mask size".into()));
        }
        for s in 0..self.n_states {
            if !available[s * self.n_actions..(s + 1) * self.n_actions].iter().any(|&a| a) {
                return Err(MdpError::Shape(format!("state {s} has no available action")));
            }
        }
        self.available = available;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.successors[s * self.n_actions + a]
    }

    pub fn transition_prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.successors(s, a)
            .iter()
            .filter(|(j, _)| *j == next)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn is_available(&self, s: usize, a: usize) -> bool {
        self.available[s * self.n_actions + a]
    }

    pub fn available_actions(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_actions).filter(move |&a| self.is_available(s, a))
    }

    /// `R_max = max |R(s, a)|`.
    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Dense `P^π`.
    pub fn induced_chain(&self, policy: &Policy) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.n_states, self.n_states);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                for &(j, q) in self.successors(s, a) {
                    p[(s, j)] += pa * q;
                }
            }
        }
        p
    }

    fn induced_sparse(&self, policy: &Policy) -> Vec<Vec<(usize, f64)>> {
        (0..self.n_states)
            .map(|s| {
                let mut row: Vec<(usize, f64)> = Vec::new();
                for a in 0..self.n_actions {
                    let pa = policy.prob(s, a);
                    if pa == 0.0 {
                        continue;
                    }
                    for &(j, q) in self.successors(s, a) {
                        match row.iter_mut().find(|(k, _)| *k == j) {
                            Some(entry) => entry.1 += pa * q,
                            None => row.push((j, pa * q)),
                        }
                    }
                }
                row
            })
            .collect()
    }

    /// `R^π(s) = Σ_a π(a|s) R(s, a)`.
    pub fn induced_reward(&self, policy: &Policy) -> DVector<f64> {
        DVector::from_fn(self.n_states, |s, _| {
            (0..self.n_actions).map(|a| policy.prob(s, a) * self.reward(s, a)).sum()
        })
    }

    /// `T^π v = R^π + γ P^π v`.
    pub fn bellman(&self, policy: &Policy, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.n_states, |s, _| {
            let mut acc = 0.0;
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                let next: f64 = self.successors(s, a).iter().map(|&(j, q)| q * v[j]).sum();
                acc += pa * (self.reward(s, a) + self.gamma * next);
            }
            acc
        })
    }

    pub fn to_json(&self) -> String {
        let mut transition = vec![vec![vec![0.0; self.n_states]; self.n_actions]; self.n_states];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for &(j, p) in self.successors(s, a) {
                    transition[s][a][j] += p;
                }
            }
        }
        let reward = self.reward.chunks(self.n_actions).map(<[f64]>::to_vec).collect();
        let available = if self.available.iter().all(|&a| a) {
            None
        } else {
            Some(self.available.chunks(self.n_actions).map(<[bool]>::to_vec).collect())
        };
        let file = MdpFile {
            n_states: self.n_states,
            n_actions: self.n_actions,
            transition,
            reward,
            gamma: self.gamma,
            available,
        };
        serde_json::to_string(&file).expect("MDP tables are finite")
    }

    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        let file: MdpFile = serde_json::from_str(text).map_err(|e| MdpError::Parse(e.to_string()))?;
        if file.transition.len() != file.n_states
            || file.transition.iter().any(|row| row.len() != file.n_actions)
        {
            return Err(MdpError::Shape("declared sizes disagree with the transition tensor".into()));
        }
        let mdp = Self::new(file.transition, file.reward, file.gamma)?;
        match file.available {
            Some(mask) => mdp.with_available(mask.into_iter().flatten().collect()),
            None => Ok(mdp),
        }
    }
}

/// Stationary stochastic policy `π(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, MdpError> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_actions) {
            return Err(MdpError::Shape("ragged policy table".into()));
        }
        Self::from_flat(n_states, n_actions, rows.into_iter().flatten().collect())
    }

    pub fn from_flat(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        if probs.len() != n_states * n_actions || n_actions == 0 {
            return Err(MdpError::Shape("policy table size".into()));
        }
        for (state, row) in probs.chunks(n_actions).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(MdpError::PolicyRow { state, sum });
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self, MdpError> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(MdpError::Shape(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::from_flat(actions.len(), n_actions, probs)
    }

    /// Uniform over the actions available in each state of `mdp`.
    pub fn uniform(mdp: &FiniteMdp) -> Self {
        let mut probs = vec![0.0; mdp.n_states() * mdp.n_actions()];
        for s in 0..mdp.n_states() {
            let avail: Vec<usize> = mdp.available_actions(s).collect();
            let p = 1.0 / avail.len() as f64;
            for a in avail {
                probs[s * mdp.n_actions() + a] = p;
            }
        }
        Self { n_states: mdp.n_states(), n_actions: mdp.n_actions(), probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> usize {
        sample_categorical(self.row(s), rng)
    }

    fn check_against(&self, mdp: &FiniteMdp) -> Result<(), MdpError> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(MdpError::Shape("policy does not match MDP".into()));
        }
        Ok(())
    }
}

/// Inverse-CDF draw from a probability row.
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// `ρ = π(a|s) / π_b(a|s)`.
pub fn importance_weight(target: &Policy, behavior: &Policy, s: usize, a: usize) -> Result<f64, MdpError> {
    let pb = behavior.prob(s, a);
    if pb <= 0.0 {
        return Err(MdpError::BehaviorZero { state: s, action: a });
    }
    let pt = target.prob(s, a);
    Ok(if pt == 0.0 { 0.0 } else { pt / pb })
}

/// Largest importance weight over pairs the behavior policy can produce.
pub fn rho_max(target: &Policy, behavior: &Policy) -> f64 {
    let mut m: f64 = 0.0;
    for s in 0..behavior.n_states() {
        for a in 0..behavior.n_actions() {
            if let Ok(r) = importance_weight(target, behavior, s, a) {
                m = m.max(r);
            }
        }
    }
    m
}

/// Importance weight with additive bias `epsilon` and uniform noise on
/// `[-epsilon/2, epsilon/2]`, clamped at zero. With `epsilon == 0` no random
/// number is drawn.
pub fn biased_weight<R: Rng + ?Sized>(rho: f64, epsilon: f64, rng: &mut R) -> f64 {
    if epsilon == 0.0 {
        return rho;
    }
    let noise = epsilon * (rng.random::<f64>() - 0.5);
    (rho + epsilon + noise).max(0.0)
}

/// Independent random streams derived from a single experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Transitions,
    WeightNoise,
    Evaluation,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Transitions => 0,
            StreamPurpose::WeightNoise => 0x9e37_79b9_7f4a_7c15,
            StreamPurpose::Evaluation => 0xc2b2_ae3d_27d4_eb4f,
        }
    }
}

/// Substream `(seed, run_id, purpose)` of the versioned generator.
pub fn substream(seed: u64, run_id: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.tag());
    rng.set_stream(run_id);
    rng
}

/// One logged transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub phi: DVector<f64>,
    pub phi_next: DVector<f64>,
    pub reward: f64,
    pub rho: f64,
    pub state: Option<usize>,
    pub action: Option<usize>,
    pub next_state: Option<usize>,
}

impl Sample {
    pub fn new(phi: DVector<f64>, phi_next: DVector<f64>, reward: f64, rho: f64) -> Self {
        Self { phi, phi_next, reward, rho, state: None, action: None, next_state: None }
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// `Δφ = φ - γ φ'`.
    pub fn delta_phi(&self, gamma: f64) -> DVector<f64> {
        &self.phi - &self.phi_next * gamma
    }

    /// `δ(θ) = r + γ φ'ᵀθ - φᵀθ`.
    pub fn td_error(&self, theta: &DVector<f64>, gamma: f64) -> f64 {
        self.reward + gamma * self.phi_next.dot(theta) - self.phi.dot(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// `s_i ~ ξ` independently.
    #[default]
    Iid,
    /// `s_{i+1} = s'_i` along one behavior trajectory.
    Trajectory,
}

/// Everything needed to turn behavior transitions into [`Sample`]s.
#[derive(Debug, Clone, Copy)]
pub struct SamplerSetup<'a> {
    pub mdp: &'a FiniteMdp,
    pub target: &'a Policy,
    pub behavior: &'a Policy,
    pub features: &'a FeatureMatrix,
    /// Bias `ε` on the importance weights; zero disables the mechanism.
    pub rho_bias: f64,
}

impl<'a> SamplerSetup<'a> {
    pub fn new(mdp: &'a FiniteMdp, target: &'a Policy, behavior: &'a Policy, features: &'a FeatureMatrix) -> Self {
        Self { mdp, target, behavior, features, rho_bias: 0.0 }
    }

    pub fn with_rho_bias(mut self, epsilon: f64) -> Self {
        self.rho_bias = epsilon;
        self
    }

    fn validate(&self) -> Result<(), MdpError> {
        self.target.check_against(self.mdp)?;
        self.behavior.check_against(self.mdp)?;
        if self.features.n_states() != self.mdp.n_states() {
            return Err(MdpError::Shape("feature matrix rows must equal n_states".into()));
        }
        if !(self.rho_bias >= 0.0) {
            return Err(MdpError::Shape("rho bias must be nonnegative".into()));
        }
        Ok(())
    }

    /// Lazily generated stream of samples.
    pub fn source(
        &self,
        mode: SamplingMode,
        xi: Option<&DVector<f64>>,
        start_state: usize,
        seed: u64,
        run_id: u64,
    ) -> Result<SampleSource<'a>, MdpError> {
        self.validate()?;
        let cdf = match mode {
            SamplingMode::Iid => {
                let xi = xi.ok_or(MdpError::InvalidDistribution(0.0))?;
                check_distribution(xi, self.mdp.n_states())?;
                Some(xi.iter().copied().collect())
            }
            SamplingMode::Trajectory => {
                if start_state >= self.mdp.n_states() {
                    return Err(MdpError::OutOfRange(start_state));
                }
                None
            }
        };
        Ok(SampleSource {
            setup: *self,
            mode,
            xi: cdf,
            state: start_state,
            rng: substream(seed, run_id, StreamPurpose::Transitions),
            noise_rng: substream(seed, run_id, StreamPurpose::WeightNoise),
        })
    }
}

fn check_distribution(xi: &DVector<f64>, n: usize) -> Result<(), MdpError> {
    if xi.len() != n {
        return Err(MdpError::Shape("distribution length".into()));
    }
    let sum = xi.sum();
    if xi.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > DISTRIBUTION_TOL {
        return Err(MdpError::InvalidDistribution(sum));
    }
    Ok(())
}

/// Iterator over behavior transitions featurized into [`Sample`]s. It owns its
/// generators; two sources built from the same `(seed, run_id)` agree exactly.
pub struct SampleSource<'a> {
    setup: SamplerSetup<'a>,
    mode: SamplingMode,
    xi: Option<Vec<f64>>,
    state: usize,
    rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl SampleSource<'_> {
    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn next_sample(&mut self) -> Sample {
        let setup = &self.setup;
        let s = match &self.xi {
            Some(xi) => sample_categorical(xi, &mut self.rng),
            None => self.state,
        };
        let a = setup.behavior.sample_action(s, &mut self.rng);
        let next = {
            let succ = setup.mdp.successors(s, a);
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut pick = succ.last().map_or(s, |&(j, _)| j);
            for &(j, p) in succ {
                acc += p;
                if u < acc {
                    pick = j;
                    break;
                }
            }
            pick
        };
        self.state = next;
        let rho = importance_weight(setup.target, setup.behavior, s, a)
            .expect("behavior only draws actions it supports");
        let rho = biased_weight(rho, setup.rho_bias, &mut self.noise_rng);
        Sample {
            phi: setup.features.row(s),
            phi_next: setup.features.row(next),
            reward: setup.mdp.reward(s, a),
            rho,
            state: Some(s),
            action: Some(a),
            next_state: Some(next),
        }
    }
}

impl Iterator for SampleSource<'_> {
    type Item = Sample;

    fn next(&mut self) -> Option<Sample> {
        Some(self.next_sample())
    }
}

/// A materialized, replayable sequence of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream {
    pub mode: SamplingMode,
    pub seed: u64,
    pub samples: Vec<Sample>,
}

impl SampleStream {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV dump: `phi_0..phi_{d-1}, r, phi_next_0..phi_next_{d-1}, rho`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let d = self.samples.first().map_or(0, Sample::dim);
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..d).map(|i| format!("phi_{i}")).collect();
        header.push("r".into());
        header.extend((0..d).map(|i| format!("phi_next_{i}")));
        header.push("rho".into());
        w.write_record(&header)?;
        for smp in &self.samples {
            let mut rec: Vec<String> = smp.phi.iter().map(f64::to_string).collect();
            rec.push(smp.reward.to_string());
            rec.extend(smp.phi_next.iter().map(f64::to_string));
            rec.push(smp.rho.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` samples with `s_i ~ ξ`, `a_i ~ π_b(·|s_i)`, `s'_i ~ P(·|s_i, a_i)`.
pub fn sample_iid(setup: &SamplerSetup<'_>, xi: &DVector<f64>, n: usize, seed: u64) -> Result<SampleStream, MdpError> {
    if n == 0 {
        return Err(MdpError::EmptyStream);
    }
    let src = setup.source(SamplingMode::Iid, Some(xi), 0, seed, 0)?;
    Ok(SampleStream { mode: SamplingMode::Iid, seed, samples: src.take(n).collect() })
}

/// `n` consecutive samples of one behavior trajectory from `start_state`.
pub fn sample_trajectory(
    setup: &SamplerSetup<'_>,
    start_state: usize,
    n: usize,
    seed: u64,
) -> Result<SampleStream, MdpError> {
    if n == 0 {
        return Err(MdpError::EmptyStream);
    }
    let src = setup.source(SamplingMode::Trajectory, None, start_state, seed, 0)?;
    Ok(SampleStream { mode: SamplingMode::Trajectory, seed, samples: src.take(n).collect() })
}

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITERS: usize = 1_000_000;

/// Stationary distribution of `P^π` by power iteration from the uniform
/// distribution, stopping when `‖ξP - ξ‖₁ ≤ 1e-12`.
pub fn stationary_distribution(mdp: &FiniteMdp, policy: &Policy) -> Result<DVector<f64>, MdpError> {
    stationary_distribution_with(mdp, policy, STATIONARY_MAX_ITERS)
}

pub fn stationary_distribution_with(
    mdp: &FiniteMdp,
    policy: &Policy,
    max_iters: usize,
) -> Result<DVector<f64>, MdpError> {
    policy.check_against(mdp)?;
    let n = mdp.n_states();
    let chain = mdp.induced_sparse(policy);
    let mut xi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iters {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (s, row) in chain.iter().enumerate() {
            for &(j, p) in row {
                next[j] += xi[s] * p;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let residual: f64 = next.iter().zip(&xi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut xi, &mut next);
        if residual <= STATIONARY_TOL {
            return Ok(DVector::from_vec(xi));
        }
    }
    Err(MdpError::NotConverged(max_iters))
}

/// Stationary distribution by a direct solve of `ξᵀP = ξᵀ`, `Σξ = 1`.
/// Suits slowly mixing or nearly periodic chains where power iteration stalls.
pub fn stationary_distribution_solve(mdp: &FiniteMdp, policy: &Policy) -> Result<DVector<f64>, MdpError> {
    policy.check_against(mdp)?;
    let n = mdp.n_states();
    let mut system = mdp.induced_chain(policy).transpose() - DMatrix::identity(n, n);
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let xi = system.clone().lu().solve(&rhs).ok_or(MdpError::NoUniqueStationary)?;
    let residual = (&system * &xi - &rhs).amax();
    if !(residual <= 1e-10) || xi.iter().any(|&p| p < -1e-12) {
        return Err(MdpError::NoUniqueStationary);
    }
    let xi = xi.map(|p| p.max(0.0));
    let total = xi.sum();
    Ok(xi / total)
}

/// Exact `V^π` from `(I - γP^π) V = R^π`.
pub fn true_values(mdp: &FiniteMdp, policy: &Policy) -> DVector<f64> {
    let n = mdp.n_states();
    let system = DMatrix::identity(n, n) - mdp.induced_chain(policy) * mdp.gamma();
    let rhs = mdp.induced_reward(policy);
    system.lu().solve(&rhs).expect("I - γP is nonsingular for γ < 1")
}

/// Optimal values by value iteration and the greedy policy they induce.
/// Ties go to the lowest action index.
pub fn optimal_policy(mdp: &FiniteMdp) -> (Policy, DVector<f64>) {
    let n = mdp.n_states();
    let q = |v: &DVector<f64>, s: usize, a: usize| {
        mdp.reward(s, a) + mdp.gamma() * mdp.successors(s, a).iter().map(|&(j, p)| p * v[j]).sum::<f64>()
    };
    let mut v = DVector::zeros(n);
    loop {
        let next = DVector::from_fn(n, |s, _| {
            mdp.available_actions(s).map(|a| q(&v, s, a)).fold(f64::NEG_INFINITY, f64::max)
        });
        let diff = (&next - &v).amax();
        v = next;
        if diff <= 1e-13 * (1.0 - mdp.gamma()) * (1.0 + v.amax()) {
            break;
        }
    }
    let actions: Vec<usize> = (0..n)
        .map(|s| {
            let mut best = None::<(usize, f64)>;
            for a in mdp.available_actions(s) {
                let val = q(&v, s, a);
                if best.is_none_or(|(_, b)| val > b + 1e-12) {
                    best = Some((a, val));
                }
            }
            best.expect("every state has an available action").0
        })
        .collect();
    let policy = Policy::deterministic(mdp.n_actions(), &actions).expect("valid greedy actions");
    let values = true_values(mdp, &policy);
    (policy, values)
}
