//! Benchmark domains as finite MDPs with feature maps and policies: Baird's
//! star, the n-state chain with a BEBF basis, and the battery arbitrage MDP.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::features::{self, FeatureError, FeatureMap, FeatureMatrix};
use crate::learners::ControlProblem;
use crate::mdp::{self, FiniteMdp, MdpError, Policy};
use crate::objectives::{ObjectiveError, PolicyEvaluation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("infeasible grid: {0}")]
    GridInfeasible(String),
    #[error("action u = {u} outside [-x, s - x] = [{lo}, {hi}] (grid units)")]
    ActionOutOfBounds { u: i64, lo: i64, hi: i64 },
    #[error("unknown domain '{0}'")]
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainName {
    Baird,
    Chain50,
    Battery,
}

impl DomainName {
    pub fn tag(self) -> &'static str {
        match self {
            DomainName::Baird => "baird",
            DomainName::Chain50 => "chain50",
            DomainName::Battery => "battery",
        }
    }
}

impl fmt::Display for DomainName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DomainName {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baird" => Ok(DomainName::Baird),
            "chain50" => Ok(DomainName::Chain50),
            "battery" => Ok(DomainName::Battery),
            other => Err(DomainError::Unknown(other.to_string())),
        }
    }
}

/// Domain-level settings a config file may override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainOverrides {
    /// Number of BEBF columns for the chain.
    pub bebf_count: usize,
    pub battery: BatteryConfig,
}

impl Default for DomainOverrides {
    fn default() -> Self {
        Self { bebf_count: 20, battery: BatteryConfig::default() }
    }
}

/// A built policy-evaluation domain, plus a control problem where the domain
/// has one.
#[derive(Debug, Clone)]
pub struct Domain {
    pub name: DomainName,
    pub problem: PolicyEvaluation,
    pub theta0: DVector<f64>,
    /// Start of behavior trajectories.
    pub start_state: usize,
    pub control: Option<ControlProblem>,
    /// State weighting of the control MSBE.
    pub control_xi: Option<DVector<f64>>,
}

impl Domain {
    pub fn build(name: DomainName, overrides: &DomainOverrides) -> Result<Domain, DomainError> {
        match name {
            DomainName::Baird => baird(),
            DomainName::Chain50 => chain50(overrides.bebf_count),
            DomainName::Battery => BatteryDomain::new(overrides.battery.clone())?.domain(),
        }
    }
}

/// Baird's star: states 0–5 are the outer states, 6 the hub. Action 0
/// (dashed) jumps uniformly to an outer state, action 1 (solid) to the hub.
/// The behavior takes dashed with probability 6/7; the target always solid.
pub fn baird() -> Result<Domain, DomainError> {
    let n = 7;
    let mut successors = Vec::with_capacity(2 * n);
    for _ in 0..n {
        successors.push((0..6).map(|j| (j, 1.0 / 6.0)).collect::<Vec<_>>());
        successors.push(vec![(6, 1.0)]);
    }
    let mdp = FiniteMdp::from_sparse(n, 2, successors, vec![0.0; 2 * n], 0.99)?;
    let target = Policy::deterministic(2, &[1; 7])?;
    let behavior = Policy::new(vec![vec![6.0 / 7.0, 1.0 / 7.0]; n])?;
    let features = FeatureMap::from_fn(n, 8, |s| {
        let mut row = vec![0.0; 8];
        if s < 6 {
            row[s] = 2.0;
            row[7] = 1.0;
        } else {
            row[6] = 1.0;
            row[7] = 2.0;
        }
        row
    })?;
    let xi = DVector::from_element(n, 1.0 / n as f64);
    let problem = PolicyEvaluation::new(mdp, target, behavior, xi, features)?;
    let theta0 = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0]);
    Ok(Domain { name: DomainName::Baird, problem, theta0, start_state: 0, control: None, control_xi: None })
}

/// `n`-state chain: action 0 moves left, 1 right, each succeeding with
/// probability `success` and otherwise moving the other way; the ends clamp.
/// Reward 1 is earned in each state of `reward_states`.
pub fn chain_mdp(n: usize, reward_states: &[usize], success: f64, gamma: f64) -> Result<FiniteMdp, DomainError> {
    if n < 2 {
        return Err(DomainError::GridInfeasible("chain needs at least 2 states".into()));
    }
    let mut successors = Vec::with_capacity(2 * n);
    let mut reward = Vec::with_capacity(2 * n);
    for s in 0..n {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        for (intended, other) in [(left, right), (right, left)] {
            let mut row = vec![(intended, success)];
            if other == intended {
                row[0].1 = 1.0;
            } else if success < 1.0 {
                row.push((other, 1.0 - success));
            }
            successors.push(row);
            reward.push(if reward_states.contains(&s) { 1.0 } else { 0.0 });
        }
    }
    Ok(FiniteMdp::from_sparse(n, 2, successors, reward, gamma)?)
}

/// Chain evaluation domain: the optimal policy evaluated with its own actions
/// from uniformly drawn states, on a `bebf_count`-column BEBF basis. When the
/// Bellman residual vanishes early the basis is completed with ξ-orthonormal
/// unit directions.
///
/// The optimal policy's stationary distribution puts mass near `1e-15` on the
/// states between the two rewards, which would blow the ξ-normalized basis up
/// to entries near `1e7`; uniform ξ keeps `L` at a few units.
pub fn chain(
    n: usize,
    reward_states: &[usize],
    success: f64,
    gamma: f64,
    bebf_count: usize,
) -> Result<Domain, DomainError> {
    if bebf_count == 0 || bebf_count > n {
        return Err(DomainError::GridInfeasible(format!("bebf_count {bebf_count} outside 1..={n}")));
    }
    let mdp = chain_mdp(n, reward_states, success, gamma)?;
    let (policy, _) = mdp::optimal_policy(&mdp);
    let xi = DVector::from_element(n, 1.0 / n as f64);
    let empty = FeatureMatrix::new(DMatrix::zeros(n, 0))?;
    let basis = match features::bebf_expand(&mdp, &policy, &xi, &empty, bebf_count) {
        Ok(b) => b,
        Err(FeatureError::DegenerateResidual { basis, .. }) => features::complete_basis(&basis, &xi, bebf_count),
        Err(e) => return Err(e.into()),
    };
    let features = FeatureMap::from_matrix(basis);
    let d = features.dim();
    let problem = PolicyEvaluation::new(mdp, policy.clone(), policy, xi, features)?;
    Ok(Domain {
        name: DomainName::Chain50,
        problem,
        theta0: DVector::zeros(d),
        start_state: 0,
        control: None,
        control_xi: None,
    })
}

/// The 50-state chain with rewards in the 10th and 41st states, `γ = 0.9`.
pub fn chain50(bebf_count: usize) -> Result<Domain, DomainError> {
    chain(50, &[9, 40], 0.9, 0.9, bebf_count)
}

/// Battery arbitrage constants. Charge and capacity live on a grid of
/// `grid` steps of size `s0 / grid`; actions move the charge by whole steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryConfig {
    pub grid: usize,
    pub s0: f64,
    pub price_levels: Vec<f64>,
    pub price_min: f64,
    pub price_max: f64,
    pub price_sigma: f64,
    /// `p^o = sell_ratio · p^i`.
    pub sell_ratio: f64,
    /// Cost `c^d` per unit of lost capacity.
    pub c_d: f64,
    pub eps_d: f64,
    pub kappa: f64,
    pub gamma: f64,
    /// Evaluation target: buy to full at or below this price.
    pub buy_below: f64,
    /// Evaluation target: sell everything at or above this price.
    pub sell_above: f64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            grid: 10,
            s0: 1.0,
            price_levels: vec![1.0, 3.25, 5.5, 7.75, 10.0],
            price_min: 0.0,
            price_max: 10.0,
            price_sigma: 1.5,
            sell_ratio: 0.9,
            c_d: 10.0,
            eps_d: 0.001,
            kappa: 2.0,
            gamma: 0.9,
            buy_below: 3.25,
            sell_above: 7.75,
        }
    }
}

/// `(x, s, price)` in grid units and price-level index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BatteryState {
    pub x: usize,
    pub s: usize,
    pub price: usize,
}

/// The assembled battery MDP with its indexing helpers.
#[derive(Debug, Clone)]
pub struct BatteryDomain {
    pub config: BatteryConfig,
    pub mdp: FiniteMdp,
    price_transition: DMatrix<f64>,
}

fn hinge(v: f64) -> f64 {
    v.max(0.0)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl BatteryDomain {
    pub fn new(config: BatteryConfig) -> Result<Self, DomainError> {
        if config.grid < 2 || config.price_levels.len() < 2 {
            return Err(DomainError::GridInfeasible("need at least 2 charge steps and 2 price levels".into()));
        }
        if !(config.s0 > 0.0 && config.price_sigma > 0.0 && config.price_max > config.price_min) {
            return Err(DomainError::GridInfeasible("s0, σ_p and the price range must be positive".into()));
        }
        if config.price_levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(DomainError::GridInfeasible("price levels must be increasing".into()));
        }
        let stub = FiniteMdp::from_sparse(1, 1, vec![vec![(0, 1.0)]], vec![0.0], 0.0)?;
        let mut out = Self { price_transition: Self::price_matrix(&config), mdp: stub, config };
        out.mdp = out.assemble()?;
        Ok(out)
    }

    pub fn step(&self) -> f64 {
        self.config.s0 / self.config.grid as f64
    }

    pub fn n_prices(&self) -> usize {
        self.config.price_levels.len()
    }

    fn n_pairs(&self) -> usize {
        let g = self.config.grid;
        (g + 1) * (g + 2) / 2
    }

    pub fn n_states(&self) -> usize {
        self.n_pairs() * self.n_prices()
    }

    pub fn n_actions(&self) -> usize {
        2 * self.config.grid + 1
    }

    pub fn index(&self, st: BatteryState) -> usize {
        (st.s * (st.s + 1) / 2 + st.x) * self.n_prices() + st.price
    }

    pub fn state(&self, idx: usize) -> BatteryState {
        let price = idx % self.n_prices();
        let mut pair = idx / self.n_prices();
        let mut s = 0;
        while pair > s {
            pair -= s + 1;
            s += 1;
        }
        BatteryState { x: pair, s, price }
    }

    /// Charge change of action `a` in grid units.
    pub fn u_of_action(&self, a: usize) -> i64 {
        a as i64 - self.config.grid as i64
    }

    pub fn action_of_u(&self, u: i64) -> usize {
        (u + self.config.grid as i64) as usize
    }

    pub fn is_available(&self, st: BatteryState, u: i64) -> bool {
        -(st.x as i64) <= u && u <= st.s as i64 - st.x as i64
    }

    pub fn is_terminal(&self, st: BatteryState) -> bool {
        st.s == 0
    }

    /// `d(x, u) = ε_d(|u| + κ([x+u-0.8s]_+ + [0.2s-(x+u)]_+))`, zero for `u = 0`.
    pub fn degradation(&self, st: BatteryState, u: i64) -> f64 {
        if u == 0 {
            return 0.0;
        }
        let h = self.step();
        let (x, s, u) = (st.x as f64 * h, st.s as f64 * h, u as f64 * h);
        let after = x + u;
        self.config.eps_d * (u.abs() + self.config.kappa * (hinge(after - 0.8 * s) + hinge(0.2 * s - after)))
    }

    /// Immediate reward of moving the charge by `u` grid steps.
    pub fn reward(&self, st: BatteryState, u: i64) -> f64 {
        let theta = self.config.price_levels[st.price];
        let amount = u as f64 * self.step();
        let price = if u >= 0 { theta } else { self.config.sell_ratio * theta };
        -amount * price - self.config.c_d * self.degradation(st, u)
    }

    /// Capacity losses in grid steps with their probabilities: the real loss
    /// `d` is rounded to a neighboring grid value so that its mean is kept.
    pub fn capacity_outcomes(&self, st: BatteryState, u: i64) -> Vec<(usize, f64)> {
        let ratio = self.degradation(st, u) / self.step();
        let whole = ratio.floor();
        let frac = ratio - whole;
        let whole = whole as usize;
        if frac <= 0.0 {
            vec![(whole, 1.0)]
        } else {
            vec![(whole, 1.0 - frac), (whole + 1, frac)]
        }
    }

    /// Next state given the action, the next price level and a uniform draw
    /// that resolves the capacity rounding.
    pub fn battery_transition(
        &self,
        st: BatteryState,
        u: i64,
        next_price: usize,
        capacity_draw: f64,
    ) -> Result<BatteryState, DomainError> {
        if !self.is_available(st, u) {
            return Err(DomainError::ActionOutOfBounds { u, lo: -(st.x as i64), hi: st.s as i64 - st.x as i64 });
        }
        let outcomes = self.capacity_outcomes(st, u);
        let loss = if outcomes.len() == 2 && capacity_draw < outcomes[1].1 { outcomes[1].0 } else { outcomes[0].0 };
        Ok(self.successor(st, u, loss, next_price))
    }

    fn successor(&self, st: BatteryState, u: i64, loss: usize, next_price: usize) -> BatteryState {
        let s = st.s.saturating_sub(loss);
        let x = ((st.x as i64 + u) as usize).min(s);
        BatteryState { x, s, price: next_price }
    }

    /// Gaussian step of the price reflected into `[price_min, price_max]`
    /// and snapped to the nearest level.
    fn price_matrix(cfg: &BatteryConfig) -> DMatrix<f64> {
        let levels = &cfg.price_levels;
        let k = levels.len();
        let (lo_b, hi_b) = (cfg.price_min, cfg.price_max);
        let width = hi_b - lo_b;
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            let mu = levels[i] - lo_b;
            for j in 0..k {
                let lo = if j == 0 { 0.0 } else { 0.5 * (levels[j - 1] + levels[j]) - lo_b };
                let hi = if j + 1 == k { width } else { 0.5 * (levels[j] + levels[j + 1]) - lo_b };
                let mut p = 0.0;
                for image in -4i32..=4 {
                    let shift = 2.0 * width * image as f64;
                    for centre in [mu + shift, -mu + shift] {
                        p += std_normal_cdf((hi - centre) / cfg.price_sigma)
                            - std_normal_cdf((lo - centre) / cfg.price_sigma);
                    }
                }
                m[(i, j)] = p;
            }
            let total: f64 = m.row(i).sum();
            for j in 0..k {
                m[(i, j)] /= total;
            }
        }
        m
    }

    pub fn price_transition(&self) -> &DMatrix<f64> {
        &self.price_transition
    }

    fn assemble(&self) -> Result<FiniteMdp, DomainError> {
        let n = self.n_states();
        let n_a = self.n_actions();
        let mut successors = Vec::with_capacity(n * n_a);
        let mut reward = Vec::with_capacity(n * n_a);
        let mut available = Vec::with_capacity(n * n_a);
        for idx in 0..n {
            let st = self.state(idx);
            for a in 0..n_a {
                let u = self.u_of_action(a);
                let ok = self.is_available(st, u);
                available.push(ok);
                let u = if ok { u } else { 0 };
                reward.push(if ok { self.reward(st, u) } else { 0.0 });
                let mut row: Vec<(usize, f64)> = Vec::new();
                for (loss, pl) in self.capacity_outcomes(st, u) {
                    for q in 0..self.n_prices() {
                        let p = pl * self.price_transition[(st.price, q)];
                        if p > 0.0 {
                            row.push((self.index(self.successor(st, u, loss, q)), p));
                        }
                    }
                }
                successors.push(row);
            }
        }
        Ok(FiniteMdp::from_sparse(n, n_a, successors, reward, self.config.gamma)?.with_available(available)?)
    }

    /// Hinge features of one price block at `(x, s)` in real units:
    /// `[x-w]_+` and `[s-w]_+` for `w < s0`, `[s+x-w]_+` for `w ≥ 2Δ`. The
    /// dropped hinges are identically zero on `x ≤ s ≤ s0` or sums of kept
    /// ones (`[s+x]_+ = [x]_+ + [s]_+`, `[s+x-Δ]_+ = [x]_+ + [s-Δ]_+`).
    fn hinge_block(&self, x: f64, s: f64) -> Vec<f64> {
        let g = self.config.grid;
        let w = |i: usize| i as f64 * self.config.s0 / g as f64;
        let mut row = Vec::with_capacity(3 * g - 1);
        row.extend((0..g).map(|i| hinge(x - w(i))));
        row.extend((0..g).map(|i| hinge(s - w(i))));
        row.extend((2..=g).map(|i| hinge(s + x - w(i))));
        row
    }

    pub fn block_dim(&self) -> usize {
        3 * self.config.grid - 1
    }

    /// State features: one hinge block per price level, active for the
    /// current price only.
    pub fn evaluation_features(&self) -> Result<FeatureMap, DomainError> {
        let block = self.block_dim();
        let h = self.step();
        Ok(FeatureMap::from_fn(self.n_states(), block * self.n_prices(), |idx| {
            let st = self.state(idx);
            let mut row = vec![0.0; block * self.n_prices()];
            let vals = self.hinge_block(st.x as f64 * h, st.s as f64 * h);
            row[st.price * block..(st.price + 1) * block].copy_from_slice(&vals);
            row
        })?)
    }

    /// State-action features: the hinge block at the post-decision charge
    /// `x + u` plus `[u]_+` and `[u]_-` per price level. Unavailable actions
    /// have zero rows.
    pub fn control_features(&self) -> Result<FeatureMatrix, DomainError> {
        let block = self.block_dim();
        let q = self.n_prices();
        let d = (block + 2) * q;
        let n_a = self.n_actions();
        let h = self.step();
        let mut m = DMatrix::zeros(self.n_states() * n_a, d);
        for idx in 0..self.n_states() {
            let st = self.state(idx);
            for a in 0..n_a {
                let u = self.u_of_action(a);
                if !self.is_available(st, u) {
                    continue;
                }
                let r = idx * n_a + a;
                let post = (st.x as i64 + u) as f64 * h;
                for (j, v) in self.hinge_block(post, st.s as f64 * h).into_iter().enumerate() {
                    m[(r, st.price * block + j)] = v;
                }
                let uf = u as f64 * h;
                m[(r, block * q + st.price)] = hinge(uf);
                m[(r, block * q + q + st.price)] = hinge(-uf);
            }
        }
        Ok(FeatureMatrix::new(m)?)
    }

    /// Uniform over the available actions.
    pub fn behavior_policy(&self) -> Policy {
        Policy::uniform(&self.mdp)
    }

    /// Buy to full at low prices, sell everything at high prices, else hold.
    pub fn threshold_policy(&self) -> Result<Policy, DomainError> {
        let actions: Vec<usize> = (0..self.n_states())
            .map(|idx| {
                let st = self.state(idx);
                let p = self.config.price_levels[st.price];
                let u = if p <= self.config.buy_below {
                    st.s as i64 - st.x as i64
                } else if p >= self.config.sell_above {
                    -(st.x as i64)
                } else {
                    0
                };
                self.action_of_u(u)
            })
            .collect();
        Ok(Policy::deterministic(self.n_actions(), &actions)?)
    }

    /// Full battery, empty charge, middle price.
    pub fn start_state(&self) -> usize {
        self.index(BatteryState { x: 0, s: self.config.grid, price: self.n_prices() / 2 })
    }

    pub fn control_problem(&self) -> Result<ControlProblem, DomainError> {
        Ok(ControlProblem {
            mdp: self.mdp.clone(),
            behavior: self.behavior_policy(),
            features: self.control_features()?,
            start_state: self.start_state(),
            terminal: (0..self.n_states()).map(|i| self.is_terminal(self.state(i))).collect(),
        })
    }

    pub fn domain(&self) -> Result<Domain, DomainError> {
        let n = self.n_states();
        let xi = DVector::from_element(n, 1.0 / n as f64);
        let features = self.evaluation_features()?;
        let d = features.dim();
        let problem = PolicyEvaluation::new(
            self.mdp.clone(),
            self.threshold_policy()?,
            self.behavior_policy(),
            xi,
            features,
        )?;
        let live = (0..n).filter(|&i| !self.is_terminal(self.state(i))).count() as f64;
        let control_xi =
            DVector::from_fn(n, |i, _| if self.is_terminal(self.state(i)) { 0.0 } else { 1.0 / live });
        Ok(Domain {
            name: DomainName::Battery,
            problem,
            theta0: DVector::zeros(d),
            start_state: self.start_state(),
            control: Some(self.control_problem()?),
            control_xi: Some(control_xi),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baird_structure() {
        let dom = baird().unwrap();
        let p = &dom.problem;
        assert_eq!(p.rho_max(), 7.0);
        assert_eq!(mdp::importance_weight(&p.target, &p.behavior, 3, 0).unwrap(), 0.0);
        let ex = p.exact_quantities().unwrap();
        assert_eq!(ex.b.norm(), 0.0);
        assert!(p.true_values().amax() == 0.0);
        assert_eq!(p.features.bound(), 2.0);
        for s in 0..7 {
            assert_eq!(p.mdp.successors(s, 1), &[(6, 1.0)]);
        }
    }

    #[test]
    fn chain_rewards_and_rows() {
        let mdp = chain_mdp(50, &[9, 40], 0.9, 0.9).unwrap();
        for s in 0..50 {
            let expected = if s == 9 || s == 40 { 1.0 } else { 0.0 };
            assert_eq!(mdp.reward(s, 0), expected);
            assert_eq!(mdp.reward(s, 1), expected);
        }
        assert_eq!(mdp.transition_prob(0, 0, 0), 0.9);
        assert!((mdp.transition_prob(0, 0, 1) - 0.1).abs() < 1e-15);
        assert_eq!(mdp.transition_prob(49, 1, 49), 0.9);
    }

    #[test]
    fn chain_full_basis_is_exact() {
        let dom = chain50(50).unwrap();
        let ex = dom.problem.exact_quantities().unwrap();
        assert!(dom.problem.projection_error(&ex) < 1e-8);
    }

    #[test]
    fn battery_indexing_roundtrip() {
        let b = BatteryDomain::new(BatteryConfig::default()).unwrap();
        assert_eq!(b.n_states(), 330);
        for idx in 0..b.n_states() {
            let st = b.state(idx);
            assert!(st.x <= st.s && st.s <= 10);
            assert_eq!(b.index(st), idx);
        }
    }

    #[test]
    fn battery_rewards_and_transitions() {
        let b = BatteryDomain::new(BatteryConfig::default()).unwrap();
        let st = BatteryState { x: 3, s: 8, price: 1 };
        assert_eq!(b.degradation(st, 0), 0.0);
        assert_eq!(b.reward(st, 0), 0.0);
        assert!(b.reward(st, 2) < 0.0);
        assert!(b.reward(BatteryState { price: 4, ..st }, -3) > 0.0);
        // d(0.3, 0.5 | s = 0.8) = 0.001 (0.5 + 2 [0.8 - 0.64]_+) = 0.00082
        assert!((b.degradation(st, 5) - 0.00082).abs() < 1e-15);
        let full = b.battery_transition(st, 5, 2, 0.99).unwrap();
        assert_eq!(full, BatteryState { x: 8, s: 8, price: 2 });
        let worn = b.battery_transition(st, 5, 2, 0.0).unwrap();
        assert_eq!(worn, BatteryState { x: 7, s: 7, price: 2 });
        assert!(matches!(b.battery_transition(st, 6, 0, 0.5), Err(DomainError::ActionOutOfBounds { .. })));
        assert!(matches!(b.battery_transition(st, -4, 0, 0.5), Err(DomainError::ActionOutOfBounds { .. })));
    }

    #[test]
    fn battery_prices_are_stochastic_rows() {
        let b = BatteryDomain::new(BatteryConfig::default()).unwrap();
        let m = b.price_transition();
        for i in 0..5 {
            assert!((m.row(i).sum() - 1.0).abs() < 1e-12);
            assert!(m.row(i).iter().all(|&p| p > 0.0));
        }
        // From 5.5 the cell [4.375, 6.625] has mass 2Φ(0.75) - 1 plus the image
        // reflected at 10, evaluated independently with the images k = -4..4.
        assert!((m[(2, 2)] - 0.546_745_371_311_5).abs() < 1e-9, "{}", m[(2, 2)]);
    }

    #[test]
    fn battery_features_match_hinges() {
        let b = BatteryDomain::new(BatteryConfig::default()).unwrap();
        let map = b.evaluation_features().unwrap();
        assert_eq!(map.dim(), 145);
        let st = BatteryState { x: 3, s: 7, price: 2 };
        let phi = map.featurize(b.index(st)).unwrap();
        let base = 2 * 29;
        // [0.3 - 0.1]_+, [0.7 - 0.5]_+, [1.0 - 0.4]_+
        assert!((phi[base + 1] - 0.2).abs() < 1e-12);
        assert!((phi[base + 10 + 5] - 0.2).abs() < 1e-12);
        assert!((phi[base + 20 + 2] - 0.6).abs() < 1e-12);
        assert_eq!(phi[base + 4], 0.0);
        assert!(phi.rows(0, base).iter().all(|&v| v == 0.0));
        let c = map.table().as_matrix().transpose() * map.table().as_matrix();
        assert_eq!(crate::linalg::sym_rank(&c), 145);
    }

    #[test]
    fn battery_policies() {
        let b = BatteryDomain::new(BatteryConfig::default()).unwrap();
        let dom = b.domain().unwrap();
        assert_eq!(dom.problem.rho_max(), 11.0);
        let st = BatteryState { x: 4, s: 9, price: 0 };
        let a = b.action_of_u(5);
        assert_eq!(dom.problem.target.prob(b.index(st), a), 1.0);
        let sell = BatteryState { price: 4, ..st };
        assert_eq!(dom.problem.target.prob(b.index(sell), b.action_of_u(-4)), 1.0);
        let cp = dom.control.unwrap();
        assert_eq!(cp.features.dim(), 155);
        assert!(cp.terminal[b.index(BatteryState { x: 0, s: 0, price: 3 })]);
    }
}
