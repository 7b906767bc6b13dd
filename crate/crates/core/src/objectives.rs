//! Exact expectations `A`, `b`, `C` for a finite evaluation problem, the
//! objectives built on them (NEU, MSPBE, MSBE), the saddle Lagrangian
//! `L(θ, y) = ⟨b - Aθ, y⟩ - ½‖y‖²_M` with its error function, and the
//! closed-form finite-sample bounds.
//!
//! Matrices that may be singular (`C` on over-parameterized bases such as
//! Baird's star) are inverted with the Moore-Penrose pseudo-inverse. This is
//! exact for every quantity computed here because `b - Aθ = ΦᵀΞ(Tv̂ - v̂)`
//! always lies in `range(ΦᵀΞΦ)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMap;
use crate::linalg::{self, SINGULAR_TOL};
use crate::mdp::{self, FiniteMdp, MdpError, Policy, Sample, SamplerSetup};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("covariance matrix C is singular (λ_min = {0:e})")]
    SingularC(f64),
    #[error("A is singular (σ_min = {0:e})")]
    SingularA(f64),
    #[error("the sampling distribution violates the LMI condition (λ_min = {0:e})")]
    LmiViolated(f64),
    #[error("M_* evaluates to zero")]
    ZeroMstar,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Which `M` defines the objective: `I` (NEU, GTD) or `C` (MSPBE, GTD2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    Identity,
    Covariance,
}

/// The tuple `(MDP, π, π_b, ξ, φ)` that fixes every exact quantity.
#[derive(Debug, Clone)]
pub struct PolicyEvaluation {
    pub mdp: FiniteMdp,
    pub target: Policy,
    pub behavior: Policy,
    pub xi: DVector<f64>,
    pub features: FeatureMap,
}

/// Exact moments and derived constants of a [`PolicyEvaluation`].
#[derive(Debug, Clone)]
pub struct ExactQuantities {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    /// Diagonal of `Ξ`.
    pub xi: DVector<f64>,
    /// `Π = Φ(ΦᵀΞΦ)⁺ΦᵀΞ`.
    pub pi: DMatrix<f64>,
    /// `λ_min(C)`.
    pub nu: f64,
    /// `σ_max(C)`.
    pub tau_c: f64,
    pub xi_max: f64,
    pub rho_max: f64,
    pub norm_a: f64,
    pub norm_b: f64,
    pub gamma: f64,
    c_pinv: DMatrix<f64>,
    c_eigenvalues: DVector<f64>,
    c_eigenvectors: DMatrix<f64>,
}

impl PolicyEvaluation {
    pub fn new(
        mdp: FiniteMdp,
        target: Policy,
        behavior: Policy,
        xi: DVector<f64>,
        features: FeatureMap,
    ) -> Result<Self, ObjectiveError> {
        let n = mdp.n_states();
        if target.n_states() != n
            || behavior.n_states() != n
            || target.n_actions() != mdp.n_actions()
            || behavior.n_actions() != mdp.n_actions()
        {
            return Err(ObjectiveError::Shape("policies must match the MDP".into()));
        }
        if features.n_states() != n || xi.len() != n {
            return Err(ObjectiveError::Shape("features and ξ must cover every state".into()));
        }
        let sum = xi.sum();
        if xi.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > mdp::DISTRIBUTION_TOL {
            return Err(MdpError::InvalidDistribution(sum).into());
        }
        for s in 0..n {
            for a in 0..mdp.n_actions() {
                if target.prob(s, a) > 0.0 && behavior.prob(s, a) == 0.0 {
                    return Err(ObjectiveError::InvalidInput(format!(
                        "target takes action {a} in state {s} where behavior never does"
                    )));
                }
            }
        }
        Ok(Self { mdp, target, behavior, xi, features })
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        self.features.table().as_matrix()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    pub fn sampler(&self) -> SamplerSetup<'_> {
        SamplerSetup::new(&self.mdp, &self.target, &self.behavior, self.features.table())
    }

    pub fn is_on_policy(&self) -> bool {
        self.target == self.behavior
    }

    /// True iff `ξᵀP^π = ξᵀ` up to `1e-9` in L1.
    pub fn xi_is_stationary(&self) -> bool {
        let p = self.mdp.induced_chain(&self.target);
        let moved = p.transpose() * &self.xi;
        (moved - &self.xi).abs().sum() <= 1e-9
    }

    pub fn rho_max(&self) -> f64 {
        mdp::rho_max(&self.target, &self.behavior)
    }

    /// Every behavior transition `(s, a, s')` with its probability
    /// `ξ(s) π_b(a|s) P(s'|s, a)`, as a featurized sample.
    pub fn transition_support(&self) -> Vec<(f64, Sample)> {
        let mut out = Vec::new();
        for s in 0..self.mdp.n_states() {
            if self.xi[s] == 0.0 {
                continue;
            }
            let phi = self.features.table().row(s);
            for a in 0..self.mdp.n_actions() {
                let pb = self.behavior.prob(s, a);
                if pb == 0.0 {
                    continue;
                }
                let rho = mdp::importance_weight(&self.target, &self.behavior, s, a).expect("pb > 0");
                for &(next, p) in self.mdp.successors(s, a) {
                    let mut smp =
                        Sample::new(phi.clone(), self.features.table().row(next), self.mdp.reward(s, a), rho);
                    smp.state = Some(s);
                    smp.action = Some(a);
                    smp.next_state = Some(next);
                    out.push((self.xi[s] * pb * p, smp));
                }
            }
        }
        out
    }

    /// `A = E[ρφΔφᵀ]`, `b = E[ρφr]`, `C = E[φφᵀ]` by exact enumeration.
    pub fn exact_quantities(&self) -> Result<ExactQuantities, ObjectiveError> {
        let d = self.dim();
        let gamma = self.gamma();
        let mut a = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        for (w, smp) in self.transition_support() {
            if smp.rho == 0.0 {
                continue;
            }
            let dphi = smp.delta_phi(gamma);
            a += &smp.phi * dphi.transpose() * (w * smp.rho);
            b += &smp.phi * (w * smp.rho * smp.reward);
        }
        let phi = self.phi();
        let weighted = DMatrix::from_diagonal(&self.xi);
        let c = phi.transpose() * &weighted * phi;
        let eig = linalg::sym_eigen(&c);
        let c_pinv = linalg::sym_pinv(&c);
        let pi = phi * &c_pinv * phi.transpose() * &weighted;
        Ok(ExactQuantities {
            nu: eig.eigenvalues.min(),
            tau_c: linalg::spectral_norm(&c),
            xi_max: self.xi.max(),
            rho_max: self.rho_max(),
            norm_a: linalg::spectral_norm(&a),
            norm_b: b.norm(),
            gamma,
            c_eigenvalues: eig.eigenvalues.map(|l| l.max(0.0)),
            c_eigenvectors: eig.eigenvectors,
            a,
            b,
            c,
            xi: self.xi.clone(),
            pi,
            c_pinv,
        })
    }

    pub fn value_estimate(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.phi() * theta
    }

    /// `ΦᵀΞ(T v̂ - v̂)` evaluated in state space.
    pub fn expected_td_update(&self, theta: &DVector<f64>) -> DVector<f64> {
        let v = self.value_estimate(theta);
        let residual = self.mdp.bellman(&self.target, &v) - &v;
        self.phi().transpose() * residual.component_mul(&self.xi)
    }

    pub fn true_values(&self) -> DVector<f64> {
        mdp::true_values(&self.mdp, &self.target)
    }

    /// `‖T v̂ - v̂‖²_ξ`.
    pub fn msbe(&self, theta: &DVector<f64>) -> f64 {
        let v = self.value_estimate(theta);
        let residual = self.mdp.bellman(&self.target, &v) - &v;
        weighted_sq_norm(&residual, &self.xi)
    }

    /// `‖v̂ - ΠT v̂‖²_ξ` computed directly in state space.
    pub fn mspbe_state_space(&self, theta: &DVector<f64>, exact: &ExactQuantities) -> f64 {
        let v = self.value_estimate(theta);
        let tv = self.mdp.bellman(&self.target, &v);
        weighted_sq_norm(&(&v - &exact.pi * tv), &self.xi)
    }

    /// `‖V - ΠV‖_ξ`.
    pub fn projection_error(&self, exact: &ExactQuantities) -> f64 {
        let v = self.true_values();
        weighted_sq_norm(&(&v - &exact.pi * &v), &self.xi).sqrt()
    }

    /// `‖V - Φθ‖_ξ`.
    pub fn value_error(&self, theta: &DVector<f64>) -> f64 {
        weighted_sq_norm(&(self.true_values() - self.value_estimate(theta)), &self.xi).sqrt()
    }

    /// Smallest eigenvalue of `[[ΦᵀΞΦ, ΦᵀΞPΦ], [ΦᵀPᵀΞΦ, ΦᵀΞΦ]]`.
    pub fn lmi_min_eigenvalue(&self) -> f64 {
        let phi = self.phi();
        let d = phi.ncols();
        let weighted = DMatrix::from_diagonal(&self.xi);
        let p = self.mdp.induced_chain(&self.target);
        let c = phi.transpose() * &weighted * phi;
        let cross = phi.transpose() * &weighted * &p * phi;
        let mut block = DMatrix::zeros(2 * d, 2 * d);
        block.view_mut((0, 0), (d, d)).copy_from(&c);
        block.view_mut((d, d), (d, d)).copy_from(&c);
        block.view_mut((0, d), (d, d)).copy_from(&cross);
        block.view_mut((d, 0), (d, d)).copy_from(&cross.transpose());
        linalg::min_eigenvalue(&block)
    }

    /// True iff the LMI holds up to `-1e-10`.
    pub fn lmi_check(&self) -> bool {
        self.lmi_min_eigenvalue() >= -1e-10
    }

    /// `E[ρφδ^λ(θ)] = ΦᵀΞ(T^λ v̂ - v̂)` from the truncated power series
    /// `(1-λ) Σ_{i<H} λ^i (T^{i+1} v̂ - v̂)`. Without an explicit horizon the
    /// smallest `H` with `λ^H < 1e-10` is used.
    pub fn forward_lambda_expectation(
        &self,
        theta: &DVector<f64>,
        lambda: f64,
        horizon: Option<usize>,
    ) -> Result<DVector<f64>, ObjectiveError> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(ObjectiveError::InvalidInput(format!("λ = {lambda} outside [0, 1)")));
        }
        let horizon = horizon.unwrap_or_else(|| lambda_horizon(lambda));
        let v = self.value_estimate(theta);
        let mut iterate = v.clone();
        let mut acc = DVector::zeros(v.len());
        let mut weight = 1.0 - lambda;
        for _ in 0..horizon {
            iterate = self.mdp.bellman(&self.target, &iterate);
            acc += (&iterate - &v) * weight;
            weight *= lambda;
        }
        Ok(self.phi().transpose() * acc.component_mul(&self.xi))
    }

    /// Exact upper bounds `(σ₁, σ₂)` on the gradient-noise standard deviations
    /// over `‖θ‖ ≤ r_theta`, `‖y‖ ≤ r_y`.
    ///
    /// `σ₂² = r_y² λ_max(E[(Â-A)(Â-A)ᵀ])` is attained. `σ₁` combines the three
    /// noise terms of `b̂ - Âθ - M̂y` through Minkowski's inequality.
    pub fn gradient_noise(
        &self,
        exact: &ExactQuantities,
        mode: MetricMode,
        r_theta: f64,
        r_y: f64,
    ) -> (f64, f64) {
        let d = self.dim();
        let gamma = self.gamma();
        let mut aat = DMatrix::zeros(d, d);
        let mut ata = DMatrix::zeros(d, d);
        let mut cc = DMatrix::zeros(d, d);
        let mut bb = 0.0;
        for (w, smp) in self.transition_support() {
            let sq_phi = smp.phi.norm_squared();
            if mode == MetricMode::Covariance {
                cc += &smp.phi * smp.phi.transpose() * (w * sq_phi);
            }
            if smp.rho == 0.0 {
                continue;
            }
            let dphi = smp.delta_phi(gamma);
            let r2 = smp.rho * smp.rho;
            aat += &smp.phi * smp.phi.transpose() * (w * r2 * dphi.norm_squared());
            ata += &dphi * dphi.transpose() * (w * r2 * sq_phi);
            bb += w * r2 * smp.reward * smp.reward * sq_phi;
        }
        let cov_a_rows = aat - &exact.a * exact.a.transpose();
        let cov_a_cols = ata - exact.a.transpose() * &exact.a;
        let sd = |m: &DMatrix<f64>| linalg::max_eigenvalue(m).max(0.0).sqrt();
        let sigma2 = r_y * sd(&cov_a_rows);
        let noise_b = (bb - exact.norm_b * exact.norm_b).max(0.0).sqrt();
        let noise_m = match mode {
            MetricMode::Identity => 0.0,
            MetricMode::Covariance => r_y * sd(&(cc - &exact.c * &exact.c)),
        };
        let sigma1 = noise_b + r_theta * sd(&cov_a_cols) + noise_m;
        (sigma1, sigma2)
    }
}

/// Smallest `H` with `λ^H < 1e-10` (1 for `λ = 0`).
pub fn lambda_horizon(lambda: f64) -> usize {
    if lambda == 0.0 {
        return 1;
    }
    ((1e-10f64).ln() / lambda.ln()).floor() as usize + 1
}

fn weighted_sq_norm(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    v.iter().zip(w.iter()).map(|(x, p)| p * x * x).sum()
}

/// Single-sample unbiased estimates `(Â, b̂, Ĉ) = (ρφΔφᵀ, ρrφ, φφᵀ)`.
pub fn sample_estimates(sample: &Sample, gamma: f64) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let a = &sample.phi * sample.delta_phi(gamma).transpose() * sample.rho;
    let b = &sample.phi * (sample.rho * sample.reward);
    let c = &sample.phi * sample.phi.transpose();
    (a, b, c)
}

impl ExactQuantities {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Assumption 3 of the analysis: `C` and `A` nonsingular.
    pub fn nonsingular(&self) -> bool {
        self.nu > SINGULAR_TOL && linalg::smallest_singular_value(&self.a) > SINGULAR_TOL
    }

    pub fn require_nonsingular_c(&self) -> Result<(), ObjectiveError> {
        if self.nu > SINGULAR_TOL {
            Ok(())
        } else {
            Err(ObjectiveError::SingularC(self.nu))
        }
    }

    /// `b - Aθ`.
    pub fn residual(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.b - &self.a * theta
    }

    pub fn metric(&self, mode: MetricMode) -> DMatrix<f64> {
        match mode {
            MetricMode::Identity => DMatrix::identity(self.dim(), self.dim()),
            MetricMode::Covariance => self.c.clone(),
        }
    }

    /// `M⁻¹` (pseudo-inverse when `C` is singular).
    pub fn metric_inverse(&self, mode: MetricMode) -> DMatrix<f64> {
        match mode {
            MetricMode::Identity => DMatrix::identity(self.dim(), self.dim()),
            MetricMode::Covariance => self.c_pinv.clone(),
        }
    }

    /// `τ = σ_max(M)`.
    pub fn tau(&self, mode: MetricMode) -> f64 {
        match mode {
            MetricMode::Identity => 1.0,
            MetricMode::Covariance => self.tau_c,
        }
    }

    fn quad_metric(&self, y: &DVector<f64>, mode: MetricMode) -> f64 {
        match mode {
            MetricMode::Identity => y.norm_squared(),
            MetricMode::Covariance => linalg::quad_form(y, &self.c),
        }
    }

    fn quad_metric_inverse(&self, g: &DVector<f64>, mode: MetricMode) -> f64 {
        match mode {
            MetricMode::Identity => g.norm_squared(),
            MetricMode::Covariance => linalg::quad_form(g, &self.c_pinv),
        }
    }

    /// `J(θ) = ‖b - Aθ‖²_{M⁻¹}`.
    pub fn objective_j(&self, theta: &DVector<f64>, mode: MetricMode) -> f64 {
        self.quad_metric_inverse(&self.residual(theta), mode)
    }

    pub fn neu(&self, theta: &DVector<f64>) -> f64 {
        self.objective_j(theta, MetricMode::Identity)
    }

    pub fn mspbe(&self, theta: &DVector<f64>) -> f64 {
        self.objective_j(theta, MetricMode::Covariance)
    }

    /// `-½∇NEU(θ) = Aᵀ(b - Aθ)`.
    pub fn neg_half_neu_gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.a.transpose() * self.residual(theta)
    }

    /// `L(θ, y) = ⟨b - Aθ, y⟩ - ½‖y‖²_M`.
    pub fn lagrangian(&self, theta: &DVector<f64>, y: &DVector<f64>, mode: MetricMode) -> f64 {
        self.residual(theta).dot(y) - 0.5 * self.quad_metric(y, mode)
    }

    /// `y*(θ) = M⁻¹(b - Aθ)`.
    pub fn y_star(&self, theta: &DVector<f64>, mode: MetricMode) -> DVector<f64> {
        self.metric_inverse(mode) * self.residual(theta)
    }

    /// Eigenpairs of `M`, eigenvalues clipped at zero.
    fn metric_eigen(&self, mode: MetricMode) -> (DVector<f64>, DMatrix<f64>) {
        match mode {
            MetricMode::Identity => (DVector::from_element(self.dim(), 1.0), DMatrix::identity(self.dim(), self.dim())),
            MetricMode::Covariance => (self.c_eigenvalues.clone(), self.c_eigenvectors.clone()),
        }
    }

    /// `max_{‖y‖ ≤ r_y} L(θ, y)`.
    pub fn max_over_y(&self, theta: &DVector<f64>, mode: MetricMode, r_y: f64) -> f64 {
        let (lambdas, q) = self.metric_eigen(mode);
        ball_constrained_max(&self.residual(theta), &lambdas, &q, r_y)
    }

    /// `min_{‖θ‖ ≤ r_theta} L(θ, y) = ⟨b, y⟩ - r_theta ‖Aᵀy‖ - ½‖y‖²_M`.
    pub fn min_over_theta(&self, y: &DVector<f64>, mode: MetricMode, r_theta: f64) -> f64 {
        let reach = (self.a.transpose() * y).norm();
        let linear = if reach == 0.0 { 0.0 } else { r_theta * reach };
        self.b.dot(y) - linear - 0.5 * self.quad_metric(y, mode)
    }

    /// `Err(θ, y) = max_{‖y'‖≤r_y} L(θ, y') - min_{‖θ'‖≤r_theta} L(θ', y)`.
    pub fn saddle_error(
        &self,
        theta: &DVector<f64>,
        y: &DVector<f64>,
        mode: MetricMode,
        r_theta: f64,
        r_y: f64,
    ) -> f64 {
        self.max_over_y(theta, mode, r_y) - self.min_over_theta(y, mode, r_theta)
    }

    /// Both sides of `½‖Aθ - b‖²_ξ ≤ τ ξ_max Err(θ, y)`, where the d-vector
    /// norm is taken as `‖x‖²_ξ = ξ_max ‖x‖²`, the weighting through which the
    /// inequality is derived.
    pub fn residual_audit_sides(
        &self,
        theta: &DVector<f64>,
        y: &DVector<f64>,
        mode: MetricMode,
        r_theta: f64,
        r_y: f64,
    ) -> (f64, f64) {
        let lhs = 0.5 * self.xi_max * self.residual(theta).norm_squared();
        let rhs = self.tau(mode) * self.xi_max * self.saddle_error(theta, y, mode, r_theta, r_y);
        (lhs, rhs)
    }

    /// `σ_min(AᵀM⁻¹A)`.
    pub fn sigma_min_normal(&self, mode: MetricMode) -> f64 {
        let normal = self.a.transpose() * self.metric_inverse(mode) * &self.a;
        linalg::smallest_singular_value(&normal)
    }
}

/// Maximizes `gᵀy - ½yᵀMy` over `‖y‖ ≤ radius` given `M = Q diag(λ) Qᵀ`.
/// Uses the unconstrained maximizer when it is feasible, otherwise finds the
/// multiplier `μ > 0` with `‖(M + μI)⁻¹ g‖ = radius` by bisection.
fn ball_constrained_max(g: &DVector<f64>, lambdas: &DVector<f64>, q: &DMatrix<f64>, radius: f64) -> f64 {
    let gt = q.transpose() * g;
    let gnorm = gt.norm();
    if gnorm == 0.0 {
        return 0.0;
    }
    let mut free_sq = 0.0;
    let mut free_val = 0.0;
    let mut unbounded = false;
    for (gi, &li) in gt.iter().zip(lambdas.iter()) {
        if li > SINGULAR_TOL {
            free_sq += gi * gi / (li * li);
            free_val += 0.5 * gi * gi / li;
        } else if gi.abs() > 1e-12 * gnorm {
            unbounded = true;
        }
    }
    if !unbounded && free_sq.sqrt() <= radius {
        return free_val;
    }
    if radius.is_infinite() {
        return f64::INFINITY;
    }
    let norm_at = |mu: f64| -> f64 {
        gt.iter()
            .zip(lambdas.iter())
            .map(|(gi, &li)| {
                let y = gi / (li.max(0.0) + mu);
                y * y
            })
            .sum::<f64>()
            .sqrt()
    };
    let (mut lo, mut hi) = (0.0_f64, gnorm / radius);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi.max(1e-300) {
            break;
        }
    }
    let mu = hi;
    gt.iter()
        .zip(lambdas.iter())
        .map(|(gi, &li)| {
            let li = li.max(0.0);
            let y = gi / (li + mu);
            gi * y - 0.5 * li * y * y
        })
        .sum()
}

/// `(‖A‖₂ bound, ‖b‖₂ bound) = ((1+γ) ρ_max L² d, ρ_max L R_max)`.
pub fn norm_bounds(l: f64, d: usize, gamma: f64, rho_max: f64, r_max: f64) -> (f64, f64) {
    ((1.0 + gamma) * rho_max * l * l * d as f64, rho_max * l * r_max)
}

/// Inputs to the finite-sample bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// `R = max(max_Θ ‖θ‖, max_Y ‖y‖)`.
    pub r: f64,
    pub d_theta: f64,
    pub d_y: f64,
    pub l: f64,
    pub d: usize,
    pub gamma: f64,
    pub rho_max: f64,
    pub r_max: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// `σ_max(M)`.
    pub tau: f64,
    pub metric: MetricMode,
}

impl BoundInputs {
    /// Inputs for Euclidean balls of radii `r_theta`, `r_y` centred at the
    /// origin, with the noise bounds computed exactly.
    pub fn for_balls(
        problem: &PolicyEvaluation,
        exact: &ExactQuantities,
        metric: MetricMode,
        r_theta: f64,
        r_y: f64,
    ) -> Self {
        let (sigma1, sigma2) = problem.gradient_noise(exact, metric, r_theta, r_y);
        Self {
            r: r_theta.max(r_y),
            d_theta: r_theta,
            d_y: r_y,
            l: problem.features.bound(),
            d: problem.dim(),
            gamma: problem.gamma(),
            rho_max: exact.rho_max,
            r_max: problem.mdp.r_max(),
            sigma1,
            sigma2,
            tau: exact.tau(metric),
            metric,
        }
    }

    /// `σ = √(σ₁² + σ₂²)`.
    pub fn sigma(&self) -> f64 {
        self.sigma1.hypot(self.sigma2)
    }
}

/// `M_* = R²(2‖A‖₂ + τ) + R(σ + ‖b‖₂)` and the constant step size
/// `α = 2c / (M_* √(5n))`.
pub fn m_star_and_stepsize(
    bounds: &BoundInputs,
    norm_a: f64,
    norm_b: f64,
    n: usize,
    c: f64,
) -> Result<(f64, f64), ObjectiveError> {
    if n == 0 || !(c > 0.0) {
        return Err(ObjectiveError::InvalidInput("need n ≥ 1 and c > 0".into()));
    }
    let r = bounds.r;
    let m_star = r * r * (2.0 * norm_a + bounds.tau) + r * (bounds.sigma() + norm_b);
    if m_star == 0.0 {
        return Err(ObjectiveError::ZeroMstar);
    }
    let alpha = 2.0 * c / (m_star * (5.0 * n as f64).sqrt());
    Ok((m_star, alpha))
}

/// High-probability bound on `Err(θ̄_n, ȳ_n)`:
/// `√(5/n)(8 + 2 ln(2/δ)) R² (ρ_max L (2(1+γ)Ld + R_max/R) + τ + σ/R)`.
pub fn high_prob_bound(bounds: &BoundInputs, n: usize, delta: f64) -> Result<f64, ObjectiveError> {
    if n == 0 || !(delta > 0.0 && delta < 1.0) {
        return Err(ObjectiveError::InvalidInput("need n ≥ 1 and 0 < δ < 1".into()));
    }
    let b = bounds;
    let r = b.r;
    let inner = b.rho_max * b.l * (2.0 * (1.0 + b.gamma) * b.l * b.d as f64 + b.r_max / r) + b.tau + b.sigma() / r;
    Ok((5.0 / n as f64).sqrt() * (8.0 + 2.0 * (2.0 / delta).ln()) * r * r * inner)
}

/// Bound on `‖V - Φθ̄_n‖_ξ` given the saddle error `err` of the returned pair.
///
/// On-policy with stationary ξ: `(‖V-ΠV‖_ξ + (L/ν)√(2dτξ_max Err)) / (1-γ)`.
/// Otherwise: `(1+γ√ρ_max)/(1-γ) ‖V-ΠV‖_ξ + √(2τ_C τ ξ_max Err / σ_min(AᵀM⁻¹A))`,
/// which needs the LMI condition on ξ.
pub fn performance_bound(
    problem: &PolicyEvaluation,
    exact: &ExactQuantities,
    err: f64,
    mode: MetricMode,
) -> Result<f64, ObjectiveError> {
    let gamma = exact.gamma;
    let proj = problem.projection_error(exact);
    let tau = exact.tau(mode);
    let err = err.max(0.0);
    if problem.is_on_policy() && problem.xi_is_stationary() {
        exact.require_nonsingular_c()?;
        let l = problem.features.bound();
        let d = problem.dim() as f64;
        Ok((proj + (l / exact.nu) * (2.0 * d * tau * exact.xi_max * err).sqrt()) / (1.0 - gamma))
    } else {
        let lmi = problem.lmi_min_eigenvalue();
        if lmi < -1e-10 {
            return Err(ObjectiveError::LmiViolated(lmi));
        }
        let smin_a = linalg::smallest_singular_value(&exact.a);
        if smin_a <= SINGULAR_TOL {
            return Err(ObjectiveError::SingularA(smin_a));
        }
        let fixed_point = (1.0 + gamma * exact.rho_max.sqrt()) / (1.0 - gamma) * proj;
        let sigma_min = exact.sigma_min_normal(mode);
        Ok(fixed_point + (2.0 * exact.tau_c * tau * exact.xi_max * err / sigma_min).sqrt())
    }
}
