//! Browser bindings: Baird learning curves, a chain step-size sweep and a
//! bound calculator. Each call returns a JSON string.

use saddletd::domains::{Domain, DomainName, DomainOverrides};
use saddletd::harness::{self, ExperimentConfig};
use saddletd::learners::{Algorithm, LearnerConfig};
use saddletd::objectives::MetricMode;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize, PartialEq)]
pub struct Curve {
    pub algorithm: String,
    pub steps: Vec<usize>,
    /// Mean MSPBE over runs at each logged step.
    pub mspbe: Vec<f64>,
    pub diverged_runs: usize,
}

/// Mean MSPBE curves of TD(0), GTD2 and GTD2-MP on Baird's star.
pub fn baird_curves(alpha_td: f64, alpha_gtd2: f64, alpha_mp: f64, steps: usize, runs: usize, seed: u64) -> Result<Vec<Curve>, String> {
    let cadence = (steps / 80).max(1);
    let cfg = ExperimentConfig {
        domain: DomainName::Baird,
        learners: vec![
            LearnerConfig::constant(Algorithm::Td0, alpha_td),
            LearnerConfig::constant(Algorithm::Gtd2, alpha_gtd2),
            LearnerConfig::constant(Algorithm::Gtd2Mp, alpha_mp),
        ],
        n_steps: steps - steps % cadence,
        n_runs: runs,
        cadence,
        seed,
        ..Default::default()
    };
    let exp = harness::run_policy_eval(&cfg).map_err(|e| e.to_string())?;
    Ok((0..cfg.learners.len())
        .map(|li| {
            let rs: Vec<_> = exp.results.iter().filter(|r| r.learner_index == li).collect();
            let n = rs[0].steps.len();
            let mspbe = (0..n).map(|i| rs.iter().map(|r| r.mspbe[i]).sum::<f64>() / rs.len() as f64).collect();
            Curve {
                algorithm: rs[0].algorithm.clone(),
                steps: rs[0].steps.clone(),
                mspbe,
                diverged_runs: rs.iter().filter(|r| r.diverged()).count(),
            }
        })
        .collect())
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SweepPoint {
    pub algorithm: String,
    pub alpha: f64,
    /// Steady-state MSPBE, mean and standard deviation over runs.
    pub mspbe: f64,
    pub std: f64,
}

/// Steady-state MSPBE of GTD, GTD2 and GTD2-MP on the 50-state chain for
/// each step size.
pub fn chain_sweep(alphas: &[f64], steps: usize, runs: usize, seed: u64) -> Result<Vec<SweepPoint>, String> {
    let domain = Domain::build(DomainName::Chain50, &DomainOverrides::default()).map_err(|e| e.to_string())?;
    let cadence = (steps / 50).max(1);
    let mut out = Vec::new();
    for &alpha in alphas {
        let cfg = ExperimentConfig {
            domain: DomainName::Chain50,
            learners: [Algorithm::Gtd, Algorithm::Gtd2, Algorithm::Gtd2Mp]
                .into_iter()
                .map(|a| LearnerConfig::constant(a, alpha))
                .collect(),
            n_steps: steps - steps % cadence,
            n_runs: runs,
            cadence,
            seed,
            ..Default::default()
        };
        let exp = harness::run_policy_eval_on(&cfg, &domain).map_err(|e| e.to_string())?;
        let window = harness::window_len(cfg.n_steps / cadence + 1, cfg.window_fraction);
        for row in harness::summarize_steady_state(&exp.results, window).into_iter().filter(|r| r.metric == "mspbe") {
            out.push(SweepPoint { algorithm: row.algorithm, alpha, mspbe: row.mean, std: row.std });
        }
    }
    Ok(out)
}

/// Bound constants for both metrics at horizon `n` and confidence `delta`.
pub fn bounds(domain: &str, n: usize, delta: f64, c: f64) -> Result<Vec<harness::BoundRow>, String> {
    let name: DomainName = domain.parse().map_err(|e: saddletd::domains::DomainError| e.to_string())?;
    let dom = Domain::build(name, &DomainOverrides::default()).map_err(|e| e.to_string())?;
    let ex = dom.problem.exact_quantities().map_err(|e| e.to_string())?;
    [(MetricMode::Identity, "gtd"), (MetricMode::Covariance, "gtd2")]
        .into_iter()
        .map(|(metric, label)| {
            let radii = harness::default_radii(&dom.theta0, &ex, metric);
            harness::bound_row(&dom, &ex, label, metric, radii, n, c, delta).map_err(|e| e.to_string())
        })
        .collect()
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsValue> {
    value.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = bairdCurves)]
pub fn baird_curves_js(alpha_td: f64, alpha_gtd2: f64, alpha_mp: f64, steps: usize, runs: usize, seed: u32) -> Result<String, JsValue> {
    if steps == 0 || runs == 0 {
        return Err(JsValue::from_str("steps and runs must be positive"));
    }
    to_json(baird_curves(alpha_td, alpha_gtd2, alpha_mp, steps, runs, seed as u64))
}

#[wasm_bindgen(js_name = chainSweep)]
pub fn chain_sweep_js(alphas: Vec<f64>, steps: usize, runs: usize, seed: u32) -> Result<String, JsValue> {
    if steps == 0 || runs == 0 {
        return Err(JsValue::from_str("steps and runs must be positive"));
    }
    to_json(chain_sweep(&alphas, steps, runs, seed as u64))
}

#[wasm_bindgen(js_name = bounds)]
pub fn bounds_js(domain: &str, n: usize, delta: f64, c: f64) -> Result<String, JsValue> {
    to_json(bounds(domain, n, delta, c))
}
