use saddletd::domains::DomainName;
use saddletd::harness::{self, ExperimentConfig, Task};
use saddletd::learners::{Algorithm, LearnerConfig, Schedule};

fn small(domain: DomainName) -> ExperimentConfig {
    ExperimentConfig {
        domain,
        learners: vec![LearnerConfig::constant(Algorithm::Gtd2, 0.005), LearnerConfig::constant(Algorithm::Tdc, 0.005)],
        n_steps: 400,
        n_runs: 3,
        cadence: 50,
        seed: 5,
        ..Default::default()
    }
}

#[test]
fn curves_have_one_row_per_logged_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { out_dir: Some(dir.path().to_path_buf()), ..small(DomainName::Chain50) };
    let (exp, _) = harness::execute(&cfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    let rows = text.lines().count() - 1;
    assert_eq!(rows, cfg.learners.len() * cfg.n_runs * (cfg.n_steps / cfg.cadence + 1));
    assert_eq!(exp.results.len(), cfg.learners.len() * cfg.n_runs);
    let config: ExperimentConfig =
        ExperimentConfig::from_json(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(config, cfg);
}

#[test]
fn summary_is_recomputable_from_curves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { out_dir: Some(dir.path().to_path_buf()), ..small(DomainName::Baird) };
    let (_, summary) = harness::execute(&cfg).unwrap();
    let reread = harness::read_curves(&dir.path().join("curves.csv")).unwrap();
    let window = harness::window_len(cfg.n_steps / cfg.cadence + 1, cfg.window_fraction);
    let again = harness::summarize_steady_state(&reread, window);
    assert_eq!(summary.len(), again.len());
    for (a, b) in summary.iter().zip(&again) {
        assert_eq!((&a.algorithm, &a.metric, a.rank, a.n_runs), (&b.algorithm, &b.metric, b.rank, b.n_runs));
        let close = |x: f64, y: f64| (x.is_nan() && y.is_nan()) || (x - y).abs() <= 1e-12 * (1.0 + x.abs());
        assert!(close(a.mean, b.mean) && close(a.std, b.std), "{a:?} vs {b:?}");
    }
}

#[test]
fn empty_results_write_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(DomainName::Baird);
    harness::emit_artifacts(&cfg, &[], &[], &[], dir.path()).unwrap();
    for name in ["curves.csv", "summary.csv", "bounds.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
}

#[test]
fn same_seed_same_results_and_series_are_finite() {
    let cfg = small(DomainName::Chain50);
    let a = harness::run(&cfg).unwrap();
    let b = harness::run(&ExperimentConfig { threads: Some(1), ..cfg.clone() }).unwrap();
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!((&x.mspbe, &x.neu, &x.theta_bar), (&y.mspbe, &y.neu, &y.theta_bar));
        assert!(!x.diverged());
        assert!(x.mspbe.iter().chain(&x.msbe).chain(&x.neu).all(|v| v.is_finite()));
        assert!(x.err.iter().all(|v| v.is_nan()), "unprojected runs have no saddle error");
    }
}

#[test]
fn td_on_baird_is_flagged_divergent_and_frozen() {
    let cfg = ExperimentConfig {
        learners: vec![LearnerConfig::constant(Algorithm::Td0, 0.05)],
        n_steps: 20_000,
        n_runs: 2,
        cadence: 1000,
        ..small(DomainName::Baird)
    };
    let exp = harness::run(&cfg).unwrap();
    for r in &exp.results {
        assert!(r.diverged_at.is_some(), "TD(0) diverges on Baird");
        let n = r.theta_norm.len();
        assert!(r.theta_norm[n - 1] >= 1e12);
        assert_eq!(r.theta_norm[n - 1], r.theta_norm[n - 2], "the learner freezes once flagged");
    }
}

#[test]
fn theoretical_schedule_needs_radii() {
    let cfg = ExperimentConfig {
        learners: vec![LearnerConfig::new(Algorithm::Gtd2, Schedule::Theoretical { c: 1.0 })],
        ..small(DomainName::Baird)
    };
    assert!(harness::run(&cfg).is_err());
    let ok = ExperimentConfig {
        learners: vec![LearnerConfig::new(Algorithm::Gtd2, Schedule::Theoretical { c: 1.0 }).with_radii(20.0, 20.0)],
        ..small(DomainName::Baird)
    };
    let exp = harness::run(&ok).unwrap();
    assert_eq!(exp.bounds.len(), 1);
    let b = &exp.bounds[0];
    assert!((exp.results[0].alpha - b.alpha).abs() == 0.0 && b.alpha > 0.0);
    assert!(b.norm_a <= b.norm_a_bound && b.norm_b <= b.norm_b_bound);
    assert!(exp.results.iter().all(|r| r.audit_checks > 0 && r.audit_violations == 0));
}

#[test]
fn control_returns_are_logged_each_cadence() {
    let cfg = ExperimentConfig {
        domain: DomainName::Battery,
        task: Task::Control,
        learners: vec![LearnerConfig::constant(Algorithm::GqLambda, 0.001).with_lambda(0.3)],
        n_steps: 300,
        n_runs: 2,
        cadence: 100,
        eval_horizon: 100,
        eval_seeds: 2,
        ..Default::default()
    };
    let exp = harness::run(&cfg).unwrap();
    for r in &exp.results {
        assert_eq!(r.returns.len(), 4);
        assert_eq!(r.msbe.len(), 4);
        assert!(r.mspbe.iter().all(|v| v.is_nan()));
    }
    assert_eq!(exp.results[0].returns[0], exp.results[1].returns[0]);
}

#[test]
fn policy_eval_traces_require_trajectories() {
    let cfg = ExperimentConfig {
        learners: vec![LearnerConfig::constant(Algorithm::GqLambda, 0.01).with_lambda(0.5)],
        ..small(DomainName::Baird)
    };
    assert!(harness::run(&cfg).is_err());
}
