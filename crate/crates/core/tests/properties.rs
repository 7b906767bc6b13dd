use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use saddletd::domains::{self, BatteryConfig, BatteryDomain, BatteryState, Domain, DomainName, DomainOverrides};
use saddletd::features::{self, FeatureMap, FeatureMatrix};
use saddletd::harness;
use saddletd::learners::{self, Algorithm, LearnerConfig, SaddleIterate, StepParams, TraceState};
use saddletd::mdp::{self, FiniteMdp, Policy, Sample, SamplingMode};
use saddletd::objectives::{MetricMode, PolicyEvaluation};
use std::sync::OnceLock;

fn baird() -> &'static Domain {
    static D: OnceLock<Domain> = OnceLock::new();
    D.get_or_init(|| Domain::build(DomainName::Baird, &DomainOverrides::default()).unwrap())
}

fn chain() -> &'static Domain {
    static D: OnceLock<Domain> = OnceLock::new();
    D.get_or_init(|| Domain::build(DomainName::Chain50, &DomainOverrides::default()).unwrap())
}

fn battery() -> &'static BatteryDomain {
    static D: OnceLock<BatteryDomain> = OnceLock::new();
    D.get_or_init(|| BatteryDomain::new(BatteryConfig::default()).unwrap())
}

fn vec_strategy(d: usize, scale: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-scale..scale, d).prop_map(DVector::from_vec)
}

fn sample_strategy(d: usize) -> impl Strategy<Value = Sample> {
    (vec_strategy(d, 2.0), vec_strategy(d, 2.0), -2.0..2.0f64, 0.0..5.0f64)
        .prop_map(|(phi, phi_next, r, rho)| Sample::new(phi, phi_next, r, rho))
}

/// Random MDP with every action available: rows of `P` and the policies are
/// normalized positive draws.
fn random_mdp() -> impl Strategy<Value = (FiniteMdp, Policy, Policy)> {
    (2usize..6, 1usize..4).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(0.05..1.0f64, n * k * n),
            prop::collection::vec(-1.0..1.0f64, n * k),
            prop::collection::vec(0.05..1.0f64, n * k),
            prop::collection::vec(0.0..1.0f64, n * k),
            0.0..0.95f64,
        )
            .prop_map(move |(p, r, pb, pt, gamma)| {
                let successors = (0..n * k)
                    .map(|row| {
                        let w = &p[row * n..(row + 1) * n];
                        let total: f64 = w.iter().sum();
                        w.iter().enumerate().map(|(j, x)| (j, x / total)).collect()
                    })
                    .collect();
                let mdp = FiniteMdp::from_sparse(n, k, successors, r, gamma).unwrap();
                let norm = |v: &[f64]| {
                    let rows: Vec<Vec<f64>> = v
                        .chunks(k)
                        .map(|c| {
                            let t: f64 = c.iter().sum::<f64>().max(1e-12);
                            let mut row: Vec<f64> = c.iter().map(|x| x / t).collect();
                            if c.iter().sum::<f64>() < 1e-12 {
                                row = vec![1.0 / k as f64; k];
                            }
                            row
                        })
                        .collect();
                    Policy::new(rows).unwrap()
                };
                (mdp, norm(&pt), norm(&pb))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn importance_weights_within_rho_max((m, target, behavior) in random_mdp()) {
        let rho_max = mdp::rho_max(&target, &behavior);
        for s in 0..m.n_states() {
            for a in 0..m.n_actions() {
                let rho = mdp::importance_weight(&target, &behavior, s, a).unwrap();
                prop_assert!(rho >= 0.0 && rho <= rho_max + 1e-12);
            }
        }
    }

    #[test]
    fn true_values_are_bellman_fixed_points((m, target, _) in random_mdp()) {
        let v = mdp::true_values(&m, &target);
        let tv = m.bellman(&target, &v);
        prop_assert!((tv - &v).amax() <= 1e-10 * (1.0 + v.amax()));
    }

    #[test]
    fn induced_chain_is_stochastic((m, target, _) in random_mdp()) {
        let p = m.induced_chain(&target);
        for i in 0..p.nrows() {
            prop_assert!((p.row(i).sum() - 1.0).abs() <= 1e-12);
            prop_assert!(p.row(i).iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn unbiased_and_zero_bias_streams_agree(seed in any::<u64>(), run in 0u64..8) {
        let p = &baird().problem;
        let plain = p.sampler();
        let zero = p.sampler().with_rho_bias(0.0);
        let mut a = plain.source(SamplingMode::Iid, Some(&p.xi), 0, seed, run).unwrap();
        let mut b = zero.source(SamplingMode::Iid, Some(&p.xi), 0, seed, run).unwrap();
        for _ in 0..50 {
            prop_assert_eq!(a.next_sample(), b.next_sample());
        }
    }

    #[test]
    fn streams_replay_and_write_identically(seed in any::<u64>(), trajectory in any::<bool>()) {
        let p = &chain().problem;
        let mode = if trajectory { SamplingMode::Trajectory } else { SamplingMode::Iid };
        let setup = p.sampler();
        let write = || {
            let stream = if trajectory {
                mdp::sample_trajectory(&setup, 3, 40, seed).unwrap()
            } else {
                mdp::sample_iid(&setup, &p.xi, 40, seed).unwrap()
            };
            prop_assert_eq!(stream.mode, mode);
            let mut buf = Vec::new();
            stream.write_csv(&mut buf).unwrap();
            Ok(buf)
        };
        prop_assert_eq!(write()?, write()?);
    }

    #[test]
    fn feature_rows_bounded_by_l_sqrt_d(name in prop::sample::select(vec![DomainName::Baird, DomainName::Chain50])) {
        let dom = if name == DomainName::Baird { baird() } else { chain() };
        let f = &dom.problem.features;
        let bound = f.bound() * (f.dim() as f64).sqrt();
        for s in 0..f.n_states() {
            let row = f.featurize(s).unwrap();
            prop_assert!(row.amax() <= f.bound());
            prop_assert!(row.norm() <= bound + 1e-12);
        }
    }

    #[test]
    fn bebf_columns_are_xi_orthonormal((m, target, _) in random_mdp(), k in 1usize..4) {
        let n = m.n_states();
        let xi = DVector::from_element(n, 1.0 / n as f64);
        let empty = FeatureMatrix::new(DMatrix::zeros(n, 0)).unwrap();
        let basis = match features::bebf_expand(&m, &target, &xi, &empty, k.min(n)) {
            Ok(b) => b,
            Err(features::FeatureError::DegenerateResidual { basis, .. }) => basis,
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let phi = basis.as_matrix();
        let gram = phi.transpose() * DMatrix::from_diagonal(&xi) * phi;
        let eye = DMatrix::<f64>::identity(phi.ncols(), phi.ncols());
        prop_assert!((gram - eye).amax() <= 1e-8);
    }

    #[test]
    fn saddle_error_nonnegative_and_audit_holds(
        theta in vec_strategy(8, 1.0),
        y in vec_strategy(8, 1.0),
        identity in any::<bool>(),
        t_scale in 0.0..1.0f64,
        y_scale in 0.0..1.0f64,
    ) {
        let dom = baird();
        let ex = dom.problem.exact_quantities().unwrap();
        let mode = if identity { MetricMode::Identity } else { MetricMode::Covariance };
        let (rt, ry) = harness::default_radii(&dom.theta0, &ex, mode);
        let theta = &theta * (t_scale * rt / theta.norm().max(1.0));
        let y = &y * (y_scale * ry / y.norm().max(1.0));
        let err = ex.saddle_error(&theta, &y, mode, rt, ry);
        prop_assert!(err >= -1e-9);
        let (lhs, rhs) = ex.residual_audit_sides(&theta, &y, mode, rt, ry);
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn projected_steps_stay_in_balls(
        samples in prop::collection::vec(sample_strategy(3), 1..30),
        alpha in 0.01..1.0f64,
        rt in 0.1..2.0f64,
        ry in 0.1..2.0f64,
        mp in any::<bool>(),
    ) {
        let mut p = StepParams::new(alpha, 0.9, MetricMode::Covariance);
        p.r_theta = rt;
        p.r_y = ry;
        let mut it = SaddleIterate::zeros(3);
        for smp in &samples {
            if mp {
                learners::mirror_prox_step(&mut it, smp, &p).unwrap();
            } else {
                learners::gtd_family_step(&mut it, smp, &p).unwrap();
            }
            prop_assert!(it.theta.norm() <= rt * (1.0 + 1e-12));
            prop_assert!(it.y.norm() <= ry * (1.0 + 1e-12));
        }
    }

    #[test]
    fn polyak_average_matches_logged_iterates(
        samples in prop::collection::vec(sample_strategy(3), 1..30),
        alpha in 0.001..0.2f64,
    ) {
        let p = StepParams::new(alpha, 0.9, MetricMode::Identity);
        let mut it = SaddleIterate::new(DVector::from_element(3, 0.5), DVector::zeros(3));
        let mut visited = Vec::new();
        for smp in &samples {
            visited.push(it.theta.clone());
            learners::gtd_family_step(&mut it, smp, &p).unwrap();
        }
        let recomputed = visited.iter().fold(DVector::zeros(3), |acc, v| acc + v) / visited.len() as f64;
        prop_assert!((it.theta_bar() - &recomputed).amax() <= 1e-12 * (1.0 + recomputed.amax()));
    }

    #[test]
    fn zero_weights_freeze_gtd_theta(samples in prop::collection::vec(sample_strategy(4), 1..30)) {
        let p = StepParams::new(0.1, 0.9, MetricMode::Identity);
        let theta0 = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let mut it = SaddleIterate::new(theta0.clone(), DVector::zeros(4));
        for smp in &samples {
            let mut smp = smp.clone();
            smp.rho = 0.0;
            learners::gtd_family_step(&mut it, &smp, &p).unwrap();
        }
        prop_assert_eq!(it.theta, theta0);
    }

    #[test]
    fn gq_without_traces_equals_gtd2_mp(
        samples in prop::collection::vec(sample_strategy(3), 1..20),
        alpha in 0.001..0.3f64,
    ) {
        let p = StepParams::new(alpha, 0.9, MetricMode::Covariance);
        let mut a = SaddleIterate::zeros(3);
        let mut b = SaddleIterate::zeros(3);
        let mut tr = TraceState::new(3);
        for smp in &samples {
            learners::mirror_prox_step(&mut a, smp, &p).unwrap();
            learners::gq_mp_learn_step(&mut b, &mut tr, smp, &p).unwrap();
            prop_assert_eq!(&tr.e, &smp.phi);
        }
        prop_assert_eq!(a, b);
    }

    #[test]
    fn mirror_prox_and_sgd_agree_to_first_order(smp in sample_strategy(3), theta in vec_strategy(3, 1.0), y in vec_strategy(3, 1.0)) {
        let increment = |alpha: f64, mp: bool| {
            let p = StepParams::new(alpha, 0.9, MetricMode::Covariance);
            let mut it = SaddleIterate::new(theta.clone(), y.clone());
            if mp {
                learners::mirror_prox_step(&mut it, &smp, &p).unwrap();
            } else {
                learners::gtd_family_step(&mut it, &smp, &p).unwrap();
            }
            let mut inc = (&it.theta - &theta).as_slice().to_vec();
            inc.extend((&it.y - &y).as_slice());
            DVector::from_vec(inc)
        };
        let gap = |alpha: f64| (increment(alpha, true) - increment(alpha, false)).norm();
        let (g1, g2) = (gap(1e-3), gap(5e-4));
        if g1 > 1e-13 {
            let ratio = g2 / g1;
            prop_assert!((ratio - 0.25).abs() <= 0.02, "halving α scaled the gap by {}", ratio);
        }
    }

    #[test]
    fn battery_moves_keep_charge_within_capacity(
        x in 0usize..=10,
        s in 0usize..=10,
        u in -10i64..=10,
        price in 0usize..5,
        next_price in 0usize..5,
        draw in 0.0..1.0f64,
    ) {
        let bd = battery();
        let x = x.min(s);
        let st = BatteryState { x, s, price };
        match bd.battery_transition(st, u, next_price, draw) {
            Ok(next) => {
                prop_assert!(bd.is_available(st, u));
                prop_assert!(next.x <= next.s && next.s <= st.s && next.s <= 10);
                prop_assert_eq!(next.price, next_price);
                if next.s == st.s {
                    prop_assert_eq!(next.x as i64, x as i64 + u);
                }
            }
            Err(_) => prop_assert!(!bd.is_available(st, u)),
        }
    }

    #[test]
    fn learner_config_round_trips(
        alpha in 1e-5..1.0f64,
        lambda in 0.0..0.99f64,
        algo in prop::sample::select(vec![Algorithm::Gtd, Algorithm::Gtd2Mp, Algorithm::GqLambda, Algorithm::Tdc]),
    ) {
        let cfg = LearnerConfig::constant(algo, alpha).with_lambda(lambda).with_radii(3.0, 4.0);
        let text = serde_json::to_string(&cfg).unwrap();
        let back: LearnerConfig = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn tabular_features_are_identity() {
    let f = FeatureMap::tabular(6);
    assert_eq!(f.table().as_matrix(), &DMatrix::<f64>::identity(6, 6));
}

#[test]
fn baird_weights_and_zero_dashed_contributions() {
    let p = &baird().problem;
    assert_eq!(p.rho_max(), 7.0);
    for (_, smp) in p.transition_support() {
        let dashed = smp.action == Some(0);
        assert_eq!(smp.rho, if dashed { 0.0 } else { 7.0 });
        if dashed {
            let (a, b, _) = saddletd::objectives::sample_estimates(&smp, p.gamma());
            assert_eq!(a.amax(), 0.0);
            assert_eq!(b.amax(), 0.0);
        }
    }
}

#[test]
fn chain_is_on_policy_with_stochastic_rows() {
    let p = &chain().problem;
    assert!(p.is_on_policy());
    assert_eq!(p.rho_max(), 1.0);
    let m = domains::chain_mdp(5, &[4], 0.9, 0.9).unwrap();
    assert!((m.transition_prob(0, 0, 0) - 0.9).abs() < 1e-15);
    assert!((m.transition_prob(0, 0, 1) - 0.1).abs() < 1e-15);
    assert_eq!(m.transition_prob(4, 1, 4), 0.9);
    for s in 0..5 {
        for a in 0..2 {
            let total: f64 = (0..5).map(|j| m.transition_prob(s, a, j)).sum();
            assert!((total - 1.0).abs() < 1e-15);
        }
    }
}

#[test]
fn reachable_battery_states_respect_capacity() {
    let bd = battery();
    let dom = bd.domain().unwrap();
    let p = &dom.problem;
    let mut seen = vec![false; p.mdp.n_states()];
    let mut stack = vec![bd.start_state()];
    seen[bd.start_state()] = true;
    while let Some(i) = stack.pop() {
        let st = bd.state(i);
        assert!(st.x <= st.s && st.s <= 10);
        for a in p.mdp.available_actions(i) {
            for &(j, _) in p.mdp.successors(i, a) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
}

#[test]
fn policy_evaluation_rejects_unsupported_target() {
    let m = domains::chain_mdp(3, &[2], 0.9, 0.9).unwrap();
    let behavior = Policy::deterministic(2, &[0, 0, 0]).unwrap();
    let target = Policy::deterministic(2, &[1, 1, 1]).unwrap();
    let xi = DVector::from_element(3, 1.0 / 3.0);
    assert!(PolicyEvaluation::new(m, target, behavior, xi, FeatureMap::tabular(3)).is_err());
}
