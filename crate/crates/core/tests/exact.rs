use nalgebra::DVector;
use saddletd::domains::{Domain, DomainName, DomainOverrides};
use saddletd::harness;
use saddletd::objectives::MetricMode;

/// Extragradient on the exact saddle operator, written out independently of
/// the sampled learners. Baird's `A` has a singular value near `3e-3`, so the
/// last mode contracts slowly; the error falls monotonically and stays under
/// `1e-3` after `10⁴` steps.
#[test]
fn exact_mirror_prox_decreases_baird_saddle_error() {
    let dom = Domain::build(DomainName::Baird, &DomainOverrides::default()).unwrap();
    let ex = dom.problem.exact_quantities().unwrap();
    let mode = MetricMode::Covariance;
    let (rt, ry) = harness::default_radii(&dom.theta0, &ex, mode);
    let m = ex.metric(mode);
    let alpha = 1.0 / (2.0 * ex.norm_a.max(ex.tau(mode)));
    let project = |v: DVector<f64>, r: f64| {
        let n = v.norm();
        if n > r { v * (r / n) } else { v }
    };
    let grad_y = |t: &DVector<f64>, y: &DVector<f64>| &ex.b - &ex.a * t - &m * y;
    let grad_t = |y: &DVector<f64>| ex.a.transpose() * y;
    let (mut theta, mut y) = (dom.theta0.clone(), DVector::zeros(8));
    let mut checkpoints = vec![ex.saddle_error(&theta, &y, mode, rt, ry)];
    for k in 1..=10_000 {
        let ym = project(&y + grad_y(&theta, &y) * alpha, ry);
        let tm = project(&theta + grad_t(&y) * alpha, rt);
        let y_next = project(&y + grad_y(&tm, &ym) * alpha, ry);
        theta = project(&theta + grad_t(&ym) * alpha, rt);
        y = y_next;
        if k % 1000 == 0 {
            checkpoints.push(ex.saddle_error(&theta, &y, mode, rt, ry));
        }
    }
    assert!(checkpoints.windows(2).all(|w| w[1] <= w[0]), "{checkpoints:?}");
    assert!(*checkpoints.last().unwrap() <= 1e-3, "{checkpoints:?}");
    assert!(checkpoints[0] > 10.0);
}

/// On-policy chain: decayed-step TD(0) and GTD2 approach the TD fixed point.
#[test]
fn chain_gtd2_approaches_td_fixed_point() {
    use saddletd::learners::{Algorithm, Learner, LearnerConfig, Schedule};
    use saddletd::linalg;
    use saddletd::mdp::SamplingMode;
    let dom = Domain::build(DomainName::Chain50, &DomainOverrides::default()).unwrap();
    let p = &dom.problem;
    let ex = p.exact_quantities().unwrap();
    let fixed = linalg::solve_or_lstsq(&ex.a, &ex.b);
    let start = (&dom.theta0 - &fixed).norm();
    let distance = |algorithm: Algorithm, steps: usize| {
        let cfg = LearnerConfig::new(algorithm, Schedule::RobbinsMonro { alpha0: 0.5, epsilon: 0.05 });
        let mut learner = Learner::new(cfg, p.gamma(), dom.theta0.clone()).unwrap();
        let mut source = p.sampler().source(SamplingMode::Iid, Some(&p.xi), 0, 17, 0).unwrap();
        for _ in 0..steps {
            learner.step(&source.next_sample()).unwrap();
        }
        (learner.theta() - &fixed).norm()
    };
    let td = distance(Algorithm::Td0, 1_000_000);
    let gtd2 = distance(Algorithm::Gtd2, 1_000_000);
    assert!(td < 1e-2 * start, "TD(0): {start} → {td}");
    assert!(gtd2 < 0.25 * start, "GTD2: {start} → {gtd2}");
    assert!(ex.mspbe(&fixed) < 1e-20);
}
