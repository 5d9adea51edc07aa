use nalgebra::DMatrix;
use proptest::prelude::*;
use stabent_core::dynamics::{closed_loop, ControlRange, ControlSystem, FnSystem, Region};
use stabent_core::exec::Sequential;
use stabent_core::feedback::{FeedbackLaw, FnFeedback};
use stabent_core::linalg::eigenvalues;
use stabent_core::models::{
    asymptotic_equilibrium, cardano_equilibrium, chain_attractors, chain_system, fit_overshoot_m, gains_for_poles,
    pwl_equilibria, pwl_sweep, quad_jacobian, quadratic_discriminant, quadratic_gain, quadratic_residual,
    quadratic_sweep, synthesize_pwl, synthesize_quadratic, verify_practical_stability, ChainParams, ChainSystem,
    CubicParams, CubicSystem, QuadraticParams, QuadraticSystem, Synthesis, SynthesisOptions,
};
use stabent_core::Error;

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn central_difference<S: ControlSystem>(sys: &S, x: &[f64], u: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let h = 1e-6;
    let mut j = DMatrix::zeros(n, n);
    let (mut fp, mut fm) = (vec![0.0; n], vec![0.0; n]);
    for c in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[c] += h;
        xm[c] -= h;
        sys.field(&xp, u, &mut fp);
        sys.field(&xm, u, &mut fm);
        for r in 0..n {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() <= 1e-5 * (1.0 + q.abs()))
}

const QUAD_DEMO: QuadraticParams = QuadraticParams { lambda: 1.0, alpha0: 0.5, beta0: 1.0, gamma0: -1.0 };

const CUBIC_DEMO: CubicParams =
    CubicParams { lambda: 1.0, alpha0: 0.0, beta0: 0.5, gamma0: 1.0, alpha1: 0.0, beta1: 0.0, gamma1: 0.5, eta1: 1.0 };

#[test]
fn degenerate_quadratic_has_exact_jacobian_limit() {
    let p = QuadraticParams { lambda: 2.0, alpha0: 0.0, beta0: 0.0, gamma0: -0.7 };
    for q in [1.0, 10.0, 1e4] {
        let e = cardano_equilibrium(&p, q).unwrap();
        let want = (-2.0 / (-0.7 * q * q)).cbrt();
        assert!((e - want).abs() < 1e-12 * want.abs());
        assert!((quad_jacobian(&p, q, e) + 6.0).abs() < 1e-9);
    }
}

#[test]
fn quadratic_equilibrium_scales_like_q_to_minus_two_thirds() {
    let qs: Vec<f64> = (0..20).map(|i| 10f64.powf(2.0 + 4.0 * i as f64 / 19.0)).collect();
    let pts = quadratic_sweep(&QUAD_DEMO, &qs).unwrap();
    assert_eq!(pts.len(), qs.len());
    let lx: Vec<f64> = pts.iter().map(|p| p.q.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.equilibrium.abs().ln()).collect();
    assert!((slope(&lx, &ly) + 2.0 / 3.0).abs() < 1e-2);
    let last = pts.last().unwrap();
    assert!((last.jacobian + 3.0).abs() / 3.0 < 1e-2);
    assert!((last.equilibrium / asymptotic_equilibrium(&QUAD_DEMO, last.q) - 1.0).abs() < 1e-2);
}

#[test]
fn negative_discriminant_is_rejected() {
    let p = QuadraticParams { lambda: 0.01, alpha0: 0.0, beta0: 2.0, gamma0: 1.0 };
    assert!(quadratic_discriminant(&p, 1.0) < 0.0);
    assert!(matches!(cardano_equilibrium(&p, 1.0), Err(Error::Discriminant(_))));
    assert!(quadratic_sweep(&p, &[1.0]).unwrap().is_empty());
    assert!(cardano_equilibrium(&QUAD_DEMO, 0.0).is_err());
    let bad = QuadraticParams { gamma0: 0.0, ..QUAD_DEMO };
    assert!(cardano_equilibrium(&bad, 1.0).is_err());
}

fn quad_params() -> impl Strategy<Value = QuadraticParams> {
    (0.1..3.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.2..3.0f64, any::<bool>()).prop_map(|(lambda, alpha0, beta0, g, neg)| {
        QuadraticParams { lambda, alpha0, beta0, gamma0: if neg { -g } else { g } }
    })
}

fn cubic_params() -> impl Strategy<Value = CubicParams> {
    (
        0.1..3.0f64,
        prop::collection::vec(-1.0..1.0f64, 6),
        0.2..2.0f64,
        any::<bool>(),
    )
        .prop_map(|(lambda, c, e, neg)| CubicParams {
            lambda,
            alpha0: c[0],
            beta0: c[1],
            gamma0: c[2],
            alpha1: c[3],
            beta1: c[4],
            gamma1: c[5],
            eta1: if neg { -e } else { e },
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn cardano_agrees_with_bisection(p in quad_params(), lq in 0.0..4.0f64, neg in any::<bool>()) {
        let q = if neg { -10f64.powf(lq) } else { 10f64.powf(lq) };
        prop_assume!(quadratic_discriminant(&p, q) > 1e-12);
        let e = cardano_equilibrium(&p, q).unwrap();
        let k = quadratic_gain(&p);
        let c = p.alpha0 + p.beta0 * k + p.gamma0 * k * k;
        let g = |x: f64| p.lambda + c * x + p.gamma0 * q * q * x * x * x;
        // Cauchy bound for the monic cubic
        let lead = p.gamma0 * q * q;
        let bound = 1.0 + (c / lead).abs().max((p.lambda / lead).abs());
        let root = bisect(g, -bound, bound);
        prop_assert!((e - root).abs() <= 1e-9 * root.abs().max(1e-300) + 1e-15, "{e} vs {root}");
        let scale = p.lambda + (c * e).abs() + (p.gamma0 * q * q * e * e * e).abs();
        prop_assert!(quadratic_residual(&p, q, e).abs() <= 1e-9 * scale);
    }

    #[test]
    fn quadratic_jacobian_matches_closed_loop_derivative(p in quad_params(), lq in 0.0..3.0f64) {
        let q = 10f64.powf(lq);
        prop_assume!(quadratic_discriminant(&p, q) > 1e-12);
        let e = cardano_equilibrium(&p, q).unwrap();
        let sys = QuadraticSystem::new(p, ControlRange::unbounded(1), None).unwrap();
        let fb = FeedbackLaw::quadratic(quadratic_gain(&p), q);
        let h = 1e-6 * e.abs().max(1e-6);
        let closed = |x: f64| {
            let mut dx = [0.0];
            sys.field(&[x], &[fb.eval_scalar(x)], &mut dx);
            dx[0]
        };
        let fd = (closed(e + h) - closed(e - h)) / (2.0 * h);
        let j = quad_jacobian(&p, q, e);
        prop_assert!((fd - j).abs() <= 1e-4 * (1.0 + j.abs()), "{fd} vs {j}");
    }

    #[test]
    fn pwl_equilibria_solve_the_closed_loop(p in cubic_params(), lk in 0.0..3.0f64) {
        let k = -p.eta1.signum() * 10f64.powf(lk);
        let Ok([a, b]) = pwl_equilibria(&p, k, k) else { return Ok(()) };
        prop_assert!(a.equilibrium > 0.0 && b.equilibrium < 0.0);
        let sys = CubicSystem::new(p, ControlRange::unbounded(1), None).unwrap();
        let fb = FeedbackLaw::piecewise_linear(k, k);
        let closed = |x: f64| {
            let mut dx = [0.0];
            sys.field(&[x], &[fb.eval_scalar(x)], &mut dx);
            dx[0]
        };
        for eq in [a, b] {
            let e = eq.equilibrium;
            let scale = p.lambda * e.abs() + (p.delta0(k) * e * e).abs() + (p.delta1(k) * e * e * e).abs();
            prop_assert!(closed(e).abs() <= 1e-9 * scale);
            let h = 1e-6 * e.abs();
            let fd = (closed(e + h) - closed(e - h)) / (2.0 * h);
            prop_assert!((fd - eq.jacobian).abs() <= 1e-4 * (1.0 + eq.jacobian.abs()), "{fd} vs {}", eq.jacobian);
        }
    }

    #[test]
    fn model_jacobians_match_finite_differences(
        qp in quad_params(),
        cp in cubic_params(),
        x in prop::collection::vec(-1.0..1.0f64, 3),
        u in -2.0..2.0f64,
        gammas in prop::collection::vec(-1.0..1.0f64, 2),
    ) {
        let q = QuadraticSystem::new(qp, ControlRange::unbounded(1), None).unwrap();
        prop_assert!(close(&q.jacobian(&x[..1], &[u]), &central_difference(&q, &x[..1], &[u])));
        let c = CubicSystem::new(cp, ControlRange::unbounded(1), None).unwrap();
        prop_assert!(close(&c.jacobian(&x[..1], &[u]), &central_difference(&c, &x[..1], &[u])));
        let chain = ChainSystem::new(
            ChainParams { lambda: qp.lambda, alpha0: qp.alpha0, beta0: qp.beta0, gammas, k1: -1.0, k2: vec![-2.0, -3.0] },
            ControlRange::unbounded(1),
        )
        .unwrap();
        let j = chain.jacobian(&x, &[u]);
        prop_assert!(close(&j, &central_difference(&chain, &x, &[u])));
        prop_assert!((chain.divergence(&x, &[u]) - j[(0, 0)]).abs() < 1e-12);
    }
}

#[test]
fn pwl_equilibria_shrink_with_the_gain() {
    let ks: Vec<f64> = (0..20).map(|i| -10f64.powf(2.0 + 4.0 * i as f64 / 19.0)).collect();
    let pts = pwl_sweep(&CUBIC_DEMO, &ks);
    assert_eq!(pts.len(), ks.len());
    let lk: Vec<f64> = ks.iter().map(|k| k.abs().ln()).collect();
    let l1: Vec<f64> = pts.iter().map(|p| p[0].equilibrium.ln()).collect();
    let l2: Vec<f64> = pts.iter().map(|p| (-p[1].equilibrium).ln()).collect();
    assert!((slope(&lk, &l1) + 1.0).abs() < 1e-2);
    // the roots multiply to lambda / D1 ~ |k|^-3, so the outer one decays faster
    assert!((slope(&lk, &l2) + 2.0).abs() < 1e-2);
    assert!(pts.iter().all(|p| p[0].jacobian < 0.0 && p[1].jacobian < 0.0));
}

#[test]
fn pwl_gain_signs_are_checked() {
    assert!(pwl_equilibria(&CUBIC_DEMO, 1.0, -1.0).is_err());
    assert!(pwl_equilibria(&CUBIC_DEMO, -1.0, 0.0).is_err());
    let bad = CubicParams { eta1: 0.0, ..CUBIC_DEMO };
    assert!(pwl_equilibria(&bad, -1.0, -1.0).is_err());
}

#[test]
fn pole_placement_for_the_chain() {
    for poles in [vec![-1.0, -2.0], vec![-0.5, -1.0, -3.0], vec![-2.0]] {
        let k2 = gains_for_poles(&poles);
        let p = ChainParams { lambda: 0.1, alpha0: 0.0, beta0: 0.5, gammas: vec![0.0; poles.len()], k1: 0.0, k2 };
        let closed = p.a2() + p.b2() * DMatrix::from_row_slice(1, poles.len(), &p.k2);
        let mut got: Vec<f64> = eigenvalues(&closed).unwrap().iter().map(|e| e.re).collect();
        got.sort_by(f64::total_cmp);
        let mut want = poles.clone();
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn chain_feedback_must_stabilize_the_integrators() {
    let p = ChainParams { lambda: 0.1, alpha0: 0.0, beta0: 0.5, gammas: vec![-1.0, 0.0], k1: -2.0, k2: vec![1.0, -3.0] };
    assert!(chain_system(p, ControlRange::unbounded(1)).is_err());
    let short = ChainParams { lambda: 0.1, alpha0: 0.0, beta0: 0.5, gammas: vec![-1.0, 0.0], k1: -2.0, k2: vec![-2.0] };
    assert!(chain_system(short, ControlRange::unbounded(1)).is_err());
}

#[test]
fn chain_closed_loop_settles() {
    let p = ChainParams {
        lambda: 0.1,
        alpha0: 0.0,
        beta0: 0.5,
        gammas: vec![-1.0, 0.0],
        k1: -2.0,
        k2: gains_for_poles(&[-1.0, -2.0]),
    };
    let (sys, law) = chain_system(p, ControlRange::unbounded(1)).unwrap();
    let seeds = vec![vec![0.3, 0.05, 0.0], vec![0.2, -0.1, 0.1]];
    let att = chain_attractors(&sys, &law, &seeds, 100.0, 0.05).unwrap();
    for a in &att {
        assert!(a.residual < 1e-6, "{a:?}");
        assert!(a.state.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn overshoot_fit_on_scalar_decay() {
    let decay = FnSystem::new(
        1,
        ControlRange::symmetric(1, 1.0),
        |x: &[f64], _: &[f64], dx: &mut [f64]| dx[0] = -x[0],
        |_: &[f64], _: &[f64]| DMatrix::from_element(1, 1, -1.0),
    );
    let zero = FnFeedback::new(1, |_, u| u[0] = 0.0);
    let grid = Region::cuboid(vec![0.5], vec![1.0]).unwrap().grid(&[6]).unwrap();
    // decay faster than alpha: the ratio peaks at t = 0
    let fit = fit_overshoot_m(&decay, &zero, &grid, 0.5, &[0.0], 2.0, 0.01, &Sequential).unwrap();
    assert!((fit.m_hat - 1.05).abs() < 1e-12);
    // decay slower than alpha: the ratio peaks at the horizon
    let fit = fit_overshoot_m(&decay, &zero, &grid, 2.0, &[0.0], 2.0, 0.01, &Sequential).unwrap();
    assert!((fit.m_hat / (1.05 * 2f64.exp()) - 1.0).abs() < 1e-8);
    assert!(!fit.suspicious);
    assert_eq!((fit.control_min, fit.control_max), (0.0, 0.0));
}

#[test]
fn overshoot_fit_rejects_repelling_points() {
    let growth = FnSystem::new(
        1,
        ControlRange::symmetric(1, 1.0),
        |x: &[f64], _: &[f64], dx: &mut [f64]| dx[0] = x[0],
        |_: &[f64], _: &[f64]| DMatrix::from_element(1, 1, 1.0),
    );
    let zero = FnFeedback::new(1, |_, u| u[0] = 0.0);
    let grid = Region::cuboid(vec![0.5], vec![1.0]).unwrap().grid(&[3]).unwrap();
    assert!(matches!(
        fit_overshoot_m(&growth, &zero, &grid, 1.0, &[0.0], 1.0, 0.01, &Sequential),
        Err(Error::NonAttraction { index: 0 })
    ));
}

#[test]
fn control_ranges_from_visited_values() {
    let (rho, r, one) = Synthesis::range_from_controls(0.5, 2.0);
    assert!((rho - 2.2).abs() < 1e-12 && one);
    assert_eq!((r.lower()[0], r.upper()[0]), (0.0, rho));
    let (rho, r, one) = Synthesis::range_from_controls(-3.0, -1.0);
    assert!((rho - 3.3).abs() < 1e-12 && one);
    assert_eq!((r.lower()[0], r.upper()[0]), (-rho, 0.0));
    let (rho, r, one) = Synthesis::range_from_controls(-1.0, 2.0);
    assert!(!one);
    assert_eq!((r.lower()[0], r.upper()[0]), (-rho, rho));
}

#[test]
fn quadratic_synthesis_is_practically_stable() {
    let gamma = Region::cuboid(vec![0.25], vec![0.5]).unwrap();
    let (eps, alpha) = (0.3, 0.5);
    let s = synthesize_quadratic(&QUAD_DEMO, eps, alpha, &gamma, &SynthesisOptions::default(), &Sequential).unwrap();
    let e = s.equilibria[0];
    assert!(s.jacobians[0] < -alpha);
    assert!(e.abs() < eps / (2.0 * s.fit.m_hat));
    assert!(s.sign_consistent);
    let m = match s.zeta {
        stabent_core::dynamics::KlFunction::Exponential { m, .. } => m,
        _ => unreachable!(),
    };
    assert_eq!(m, s.fit.m_hat);
    // the closed loop stays inside the synthesized range
    let bounded = QuadraticSystem::new(QUAD_DEMO, s.control_range.clone(), None).unwrap();
    let grid = gamma.grid(&[41]).unwrap();
    let target = Region::point(vec![0.0]);
    let v = verify_practical_stability(&bounded, &s.feedback, &s.zeta, eps, &grid, &target, 20.0, s.dt, &Sequential).unwrap();
    assert!(v.pass, "min margin {}", v.min_margin);
    for x0 in grid.iter() {
        closed_loop(&bounded, &s.feedback, x0, 5.0, s.dt).unwrap();
    }
}

#[test]
fn pwl_synthesis_is_practically_stable() {
    let gamma = Region::cuboid(vec![-0.5], vec![0.5]).unwrap();
    let (eps, alpha) = (0.3, 0.5);
    let s = synthesize_pwl(&CUBIC_DEMO, eps, alpha, &gamma, &SynthesisOptions::default(), &Sequential).unwrap();
    assert_eq!(s.equilibria.len(), 2);
    assert!(s.equilibria[0] > 0.0 && s.equilibria[1] < 0.0);
    assert!(s.jacobians.iter().all(|j| *j < -alpha));
    let bounded = CubicSystem::new(CUBIC_DEMO, s.control_range.clone(), None).unwrap();
    let grid = gamma.grid(&[41]).unwrap();
    let target = Region::point(vec![0.0]);
    let v = verify_practical_stability(&bounded, &s.feedback, &s.zeta, eps, &grid, &target, 20.0, s.dt, &Sequential).unwrap();
    assert!(v.pass, "min margin {}", v.min_margin);
}

#[test]
fn tight_envelope_fails_verification() {
    let gamma = Region::cuboid(vec![0.25], vec![0.5]).unwrap();
    let s = synthesize_quadratic(&QUAD_DEMO, 0.3, 0.5, &gamma, &SynthesisOptions::default(), &Sequential).unwrap();
    let sys = QuadraticSystem::new(QUAD_DEMO, ControlRange::unbounded(1), None).unwrap();
    let grid = gamma.grid(&[11]).unwrap();
    let target = Region::point(vec![0.0]);
    let fast = stabent_core::dynamics::KlFunction::exponential(50.0, 1.0).unwrap();
    let v = verify_practical_stability(&sys, &s.feedback, &fast, 1e-3, &grid, &target, 2.0, s.dt, &Sequential).unwrap();
    assert!(!v.pass && v.min_margin < 0.0);
    assert_eq!(v.margins.len(), 11);
}

#[test]
fn synthesis_preconditions() {
    let pos = Region::cuboid(vec![0.25], vec![0.5]).unwrap();
    let neg = Region::cuboid(vec![-0.5], vec![-0.25]).unwrap();
    let opts = SynthesisOptions::default();
    assert!(synthesize_quadratic(&QUAD_DEMO, 0.3, 3.0, &pos, &opts, &Sequential).is_err());
    assert!(synthesize_quadratic(&QUAD_DEMO, 0.3, 0.5, &neg, &opts, &Sequential).is_err());
    let stable = QuadraticParams { lambda: -1.0, ..QUAD_DEMO };
    assert!(synthesize_quadratic(&stable, 0.3, 0.5, &pos, &opts, &Sequential).is_err());
    let few = SynthesisOptions { max_doublings: 1, ..opts };
    assert!(matches!(synthesize_quadratic(&QUAD_DEMO, 1e-6, 0.5, &pos, &few, &Sequential), Err(Error::SynthesisFailed(_))));
}
