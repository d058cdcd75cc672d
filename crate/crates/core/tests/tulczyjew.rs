use proptest::prelude::*;
use socp_core::checks::{composition_residuals, pmp_geometric_residual, reduced_poincare_cartan_residual, run_suite};
use socp_core::error::Error;
use socp_core::formulations::lagrangian_grad_s;
use socp_core::model::{samples, Model};
use socp_core::optimality::{solve_max_condition, Formulation};
use socp_core::registry;
use socp_core::tulczyjew::*;

fn pt(chart: Chart, n: usize, m: usize, c: &[f64]) -> TwistedPoint {
    TwistedPoint::new(chart, n, m, c.to_vec()).unwrap()
}

#[test]
fn coordinate_rearrangements() {
    let x = pt(Chart::TTStarQ, 1, 0, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(alpha(&x).unwrap().coords, vec![1.0, 3.0, 4.0, 2.0]);
    assert_eq!(alpha(&x).unwrap().chart, Chart::TStarTQ);
    assert_eq!(beta(&x).unwrap().coords, vec![1.0, 2.0, -4.0, 3.0]);
    assert_eq!(beta(&x).unwrap().chart, Chart::TStarTStarQ);
    let y = pt(Chart::TTQ, 1, 0, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(kappa(&y).unwrap().coords, vec![1.0, 3.0, 2.0, 4.0]);
    let z = pt(Chart::TTQKappa, 1, 1, &[1.0, 2.0, 3.0, 4.0, 9.0]);
    let k = kappa(&z).unwrap();
    assert_eq!((k.chart, k.coords), (Chart::TTQ, vec![1.0, 3.0, 2.0, 4.0, 9.0]));
}

#[test]
fn wrong_chart_is_rejected() {
    let x = pt(Chart::TStarTQ, 1, 0, &[1.0, 2.0, 3.0, 4.0]);
    assert!(matches!(alpha(&x), Err(Error::Chart { .. })));
    assert!(matches!(beta_inv(&x), Err(Error::Chart { .. })));
    assert!(matches!(TwistedPoint::new(Chart::TTQ, 1, 1, vec![0.0; 4]), Err(Error::Dimension(_))));
    let with_control = pt(Chart::TTQ, 1, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
    assert!(kappa(&with_control).is_err());
}

#[test]
fn beta_after_alpha_inverse_sends_lambda_q_to_minus_p_q() {
    // (q, v, λ_q, λ_v) ↦ (q, κ = λ_v, p_q = −λ_q, p_κ = v)
    let x = pt(Chart::TStarTQ, 1, 1, &[0.5, 1.5, 2.5, 3.5, 7.0]);
    let y = beta(&alpha_inv(&x).unwrap()).unwrap();
    assert_eq!(y.coords, vec![0.5, 3.5, -2.5, 1.5, 7.0]);
}

#[test]
fn musical_maps() {
    let di = registry::problem("double_integrator").unwrap();
    let x = pt(Chart::TTQ, 1, 1, &[0.3, 0.4, 1.5, -2.0, 0.7]);
    let f = musical_flat(&di, &x).unwrap();
    // Unit mass, velocity-independent force: κ = ξ and v_κ = v_ξ.
    assert_eq!(f.coords, vec![0.3, 0.4, -2.0, 1.5, 0.7]);

    let lt = registry::problem("low_thrust").unwrap();
    let (r, xi) = (1.3, [0.4, -0.6]);
    let x = pt(Chart::TTQ, 2, 1, &[r, 0.2, 0.1, 0.9, xi[0], xi[1], 0.3, 0.2, 0.5]);
    let f = musical_flat(&lt, &x).unwrap();
    assert!((f.block(3)[0] - xi[0]).abs() < 1e-15);
    assert!((f.block(3)[1] - r * r * xi[1]).abs() < 1e-15);
    let back = musical_sharp(&lt, &f).unwrap();
    assert!(socp_core::linalg::max_abs_diff(&back.coords, &x.coords) <= 1e-12);

    let s = registry::problem("scalar_regular").unwrap();
    assert!(matches!(musical_flat(&s, &pt(Chart::TTQ, 1, 1, &[0.0; 5])), Err(Error::Unsupported(_))));
}

#[test]
fn chi_tilde_one_places_xi_as_the_last_momentum() {
    let di = registry::problem("double_integrator").unwrap();
    let x = pt(Chart::TStarTQLagrangian, 1, 1, &[1.0, 2.0, 3.0, 4.0, 0.5]);
    let y = chi_tilde1(&di, &x).unwrap();
    assert_eq!(y.chart, Chart::TStarTStarQForced);
    assert_eq!(y.coords, vec![1.0, 4.0, -3.0, 2.0, 0.5]);
}

#[test]
fn canonical_forms() {
    let w = presymplectic_form(Chart::TStarTQ, 1, 1).unwrap();
    let expect = [
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [-1.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0, 0.0],
        [0.0; 5],
    ];
    for (i, row) in expect.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert_eq!(w.matrix[(i, j)], *v);
        }
    }
    assert!(presymplectic_form(Chart::TTQ, 1, 0).is_err());
    assert_eq!(geometric_residual(&w, &[0.0; 5], &[0.0; 4], 1), 0.0);
}

#[test]
fn fields_satisfy_their_geometric_equations() {
    for name in ["double_integrator", "low_thrust", "rot_oscillator"] {
        let p = registry::problem(name).unwrap();
        let n = p.n();
        for s in samples(&p.model, 25, 7) {
            let pmp = [s.q.clone(), s.v.clone(), s.a.clone(), s.b.clone()].concat();
            let u = solve_max_condition(&p, Formulation::Pmp, &pmp, &s.u).unwrap();
            assert!(pmp_geometric_residual(&p, &pmp, &u).unwrap() <= 1e-10);
            let lag = [s.q.clone(), s.a.clone(), s.v.clone(), s.b.clone()].concat();
            let u = solve_max_condition(&p, Formulation::NewLag, &lag, &s.u).unwrap();
            assert!(reduced_poincare_cartan_residual(&p, &lag, &u).unwrap() <= 1e-8);
            assert!(closedness_defect(&p, &lag, &u, 1e-4) <= 1e-6);
            assert_eq!(lag.len(), 4 * n);
        }
    }
}

#[test]
fn composition_identities_on_every_problem() {
    for name in registry::PROBLEMS {
        let p = registry::problem(name).unwrap();
        let (l, h, f) = composition_residuals(&p, 42).unwrap();
        assert!(l <= 1e-12 && h <= 1e-12, "{name}: {l:e} {h:e}");
        assert_eq!(f.is_some(), p.model.has_lagrangian());
        assert!(f.unwrap_or(0.0) <= 1e-12, "{name}: {f:?}");
    }
}

#[test]
fn tulczyjew_suite_passes() {
    let r = run_suite("tulczyjew", None, 42).unwrap();
    assert!(r.passed(), "{:#?}", r.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn round_trips_are_exact(c in prop::collection::vec(-10.0..10.0f64, 10)) {
        let x = pt(Chart::TTStarQ, 2, 2, &c);
        prop_assert_eq!(alpha_inv(&alpha(&x).unwrap()).unwrap(), x.clone());
        prop_assert_eq!(beta_inv(&beta(&x).unwrap()).unwrap(), x);
        let y = pt(Chart::TTQKappa, 2, 2, &c);
        prop_assert_eq!(kappa_inv(&kappa(&y).unwrap()).unwrap(), y);
    }

    #[test]
    fn musical_maps_invert(r in 0.6..1.8f64, phi in -3.0..3.0f64, rest in prop::collection::vec(-1.0..1.0f64, 7)) {
        let lt = registry::problem("low_thrust").unwrap();
        let c = [vec![r, phi], rest].concat();
        let x = pt(Chart::TTQ, 2, 1, &c);
        let back = musical_sharp(&lt, &musical_flat(&lt, &x).unwrap()).unwrap();
        prop_assert!(socp_core::linalg::max_abs_diff(&back.coords, &x.coords) <= 1e-12);
        let (_, p) = lagrangian_grad_s(&lt.model, &c[..2], &c[2..4]);
        prop_assert!(p.iter().all(|v| v.is_finite()));
    }
}
