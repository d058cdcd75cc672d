use proptest::prelude::*;
use socp_core::actions::*;
use socp_core::checks::{invariance_triple, map_equivariance};
use socp_core::diff::Scalar;
use socp_core::formulations::{new_lagrangian, pontryagin_h, NewLagPoint, PmpPoint};
use socp_core::model::{samples, Model, OcpProblem, SampleBox};
use socp_core::registry::{self, LowThrust};
use socp_core::tulczyjew::Chart;
use std::f64::consts::FRAC_PI_2;

/// Low thrust with the running cost shifted by the angle, breaking the
/// φ-translation symmetry.
#[derive(Clone, Debug)]
struct Broken(LowThrust);
impl Model for Broken {
    fn name(&self) -> &'static str {
        "broken"
    }
    fn dim_q(&self) -> usize {
        2
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn accel<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> Vec<S> {
        self.0.accel(q, v, u)
    }
    fn cost<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> S {
        self.0.cost(q, v, u) + q[1].clone()
    }
    fn sample_box(&self) -> SampleBox {
        self.0.sample_box()
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn tangent_lifts() {
    let r = Action::Rotation.tangent(FRAC_PI_2, &[1.0, 0.0], &[0.0, 1.0]);
    assert!(close(&r, &[0.0, 1.0, -1.0, 0.0], 1e-15));
    let t = Action::PhiTranslation.tangent(0.3, &[1.2, 0.5], &[0.1, -0.2]);
    assert!(close(&t, &[1.2, 0.8, 0.1, -0.2], 1e-15));
    for a in [Action::Rotation, Action::PhiTranslation, Action::Reciprocal] {
        assert!(close(&a.tangent(0.0, &[0.3, 0.4], &[0.5, 0.6]), &[0.3, 0.4, 0.5, 0.6], 0.0));
        assert!(close(&a.cotangent(0.0, &[0.3, 0.4], &[0.5, 0.6]), &[0.3, 0.4, 0.5, 0.6], 1e-15));
    }
}

#[test]
fn names_and_dimensions() {
    for name in ACTIONS {
        assert_eq!(Action::from_name(name).unwrap().name(), name);
    }
    assert!(Action::from_name("dilation").is_err());
    assert!(Action::Rotation.check_dim(1).is_err());
    assert!(Action::Reciprocal.check_dim(3).is_ok());
}

#[test]
fn generators_match_differences() {
    let q = [0.4, -0.3];
    for a in [Action::Rotation, Action::PhiTranslation, Action::Reciprocal] {
        let g = generator_eval(a);
        assert!(close(&g.eval(&q), &a.generator(&q), 1e-9), "{}", a.name());
    }
    assert!(close(&Action::Reciprocal.generator(&q), &[0.16, 0.09], 1e-15));
}

#[test]
fn low_thrust_is_invariant_under_phi_translation() {
    let p = registry::problem("low_thrust").unwrap();
    for s in samples(&p.model, 20, 3) {
        let x = [s.q.clone(), s.v.clone(), s.a.clone(), s.b.clone(), s.u.clone()].concat();
        let h = |y: &[f64]| pontryagin_h(&p, &PmpPoint::from_coords(2, y));
        assert!(invariance_residual(h, Action::PhiTranslation, Chart::TStarTQ, &x, 2, &S_GRID).unwrap() <= 1e-12);
        let l = |y: &[f64]| new_lagrangian(&p, &NewLagPoint::from_coords(2, y));
        assert!(invariance_residual(l, Action::PhiTranslation, Chart::TTStarQ, &x, 2, &S_GRID).unwrap() <= 1e-12);
    }
}

#[test]
fn broken_cost_is_not_invariant() {
    let lt = registry::problem("low_thrust").unwrap();
    let p = OcpProblem::new(Broken(LowThrust::default()), lt.boundary);
    let s = &samples(&p.model, 1, 3)[0];
    let x = [s.q.clone(), s.v.clone(), s.a.clone(), s.b.clone(), s.u.clone()].concat();
    let h = |y: &[f64]| pontryagin_h(&p, &PmpPoint::from_coords(2, y));
    assert!(invariance_residual(h, Action::PhiTranslation, Chart::TStarTQ, &x, 2, &S_GRID).unwrap() > 0.5);
}

#[test]
fn invariance_verdicts_agree_across_charts() {
    let p = registry::problem("rot_oscillator").unwrap();
    let (h, l, hh) = invariance_triple(&p, Action::Rotation, 20, 5).unwrap();
    assert!(h <= 1e-12 && l <= 1e-12 && hh <= 1e-12);
    let (h, l, hh) = invariance_triple(&p, Action::PhiTranslation, 20, 5).unwrap();
    assert!(h > 1e-3 && l > 1e-3 && hh > 1e-3);
}

#[test]
fn tulczyjew_maps_are_equivariant() {
    for (a, n) in [(Action::Rotation, 2), (Action::PhiTranslation, 2), (Action::Reciprocal, 1), (Action::Reciprocal, 2)] {
        let (ra, rb) = map_equivariance(a, n, 30, 11).unwrap();
        assert!(ra <= 1e-10 && rb <= 1e-10, "{}: {ra:e} {rb:e}", a.name());
    }
}

#[test]
fn rotation_acts_on_planar_controls_only() {
    assert!(close(&Action::Rotation.act_control(FRAC_PI_2, &[1.0, 0.0]), &[0.0, 1.0], 1e-15));
    assert_eq!(Action::Rotation.act_control(0.7, &[0.3]), vec![0.3]);
}

proptest! {
    #[test]
    fn lifts_compose_as_a_group(s in -0.4..0.4f64, t in -0.4..0.4f64, c in prop::collection::vec(-0.5..0.5f64, 8)) {
        for a in [Action::Rotation, Action::Reciprocal] {
            for chart in [Chart::TStarTQ, Chart::TTStarQ, Chart::TStarTStarQ, Chart::TTQKappa] {
                let once = a.lift(chart, s + t, &c, 2).unwrap();
                let twice = a.lift(chart, t, &a.lift(chart, s, &c, 2).unwrap(), 2).unwrap();
                prop_assert!(close(&once, &twice, 1e-9), "{} on {chart}", a.name());
            }
        }
    }

    #[test]
    fn cotangent_lift_preserves_the_pairing(s in -0.4..0.4f64, c in prop::collection::vec(-0.5..0.5f64, 6)) {
        // λ'·v' = λ·v for the tangent and cotangent lifts of the same element.
        for a in [Action::Rotation, Action::Reciprocal] {
            let (q, v, l) = (&c[0..2], &c[2..4], &c[4..6]);
            let tv = a.tangent(s, q, v);
            let tl = a.cotangent(s, q, l);
            let before: f64 = l.iter().zip(v).map(|(x, y)| x * y).sum();
            let after: f64 = tl[2..].iter().zip(&tv[2..]).map(|(x, y)| x * y).sum();
            prop_assert!((before - after).abs() <= 1e-12);
        }
    }
}
