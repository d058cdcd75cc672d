use proptest::prelude::*;
use socp_core::config::{ProblemConfig, TerminalMode};
use socp_core::diff::Scalar;
use socp_core::error::Error;
use socp_core::model::{
    actuation_classify, samples, sode_from_lagrangian, validate_problem, Actuation, BoundarySpec, Mayer, Model, OcpProblem,
    SampleBox, Terminal,
};
use socp_core::registry::{self, DoubleIntegrator, LowThrust, PROBLEMS};

/// `L = ½(v − q)²` with force `u`.
#[derive(Clone, Debug)]
struct Shifted;
impl Model for Shifted {
    fn name(&self) -> &'static str {
        "shifted"
    }
    fn dim_q(&self) -> usize {
        1
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn accel<S: Scalar>(&self, q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        vec![q[0].clone() + u[0].clone()]
    }
    fn cost<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> S {
        u[0].square() * 0.5
    }
    fn has_lagrangian(&self) -> bool {
        true
    }
    fn lagrangian<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        (v[0].clone() - q[0].clone()).square() * 0.5
    }
    fn force<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        vec![u[0].clone()]
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox { q: vec![(-1.0, 1.0)], v: vec![(-1.0, 1.0)], u: vec![(-1.0, 1.0)], adj: (0.5, 1.0) }
    }
}

/// `L = ½q²v²`: the mass matrix vanishes at `q = 0`.
#[derive(Clone, Debug)]
struct Degenerate;
impl Model for Degenerate {
    fn name(&self) -> &'static str {
        "degenerate"
    }
    fn dim_q(&self) -> usize {
        1
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn accel<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        vec![u[0].clone()]
    }
    fn cost<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> S {
        u[0].square()
    }
    fn has_lagrangian(&self) -> bool {
        true
    }
    fn lagrangian<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        (q[0].clone() * v[0].clone()).square() * 0.5
    }
    fn force<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        vec![u[0].clone()]
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox { q: vec![(-1.0, 1.0)], v: vec![(-1.0, 1.0)], u: vec![(-1.0, 1.0)], adj: (0.5, 1.0) }
    }
}

/// `X_v = f₀(q, v) + f₁(q)u` with `f₁` square and invertible.
#[derive(Clone, Debug)]
struct Affine2;
impl Model for Affine2 {
    fn name(&self) -> &'static str {
        "affine2"
    }
    fn dim_q(&self) -> usize {
        2
    }
    fn dim_u(&self) -> usize {
        2
    }
    fn accel<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> Vec<S> {
        vec![
            v[1].sin() + u[0].clone() * 2.0 + u[1].clone(),
            q[0].clone() * v[0].clone() + u[1].clone() * (q[0].square() + 1.0),
        ]
    }
    fn cost<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> S {
        (u[0].square() + u[1].square()) * 0.5
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox { q: vec![(-1.0, 1.0); 2], v: vec![(-1.0, 1.0); 2], u: vec![(-1.0, 1.0); 2], adj: (0.5, 1.0) }
    }
}

fn rest_to_rest(n: usize) -> BoundarySpec {
    BoundarySpec { t_final: 1.0, q0: vec![0.0; n], v0: vec![0.0; n], terminal: Terminal::Fixed { q: vec![1.0; n], v: vec![0.0; n] } }
}

#[test]
fn unit_mass_lagrangian_gives_the_double_integrator() {
    let sode = sode_from_lagrangian(&DoubleIntegrator).unwrap();
    assert_eq!(sode.accel(&[0.3], &[-0.2], &[1.7]).unwrap(), vec![1.7]);
}

#[test]
fn low_thrust_equations_of_motion() {
    let lt = LowThrust::default();
    let sode = sode_from_lagrangian(&lt).unwrap();
    let (q, v, u) = ([1.3, 0.4], [0.2, 0.9], [0.35]);
    let a = sode.accel(&q, &v, &u).unwrap();
    let expected = [q[0] * v[1] * v[1] - 1.0 / (q[0] * q[0]), -2.0 * v[0] * v[1] / q[0] + u[0] / q[0]];
    assert!((a[0] - expected[0]).abs() < 1e-14);
    assert!((a[1] - expected[1]).abs() < 1e-14);
    assert!(sode.el_residual(&q, &v, &u, &a) < 1e-14);
}

#[test]
fn shifted_lagrangian_expands_by_hand() {
    let sode = sode_from_lagrangian(&Shifted).unwrap();
    let a = sode.accel(&[0.5], &[2.0], &[0.25]).unwrap();
    assert!((a[0] - 0.75).abs() < 1e-15);
}

#[test]
fn singular_mass_matrix_is_reported() {
    let sode = sode_from_lagrangian(&Degenerate).unwrap();
    match sode.accel(&[0.0], &[1.0], &[0.0]) {
        Err(Error::SingularMass { cond }) => assert!(cond.is_infinite() || cond > 1e12),
        other => panic!("expected a singular mass matrix, got {other:?}"),
    }
}

#[test]
fn models_without_lagrangian_have_no_sode() {
    let m = registry::model("scalar_regular").unwrap();
    assert!(matches!(sode_from_lagrangian(&m), Err(Error::Unsupported(_))));
}

#[test]
fn actuation_classes() {
    assert_eq!(actuation_classify(&DoubleIntegrator, &samples(&DoubleIntegrator, 20, 1)), Actuation::Full);
    let lt = LowThrust::default();
    assert_eq!(actuation_classify(&lt, &samples(&lt, 20, 1)), Actuation::Under);
    assert_eq!(actuation_classify(&Affine2, &samples(&Affine2, 20, 1)), Actuation::Full);
}

#[test]
fn registry_problems_validate() {
    for name in PROBLEMS {
        let d = validate_problem(&registry::problem(name).unwrap(), 100, 42);
        assert!(d.ok(), "{name}: {:?}", d.errors);
    }
    let d = validate_problem(&registry::problem("low_thrust").unwrap(), 100, 42);
    assert!(d.lagrangian_residual.unwrap() <= 1e-10);
}

#[test]
fn mismatched_dimensions_are_listed() {
    let mut b = rest_to_rest(1);
    b.q0 = vec![0.0, 0.0];
    let d = validate_problem(&OcpProblem::new(DoubleIntegrator, b), 10, 42);
    assert!(!d.ok());
    assert!(d.errors.iter().any(|e| e.contains("dimension") && e.contains("q0")), "{:?}", d.errors);
}

#[test]
fn sampling_is_seeded() {
    let a = samples(&LowThrust::default(), 5, 9);
    let b = samples(&LowThrust::default(), 5, 9);
    let c = samples(&LowThrust::default(), 5, 10);
    assert_eq!(format!("{a:?}"), format!("{b:?}"));
    assert_ne!(format!("{a:?}"), format!("{c:?}"));
    for s in a.iter().chain(&c) {
        assert!(s.a.iter().chain(&s.b).all(|x| x.abs() >= 0.5));
    }
}

#[test]
fn config_round_trip() {
    let text = "# transfer\nproblem = low_thrust\nT = 1.5\nN = 120\nq0 = 1.0, 0.0\nv0 = 0 1\nqT = 1.02, 1.4\nvT = 0.0, 1.0\n\
                params.m = 2.0\ntol_newton = 1e-11\ntol_shoot = 1e-9\n";
    let c = ProblemConfig::parse(text).unwrap();
    assert_eq!(c.problem.as_deref(), Some("low_thrust"));
    assert_eq!(c.n, Some(120));
    assert_eq!(c.v0, Some(vec![0.0, 1.0]));
    assert_eq!(c.params, vec![("m".to_string(), 2.0)]);
    let p = c.build(None).unwrap();
    assert_eq!(p.boundary.t_final, 1.5);
    assert_eq!(p.boundary.terminal, Terminal::Fixed { q: vec![1.02, 1.4], v: vec![0.0, 1.0] });
    assert_eq!(p.control_tol, 1e-11);
    assert!(p.model.params().contains(&("m", 2.0)));
}

#[test]
fn config_errors_name_the_key() {
    let e = ProblemConfig::parse("problem = double_integrator\nfoo = 1\n").unwrap_err();
    assert_eq!(e, Error::UnknownKey("foo".into()));
    assert!(e.to_string().contains("`foo`"));
    let e = ProblemConfig::parse("params.zeta = 1\n").unwrap().build(Some("low_thrust")).unwrap_err();
    assert!(e.to_string().contains("params.zeta"));
    assert!(ProblemConfig::parse("q0 = 1, 2\n").unwrap().build(Some("double_integrator")).is_err());
    assert!(ProblemConfig::parse("T = abc\n").is_err());
    assert!(ProblemConfig::parse("terminal_mode = loose\n").is_err());
    assert!(ProblemConfig::parse("tol_shoot = -1\n").unwrap().build(Some("double_integrator")).is_err());
}

#[test]
fn free_terminal_mode_penalizes_the_target() {
    let c = ProblemConfig::parse("terminal_mode = free\n").unwrap();
    assert_eq!(c.terminal_mode, Some(TerminalMode::Free));
    let p = c.build(Some("double_integrator")).unwrap();
    assert_eq!(p.boundary.terminal, Terminal::Free(Mayer::Quadratic { weight: 1.0, q: vec![1.0], v: vec![0.0] }));
    let p = ProblemConfig::default().build(Some("rot_oscillator")).unwrap();
    assert!(matches!(p.boundary.terminal, Terminal::Free(Mayer::RadialPenalty { .. })));
}

proptest! {
    #[test]
    fn lagrangian_and_registered_dynamics_agree(r in 0.5..2.0f64, phi in -3.0..3.0f64, vr in -1.0..1.0f64, vp in -2.0..2.0f64, u in -1.0..1.0f64) {
        let lt = LowThrust::default();
        let a = sode_from_lagrangian(&lt).unwrap().accel(&[r, phi], &[vr, vp], &[u]).unwrap();
        let b = lt.accel(&[r, phi], &[vr, vp], &[u]);
        prop_assert!((a[0] - b[0]).abs() <= 1e-12 * (1.0 + b[0].abs()));
        prop_assert!((a[1] - b[1]).abs() <= 1e-12 * (1.0 + b[1].abs()));
    }
}
