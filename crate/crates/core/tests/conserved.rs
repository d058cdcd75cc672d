use proptest::prelude::*;
use socp_core::actions::Action;
use socp_core::bvp::{default_guess, integrate_ivp, solve_bvp, Trajectory};
use socp_core::conserved::*;
use socp_core::model::{Mayer, OcpProblem, Terminal};
use socp_core::optimality::Formulation;
use socp_core::registry::{self, Problem};

fn solved(p: &Problem, f: Formulation, n: usize) -> Trajectory {
    let rep = solve_bvp(p, f, &default_guess(p, f).unwrap(), n, 1e-10).unwrap();
    assert!(rep.converged, "{:?}", rep.message);
    rep.trajectory.unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn double_integrator_energy_and_hamiltonian() {
    let p = registry::problem("double_integrator").unwrap();
    let traj = integrate_ivp(&p, Formulation::Pmp, &[0.0, 0.0, 12.0, 6.0], 200).unwrap();
    let e = energy_monitor(&traj, &p).unwrap();
    let h = hamiltonian_monitor(&traj, &p).unwrap();
    assert!((e.values[0] + 18.0).abs() <= 1e-9 && e.drift <= 1e-9, "{} {}", e.values[0], e.drift);
    assert!((h.values[0] - 18.0).abs() <= 1e-9 && h.drift <= 1e-9, "{} {}", h.values[0], h.drift);
    for (a, b) in e.values.iter().zip(&h.values) {
        assert!((a + b).abs() <= 1e-9);
    }
}

#[test]
fn energy_detects_a_corrupted_adjoint() {
    let p = registry::problem("double_integrator").unwrap();
    let mut traj = integrate_ivp(&p, Formulation::Pmp, &[0.0, 0.0, 12.0, 6.0], 200).unwrap();
    for (t, x) in traj.t.iter().zip(traj.states.iter_mut()) {
        x[3] += 0.01 * t;
    }
    assert!(energy_monitor(&traj, &p).unwrap().drift > 1e-3);
}

#[test]
fn energy_is_conserved_in_every_chart() {
    for name in ["double_integrator", "low_thrust", "rot_oscillator", "scalar_regular", "scalar_superregular"] {
        let p = registry::problem(name).unwrap();
        // The RK4 drift on scalar_regular is 2e-6 at N = 200.
        let n = if name == "scalar_regular" { 800 } else { 200 };
        for f in [Formulation::Pmp, Formulation::NewLag, Formulation::NewHam] {
            let traj = solved(&p, f, n);
            let e = energy_monitor(&traj, &p).unwrap();
            assert!(e.drift <= 1e-8 * (1.0 + e.values[0].abs()), "{name} {f}: {}", e.drift);
        }
    }
}

#[test]
fn energy_drift_is_fourth_order() {
    let p = registry::problem("scalar_regular").unwrap();
    let drift = |n| energy_monitor(&solved(&p, Formulation::Pmp, n), &p).unwrap().drift;
    let (coarse, fine) = (drift(100), drift(200));
    assert!(coarse / fine > 12.0 && coarse / fine < 20.0, "{coarse} {fine}");
}

#[test]
fn angular_adjoint_is_the_low_thrust_momentum() {
    let p = registry::problem("low_thrust").unwrap();
    let traj = solved(&p, Formulation::Pmp, 200);
    let a = Action::PhiTranslation;
    let i = noether_pmp(&traj, &p, a).unwrap();
    assert!(i.warnings.is_empty());
    for (x, v) in traj.states.iter().zip(&i.values) {
        assert!((x[5] - v).abs() <= 1e-14);
    }
    assert!(i.drift <= 1e-8, "{}", i.drift);
}

#[test]
fn chart_momenta_agree_up_to_the_sign_convention() {
    for (name, a) in [("low_thrust", Action::PhiTranslation), ("rot_oscillator", Action::Rotation)] {
        let p = registry::problem(name).unwrap();
        let traj = solved(&p, Formulation::NewLag, 200);
        let i = noether_pmp(&traj, &p, a).unwrap();
        let il = noether_newlag(&traj, &p, a).unwrap();
        let ih = noether_newham(&traj, &p, a).unwrap();
        for k in 0..traj.len() {
            assert!((i.values[k] + il.values[k]).abs() <= 1e-10, "{name}");
            assert!((il.values[k] - ih.values[k]).abs() <= 1e-10, "{name}");
        }
        assert!(il.drift <= 1e-8 && ih.drift <= 1e-8, "{name}");
    }
}

#[test]
fn radial_penalty_forces_zero_rotation_momentum() {
    let p = registry::problem("rot_oscillator").unwrap();
    let traj = solved(&p, Formulation::Pmp, 200);
    let i = noether_pmp(&traj, &p, Action::Rotation).unwrap();
    assert!(i.warnings.is_empty());
    assert!(i.drift <= 1e-8 && max_abs(&i.values) <= 1e-8, "{:?}", &i.values[..3]);
    let m = noether_mechanical(&traj, &p, Action::Rotation).unwrap();
    assert!(m.orthogonality <= ORTHOGONALITY_TOL);
    assert!(m.il.drift <= 1e-8 && m.il_forced.drift <= 1e-8);
}

#[test]
fn non_invariant_mayer_term_is_flagged() {
    let base = registry::problem("rot_oscillator").unwrap();
    let target = Mayer::Quadratic { weight: 1.0, q: vec![1.2, 0.0], v: vec![0.0, 1.0] };
    let p = OcpProblem::new(base.model.clone(), socp_core::model::BoundarySpec { terminal: Terminal::Free(target), ..base.boundary.clone() });
    let traj = solved(&p, Formulation::Pmp, 200);
    assert!(symmetry_residual(&traj, &p, Action::Rotation).unwrap() > 1e-3);
    let i = noether_pmp(&traj, &p, Action::Rotation).unwrap();
    assert!(!i.warnings.is_empty());
    // The running problem is still invariant, so the momentum is constant
    // along the flow; transversality no longer pins it to zero.
    assert!(i.drift <= 1e-8);
    assert!(i.values[0].abs() > 1e-3, "{}", i.values[0]);
}

#[test]
fn thrust_breaks_mechanical_angular_momentum() {
    let p = registry::problem("low_thrust").unwrap();
    let traj = solved(&p, Formulation::Pmp, 400);
    let a = Action::PhiTranslation;
    let m = noether_mechanical(&traj, &p, a).unwrap();
    assert!(m.orthogonality > ORTHOGONALITY_TOL);
    assert!(!m.il.warnings.is_empty());
    assert!(m.il.drift > 1e-4, "{}", m.il.drift);
    // dI_L/dt = m·r·u for a tangential force.
    let rate = time_derivative(&m.il.values, traj.step());
    let mass = 1.0;
    for k in 0..traj.len() {
        let (q, _) = traj.state(k);
        let expected = mass * q[0] * traj.controls[k][0];
        assert!((rate[k] - expected).abs() <= 1e-6, "node {k}: {} vs {expected}", rate[k]);
    }
    let nodes: Vec<usize> = (1..10).map(|k| k * traj.len() / 10).collect();
    assert!(functional_independence(&traj, &p, a, &nodes).unwrap() > 1e-6);
}

#[test]
fn unforced_orbit_conserves_angular_momentum() {
    let p = registry::problem("low_thrust").unwrap();
    let (t, il) = noether_mechanical_open_loop(&p, Action::PhiTranslation, |_| vec![0.0], 1000).unwrap();
    assert_eq!(t.len(), 1001);
    assert!((il.values[0] - 1.0).abs() <= 1e-15);
    assert!(il.drift <= 1e-9, "{}", il.drift);
    let (_, thrust) = noether_mechanical_open_loop(&p, Action::PhiTranslation, |_| vec![0.1], 1000).unwrap();
    assert!(thrust.drift > 1e-2);
}

#[test]
fn monitors_need_the_right_dimension() {
    let p = registry::problem("double_integrator").unwrap();
    let traj = solved(&p, Formulation::Pmp, 50);
    assert!(noether_pmp(&traj, &p, Action::Rotation).is_err());
    let std = {
        let mut t = traj.clone();
        attach_standard_monitors(&p, &mut t).unwrap()
    };
    assert!(std.contains_key("E") && std.contains_key("H"));
    assert!(!std.keys().any(|k| k.contains("rotation")));
}

#[test]
fn standard_monitors_include_symmetric_momenta() {
    let p = registry::problem("low_thrust").unwrap();
    let mut traj = solved(&p, Formulation::Pmp, 100);
    let drifts = attach_standard_monitors(&p, &mut traj).unwrap();
    for key in ["E", "H", "I_phi_translation", "Ilag_phi_translation"] {
        assert!(drifts[key] <= 1e-8, "{key}: {}", drifts[key]);
        assert!(traj.monitor(key).is_some());
    }
    // The thrust is not orthogonal to the generator.
    assert!(!drifts.contains_key("IL_phi_translation"));
}

#[test]
fn generating_function_identities() {
    let p = registry::problem("double_integrator").unwrap();
    let g = generating_checks(&p, Formulation::Pmp, (0.2, 0.8), 100).unwrap();
    assert!(!g.identities.is_empty());
    assert!(g.max_identity_residual() <= 1e-3, "{:?}", g.identities);
    assert!(g.mixed_relation <= 1e-8, "{}", g.mixed_relation);
    assert!(generating_checks(&p, Formulation::Pmp, (0.0, 0.8), 100).is_err());
    assert!(generating_checks(&p, Formulation::Pmp, (0.6, 0.4), 100).is_err());
}

#[test]
fn time_derivative_of_a_quartic_is_exact() {
    let h = 0.01;
    let y: Vec<f64> = (0..50).map(|i| (i as f64 * h).powi(4)).collect();
    let d = time_derivative(&y, h);
    for (i, di) in d.iter().enumerate() {
        let t = i as f64 * h;
        assert!((di - 4.0 * t.powi(3)).abs() <= 1e-9, "{i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn momenta_constant_from_random_adjoints(l1 in -0.5f64..0.5, l2 in -0.5f64..0.5, l3 in -0.5f64..0.5, l4 in -0.5f64..0.5) {
        let p = registry::problem("rot_oscillator").unwrap();
        let x0 = [p.boundary.q0.clone(), p.boundary.v0.clone(), vec![l1, l2, l3, l4]].concat();
        let traj = integrate_ivp(&p, Formulation::Pmp, &x0, 100).unwrap();
        let i = noether_pmp(&traj, &p, Action::Rotation).unwrap();
        prop_assert!(i.drift <= 1e-10 * (1.0 + i.values[0].abs()));
        let e = energy_monitor(&traj, &p).unwrap();
        prop_assert!(e.drift <= 1e-8 * (1.0 + e.values[0].abs()));
    }
}
