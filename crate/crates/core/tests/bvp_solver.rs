use proptest::prelude::*;
use socp_core::bvp::*;
use socp_core::error::Error;
use socp_core::optimality::{Formulation, FORMULATIONS};
use socp_core::model::Model;
use socp_core::registry;

fn norm(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn double_integrator_extremal_reaches_the_target() {
    let p = registry::problem("double_integrator").unwrap();
    let traj = integrate_ivp(&p, Formulation::Pmp, &[0.0, 0.0, 12.0, 6.0], 100).unwrap();
    assert_eq!(traj.len(), 101);
    let x = traj.last();
    assert!((x[0] - 1.0).abs() <= 1e-6 && x[1].abs() <= 1e-6, "{x:?}");
    // u = 6 − 12t exactly; RK4 integrates the cubic q without error.
    for (t, u) in traj.t.iter().zip(&traj.controls) {
        assert!((u[0] - (6.0 - 12.0 * t)).abs() <= 1e-12);
    }
}

#[test]
fn shooting_residuals() {
    let p = registry::problem("double_integrator").unwrap();
    assert!(norm(&shoot(&p, Formulation::Pmp, &[12.0, 6.0], 100).unwrap()) <= 1e-6);
    let r = shoot(&p, Formulation::Pmp, &[0.0, 0.0], 100).unwrap();
    assert!((r[0] + 1.0).abs() <= 1e-12 && r[1].abs() <= 1e-12, "{r:?}");
    assert!(norm(&shoot(&p, Formulation::NewLag, &[6.0, -12.0], 100).unwrap()) <= 1e-6);
    assert!(matches!(shoot(&p, Formulation::Pmp, &[1.0], 100), Err(Error::Dimension(_))));
}

#[test]
fn newton_from_zero_recovers_the_adjoint() {
    let p = registry::problem("double_integrator").unwrap();
    let rep = solve_bvp(&p, Formulation::Pmp, &[0.0, 0.0], 200, 1e-8).unwrap();
    assert!(rep.converged && rep.residual <= 1e-8);
    assert!((rep.initial_adjoint[0] - 12.0).abs() <= 1e-6 && (rep.initial_adjoint[1] - 6.0).abs() <= 1e-6);
    assert!((rep.cost.unwrap() - 6.0).abs() <= 1e-6);
}

#[test]
fn every_chart_solves_the_double_integrator() {
    let p = registry::problem("double_integrator").unwrap();
    let reference = solve_bvp(&p, Formulation::Pmp, &[0.0, 0.0], 200, 1e-10).unwrap();
    let reference = reference.trajectory.unwrap();
    for f in FORMULATIONS {
        let rep = solve_bvp(&p, f, &[0.0, 0.0], 200, 1e-10).unwrap();
        assert!(rep.converged, "{f}");
        let traj = rep.trajectory.unwrap().to_chart(&p, Formulation::Pmp).unwrap();
        let dev = traj
            .states
            .iter()
            .zip(&reference.states)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        assert!(dev <= 1e-8, "{f}: {dev}");
    }
}

#[test]
fn low_thrust_converges_with_constant_angular_adjoint() {
    let p = registry::problem("low_thrust").unwrap();
    let rep = solve_bvp(&p, Formulation::Pmp, &[0.0; 4], 200, 1e-10).unwrap();
    assert!(rep.converged && rep.residual <= 1e-6, "{:?}", rep.message);
    let traj = rep.trajectory.unwrap();
    let l0 = traj.states[0][5];
    let drift = traj.states.iter().map(|x| (x[5] - l0).abs()).fold(0.0, f64::max);
    assert!(drift <= 1e-8, "{drift}");
}

#[test]
fn every_regular_registered_problem_converges() {
    for name in registry::PROBLEMS {
        let p = registry::problem(name).unwrap();
        if name == "scalar_singular" {
            // The maximization condition is affine in u there.
            let rep = solve_bvp(&p, Formulation::Pmp, &default_guess(&p, Formulation::Pmp).unwrap(), 200, 1e-10).unwrap();
            assert!(!rep.converged && rep.message.unwrap().contains("singular"));
            continue;
        }
        for f in FORMULATIONS {
            if f == Formulation::Forced && !p.model.has_lagrangian() {
                continue;
            }
            let rep = solve_bvp(&p, f, &default_guess(&p, f).unwrap(), 200, 1e-10).unwrap();
            assert!(rep.converged, "{name} {f}: {:?}", rep.message);
        }
    }
}

#[test]
fn default_guess_is_written_in_the_chart() {
    let p = registry::problem("scalar_regular").unwrap();
    assert_eq!(default_guess(&p, Formulation::Pmp).unwrap(), vec![0.0, -1.0]);
    // Shooting unknowns in the new Lagrangian chart are (κ, v_κ) with κ = λ_v.
    let g = default_guess(&p, Formulation::NewLag).unwrap();
    assert!((g[0] + 1.0).abs() <= 1e-12, "{g:?}");
    let p = registry::problem("double_integrator").unwrap();
    assert_eq!(default_guess(&p, Formulation::NewHam).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn solver_rejects_bad_settings() {
    let p = registry::problem("double_integrator").unwrap();
    assert!(matches!(solve_bvp(&p, Formulation::Pmp, &[0.0, 0.0], 1, 1e-8), Err(Error::Config(_))));
    assert!(matches!(solve_bvp(&p, Formulation::Pmp, &[0.0, 0.0], 100, 0.0), Err(Error::Config(_))));
    assert!(matches!(solve_bvp(&p, Formulation::Pmp, &[0.0, 0.0], 100, f64::NAN), Err(Error::Config(_))));
}

#[test]
fn unreachable_tolerance_reports_non_convergence() {
    let p = registry::problem("low_thrust").unwrap();
    let rep = solve_bvp(&p, Formulation::Pmp, &[0.0; 4], 4, 1e-300).unwrap();
    assert!(!rep.converged && rep.residual > 0.0);
    assert!(rep.iterations <= MAX_SHOOTING_ITERATIONS);
}

#[test]
fn newton_on_a_linear_map() {
    let out = newton_fd(|x| Ok(vec![2.0 * x[0] + x[1] - 3.0, x[0] - x[1]]), &[0.0, 0.0], 1e-12, 20);
    assert!(out.converged && (out.x[0] - 1.0).abs() <= 1e-9 && (out.x[1] - 1.0).abs() <= 1e-9);
}

#[test]
fn simpson_rules() {
    let h = 0.1;
    for n in [2usize, 3, 4, 7, 10] {
        let y: Vec<f64> = (0..=n).map(|i| (i as f64 * h).powi(3)).collect();
        let exact = (n as f64 * h).powi(4) / 4.0;
        assert!((simpson(&y, h) - exact).abs() <= 1e-14, "{n}");
    }
    assert_eq!(simpson(&[1.0, 3.0], 0.5), 1.0);
    assert_eq!(simpson(&[2.0], 0.5), 0.0);
}

#[test]
fn csv_trace_is_deterministic() {
    let p = registry::problem("low_thrust").unwrap();
    let render = || {
        let rep = solve_bvp(&p, Formulation::NewLag, &[0.0; 4], 100, 1e-10).unwrap();
        let mut buf = Vec::new();
        rep.trajectory.unwrap().write_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    };
    let a = render();
    assert_eq!(a, render());
    let head = a.lines().next().unwrap();
    assert!(head.starts_with("t,q1,q2,v1,v2,adj1_1,adj1_2,adj2_1,adj2_2,u1"), "{head}");
    assert_eq!(a.lines().count(), 102);
}

#[test]
fn report_schema() {
    let p = registry::problem("double_integrator").unwrap();
    let rep = solve_bvp(&p, Formulation::Pmp, &[0.0, 0.0], 100, 1e-10).unwrap();
    let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    for key in ["problem", "formulation", "converged", "iterations", "residual", "cost", "drifts", "seed", "grid", "initial_adjoint"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["formulation"], "pmp");
    assert_eq!(v["grid"], 100);
    assert!(v["drifts"].as_object().unwrap().contains_key("E"));
}

#[test]
fn augmented_objectives_agree_on_the_extremal() {
    for name in ["double_integrator", "low_thrust"] {
        let p = registry::problem(name).unwrap();
        let rep = solve_bvp(&p, Formulation::Pmp, &vec![0.0; 2 * p.n()], 200, 1e-10).unwrap();
        let a = augmented_costs(&p, rep.trajectory.as_ref().unwrap()).unwrap();
        assert!(a.j4.is_some());
        assert!(a.spread() <= 1e-8, "{name}: {a:?}");
        assert!((a.j1 - rep.cost.unwrap()).abs() <= 1e-8);
    }
}

proptest! {
    #[test]
    fn grid_is_uniform(t in 0.1f64..10.0, n in 2usize..500) {
        let g = grid(t, n);
        prop_assert_eq!(g.len(), n + 1);
        prop_assert_eq!(g[0], 0.0);
        prop_assert!((g[n] - t).abs() <= 1e-15 * t);
        for w in g.windows(2) {
            prop_assert!((w[1] - w[0] - t / n as f64).abs() <= 1e-12 * t);
        }
    }

    #[test]
    fn simpson_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 2usize..40) {
        let h = 0.05;
        let y1: Vec<f64> = (0..=n).map(|i| (i as f64 * h).sin()).collect();
        let y2: Vec<f64> = (0..=n).map(|i| (i as f64 * h).exp()).collect();
        let mix: Vec<f64> = y1.iter().zip(&y2).map(|(x, y)| a * x + b * y).collect();
        let lhs = simpson(&mix, h);
        let rhs = a * simpson(&y1, h) + b * simpson(&y2, h);
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }
}
