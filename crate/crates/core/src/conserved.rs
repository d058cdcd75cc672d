//! Conserved-quantity monitors along solved traces: the energy of the new
//! control Lagrangian, Noether momenta in every chart, and the
//! generating-function identities on an interior window.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::actions::{invariance_residual, Action, ACTIONS, S_GRID};
use crate::bvp::{default_guess, integrate_ivp, integrate_open_loop, newton_fd, simpson, solve_bvp, Trajectory};
use crate::error::{Error, Result};
use crate::formulations::{
    fiber_derivative_newlag, forced_fiber_derivative, lagrangian_grad_s, new_energy, new_lagrangian, pontryagin_h, ForcedPoint,
    NewLagPoint, PmpPoint,
};
use crate::model::{BoundarySpec, Model, OcpProblem, Terminal};
use crate::optimality::Formulation;
use crate::tulczyjew::Chart;

/// Values of one scalar along a trace.
#[derive(Clone, Debug, Serialize)]
pub struct MonitorSeries {
    pub name: String,
    pub values: Vec<f64>,
    pub drift: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MonitorSeries {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        let v0 = values.first().copied().unwrap_or(0.0);
        let drift = values.iter().map(|v| (v - v0).abs()).fold(0.0, f64::max);
        MonitorSeries { name: name.into(), values, drift, warnings: Vec::new() }
    }
    fn warn(mut self, w: Option<String>) -> Self {
        self.warnings.extend(w);
        self
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `E_L̃` per node, evaluated in the new-Lagrangian chart.
pub fn energy_monitor<M: Model>(traj: &Trajectory, p: &OcpProblem<M>) -> Result<MonitorSeries> {
    let lag = traj.to_chart(p, Formulation::NewLag)?;
    let n = p.n();
    let values = lag
        .states
        .iter()
        .zip(&lag.controls)
        .map(|(x, u)| new_energy(p, &NewLagPoint::from_coords(n, &[x.as_slice(), u].concat())))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonitorSeries::new("E", values))
}

/// `H₋₁` per node, evaluated in the Pontryagin chart.
pub fn hamiltonian_monitor<M: Model>(traj: &Trajectory, p: &OcpProblem<M>) -> Result<MonitorSeries> {
    let pmp = traj.to_chart(p, Formulation::Pmp)?;
    let n = p.n();
    let values = pmp
        .states
        .iter()
        .zip(&pmp.controls)
        .map(|(x, u)| pontryagin_h(p, &PmpPoint::from_coords(n, &[x.as_slice(), u].concat())))
        .collect::<Result<Vec<_>>>()?;
    Ok(MonitorSeries::new("H", values))
}

/// Largest change of `H₋₁` under the lifted action over the trace nodes and,
/// in free terminal mode, of the Mayer term at the final node.
pub fn symmetry_residual<M: Model>(traj: &Trajectory, p: &OcpProblem<M>, a: Action) -> Result<f64> {
    let n = p.n();
    a.check_dim(n)?;
    let pmp = traj.to_chart(p, Formulation::Pmp)?;
    let stride = (pmp.len() / 10).max(1);
    let mut worst: f64 = 0.0;
    for i in (0..pmp.len()).step_by(stride) {
        let x = [pmp.states[i].as_slice(), &pmp.controls[i]].concat();
        let h = |y: &[f64]| pontryagin_h(p, &PmpPoint::from_coords(n, y));
        let scale = 1.0 + h(&x)?.abs();
        worst = worst.max(invariance_residual(h, a, Chart::TStarTQ, &x, n, &S_GRID)? / scale);
    }
    if let Terminal::Free(mayer) = &p.boundary.terminal {
        let (q, v) = pmp.state(pmp.len() - 1);
        let phi0 = mayer.eval(&q, &v);
        for &s in &S_GRID {
            let tv = a.tangent(s, &q, &v);
            worst = worst.max((mayer.eval(&tv[..n], &tv[n..]) - phi0).abs() / (1.0 + phi0.abs()));
        }
    }
    Ok(worst)
}

pub const SYMMETRY_TOL: f64 = 1e-10;

fn symmetry_warning<M: Model>(traj: &Trajectory, p: &OcpProblem<M>, a: Action) -> Option<String> {
    match symmetry_residual(traj, p, a) {
        Ok(r) if r <= SYMMETRY_TOL => None,
        Ok(r) => Some(format!("problem is not invariant under `{}` (residual {r:.3e})", a.name())),
        Err(e) => Some(format!("symmetry check under `{}` failed: {e}", a.name())),
    }
}

/// `I = λ_q·X^Q(q) + λ_v·(DX^Q(q)·v)`.
pub fn noether_pmp<M: Model>(traj: &Trajectory, p: &OcpProblem<M>, a: Action) -> Result<MonitorSeries> {
    let n = p.n();
    a.check_dim(n)?;
    let pmp = traj.to_chart(p, Formulation::Pmp)?;
    let values = pmp
        .states
        .iter()
        .map(|x| {
            let (q, v, lq, lv) = (&x[..n], &x[n..2 * n], &x[2 * n..3 * n], &x[3 * n..]);
            dot(lq, &a.generator(q)) + dot(lv, &a.generator_tangent(q, v))
        })
        .collect();
    Ok(MonitorSeries::new(format!("I_{}", a.name()), values).warn(symmetry_warning(traj, p, a)))
}

/// Noether momentum of `L̃ᴱ` for the cotangent-lifted action on `T*Q`:
/// `I_L̃ = p_q·X^Q(q) − κ·(DX^Q(q)·v_q)` with `p_q = v_κ + D₂X_vᵀκ − D₂C`.
/// Under the identification this is `−I`.
pub fn noether_newlag<M: Model>(traj: &Trajectory, p: &OcpProblem<M>, a: Action) -> Result<MonitorSeries> {
    let n = p.n();
    a.check_dim(n)?;
    let lag = traj.to_chart(p, Formulation::NewLag)?;
    let values = lag
        .states
        .iter()
        .zip(&lag.controls)
        .map(|(x, u)| {
            let y = fiber_derivative_newlag(p, &NewLagPoint::from_coords(n, &[x.as_slice(), u].concat()))?;
            Ok(dot(&y.pq, &a.generator(&y.q)) - dot(&y.k, &a.generator_tangent(&y.q, &y.pk)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MonitorSeries::new(format!("Ilag_{}", a.name()), values).warn(symmetry_warning(traj, p, a)))
}

/// Hamiltonian form `I_H̃ = p_y·X^{T*Q}(y)` on the new-Hamiltonian chart.
pub fn noether_newham<M: Model>(traj: &Trajectory, p: &OcpProblem<M>, a: Action) -> Result<MonitorSeries> {
    let n = p.n();
    a.check_dim(n)?;
    let ham = traj.to_chart(p, Formulation::NewHam)?;
    let values = ham
        .states
        .iter()
        .map(|x| {
            let (q, k, pq, pk) = (&x[..n], &x[n..2 * n], &x[2 * n..3 * n], &x[3 * n..]);
            dot(pq, &a.generator(q)) - dot(k, &a.generator_tangent(q, pk))
        })
        .collect();
    Ok(MonitorSeries::new(format!("Iham_{}", a.name()), values).warn(symmetry_warning(traj, p, a)))
}

/// Largest `‖f_L·X^Q‖ / (1 + ‖f_L‖)` along the trace.
pub fn orthogonality_residual<M: Model>(traj: &Trajectory, p: &OcpProblem<M>, a: Action) -> Result<f64> {
    p.require_lagrangian()?;
    let mut worst: f64 = 0.0;
    for i in 0..traj.len() {
        let (q, v) = traj.state(i);
        let f = p.model.force(&q, &v, &traj.controls[i]);
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        worst = worst.max(dot(&f, &a.generator(&q)).abs() / (1.0 + norm));
    }
    Ok(worst)
}

pub const ORTHOGONALITY_TOL: f64 = 1e-10;

/// Mechanical momenta along a trace.
#[derive(Clone, Debug, Serialize)]
pub struct MechanicalMomenta {
    /// `I_L = D₂L·X^Q(q)`
    pub il: MonitorSeries,
    /// `I_L̃ᴸ = ϖ_q·X^Q(q) + ϖ_ξ·(DX^Q(q)·ξ)`
    pub il_forced: MonitorSeries,
    pub orthogonality: f64,
}

pub fn noether_mechanical<M: Model>(traj: &Trajectory, p: &OcpProblem<M>, a: Action) -> Result<MechanicalMomenta> {
    let n = p.n();
    a.check_dim(n)?;
    p.require_lagrangian()?;
    let orth = orthogonality_residual(traj, p, a)?;
    let warning = (orth > ORTHOGONALITY_TOL)
        .then(|| format!("control force is not orthogonal to `{}` (residual {orth:.3e})", a.name()));
    let il: Vec<f64> = (0..traj.len())
        .map(|i| {
            let (q, v) = traj.state(i);
            dot(&lagrangian_grad_s(&p.model, &q, &v).1, &a.generator(&q))
        })
        .collect();
    let fc = traj.to_chart(p, Formulation::Forced)?;
    let il_forced = fc
        .states
        .iter()
        .zip(&fc.controls)
        .map(|(x, u)| {
            let w = forced_fiber_derivative(p, &ForcedPoint::from_coords(n, &[x.as_slice(), u].concat()))?;
            Ok(dot(&w.wq, &a.generator(&w.q)) + dot(&w.wxi, &a.generator_tangent(&w.q, &w.xi)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MechanicalMomenta {
        il: MonitorSeries::new(format!("IL_{}", a.name()), il).warn(warning.clone()),
        il_forced: MonitorSeries::new(format!("ILforced_{}", a.name()), il_forced).warn(warning),
        orthogonality: orth,
    })
}

/// `I_L` along an open-loop run of the dynamics under a prescribed control.
pub fn noether_mechanical_open_loop<M: Model>(
    p: &OcpProblem<M>,
    a: Action,
    control: impl Fn(f64) -> Vec<f64>,
    n_steps: usize,
) -> Result<(Vec<f64>, MonitorSeries)> {
    let n = p.n();
    a.check_dim(n)?;
    p.require_lagrangian()?;
    let (t, xs) = integrate_open_loop(p, &p.boundary.q0, &p.boundary.v0, control, n_steps)?;
    let il = xs.iter().map(|x| dot(&lagrangian_grad_s(&p.model, &x[..n], &x[n..]).1, &a.generator(&x[..n]))).collect();
    Ok((t, MonitorSeries::new(format!("IL_{}", a.name()), il)))
}

/// Fourth-order finite-difference time derivative on a uniform grid, with
/// one-sided five-point stencils at the ends. Needs at least 5 nodes.
pub fn time_derivative(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    assert!(n >= 5, "time_derivative needs at least 5 nodes");
    (0..n)
        .map(|i| {
            let s = match i {
                0 => -25.0 * y[0] + 48.0 * y[1] - 36.0 * y[2] + 16.0 * y[3] - 3.0 * y[4],
                1 => -3.0 * y[0] - 10.0 * y[1] + 18.0 * y[2] - 6.0 * y[3] + y[4],
                i if i == n - 2 => 3.0 * y[n - 1] + 10.0 * y[n - 2] - 18.0 * y[n - 3] + 6.0 * y[n - 4] - y[n - 5],
                i if i == n - 1 => 25.0 * y[n - 1] - 48.0 * y[n - 2] + 36.0 * y[n - 3] - 16.0 * y[n - 4] + 3.0 * y[n - 5],
                i => y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2],
            };
            s / (12.0 * h)
        })
        .collect()
}

/// Smallest `1 − |cos θ|` between the chart gradients of `I_L` and `I_L̃ᴸ`
/// over the sampled nodes; positive when the two are functionally
/// independent there.
pub fn functional_independence<M: Model>(traj: &Trajectory, p: &OcpProblem<M>, a: Action, nodes: &[usize]) -> Result<f64> {
    let n = p.n();
    p.require_lagrangian()?;
    let fc = traj.to_chart(p, Formulation::Forced)?;
    let il = |x: &[f64]| dot(&lagrangian_grad_s(&p.model, &x[..n], &x[2 * n..3 * n]).1, &a.generator(&x[..n]));
    let ilf = |x: &[f64], u: &[f64]| -> Result<f64> {
        let w = forced_fiber_derivative(p, &ForcedPoint::from_coords(n, &[x, u].concat()))?;
        Ok(dot(&w.wq, &a.generator(&w.q)) + dot(&w.wxi, &a.generator_tangent(&w.q, &w.xi)))
    };
    let h = 1e-6;
    let mut worst = f64::INFINITY;
    for &i in nodes {
        let (x, u) = (&fc.states[i], &fc.controls[i]);
        let mut g1 = vec![0.0; 4 * n];
        let mut g2 = vec![0.0; 4 * n];
        for c in 0..4 * n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            g1[c] = (il(&xp) - il(&xm)) / (2.0 * h);
            g2[c] = (ilf(&xp, u)? - ilf(&xm, u)?) / (2.0 * h);
        }
        let norm = |g: &[f64]| dot(g, g).sqrt();
        let cos = dot(&g1, &g2).abs() / (norm(&g1) * norm(&g2)).max(f64::MIN_POSITIVE);
        worst = worst.min(1.0 - cos);
    }
    Ok(worst)
}

/// Energy and Hamiltonian monitors plus the Noether momenta of every
/// action under which the problem is invariant. Returns the drifts.
pub fn attach_standard_monitors<M: Model>(p: &OcpProblem<M>, traj: &mut Trajectory) -> Result<BTreeMap<String, f64>> {
    let mut series = vec![energy_monitor(traj, p)?, hamiltonian_monitor(traj, p)?];
    for name in ACTIONS {
        let a = Action::from_name(name)?;
        if a.check_dim(p.n()).is_err() || !matches!(symmetry_residual(traj, p, a), Ok(r) if r <= SYMMETRY_TOL) {
            continue;
        }
        series.push(noether_pmp(traj, p, a)?);
        series.push(noether_newlag(traj, p, a)?);
        if p.model.has_lagrangian() {
            let mech = noether_mechanical(traj, p, a)?;
            if mech.orthogonality <= ORTHOGONALITY_TOL {
                series.push(mech.il);
                series.push(mech.il_forced);
            }
        }
    }
    let mut drifts = BTreeMap::new();
    for s in series {
        drifts.insert(s.name.clone(), s.drift);
        traj.set_monitor(&s.name, s.values);
    }
    Ok(drifts)
}

// ---------------------------------------------------------------------------
// Generating functions
// ---------------------------------------------------------------------------

/// One derivative identity: analytic boundary value against a central
/// difference over re-solved boundary-value problems.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub expected: f64,
    pub measured: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GeneratingReport {
    pub window: (f64, f64),
    pub identities: Vec<IdentityCheck>,
    /// `κ_b·v_b − κ_a·v_a − S_L̃ − S_C` on the base trace.
    pub mixed_relation: f64,
}

impl GeneratingReport {
    pub fn max_identity_residual(&self) -> f64 {
        self.identities.iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

pub const GENERATING_STEP: f64 = 1e-4;
const GENERATING_TOL: f64 = 1e-11;

/// `S_C(q_a, v_a, q_b, v_b)`: running cost of the extremal joining two
/// states over `[t_a, t_b]`.
fn s_c<M: Model>(p: &OcpProblem<M>, span: f64, ends: [&[f64]; 4], warm: &[f64], n_steps: usize) -> Result<f64> {
    let mut sub = p.clone();
    sub.boundary = BoundarySpec {
        t_final: span,
        q0: ends[0].to_vec(),
        v0: ends[1].to_vec(),
        terminal: Terminal::Fixed { q: ends[2].to_vec(), v: ends[3].to_vec() },
    };
    let r = solve_bvp(&sub, Formulation::Pmp, warm, n_steps, GENERATING_TOL)?;
    if !r.converged {
        return Err(Error::NonConvergence { iterations: r.iterations, residual: r.residual });
    }
    crate::bvp::objective(&sub, r.trajectory.as_ref().expect("solved trace"))
}

/// `S_L̃(q_a, κ_a, q_b, κ_b)`: integral of `L̃ᴱ` over the extremal with
/// prescribed `(q, κ)` at both ends, found by shooting on `(v_q, v_κ)(t_a)`.
fn s_lag<M: Model>(p: &OcpProblem<M>, span: f64, ends: [&[f64]; 4], warm: &[f64], n_steps: usize) -> Result<f64> {
    let n = p.n();
    let mut sub = p.clone();
    sub.boundary.t_final = span;
    let start = |g: &[f64]| [ends[0], ends[1], &g[..n], &g[n..]].concat();
    let run = |g: &[f64]| integrate_ivp(&sub, Formulation::NewLag, &start(g), n_steps).map_err(Error::from);
    let residual = |g: &[f64]| -> Result<Vec<f64>> {
        let t = run(g)?;
        let x = t.last();
        Ok((0..2 * n).map(|i| x[i] - if i < n { ends[2][i] } else { ends[3][i - n] }).collect())
    };
    let out = newton_fd(residual, warm, GENERATING_TOL, 50);
    if !out.converged {
        return Err(out.error.unwrap_or(Error::NonConvergence { iterations: out.iterations, residual: out.norm }));
    }
    let t = run(&out.x)?;
    let l = t
        .states
        .iter()
        .zip(&t.controls)
        .map(|(x, u)| new_lagrangian(&sub, &NewLagPoint::from_coords(n, &[x.as_slice(), u].concat())))
        .collect::<Result<Vec<_>>>()?;
    Ok(simpson(&l, t.step()))
}

/// Central differences of a generating function in each coordinate of its
/// four boundary arguments.
fn fd_partials(
    f: impl Fn([&[f64]; 4]) -> Result<f64>,
    ends: [&[f64]; 4],
    h: f64,
) -> Result<[Vec<f64>; 4]> {
    let mut out: [Vec<f64>; 4] = Default::default();
    for (slot, grad) in out.iter_mut().enumerate() {
        for c in 0..ends[slot].len() {
            let eval = |s: f64| -> Result<f64> {
                let mut moved = ends[slot].to_vec();
                moved[c] += s;
                let mut args = ends;
                args[slot] = &moved;
                f(args)
            };
            grad.push((eval(h)? - eval(-h)?) / (2.0 * h));
        }
    }
    Ok(out)
}

/// Generating-function derivative identities on an interior window of the
/// extremal solved in the given chart from the default initial guess.
pub fn generating_checks<M: Model>(
    p: &OcpProblem<M>,
    f: Formulation,
    window: (f64, f64),
    n_steps: usize,
) -> Result<GeneratingReport> {
    let n = p.n();
    let (ta, tb) = window;
    let tf = p.boundary.t_final;
    if !(0.0 < ta && ta < tb && tb < tf) {
        return Err(Error::Config(format!("window ({ta}, {tb}) is not inside (0, {tf})")));
    }
    let base = solve_bvp(p, f, &default_guess(p, f)?, n_steps, 1e-10)?;
    if !base.converged {
        return Err(Error::NonConvergence { iterations: base.iterations, residual: base.residual });
    }
    let traj = base.trajectory.expect("solved trace");
    let h = traj.step();
    let ia = (ta / h).round() as usize;
    let ib = (tb / h).round() as usize;
    let (ta, tb) = (traj.t[ia], traj.t[ib]);
    let span = tb - ta;
    let steps = ib - ia;
    let pmp = traj.to_chart(p, Formulation::Pmp)?;
    let lag = traj.to_chart(p, Formulation::NewLag)?;
    let blk = |x: &[f64], b: usize| x[b * n..(b + 1) * n].to_vec();
    let (xa, xb) = (&pmp.states[ia], &pmp.states[ib]);
    let (qa, va, lqa, lva) = (blk(xa, 0), blk(xa, 1), blk(xa, 2), blk(xa, 3));
    let (qb, vb, lqb, lvb) = (blk(xb, 0), blk(xb, 1), blk(xb, 2), blk(xb, 3));
    let (ka, kb) = (blk(&lag.states[ia], 1), blk(&lag.states[ib], 1));
    let warm_c: Vec<f64> = [lqa.clone(), lva.clone()].concat();
    let warm_l: Vec<f64> = [va.clone(), blk(&lag.states[ia], 3)].concat();

    let dsc = fd_partials(|e| s_c(p, span, e, &warm_c, steps), [&qa, &va, &qb, &vb], GENERATING_STEP)?;
    let dsl = fd_partials(|e| s_lag(p, span, e, &warm_l, steps), [&qa, &ka, &qb, &kb], GENERATING_STEP)?;

    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let zeros = vec![0.0; n];
    let mut identities = Vec::new();
    let mut push = |name: &str, expected: &[f64], measured: &[f64]| {
        for i in 0..n {
            let suffix = if n > 1 { format!("[{i}]") } else { String::new() };
            identities.push(IdentityCheck {
                name: format!("{name}{suffix}"),
                expected: expected[i],
                measured: measured[i],
                residual: (expected[i] - measured[i]).abs(),
            });
        }
    };
    push("D_qa S_C = -lq_a", &neg(&lqa), &dsc[0]);
    push("D_va S_C = -lv_a", &neg(&lva), &dsc[1]);
    push("D_qb S_C = lq_b", &lqb, &dsc[2]);
    push("D_vb S_C = lv_b", &lvb, &dsc[3]);
    push("D_qa S_L = lq_a", &lqa, &dsl[0]);
    push("D_ka S_L = -v_a", &neg(&va), &dsl[1]);
    push("D_qb S_L = -lq_b", &neg(&lqb), &dsl[2]);
    push("D_kb S_L = v_b", &vb, &dsl[3]);
    // Bracket B = κ_b·v_b − κ_a·v_a − S_L̃ with v_a, v_b as free arguments.
    push("D_qa B = -lq_a", &neg(&lqa), &neg(&dsl[0]));
    push("D_va B = -lv_a", &neg(&lva), &neg(&ka));
    let dka: Vec<f64> = (0..n).map(|i| -va[i] - dsl[1][i]).collect();
    push("D_ka B = 0", &zeros, &dka);
    push("D_qb B = lq_b", &lqb, &neg(&dsl[2]));
    push("D_vb B = lv_b", &lvb, &kb);
    let dkb: Vec<f64> = (0..n).map(|i| vb[i] - dsl[3][i]).collect();
    push("D_kb B = 0", &zeros, &dkb);

    // Quadrature identity on the base trace itself.
    let window_vals = |g: &dyn Fn(usize) -> Result<f64>| -> Result<f64> {
        let v = (ia..=ib).map(g).collect::<Result<Vec<_>>>()?;
        Ok(simpson(&v, h))
    };
    let sl = window_vals(&|i| {
        new_lagrangian(p, &NewLagPoint::from_coords(n, &[lag.states[i].as_slice(), &lag.controls[i]].concat()))
    })?;
    let sc = window_vals(&|i| {
        let (q, v) = traj.state(i);
        Ok(p.model.cost(&q, &v, &traj.controls[i]))
    })?;
    let mixed = dot(&kb, &vb) - dot(&ka, &va) - sl - sc;
    Ok(GeneratingReport { window: (ta, tb), identities, mixed_relation: mixed })
}
