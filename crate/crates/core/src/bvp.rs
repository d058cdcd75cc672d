//! Fixed-step RK4 integration of the extended state fields and single
//! shooting for the two-point boundary-value problem.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Model, OcpProblem};
use crate::optimality::{assemble, convert, field_at, identify, state_of, transversality_residual, FieldEval, Formulation};

/// A solved or integrated trace on a uniform grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub formulation: Formulation,
    pub n: usize,
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub monitors: Vec<(String, Vec<f64>)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }
    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
    pub fn step(&self) -> f64 {
        self.t[1] - self.t[0]
    }
    pub fn state(&self, i: usize) -> (Vec<f64>, Vec<f64>) {
        state_of(self.formulation, &self.states[i], self.n)
    }
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("empty trajectory")
    }
    pub fn monitor(&self, name: &str) -> Option<&[f64]> {
        self.monitors.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_slice())
    }
    pub fn set_monitor(&mut self, name: &str, values: Vec<f64>) {
        match self.monitors.iter_mut().find(|(k, _)| k == name) {
            Some(slot) => slot.1 = values,
            None => self.monitors.push((name.to_string(), values)),
        }
    }

    /// The same trace in another chart, node by node.
    pub fn to_chart<M: Model>(&self, p: &OcpProblem<M>, to: Formulation) -> Result<Trajectory> {
        let states = self
            .states
            .iter()
            .zip(&self.controls)
            .map(|(x, u)| convert(p, x, self.formulation, to, u))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory { formulation: to, states, monitors: Vec::new(), ..self.clone() })
    }

    /// CSV trace: `t, q_i, v_i, adj1_i, adj2_i, u_j`, then one column per
    /// monitor. Values carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.n;
        let m = self.controls.first().map_or(0, |u| u.len());
        let mut head = vec!["t".to_string()];
        for tag in ["q", "v", "adj1_", "adj2_"] {
            head.extend((1..=n).map(|i| format!("{tag}{i}")));
        }
        head.extend((1..=m).map(|j| format!("u{j}")));
        head.extend(self.monitors.iter().map(|(k, _)| k.clone()));
        writeln!(w, "{}", head.join(","))?;
        let l = self.formulation.layout();
        for i in 0..self.len() {
            let x = &self.states[i];
            let mut row = vec![self.t[i]];
            for blk in l {
                row.extend_from_slice(&x[blk * n..(blk + 1) * n]);
            }
            row.extend_from_slice(&self.controls[i]);
            row.extend(self.monitors.iter().map(|(_, v)| v[i]));
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Failure of an integration, carrying the nodes computed so far.
#[derive(Debug)]
pub struct IvpFailure {
    pub error: Error,
    pub partial: Trajectory,
}

impl From<Box<IvpFailure>> for Error {
    fn from(f: Box<IvpFailure>) -> Error {
        f.error
    }
}

/// Uniform grid `tᵢ = T·i/N`.
pub fn grid(t_final: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|i| t_final * i as f64 / n_steps as f64).collect()
}

/// One classical RK4 step.
pub fn rk4_step(mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let axpy = |a: &[f64], s: f64, b: &[f64]| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<_>>();
    let k1 = f(x)?;
    let k2 = f(&axpy(x, 0.5 * h, &k1))?;
    let k3 = f(&axpy(x, 0.5 * h, &k2))?;
    let k4 = f(&axpy(x, h, &k3))?;
    Ok((0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Integrate a chart field over `[0, T]` with `N` RK4 steps, recording the
/// optimal control at every node.
pub fn integrate_ivp<M: Model>(
    p: &OcpProblem<M>,
    f: Formulation,
    x0: &[f64],
    n_steps: usize,
) -> std::result::Result<Trajectory, Box<IvpFailure>> {
    let n = p.n();
    let t = grid(p.boundary.t_final, n_steps);
    let mut traj = Trajectory { formulation: f, n, t: Vec::new(), states: Vec::new(), controls: Vec::new(), monitors: Vec::new() };
    let fail = |error: Error, traj: Trajectory| Box::new(IvpFailure { error, partial: traj });
    if n_steps < 2 {
        return Err(fail(Error::Config(format!("grid must have at least 2 steps, got {n_steps}")), traj));
    }
    if x0.len() != 4 * n {
        return Err(fail(Error::Dimension(format!("initial state has {} coordinates, expected {}", x0.len(), 4 * n)), traj));
    }
    let h = p.boundary.t_final / n_steps as f64;
    let mut fe = FieldEval::new(p, f);
    let mut x = x0.to_vec();
    for (i, &ti) in t.iter().enumerate() {
        let u = match fe.control(&x) {
            Ok(u) => u,
            Err(e) => return Err(fail(e, traj)),
        };
        traj.t.push(ti);
        traj.states.push(x.clone());
        traj.controls.push(u);
        if i == n_steps {
            break;
        }
        match rk4_step(|y| fe.eval(y).map(|r| r.0), &x, h) {
            Ok(y) => x = y,
            Err(e) => return Err(fail(e, traj)),
        }
    }
    Ok(traj)
}

/// Open-loop integration of `q̈ = X_v(q, q̇, u(t))` on `(q, v)`.
pub fn integrate_open_loop<M: Model>(
    p: &OcpProblem<M>,
    q0: &[f64],
    v0: &[f64],
    control: impl Fn(f64) -> Vec<f64>,
    n_steps: usize,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = p.n();
    let t = grid(p.boundary.t_final, n_steps);
    let h = p.boundary.t_final / n_steps as f64;
    let mut x: Vec<f64> = q0.iter().chain(v0).copied().collect();
    let mut out = vec![x.clone()];
    for &ti in &t[..n_steps] {
        // Time enters through u only; stages use the node-centred times.
        let mut stage = 0usize;
        let offsets = [0.0, 0.5 * h, 0.5 * h, h];
        x = rk4_step(
            |y| {
                let u = control(ti + offsets[stage.min(3)]);
                stage += 1;
                p.model.check_domain(&y[..n], &y[n..])?;
                let mut d = y[n..].to_vec();
                d.extend(p.model.accel(&y[..n], &y[n..], &u));
                Ok(d)
            },
            &x,
            h,
        )?;
        out.push(x.clone());
    }
    Ok((t, out))
}

/// Initial chart vector from the boundary data and the adjoint unknowns.
pub fn initial_state<M: Model>(p: &OcpProblem<M>, f: Formulation, guess: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    if guess.len() != 2 * n {
        return Err(Error::Dimension(format!("shooting guess has {} entries, expected {}", guess.len(), 2 * n)));
    }
    if f == Formulation::Forced {
        p.require_lagrangian()?;
    }
    Ok(assemble(f, &p.boundary.q0, &p.boundary.v0, &guess[..n], &guess[n..]))
}

/// The registry's starting adjoint written in the coordinates of chart `f`.
pub fn default_guess<M: Model>(p: &OcpProblem<M>, f: Formulation) -> Result<Vec<f64>> {
    let n = p.n();
    let g = crate::registry::pmp_guess(p.model.name(), n);
    if g.iter().all(|x| *x == 0.0) || f == Formulation::Pmp {
        return Ok(g);
    }
    let x0 = assemble(Formulation::Pmp, &p.boundary.q0, &p.boundary.v0, &g[..n], &g[n..]);
    let (y, _) = identify(p, &x0, Formulation::Pmp, f, &vec![0.0; p.m()])?;
    let l = f.layout();
    Ok([&y[l[2] * n..(l[2] + 1) * n], &y[l[3] * n..(l[3] + 1) * n]].concat())
}

/// Terminal residual of the shooting map at `guess`.
pub fn shoot<M: Model>(p: &OcpProblem<M>, f: Formulation, guess: &[f64], n_steps: usize) -> Result<Vec<f64>> {
    let x0 = initial_state(p, f, guess)?;
    let traj = integrate_ivp(p, f, &x0, n_steps)?;
    let u_last = traj.controls.last().cloned().unwrap_or_default();
    transversality_residual(p, f, traj.last(), &u_last)
}

/// Result of a damped Newton iteration.
#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub residual: Vec<f64>,
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<Error>,
}

/// Damped Newton with a central-difference Jacobian (step
/// `1e-6·(1 + ‖x‖∞)`), backtracking on `‖r‖₂`. Convergence is judged on
/// `‖r‖∞`.
pub fn newton_fd(f: impl Fn(&[f64]) -> Result<Vec<f64>>, guess: &[f64], tol: f64, max_iter: usize) -> NewtonOutcome {
    let mut x = guess.to_vec();
    let mut r = match f(&x) {
        Ok(r) => r,
        Err(e) => {
            return NewtonOutcome { x, residual: Vec::new(), norm: f64::INFINITY, iterations: 0, converged: false, error: Some(e) }
        }
    };
    let mut norm = linalg::inf_norm(&r);
    let mut error = None;
    let mut it = 0;
    while norm > tol && it < max_iter {
        it += 1;
        let h = 1e-6 * (1.0 + linalg::inf_norm(&x));
        let k = x.len();
        let mut jac = DMatrix::zeros(r.len(), k);
        let mut jac_err = None;
        for c in 0..k {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            match (f(&xp), f(&xm)) {
                (Ok(a), Ok(b)) => {
                    for (row, (ai, bi)) in a.iter().zip(&b).enumerate() {
                        jac[(row, c)] = (ai - bi) / (2.0 * h);
                    }
                }
                (Err(e), _) | (_, Err(e)) => {
                    jac_err = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = jac_err {
            error = Some(e);
            break;
        }
        let rhs = DVector::from_column_slice(&r);
        let step = match linalg::solve(&jac, &rhs) {
            Ok(s) => s,
            Err(_) => match jac.clone().svd(true, true).solve(&rhs, 1e-12) {
                Ok(s) => s,
                Err(e) => {
                    error = Some(Error::Singular(e.to_string()));
                    break;
                }
            },
        };
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1.0 / 1024.0 {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if let Ok(rt) = f(&trial) {
                let nt = linalg::inf_norm(&rt);
                if l2(&rt) < l2(&r) {
                    x = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            error = Some(Error::NonConvergence { iterations: it, residual: norm });
            break;
        }
    }
    NewtonOutcome { converged: norm <= tol, x, residual: r, norm, iterations: it, error }
}

fn l2(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub const MAX_SHOOTING_ITERATIONS: usize = 50;

/// JSON run summary.
#[derive(Clone, Debug, Serialize)]
pub struct SolverReport {
    pub problem: String,
    pub formulation: Formulation,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub cost: Option<f64>,
    pub drifts: BTreeMap<String, f64>,
    pub seed: u64,
    pub grid: usize,
    /// Initial adjoint coordinates of the best iterate.
    pub initial_adjoint: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl SolverReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Solve the boundary-value problem by single shooting on the initial
/// adjoint coordinates of the chosen chart. The returned trajectory carries
/// the standard monitors.
pub fn solve_bvp<M: Model>(p: &OcpProblem<M>, f: Formulation, guess: &[f64], n_steps: usize, tol: f64) -> Result<SolverReport> {
    if tol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    if n_steps < 2 {
        return Err(Error::Config(format!("grid must have at least 2 steps, got {n_steps}")));
    }
    initial_state(p, f, guess)?;
    let out = newton_fd(|g| shoot(p, f, g, n_steps), guess, tol, MAX_SHOOTING_ITERATIONS);
    let mut report = SolverReport {
        problem: p.model.name().to_string(),
        formulation: f,
        converged: out.converged,
        iterations: out.iterations,
        residual: out.norm,
        cost: None,
        drifts: BTreeMap::new(),
        seed: 0,
        grid: n_steps,
        initial_adjoint: out.x.clone(),
        message: out.error.as_ref().map(|e| e.to_string()),
        trajectory: None,
    };
    let x0 = initial_state(p, f, &out.x)?;
    match integrate_ivp(p, f, &x0, n_steps) {
        Ok(mut traj) => {
            report.cost = objective(p, &traj).ok();
            if let Ok(drifts) = crate::conserved::attach_standard_monitors(p, &mut traj) {
                report.drifts = drifts;
            }
            report.trajectory = Some(traj);
        }
        Err(fail) => {
            report.message = Some(fail.error.to_string());
            report.trajectory = Some(fail.partial);
        }
    }
    Ok(report)
}

/// Composite Simpson rule on a uniform grid; an odd number of intervals
/// closes with Simpson's 3/8 rule on the last three.
pub fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len().saturating_sub(1);
    match n {
        0 => 0.0,
        1 => 0.5 * h * (y[0] + y[1]),
        _ => {
            let (even_end, tail) = if n % 2 == 0 { (n, 0.0) } else if n == 3 {
                (0, 3.0 * h / 8.0 * (y[0] + 3.0 * y[1] + 3.0 * y[2] + y[3]))
            } else {
                let k = n - 3;
                (k, 3.0 * h / 8.0 * (y[k] + 3.0 * y[k + 1] + 3.0 * y[k + 2] + y[k + 3]))
            };
            let mut s = 0.0;
            let mut i = 0;
            while i + 2 <= even_end {
                s += h / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
                i += 2;
            }
            s + tail
        }
    }
}

/// `φ(q(T), v(T)) + ∫C dt` on a trace.
pub fn objective<M: Model>(p: &OcpProblem<M>, traj: &Trajectory) -> Result<f64> {
    let c: Vec<f64> = (0..traj.len())
        .map(|i| {
            let (q, v) = traj.state(i);
            p.model.cost(&q, &v, &traj.controls[i])
        })
        .collect();
    let (q, v) = traj.state(traj.len() - 1);
    Ok(p.boundary.mayer().eval(&q, &v) + simpson(&c, traj.step()))
}

/// The augmented objectives evaluated by quadrature on one trace.
#[derive(Clone, Debug, Serialize)]
pub struct AugmentedCosts {
    /// `φ + ∫[C + λ·(ẋ − X)]`
    pub j1: f64,
    /// `φ + ∫[C + κ·(q̈ − X_v)]`
    pub j2: f64,
    /// `φ + κ(T)·q̇(T) − κ(0)·q̇(0) + ∫[C − κ̇·q̇ − κ·X_v]`
    pub j3: f64,
    /// `φ + D₂L·ξ|_T − D₂L·ξ|_0 + ∫[C − D₂L·ξ̇ − (D₁L + f_L)·ξ]`, when a
    /// Lagrangian is present.
    pub j4: Option<f64>,
}

impl AugmentedCosts {
    pub fn spread(&self) -> f64 {
        let mut v = vec![self.j1, self.j2, self.j3];
        v.extend(self.j4);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

pub fn augmented_costs<M: Model>(p: &OcpProblem<M>, traj: &Trajectory) -> Result<AugmentedCosts> {
    let n = p.n();
    let m = &p.model;
    let h = traj.step();
    let pmp = traj.to_chart(p, Formulation::Pmp)?;
    let lag = traj.to_chart(p, Formulation::NewLag)?;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let len = traj.len();
    let (mut i1, mut i2, mut i3) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    for i in 0..len {
        let u = &traj.controls[i];
        let x = &pmp.states[i];
        let (q, v, lq, lv) = (&x[..n], &x[n..2 * n], &x[2 * n..3 * n], &x[3 * n..]);
        let c = m.cost(q, v, u);
        let xa = m.accel(q, v, u);
        let dx = field_at(p, Formulation::Pmp, x, u)?;
        i1[i] = c
            + (0..n).map(|j| lq[j] * (dx[j] - v[j]) + lv[j] * (dx[n + j] - xa[j])).sum::<f64>();
        let y = &lag.states[i];
        let dy = field_at(p, Formulation::NewLag, y, u)?;
        let (k, vq) = (&y[n..2 * n], &y[2 * n..3 * n]);
        let (kdot, qddot) = (&dy[n..2 * n], &dy[2 * n..3 * n]);
        i2[i] = c + (0..n).map(|j| k[j] * (qddot[j] - xa[j])).sum::<f64>();
        i3[i] = c - dot(kdot, vq) - dot(k, &xa);
    }
    let (qt, vt) = traj.state(len - 1);
    let phi = p.boundary.mayer().eval(&qt, &vt);
    let j1 = phi + simpson(&i1, h);
    let j2 = phi + simpson(&i2, h);
    let kv = |y: &[f64]| dot(&y[n..2 * n], &y[2 * n..3 * n]);
    let j3 = phi + kv(&lag.states[len - 1]) - kv(&lag.states[0]) + simpson(&i3, h);
    let j4 = if m.has_lagrangian() {
        let fc = traj.to_chart(p, Formulation::Forced)?;
        let mut i4 = vec![0.0; len];
        let mut bnd = [0.0; 2];
        for i in 0..len {
            let u = &traj.controls[i];
            let z = &fc.states[i];
            let (q, xi, vq, vxi) = (&z[..n], &z[n..2 * n], &z[2 * n..3 * n], &z[3 * n..]);
            let (d1, d2) = crate::formulations::lagrangian_grad_s(m, q, vq);
            let f = m.force(q, vq, u);
            let d1f: Vec<f64> = d1.iter().zip(&f).map(|(a, b)| a + b).collect();
            i4[i] = m.cost(q, vq, u) - dot(&d2, vxi) - dot(&d1f, xi);
            if i == 0 {
                bnd[0] = dot(&d2, xi);
            }
            if i == len - 1 {
                bnd[1] = dot(&d2, xi);
            }
        }
        Some(phi + bnd[1] - bnd[0] + simpson(&i4, h))
    } else {
        None
    };
    Ok(AugmentedCosts { j1, j2, j3, j4 })
}
