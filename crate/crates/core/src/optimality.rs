//! Control elimination, state–adjoint vector fields for each chart,
//! identification maps between charts, and transversality residuals.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diff::{consts, gradient, hessian, Jet2, Scalar};
use crate::error::{Error, Result};
use crate::formulations::{forced_new_lagrangian_s, new_lagrangian_s, phi_s};
use crate::linalg;
use crate::model::{hessian_generic, mass_matrix, Model, OcpProblem, Terminal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// `(q, v, λ_q, λ_v)`
    Pmp,
    /// `(q, κ, v_q, v_κ)`
    NewLag,
    /// `(q, κ, p_q, p_κ)`
    NewHam,
    /// `(q, ξ, v_q, v_ξ)`
    Forced,
}

pub const FORMULATIONS: [Formulation; 4] = [Formulation::Pmp, Formulation::NewLag, Formulation::NewHam, Formulation::Forced];

impl Formulation {
    pub fn name(&self) -> &'static str {
        match self {
            Formulation::Pmp => "pmp",
            Formulation::NewLag => "newlag",
            Formulation::NewHam => "newham",
            Formulation::Forced => "forced",
        }
    }

    /// Block indices `(q, v, adj1, adj2)` of the chart's four `n`-blocks:
    /// where the configuration, the physical velocity and the two adjoint
    /// blocks live.
    pub fn layout(&self) -> [usize; 4] {
        match self {
            Formulation::Pmp => [0, 1, 2, 3],
            Formulation::NewLag | Formulation::Forced => [0, 2, 1, 3],
            Formulation::NewHam => [0, 3, 1, 2],
        }
    }

    /// Column labels `(v, adj1, adj2)` for traces.
    pub fn labels(&self) -> [&'static str; 3] {
        match self {
            Formulation::Pmp => ["v", "lq", "lv"],
            Formulation::NewLag => ["vq", "k", "vk"],
            Formulation::NewHam => ["pk", "k", "pq"],
            Formulation::Forced => ["vq", "xi", "vxi"],
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pmp" => Ok(Formulation::Pmp),
            "newlag" => Ok(Formulation::NewLag),
            "newham" => Ok(Formulation::NewHam),
            "forced" => Ok(Formulation::Forced),
            other => Err(Error::Config(format!("unknown formulation `{other}`"))),
        }
    }
}

/// Blocks of a `4n` chart vector.
pub fn blocks(x: &[f64], n: usize) -> [&[f64]; 4] {
    [&x[..n], &x[n..2 * n], &x[2 * n..3 * n], &x[3 * n..4 * n]]
}

/// `(q, v)` of a chart vector.
pub fn state_of(f: Formulation, x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let b = blocks(x, n);
    let l = f.layout();
    (b[l[0]].to_vec(), b[l[1]].to_vec())
}

/// Assemble a chart vector from state and adjoint blocks.
pub fn assemble(f: Formulation, q: &[f64], v: &[f64], adj1: &[f64], adj2: &[f64]) -> Vec<f64> {
    let n = q.len();
    let mut x = vec![0.0; 4 * n];
    let l = f.layout();
    for (blk, src) in l.iter().zip([q, v, adj1, adj2]) {
        x[blk * n..(blk + 1) * n].copy_from_slice(src);
    }
    x
}

/// Control-dependent objective maximized by the optimal control, in the
/// chart's own coordinates.
fn u_objective<M: Model, S: Scalar>(m: &M, f: Formulation, x: &[S], u: &[S]) -> S {
    let n = x.len() / 4;
    let b = [&x[..n], &x[n..2 * n], &x[2 * n..3 * n], &x[3 * n..]];
    match f {
        Formulation::Pmp => phi_s(m, b[0], b[3], b[1], u),
        Formulation::NewLag => phi_s(m, b[0], b[1], b[2], u),
        Formulation::NewHam => phi_s(m, b[0], b[1], b[3], u),
        Formulation::Forced => crate::diff::dot(&m.force(b[0], b[2], u), b[1]) - m.cost(b[0], b[2], u),
    }
}

fn u_jet<M: Model>(m: &M, f: Formulation, x: &[f64], u: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let xs = consts::<Jet2>(x);
    let j = hessian(|w| u_objective(m, f, &xs, w), u);
    let k = u.len();
    (j.g, DMatrix::from_row_slice(k, k, &j.h))
}

/// A stationary point of the control objective, without classification.
#[derive(Clone, Debug)]
pub struct StationaryControl {
    pub u: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub iterations: usize,
}

const MAX_NEWTON: usize = 50;

/// Damped Newton on `∂_u(objective) = 0` from `u0`.
pub fn stationary_control<M: Model>(p: &OcpProblem<M>, f: Formulation, x: &[f64], u0: &[f64]) -> Result<StationaryControl> {
    let m = &p.model;
    if f == Formulation::Forced {
        p.require_lagrangian()?;
    }
    let (g0, h0) = u_jet(m, f, x, u0);
    let shifted: Vec<f64> = u0.iter().map(|v| v + 1.0).collect();
    let (_, h1) = u_jet(m, f, x, &shifted);
    if h0.amax() <= 1e-14 * (1.0 + linalg::inf_norm(&g0)) && h1.amax() <= 1e-14 * (1.0 + linalg::inf_norm(&g0)) {
        return Err(Error::SingularControl("the maximization condition carries no information on u".into()));
    }
    let mut u = u0.to_vec();
    let (mut g, mut h) = (g0, h0);
    let tol = |h: &DMatrix<f64>, u: &[f64]| p.control_tol * (1.0 + h.amax() * (1.0 + linalg::inf_norm(u)));
    for it in 0..=MAX_NEWTON {
        let gn = linalg::inf_norm(&g);
        if gn <= tol(&h, &u) {
            return Ok(StationaryControl { u, hessian: h, iterations: it });
        }
        if it == MAX_NEWTON {
            break;
        }
        let du = match linalg::solve(&h, &DVector::from_column_slice(&g)) {
            Ok(d) => d,
            Err(_) => break,
        };
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(du.iter()).map(|(a, b)| a - t * b).collect();
            let (gt, ht) = u_jet(m, f, x, &trial);
            if linalg::inf_norm(&gt) < gn || t < 1e-6 {
                u = trial;
                g = gt;
                h = ht;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::SingularControl(format!("Newton on the maximization condition diverged (residual {:.3e})", linalg::inf_norm(&g))))
}

/// Optimal control at a chart point: the stationary control that locally
/// maximizes the Pontryagin Hamiltonian.
pub fn solve_max_condition<M: Model>(p: &OcpProblem<M>, f: Formulation, x: &[f64], u0: &[f64]) -> Result<Vec<f64>> {
    let (_, h0) = u_jet(&p.model, f, x, u0);
    let sc = stationary_control(p, f, x, u0)?;
    let sv = sc.hessian.clone().svd(false, false).singular_values;
    let floor = 1e-5 * h0.amax().max(1.0);
    if sv.iter().any(|&s| s <= floor) {
        return Err(Error::RegularityViolation(format!("control Hessian is rank deficient at u = {:?}", sc.u)));
    }
    if !linalg::negative_definite(&sc.hessian) {
        return Err(Error::SingularControl(format!("stationary control {:?} is not a maximum", sc.u)));
    }
    Ok(sc.u)
}

/// Euler–Lagrange field of a controlled Lagrangian `ℒ(x, ẋ, u)` on a
/// `2n`-dimensional configuration space, with the control eliminated by
/// `ℒ_u = 0`. Differentiating both equations in time gives the linear system
/// `[[ℒ_ẋẋ, ℒ_ẋu], [ℒ_uẋ, ℒ_uu]]·[ẍ; u̇] = [ℒ_x − ℒ_ẋx·ẋ; −ℒ_ux·ẋ]`.
pub fn el_field(lag: impl FnOnce(&[Jet2]) -> Jet2, state: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = state.len();
    let (nx, mu) = (d / 2, u.len());
    let z: Vec<f64> = state.iter().chain(u).copied().collect();
    let j = hessian(lag, &z);
    let xd = &state[nx..];
    let k = nx + mu;
    let a = DMatrix::from_fn(k, k, |r, c| j.hess(nx + r, nx + c));
    let rhs = DVector::from_fn(k, |r, _| {
        let row = nx + r;
        let mut s = if r < nx { j.grad(r) } else { 0.0 };
        for (c, xdc) in xd.iter().enumerate() {
            s -= j.hess(row, c) * xdc;
        }
        s
    });
    let sol = linalg::solve(&a, &rhs).map_err(|e| Error::RegularityViolation(format!("Euler–Lagrange system: {e}")))?;
    let mut out = xd.to_vec();
    out.extend_from_slice(&sol.as_slice()[..nx]);
    Ok((out, sol.as_slice()[nx..].to_vec()))
}

/// `(∂_qΦ, ∂_vΦ)` at `(q, κ, v, u)`.
fn dphi<M: Model>(m: &M, q: &[f64], k: &[f64], v: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = q.len();
    let (ks, us) = (consts(k), consts(u));
    let x: Vec<f64> = q.iter().chain(v).copied().collect();
    let (_, g) = gradient(|w| phi_s(m, &w[..n], &ks, &w[n..], &us), &x);
    (g[..n].to_vec(), g[n..].to_vec())
}

/// Time derivative of a chart vector with the control already eliminated.
pub fn field_at<M: Model>(p: &OcpProblem<M>, f: Formulation, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    let m = &p.model;
    let (q, v) = state_of(f, x, n);
    m.check_domain(&q, &v)?;
    let b = blocks(x, n);
    let out = match f {
        Formulation::Pmp => {
            let (lq, lv) = (b[2], b[3]);
            let (dq, dv) = dphi(m, &q, lv, &v, u);
            let a = m.accel(&q, &v, u);
            let mut out = v.clone();
            out.extend(a);
            out.extend(dq.iter().map(|x| -x));
            out.extend(lq.iter().zip(&dv).map(|(l, d)| -l - d));
            out
        }
        Formulation::NewHam => {
            let (k, pq, pk) = (b[1], b[2], b[3]);
            let (dq, dv) = dphi(m, &q, k, pk, u);
            let mut out = pk.to_vec();
            out.extend(pq.iter().zip(&dv).map(|(a, d)| a - d));
            out.extend(dq);
            out.extend(m.accel(&q, pk, u));
            out
        }
        Formulation::NewLag => {
            el_field(|z| new_lagrangian_s(m, &z[..n], &z[n..2 * n], &z[2 * n..3 * n], &z[3 * n..4 * n], &z[4 * n..]), x, u)?
                .0
        }
        Formulation::Forced => {
            p.require_lagrangian()?;
            el_field(
                |z| forced_new_lagrangian_s(m, &z[..n], &z[n..2 * n], &z[2 * n..3 * n], &z[3 * n..4 * n], &z[4 * n..]),
                x,
                u,
            )?
            .0
        }
    };
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{f} field")));
    }
    Ok(out)
}

/// Field evaluation with the control eliminated pointwise, warm-started
/// from the previous evaluation.
#[derive(Clone, Debug)]
pub struct FieldEval<'a, M> {
    pub problem: &'a OcpProblem<M>,
    pub formulation: Formulation,
    pub u_warm: Vec<f64>,
}

impl<'a, M: Model> FieldEval<'a, M> {
    pub fn new(problem: &'a OcpProblem<M>, formulation: Formulation) -> Self {
        FieldEval { problem, formulation, u_warm: vec![0.0; problem.m()] }
    }

    pub fn control(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        let u = solve_max_condition(self.problem, self.formulation, x, &self.u_warm)?;
        self.u_warm = u.clone();
        Ok(u)
    }

    /// `(ẋ, u*)`.
    pub fn eval(&mut self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let u = self.control(x)?;
        Ok((field_at(self.problem, self.formulation, x, &u)?, u))
    }
}

/// Field of `L̃ᴱ` obtained by pushing the Pontryagin field through `α`, in
/// `(q, κ, v_q, v_κ)`. Here `v_κ` is not the time derivative of `κ`.
pub fn alpha_field<M: Model>(p: &OcpProblem<M>, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    let b = blocks(x, n);
    let pmp: Vec<f64> = [b[0], b[2], b[3], b[1]].concat();
    let y = field_at(p, Formulation::Pmp, &pmp, u)?;
    let yb = blocks(&y, n);
    Ok([yb[0], yb[3], yb[1], yb[2]].concat())
}

// ---------------------------------------------------------------------------
// Identification between charts
// ---------------------------------------------------------------------------

/// `D₁(D₂L)`: `[i][j] = ∂²L/∂v_i∂q_j`.
fn mixed_lagrangian<M: Model>(m: &M, q: &[f64], v: &[f64]) -> DMatrix<f64> {
    let n = q.len();
    let x: Vec<f64> = q.iter().chain(v).copied().collect();
    let (_, _, h) = hessian_generic(|y| m.lagrangian(&y[..n], &y[n..]), &x);
    DMatrix::from_fn(n, n, |i, j| h[n + i][j])
}

fn to_pmp<M: Model>(p: &OcpProblem<M>, f: Formulation, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    let m = &p.model;
    let b = blocks(x, n);
    Ok(match f {
        Formulation::Pmp => x.to_vec(),
        Formulation::NewLag => {
            let (_, dv) = dphi(m, b[0], b[1], b[2], u);
            let lq: Vec<f64> = b[3].iter().zip(&dv).map(|(vk, d)| -vk - d).collect();
            [b[0], b[2], &lq, b[1]].concat()
        }
        Formulation::NewHam => {
            let lq: Vec<f64> = b[2].iter().map(|v| -v).collect();
            [b[0], b[3], &lq, b[1]].concat()
        }
        Formulation::Forced => {
            let (q, xi, vq) = (b[0], b[1], b[2]);
            let fp = crate::formulations::ForcedPoint {
                q: q.to_vec(),
                xi: xi.to_vec(),
                vq: vq.to_vec(),
                vxi: b[3].to_vec(),
                u: u.to_vec(),
            };
            let w = crate::formulations::forced_fiber_derivative(p, &fp)?;
            let mm = mass_matrix(m, q, vq);
            let xi_v = DVector::from_column_slice(xi);
            let lv = &mm * &xi_v;
            let lq = mixed_lagrangian(m, q, vq).transpose() * &xi_v - DVector::from_column_slice(&w.wq);
            [q, vq, lq.as_slice(), lv.as_slice()].concat()
        }
    })
}

fn from_pmp<M: Model>(p: &OcpProblem<M>, f: Formulation, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    let m = &p.model;
    let b = blocks(x, n);
    let (q, v, lq, lv) = (b[0], b[1], b[2], b[3]);
    Ok(match f {
        Formulation::Pmp => x.to_vec(),
        Formulation::NewLag => {
            let (_, dv) = dphi(m, q, lv, v, u);
            let vk: Vec<f64> = lq.iter().zip(&dv).map(|(l, d)| -l - d).collect();
            [q, lv, v, &vk].concat()
        }
        Formulation::NewHam => {
            let pq: Vec<f64> = lq.iter().map(|l| -l).collect();
            [q, lv, &pq, v].concat()
        }
        Formulation::Forced => {
            p.require_lagrangian()?;
            let mm = mass_matrix(m, q, v);
            let sing = |_| Error::SingularMass { cond: linalg::cond(&mm) };
            let xi = linalg::solve(&mm, &DVector::from_column_slice(lv)).map_err(sing)?;
            let wq = mixed_lagrangian(m, q, v).transpose() * &xi - DVector::from_column_slice(lq);
            let w = crate::formulations::ForcedMomentumPoint {
                q: q.to_vec(),
                xi: xi.as_slice().to_vec(),
                wq: wq.as_slice().to_vec(),
                wxi: crate::formulations::lagrangian_grad_s(m, q, v).1,
                u: u.to_vec(),
            };
            let fp = crate::formulations::inverse_forced_fiber_derivative(p, &w)?;
            [q, xi.as_slice(), v, &fp.vxi].concat()
        }
    })
}

/// Transport a chart vector between formulations so that extremals map to
/// extremals. Returns the new coordinates and the optimal control, which is
/// the same in every chart.
pub fn identify<M: Model>(p: &OcpProblem<M>, x: &[f64], from: Formulation, to: Formulation, u_hint: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = solve_max_condition(p, from, x, u_hint)?;
    let pmp = to_pmp(p, from, x, &u)?;
    Ok((from_pmp(p, to, &pmp, &u)?, u))
}

/// [`identify`] with the optimal control already known.
pub fn convert<M: Model>(p: &OcpProblem<M>, x: &[f64], from: Formulation, to: Formulation, u: &[f64]) -> Result<Vec<f64>> {
    if from == to {
        return Ok(x.to_vec());
    }
    let pmp = to_pmp(p, from, x, u)?;
    from_pmp(p, to, &pmp, u)
}

/// Push a chart-velocity through [`identify`] by central differences.
pub fn pushforward<M: Model>(
    p: &OcpProblem<M>,
    x: &[f64],
    xdot: &[f64],
    from: Formulation,
    to: Formulation,
    u_hint: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let shift = |s: f64| -> Result<Vec<f64>> {
        let y: Vec<f64> = x.iter().zip(xdot).map(|(a, b)| a + s * b).collect();
        Ok(identify(p, &y, from, to, u_hint)?.0)
    };
    let (a, b) = (shift(h)?, shift(-h)?);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect())
}

// ---------------------------------------------------------------------------
// Transversality
// ---------------------------------------------------------------------------

/// Terminal residual. Fixed mode: `(q(T) − q_T, v(T) − v_T)`. Free mode:
/// the costate conditions induced by the Mayer term, written in the chart's
/// own coordinates; the forced chart is transported to the Pontryagin one.
pub fn transversality_residual<M: Model>(p: &OcpProblem<M>, f: Formulation, x: &[f64], u_hint: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    let (q, v) = state_of(f, x, n);
    match &p.boundary.terminal {
        Terminal::Fixed { q: qt, v: vt } => {
            Ok(q.iter().zip(qt).chain(v.iter().zip(vt)).map(|(a, b)| a - b).collect())
        }
        Terminal::Free(mayer) => {
            let (d1, d2) = mayer.grad(&q, &v);
            let b = blocks(x, n);
            let add = |a: &[f64], c: &[f64], s: f64| a.iter().zip(c).map(|(x, y)| x + s * y).collect::<Vec<_>>();
            Ok(match f {
                Formulation::Pmp => [add(b[2], &d1, 1.0), add(b[3], &d2, 1.0)].concat(),
                Formulation::NewHam => [add(b[1], &d2, 1.0), add(b[2], &d1, -1.0)].concat(),
                Formulation::NewLag => {
                    let u = solve_max_condition(p, f, x, u_hint)?;
                    let (_, dv) = dphi(&p.model, b[0], b[1], b[2], &u);
                    let pq = add(b[3], &dv, 1.0);
                    [add(b[1], &d2, 1.0), add(&pq, &d1, -1.0)].concat()
                }
                Formulation::Forced => {
                    let (y, _) = identify(p, x, f, Formulation::Pmp, u_hint)?;
                    let yb = blocks(&y, n);
                    [add(yb[2], &d1, 1.0), add(yb[3], &d2, 1.0)].concat()
                }
            })
        }
    }
}

/// Free-mode terminal conditions exactly as commonly displayed for the new
/// control Lagrangian, `κ(T) = −D₂φ` and `κ̇(T) = D₁φ + D₂C + D₂φ·D₂X_v`,
/// and for the forced variant, `D₂₂L·ξ = −D₂φ` and
/// `D₂₂L·ξ̇ = D₁φ + D₂C − ξ·D₂f_L`. Reported for comparison with
/// [`transversality_residual`]; not used for shooting.
pub fn transversality_displayed<M: Model>(p: &OcpProblem<M>, f: Formulation, x: &[f64], u_hint: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    let Terminal::Free(mayer) = &p.boundary.terminal else {
        return transversality_residual(p, f, x, u_hint);
    };
    let (q, v) = state_of(f, x, n);
    let (d1, d2) = mayer.grad(&q, &v);
    let b = blocks(x, n);
    let m = &p.model;
    let u = solve_max_condition(p, f, x, u_hint)?;
    let (qs, us) = (consts(&q), consts(&u));
    let (_, dc) = gradient(|w| m.cost(&qs, w, &us), &v);
    match f {
        Formulation::NewLag => {
            let (_, jx) = crate::diff::jacobian(|w| m.accel(&qs, w, &us), &v);
            let r1: Vec<f64> = (0..n).map(|i| b[1][i] + d2[i]).collect();
            let r2: Vec<f64> = (0..n)
                .map(|j| {
                    let phi_fx: f64 = (0..n).map(|i| d2[i] * jx[i][j]).sum();
                    b[3][j] - d1[j] - dc[j] - phi_fx
                })
                .collect();
            Ok([r1, r2].concat())
        }
        Formulation::Forced => {
            let mm = mass_matrix(m, &q, &v);
            let (_, jf) = crate::diff::jacobian(|w| m.force(&qs, w, &us), &v);
            let mxi = &mm * DVector::from_column_slice(b[1]);
            let mvxi = &mm * DVector::from_column_slice(b[3]);
            let r1: Vec<f64> = (0..n).map(|i| mxi[i] + d2[i]).collect();
            let r2: Vec<f64> = (0..n)
                .map(|j| {
                    let xf: f64 = (0..n).map(|i| b[1][i] * jf[i][j]).sum();
                    mvxi[j] - d1[j] - dc[j] + xf
                })
                .collect();
            Ok([r1, r2].concat())
        }
        _ => transversality_residual(p, f, x, u_hint),
    }
}
