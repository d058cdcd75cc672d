//! Scalar functions of the theory on each chart: the Pontryagin Hamiltonian,
//! the new control Lagrangian and Hamiltonian, their forced variants, energy,
//! fiber derivatives, the higher-order Lagrangian and regularity probes.
//!
//! The `*_s` functions are generic over [`Scalar`] and feed the jets used by
//! the field assembly; the remaining functions are real-valued entry points.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diff::{consts, dot, gradient, gradient_generic, hessian, solve_generic, Dual, Scalar};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{control_jacobian, hessian_generic, Model, OcpProblem, Sample};

macro_rules! chart_point {
    ($(#[$meta:meta])* $name:ident { $a:ident, $b:ident, $c:ident, $d:ident }) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Serialize)]
        pub struct $name {
            pub $a: Vec<f64>,
            pub $b: Vec<f64>,
            pub $c: Vec<f64>,
            pub $d: Vec<f64>,
            pub u: Vec<f64>,
        }

        impl $name {
            /// Coordinates in chart order followed by the control.
            pub fn coords(&self) -> Vec<f64> {
                [&self.$a, &self.$b, &self.$c, &self.$d, &self.u].iter().flat_map(|x| x.iter().copied()).collect()
            }

            pub fn from_coords(n: usize, x: &[f64]) -> Self {
                $name {
                    $a: x[..n].to_vec(),
                    $b: x[n..2 * n].to_vec(),
                    $c: x[2 * n..3 * n].to_vec(),
                    $d: x[3 * n..4 * n].to_vec(),
                    u: x[4 * n..].to_vec(),
                }
            }
        }
    };
}

chart_point!(
    /// `(q, v, λ_q, λ_v, u)` on `T*TQ ⊕ E`.
    PmpPoint { q, v, lq, lv }
);
chart_point!(
    /// `(q, κ, v_q, v_κ, u)` on `TT*Q ⊕ E`.
    NewLagPoint { q, k, vq, vk }
);
chart_point!(
    /// `(q, κ, p_q, p_κ, u)` on `T*T*Q ⊕ E`.
    NewHamPoint { q, k, pq, pk }
);
chart_point!(
    /// `(q, ξ, v_q, v_ξ, u)` on `TTQ ⊕ E`.
    ForcedPoint { q, xi, vq, vxi }
);
chart_point!(
    /// `(q, ξ, ϖ_q, ϖ_ξ, u)`, image of the forced fiber derivative.
    ForcedMomentumPoint { q, xi, wq, wxi }
);

// ---------------------------------------------------------------------------
// Generic building blocks
// ---------------------------------------------------------------------------

/// `Φ = κ·X_v(q, v, u) − C(q, v, u)`, the control-dependent core shared by
/// every formulation.
pub fn phi_s<M: Model, S: Scalar>(m: &M, q: &[S], k: &[S], v: &[S], u: &[S]) -> S {
    dot(k, &m.accel(q, v, u)) - m.cost(q, v, u)
}

/// `H₋₁ = λ_q·v + λ_v·X_v − C`.
pub fn pontryagin_h_s<M: Model, S: Scalar>(m: &M, q: &[S], v: &[S], lq: &[S], lv: &[S], u: &[S]) -> S {
    dot(lq, v) + phi_s(m, q, lv, v, u)
}

/// `L̃ᴱ = v_κ·v_q + κ·X_v(q, v_q, u) − C(q, v_q, u)`.
pub fn new_lagrangian_s<M: Model, S: Scalar>(m: &M, q: &[S], k: &[S], vq: &[S], vk: &[S], u: &[S]) -> S {
    dot(vk, vq) + phi_s(m, q, k, vq, u)
}

/// `H̃ᴱ = p_q·p_κ − κ·X_v(q, p_κ, u) + C(q, p_κ, u)`.
pub fn new_hamiltonian_s<M: Model, S: Scalar>(m: &M, q: &[S], k: &[S], pq: &[S], pk: &[S], u: &[S]) -> S {
    dot(pq, pk) - phi_s(m, q, k, pk, u)
}

/// `(D₁L, D₂L)` over any scalar.
pub fn lagrangian_grad_s<M: Model, S: Scalar>(m: &M, q: &[S], v: &[S]) -> (Vec<S>, Vec<S>) {
    let n = q.len();
    let x: Vec<S> = q.iter().chain(v).cloned().collect();
    let (_, g) = gradient_generic(|y| m.lagrangian(&y[..n], &y[n..]), &x);
    (g[..n].to_vec(), g[n..].to_vec())
}

/// `L̃ᴸ = D₂L·v_ξ + (D₁L + f_L)·ξ − C`.
pub fn forced_new_lagrangian_s<M: Model, S: Scalar>(m: &M, q: &[S], xi: &[S], vq: &[S], vxi: &[S], u: &[S]) -> S {
    let (d1, d2) = lagrangian_grad_s(m, q, vq);
    let f = m.force(q, vq, u);
    let d1f: Vec<S> = d1.into_iter().zip(f).map(|(a, b)| a + b).collect();
    dot(&d2, vxi) + dot(&d1f, xi) - m.cost(q, vq, u)
}

/// `𝓛ᴸ(q, v, X_q, X_v) = dL(q, v)·(X_q, X_v) + f_L·X_q − C` on `TTQ`, with
/// the differential taken as a directional derivative.
pub fn forced_tangent_lagrangian_s<M: Model, S: Scalar>(m: &M, q: &[S], v: &[S], xq: &[S], xv: &[S], u: &[S]) -> S {
    let t = Dual { v: S::cst(0.0), g: vec![S::cst(1.0)] };
    let shift = |a: &[S], d: &[S]| -> Vec<Dual<S>> {
        a.iter().zip(d).map(|(ai, di)| Dual::constant(ai.clone()) + t.clone() * Dual::constant(di.clone())).collect()
    };
    let dl = m.lagrangian(&shift(q, xq), &shift(v, xv)).grad(0);
    dl + dot(&m.force(q, v, u), xq) - m.cost(q, v, u)
}

/// Velocity `v` with `D₂L(q, v) = p`. Newton in `f64` to convergence, then a
/// few Newton steps in `S` so derivatives propagate through the inversion.
pub fn legendre_velocity_s<M: Model, S: Scalar>(m: &M, q: &[S], p: &[S]) -> Result<Vec<S>> {
    let n = q.len();
    let (qr, pr) = (crate::diff::values(q), crate::diff::values(p));
    let mut v = vec![0.0; n];
    let mut converged = false;
    for _ in 0..50 {
        let x: Vec<f64> = qr.iter().chain(&v).copied().collect();
        let (_, g, h) = hessian_generic(|y| m.lagrangian(&y[..n], &y[n..]), &x);
        let r: Vec<f64> = (0..n).map(|i| g[n + i] - pr[i]).collect();
        if linalg::inf_norm(&r) <= 1e-13 * (1.0 + linalg::inf_norm(&pr)) {
            converged = true;
            break;
        }
        let mass: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| h[n + i][n + j]).collect()).collect();
        let dv = solve_generic(mass, r).map_err(|e| Error::Legendre(e.to_string()))?;
        for i in 0..n {
            v[i] -= dv[i];
        }
    }
    if !converged {
        return Err(Error::Legendre(format!("no convergence for p = {pr:?}")));
    }
    let mut vs: Vec<S> = consts(&v);
    for _ in 0..3 {
        let x: Vec<S> = q.iter().chain(&vs).cloned().collect();
        let (_, g, h) = hessian_generic(|y| m.lagrangian(&y[..n], &y[n..]), &x);
        let r: Vec<S> = (0..n).map(|i| g[n + i].clone() - p[i].clone()).collect();
        let mass: Vec<Vec<S>> = (0..n).map(|i| (0..n).map(|j| h[n + i][n + j].clone()).collect()).collect();
        let dv = solve_generic(mass, r).map_err(|e| Error::Legendre(e.to_string()))?;
        vs = vs.into_iter().zip(dv).map(|(a, b)| a - b).collect();
    }
    Ok(vs)
}

/// Mechanical Hamiltonian `H(q, p) = p·v − L(q, v)` with `v` from the
/// Legendre inversion.
pub fn mech_hamiltonian_s<M: Model, S: Scalar>(m: &M, q: &[S], p: &[S]) -> Result<S> {
    let v = legendre_velocity_s(m, q, p)?;
    Ok(dot(p, &v) - m.lagrangian(q, &v))
}

// ---------------------------------------------------------------------------
// Real-valued entry points
// ---------------------------------------------------------------------------

fn domain<M: Model>(p: &OcpProblem<M>, q: &[f64], v: &[f64]) -> Result<()> {
    p.model.check_domain(q, v)
}

fn check_dims<M: Model>(p: &OcpProblem<M>, blocks: &[&[f64]], u: &[f64]) -> Result<()> {
    let n = p.n();
    if blocks.iter().any(|b| b.len() != n) || u.len() != p.m() {
        return Err(Error::Dimension(format!("point does not match dim_q = {n}, dim_u = {}", p.m())));
    }
    Ok(())
}

pub fn pontryagin_h<M: Model>(p: &OcpProblem<M>, x: &PmpPoint) -> Result<f64> {
    check_dims(p, &[&x.q, &x.v, &x.lq, &x.lv], &x.u)?;
    domain(p, &x.q, &x.v)?;
    Ok(pontryagin_h_s(&p.model, &x.q, &x.v, &x.lq, &x.lv, &x.u))
}

pub fn new_lagrangian<M: Model>(p: &OcpProblem<M>, x: &NewLagPoint) -> Result<f64> {
    check_dims(p, &[&x.q, &x.k, &x.vq, &x.vk], &x.u)?;
    domain(p, &x.q, &x.vq)?;
    Ok(new_lagrangian_s(&p.model, &x.q, &x.k, &x.vq, &x.vk, &x.u))
}

/// `E = D₃L̃·v_q + D₄L̃·v_κ − L̃`.
pub fn new_energy<M: Model>(p: &OcpProblem<M>, x: &NewLagPoint) -> Result<f64> {
    check_dims(p, &[&x.q, &x.k, &x.vq, &x.vk], &x.u)?;
    domain(p, &x.q, &x.vq)?;
    let n = p.n();
    let vel: Vec<f64> = x.vq.iter().chain(&x.vk).copied().collect();
    let (q, k, u) = (consts(&x.q), consts(&x.k), consts(&x.u));
    let (l, g) = gradient(|w| new_lagrangian_s(&p.model, &q, &k, &w[..n], &w[n..], &u), &vel);
    Ok(g.iter().zip(&vel).map(|(a, b)| a * b).sum::<f64>() - l)
}

/// `∂_vΦ(q, κ, v, u) = D₂X_vᵀκ − D₂C`.
fn dphi_dv<M: Model>(m: &M, q: &[f64], k: &[f64], v: &[f64], u: &[f64]) -> Vec<f64> {
    let (q, k, u) = (consts(q), consts(k), consts(u));
    gradient(|w| phi_s(m, &q, &k, w, &u), v).1
}

/// Fiber derivative of `L̃ᴱ`: `p_q = v_κ + D₂X_vᵀκ − D₂C`, `p_κ = v_q`.
pub fn fiber_derivative_newlag<M: Model>(p: &OcpProblem<M>, x: &NewLagPoint) -> Result<NewHamPoint> {
    check_dims(p, &[&x.q, &x.k, &x.vq, &x.vk], &x.u)?;
    domain(p, &x.q, &x.vq)?;
    let d = dphi_dv(&p.model, &x.q, &x.k, &x.vq, &x.u);
    Ok(NewHamPoint {
        q: x.q.clone(),
        k: x.k.clone(),
        pq: x.vk.iter().zip(&d).map(|(a, b)| a + b).collect(),
        pk: x.vq.clone(),
        u: x.u.clone(),
    })
}

pub fn inverse_fiber_derivative_newlag<M: Model>(p: &OcpProblem<M>, x: &NewHamPoint) -> Result<NewLagPoint> {
    check_dims(p, &[&x.q, &x.k, &x.pq, &x.pk], &x.u)?;
    domain(p, &x.q, &x.pk)?;
    let d = dphi_dv(&p.model, &x.q, &x.k, &x.pk, &x.u);
    Ok(NewLagPoint {
        q: x.q.clone(),
        k: x.k.clone(),
        vq: x.pk.clone(),
        vk: x.pq.iter().zip(&d).map(|(a, b)| a - b).collect(),
        u: x.u.clone(),
    })
}

pub fn new_hamiltonian<M: Model>(p: &OcpProblem<M>, x: &NewHamPoint) -> Result<f64> {
    check_dims(p, &[&x.q, &x.k, &x.pq, &x.pk], &x.u)?;
    domain(p, &x.q, &x.pk)?;
    Ok(new_hamiltonian_s(&p.model, &x.q, &x.k, &x.pq, &x.pk, &x.u))
}

/// Determinant statistics of the velocity Hessian `[[D₃₃L̃, I], [I, 0]]`.
#[derive(Clone, Debug, Serialize)]
pub struct HyperregularityCertificate {
    pub dim_q: usize,
    pub dets: Vec<f64>,
    /// `| |det| − 1 |` worst case.
    pub max_abs_deviation: f64,
    /// Largest spread between sampled determinants.
    pub spread: f64,
    /// Sign of the computed determinant.
    pub sign: i32,
    /// `(−1)^(n−1)`, kept for comparison with the computed sign.
    pub stated_sign: i32,
}

impl HyperregularityCertificate {
    pub fn holds(&self) -> bool {
        self.max_abs_deviation <= 1e-12 && self.spread <= 1e-12
    }
    pub fn sign_matches_statement(&self) -> bool {
        self.sign == self.stated_sign
    }
}

/// Velocity Hessian of `L̃ᴱ` at a point, `2n × 2n`.
pub fn newlag_velocity_hessian<M: Model>(p: &OcpProblem<M>, x: &NewLagPoint) -> DMatrix<f64> {
    let n = p.n();
    let vel: Vec<f64> = x.vq.iter().chain(&x.vk).copied().collect();
    let (q, k, u) = (consts(&x.q), consts(&x.k), consts(&x.u));
    let j = hessian(|w| new_lagrangian_s(&p.model, &q, &k, &w[..n], &w[n..], &u), &vel);
    DMatrix::from_row_slice(2 * n, 2 * n, &j.h)
}

pub fn hyperregularity_certificate<M: Model>(p: &OcpProblem<M>, samples: &[Sample]) -> HyperregularityCertificate {
    let n = p.n();
    let dets: Vec<f64> = samples
        .iter()
        .map(|s| {
            let x = NewLagPoint { q: s.q.clone(), k: s.a.clone(), vq: s.v.clone(), vk: s.b.clone(), u: s.u.clone() };
            newlag_velocity_hessian(p, &x).determinant()
        })
        .collect();
    let max_abs_deviation = dets.iter().map(|d| (d.abs() - 1.0).abs()).fold(0.0, f64::max);
    let lo = dets.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = dets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sign = if dets.first().copied().unwrap_or(1.0) < 0.0 { -1 } else { 1 };
    HyperregularityCertificate {
        dim_q: n,
        dets,
        max_abs_deviation,
        spread: if hi >= lo { hi - lo } else { 0.0 },
        sign,
        stated_sign: if (n - 1) % 2 == 0 { 1 } else { -1 },
    }
}

// ---------------------------------------------------------------------------
// Forced formulation
// ---------------------------------------------------------------------------

pub fn forced_new_lagrangian<M: Model>(p: &OcpProblem<M>, x: &ForcedPoint) -> Result<f64> {
    p.require_lagrangian()?;
    check_dims(p, &[&x.q, &x.xi, &x.vq, &x.vxi], &x.u)?;
    domain(p, &x.q, &x.vq)?;
    Ok(forced_new_lagrangian_s(&p.model, &x.q, &x.xi, &x.vq, &x.vxi, &x.u))
}

/// `ϖ_q = ∂L̃ᴸ/∂v_q`, `ϖ_ξ = D₂L`.
pub fn forced_fiber_derivative<M: Model>(p: &OcpProblem<M>, x: &ForcedPoint) -> Result<ForcedMomentumPoint> {
    p.require_lagrangian()?;
    check_dims(p, &[&x.q, &x.xi, &x.vq, &x.vxi], &x.u)?;
    domain(p, &x.q, &x.vq)?;
    let m = &p.model;
    let (q, xi, vxi, u) = (consts(&x.q), consts(&x.xi), consts(&x.vxi), consts(&x.u));
    let (_, wq) = gradient(|w| forced_new_lagrangian_s(m, &q, &xi, w, &vxi, &u), &x.vq);
    let (_, wxi) = lagrangian_grad_s(m, &x.q, &x.vq);
    Ok(ForcedMomentumPoint { q: x.q.clone(), xi: x.xi.clone(), wq, wxi, u: x.u.clone() })
}

pub fn inverse_forced_fiber_derivative<M: Model>(p: &OcpProblem<M>, x: &ForcedMomentumPoint) -> Result<ForcedPoint> {
    p.require_lagrangian()?;
    let m = &p.model;
    let n = p.n();
    let vq = legendre_velocity_s(m, &x.q, &x.wxi)?;
    domain(p, &x.q, &vq)?;
    // ϖ_q is affine in v_ξ with slope D₂₂L.
    let at0 = forced_fiber_derivative(
        p,
        &ForcedPoint { q: x.q.clone(), xi: x.xi.clone(), vq: vq.clone(), vxi: vec![0.0; n], u: x.u.clone() },
    )?;
    let mass = crate::model::mass_matrix(m, &x.q, &vq);
    let rhs = DVector::from_iterator(n, x.wq.iter().zip(&at0.wq).map(|(a, b)| a - b));
    let vxi = linalg::solve(&mass, &rhs).map_err(|_| Error::SingularMass { cond: linalg::cond(&mass) })?;
    Ok(ForcedPoint { q: x.q.clone(), xi: x.xi.clone(), vq, vxi: vxi.as_slice().to_vec(), u: x.u.clone() })
}

/// `H̃ᴸ = ϖ_q·v − (D₁L + f_L)·ξ + C`, with `v` solving `ϖ_ξ = D₂L(q, v)`.
pub fn forced_new_hamiltonian<M: Model>(p: &OcpProblem<M>, x: &ForcedMomentumPoint) -> Result<f64> {
    p.require_lagrangian()?;
    check_dims(p, &[&x.q, &x.xi, &x.wq, &x.wxi], &x.u)?;
    let m = &p.model;
    let v = legendre_velocity_s(m, &x.q, &x.wxi)?;
    domain(p, &x.q, &v)?;
    let (d1, _) = lagrangian_grad_s(m, &x.q, &v);
    let f = m.force(&x.q, &v, &x.u);
    let d1f: Vec<f64> = d1.iter().zip(&f).map(|(a, b)| a + b).collect();
    Ok(dot(&x.wq, &v) - dot(&d1f, &x.xi) + m.cost(&x.q, &v, &x.u))
}

/// The force-controlled Hamiltonian system `(H, f_H, C_H)` obtained from a
/// hyperregular forced Lagrangian through `χ(q, v, u) = (q, D₂L(q, v), u)`.
#[derive(Clone, Debug)]
pub struct ForcedHamiltonian<'a, M> {
    model: &'a M,
}

pub fn build_forced_hamiltonian<M: Model>(p: &OcpProblem<M>) -> Result<ForcedHamiltonian<'_, M>> {
    p.require_lagrangian()?;
    Ok(ForcedHamiltonian { model: &p.model })
}

impl<M: Model> ForcedHamiltonian<'_, M> {
    pub fn hamiltonian(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        mech_hamiltonian_s(self.model, q, p)
    }

    /// `(D₁H, D₂H)` over any scalar, differentiated through the Legendre
    /// inversion.
    pub fn grad_s<S: Scalar>(&self, q: &[S], p: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let n = q.len();
        let x: Vec<S> = q.iter().chain(p).cloned().collect();
        let mut err = None;
        let (_, g) = gradient_generic(
            |y| match mech_hamiltonian_s(self.model, &y[..n], &y[n..]) {
                Ok(h) => h,
                Err(e) => {
                    err = Some(e);
                    Dual::cst(0.0)
                }
            },
            &x,
        );
        if let Some(e) = err {
            return Err(e);
        }
        Ok((g[..n].to_vec(), g[n..].to_vec()))
    }

    pub fn force_s<S: Scalar>(&self, q: &[S], p: &[S], u: &[S]) -> Result<Vec<S>> {
        let v = legendre_velocity_s(self.model, q, p)?;
        Ok(self.model.force(q, &v, u))
    }

    pub fn cost_s<S: Scalar>(&self, q: &[S], p: &[S], u: &[S]) -> Result<S> {
        let v = legendre_velocity_s(self.model, q, p)?;
        Ok(self.model.cost(q, &v, u))
    }

    /// Forced Hamilton equations `(q̇, ṗ) = (D₂H, −D₁H + f_H)`.
    pub fn field(&self, q: &[f64], p: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let (d1, d2) = self.grad_s(q, p)?;
        let f = self.force_s(q, p, u)?;
        Ok(d2.into_iter().chain(d1.into_iter().zip(f).map(|(a, b)| -a + b)).collect())
    }

    /// Pontryagin Hamiltonian of the forced Hamiltonian system,
    /// `λ_q·D₂H + λ_p·(−D₁H + f_H) − C_H`.
    pub fn pontryagin_h(&self, q: &[f64], p: &[f64], lq: &[f64], lp: &[f64], u: &[f64]) -> Result<f64> {
        let (d1, d2) = self.grad_s(q, p)?;
        let f = self.force_s(q, p, u)?;
        let pdot: Vec<f64> = d1.iter().zip(&f).map(|(a, b)| -a + b).collect();
        Ok(dot(lq, &d2) + dot(lp, &pdot) - self.cost_s(q, p, u)?)
    }
}

// ---------------------------------------------------------------------------
// Higher-order Lagrangian
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct HigherOrderValue {
    pub value: f64,
    /// Control solving `a = X_v(q, v, u)`.
    pub u: Vec<f64>,
    /// `D₃𝓛(q, v, a)`.
    pub d3: Vec<f64>,
}

/// Damped Newton for `X_v^rows(q, v, u) = a` over the given rows.
fn solve_accel_rows<M: Model>(m: &M, q: &[f64], v: &[f64], a: &[f64], rows: &[usize]) -> Result<Vec<f64>> {
    let mu = m.dim_u();
    let mut u = vec![0.0; mu];
    let resid = |u: &[f64]| -> Vec<f64> {
        let x = m.accel(q, v, u);
        rows.iter().zip(a).map(|(&r, ai)| x[r] - ai).collect()
    };
    let mut r = resid(&u);
    for _ in 0..50 {
        let rn = linalg::inf_norm(&r);
        if rn <= 1e-12 * (1.0 + linalg::inf_norm(a)) {
            return Ok(u);
        }
        let j = control_jacobian(m, q, v, &u);
        let js = DMatrix::from_fn(rows.len(), mu, |i, c| j[(rows[i], c)]);
        let du = linalg::solve(&js, &DVector::from_column_slice(&r))
            .map_err(|e| Error::NotInvertible(format!("control Jacobian: {e}")))?;
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(du.iter()).map(|(a, b)| a - t * b).collect();
            let rt = resid(&trial);
            if linalg::inf_norm(&rt) < rn || t < 1e-4 {
                u = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NotInvertible(format!("Newton did not converge for a = {a:?}")))
}

/// `𝓛(q, v, a) = C(q, v, u(q, v, a))` for a fully actuated problem, with
/// `D₃𝓛 = (D₃X_v)⁻ᵀ D_uC` at the recovered control.
pub fn higher_order_lagrangian<M: Model>(p: &OcpProblem<M>, q: &[f64], v: &[f64], a: &[f64]) -> Result<HigherOrderValue> {
    let m = &p.model;
    let (n, mu) = (p.n(), p.m());
    if mu != n {
        return Err(Error::NotInvertible(format!("dim_u = {mu} < dim_q = {n}: underactuated")));
    }
    domain(p, q, v)?;
    let rows: Vec<usize> = (0..n).collect();
    let u = solve_accel_rows(m, q, v, a, &rows)?;
    let j = control_jacobian(m, q, v, &u);
    if linalg::rank(&j, 1e-10) < n {
        return Err(Error::NotInvertible("control Jacobian is rank deficient".into()));
    }
    let (qs, vs) = (consts::<Dual<f64>>(q), consts::<Dual<f64>>(v));
    let (value, dc) = gradient(|w| m.cost(&qs, &vs, w), &u);
    let d3 = linalg::solve(&j.transpose(), &DVector::from_column_slice(&dc))?;
    Ok(HigherOrderValue { value, u, d3: d3.as_slice().to_vec() })
}

/// Actuated and unactuated acceleration rows: a row is actuated when its
/// control gradient is nonzero at `u = 0`.
pub fn actuation_split<M: Model>(m: &M, q: &[f64], v: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let j = control_jacobian(m, q, v, &vec![0.0; m.dim_u()]);
    (0..m.dim_q()).partition(|&i| j.row(i).iter().any(|x| x.abs() > 1e-12))
}

/// `𝓛̂ = 𝓛 + Σ_β μ_β (a^β − X_v^β(q, v))` with the control recovered from
/// the actuated rows only.
pub fn augmented_higher_order_lagrangian<M: Model>(
    p: &OcpProblem<M>,
    q: &[f64],
    v: &[f64],
    a: &[f64],
    mult: &[f64],
) -> Result<f64> {
    let m = &p.model;
    domain(p, q, v)?;
    let (act, unact) = actuation_split(m, q, v);
    if act.len() != p.m() || mult.len() != unact.len() {
        return Err(Error::Unsupported(format!(
            "no actuation-adapted split: {} actuated rows for dim_u = {}, {} multipliers for {} constraints",
            act.len(),
            p.m(),
            mult.len(),
            unact.len()
        )));
    }
    let a_act: Vec<f64> = act.iter().map(|&i| a[i]).collect();
    let u = solve_accel_rows(m, q, v, &a_act, &act)?;
    let j = control_jacobian(m, q, v, &u);
    if unact.iter().any(|&i| j.row(i).iter().any(|x| x.abs() > 1e-12)) {
        return Err(Error::Unsupported("unactuated rows depend on the control".into()));
    }
    let x = m.accel(q, v, &u);
    let constraint: f64 = unact.iter().zip(mult).map(|(&i, mu)| mu * (a[i] - x[i])).sum();
    Ok(m.cost(q, v, &u) + constraint)
}

// ---------------------------------------------------------------------------
// Regularity
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Regularity {
    Singular,
    Regular,
    Superregular,
    HyperregularCandidate,
}

/// `D_uu H₋₁` at `(q, v, λ_v, u)`.
pub fn control_hessian<M: Model>(m: &M, q: &[f64], v: &[f64], lv: &[f64], u: &[f64]) -> DMatrix<f64> {
    let (qs, vs, ls) = (consts(q), consts(v), consts(lv));
    let j = hessian(|w| phi_s(m, &qs, &ls, &vs, w), u);
    DMatrix::from_row_slice(u.len(), u.len(), &j.h)
}

/// Sample-based classification of the maximization condition. Rank is
/// measured by singular values against `1e-10·σ_max`. A candidate for global
/// hyperregularity is reported only when `assert_global` is set.
pub fn classify_ocp_regularity<M: Model>(p: &OcpProblem<M>, samples: &[Sample], assert_global: bool) -> Regularity {
    let m = &p.model;
    let mu = p.m();
    let mut superregular = true;
    for s in samples {
        if linalg::rank(&control_hessian(m, &s.q, &s.v, &s.b, &s.u), 1e-10) < mu {
            return Regularity::Singular;
        }
        let (qs, vs) = (consts(&s.q), consts(&s.v));
        let cuu = hessian(|w| m.cost(&qs, &vs, w), &s.u);
        if linalg::rank(&DMatrix::from_row_slice(mu, mu, &cuu.h), 1e-10) < mu {
            superregular = false;
        }
    }
    match (superregular, assert_global) {
        (false, _) => Regularity::Regular,
        (true, false) => Regularity::Superregular,
        (true, true) => Regularity::HyperregularCandidate,
    }
}
