//! Tulczyjew maps between the double bundles, their control-carrying
//! extensions, the musical maps of a forced Lagrangian, and constant
//! presymplectic forms in adapted coordinates.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diff::{consts, hessian};
use crate::error::{Error, Result};
use crate::formulations::{legendre_velocity_s, new_lagrangian_s};
use crate::linalg;
use crate::model::{mass_matrix, Model, OcpProblem};

/// Coordinate chart of a point. Coordinates are four `n`-blocks followed by
/// the `m` controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Chart {
    /// `(q, v, λ_q, λ_v, u)`
    TStarTQ,
    /// `(q, κ, v_q, v_κ, u)`
    TTStarQ,
    /// `(q, κ, p_q, p_κ, u)`
    TStarTStarQ,
    /// `(q, v, X_q, X_v, u)`
    TTQ,
    /// `(q, ξ, v_q, v_ξ, u)`, the κ-twisted labelling.
    TTQKappa,
    /// `(q, ξ, ϖ_q, ϖ_ξ, u)`
    TStarTQLagrangian,
    /// `(q, p, λ_q, λ_p, u)` over a force-controlled Hamiltonian system.
    TStarTStarQForced,
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwistedPoint {
    pub chart: Chart,
    pub n: usize,
    pub m: usize,
    pub coords: Vec<f64>,
}

impl TwistedPoint {
    pub fn new(chart: Chart, n: usize, m: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != 4 * n + m {
            return Err(Error::Dimension(format!("{chart} point needs {} coordinates, got {}", 4 * n + m, coords.len())));
        }
        Ok(TwistedPoint { chart, n, m, coords })
    }

    /// Block `i ∈ 0..4`; block 4 is the control.
    pub fn block(&self, i: usize) -> &[f64] {
        let n = self.n;
        if i < 4 {
            &self.coords[i * n..(i + 1) * n]
        } else {
            &self.coords[4 * n..]
        }
    }

    fn expect(&self, chart: Chart) -> Result<()> {
        if self.chart == chart {
            Ok(())
        } else {
            Err(Error::Chart { expected: chart.to_string(), got: self.chart.to_string() })
        }
    }

    fn assemble(&self, chart: Chart, blocks: [Vec<f64>; 4]) -> TwistedPoint {
        let mut coords: Vec<f64> = blocks.concat();
        coords.extend_from_slice(self.block(4));
        TwistedPoint { chart, n: self.n, m: self.m, coords }
    }
}

fn neg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| -v).collect()
}

/// `α(q, κ, v_q, v_κ) = (q, v_q, v_κ, κ)`.
pub fn alpha(x: &TwistedPoint) -> Result<TwistedPoint> {
    x.expect(Chart::TTStarQ)?;
    let b = |i| x.block(i).to_vec();
    Ok(x.assemble(Chart::TStarTQ, [b(0), b(2), b(3), b(1)]))
}

pub fn alpha_inv(x: &TwistedPoint) -> Result<TwistedPoint> {
    x.expect(Chart::TStarTQ)?;
    let b = |i| x.block(i).to_vec();
    Ok(x.assemble(Chart::TTStarQ, [b(0), b(3), b(1), b(2)]))
}

/// `β(q, κ, v_q, v_κ) = (q, κ, −v_κ, v_q)`.
pub fn beta(x: &TwistedPoint) -> Result<TwistedPoint> {
    x.expect(Chart::TTStarQ)?;
    let b = |i| x.block(i).to_vec();
    Ok(x.assemble(Chart::TStarTStarQ, [b(0), b(1), neg(x.block(3)), b(2)]))
}

pub fn beta_inv(x: &TwistedPoint) -> Result<TwistedPoint> {
    x.expect(Chart::TStarTStarQ)?;
    let b = |i| x.block(i).to_vec();
    Ok(x.assemble(Chart::TTStarQ, [b(0), b(1), b(3), neg(x.block(2))]))
}

/// Canonical involution `κ(q, v, X_q, X_v) = (q, X_q, v, X_v)` on `TTQ`
/// (control-free points only); on the κ-twisted sum it maps
/// `(q, ξ, v_q, v_ξ, u)` to `(q, v_q, ξ, v_ξ, u)` in `TTQ ⊕ E`.
pub fn kappa(x: &TwistedPoint) -> Result<TwistedPoint> {
    let target = match x.chart {
        Chart::TTQ if x.m == 0 => Chart::TTQ,
        Chart::TTQKappa => Chart::TTQ,
        _ => return Err(Error::Chart { expected: "TTQKappa or control-free TTQ".into(), got: x.chart.to_string() }),
    };
    let b = |i| x.block(i).to_vec();
    Ok(x.assemble(target, [b(0), b(2), b(1), b(3)]))
}

/// Inverse of the control-carrying `κ`.
pub fn kappa_inv(x: &TwistedPoint) -> Result<TwistedPoint> {
    x.expect(Chart::TTQ)?;
    let b = |i| x.block(i).to_vec();
    let target = if x.m == 0 { Chart::TTQ } else { Chart::TTQKappa };
    Ok(x.assemble(target, [b(0), b(2), b(1), b(3)]))
}

/// `D₂f_L(q, v, u)`, rows per force component.
fn force_velocity_jacobian<M: Model>(m: &M, q: &[f64], v: &[f64], u: &[f64]) -> DMatrix<f64> {
    let (qs, us) = (consts(q), consts(u));
    let (_, j) = crate::diff::jacobian(|w| m.force(&qs, w, &us), v);
    let n = q.len();
    DMatrix::from_fn(n, n, |i, k| j[i][k])
}

/// `♭(q, v_q, ξ, v_ξ, u) = (q, v_q, v_κ, κ, u)` with `κ = D₂₂L·ξ` and
/// `v_κ = D₂₂L·v_ξ + D₂f_Lᵀ·ξ`.
pub fn musical_flat<M: Model>(p: &OcpProblem<M>, x: &TwistedPoint) -> Result<TwistedPoint> {
    p.require_lagrangian()?;
    x.expect(Chart::TTQ)?;
    let (q, vq, xi, vxi, u) = (x.block(0), x.block(1), x.block(2), x.block(3), x.block(4));
    let mm = mass_matrix(&p.model, q, vq);
    let df = force_velocity_jacobian(&p.model, q, vq, u);
    let xi_v = DVector::from_column_slice(xi);
    let k = &mm * &xi_v;
    let vk = &mm * DVector::from_column_slice(vxi) + df.transpose() * &xi_v;
    Ok(x.assemble(Chart::TStarTQ, [q.to_vec(), vq.to_vec(), vk.as_slice().to_vec(), k.as_slice().to_vec()]))
}

/// Inverse of [`musical_flat`].
pub fn musical_sharp<M: Model>(p: &OcpProblem<M>, x: &TwistedPoint) -> Result<TwistedPoint> {
    p.require_lagrangian()?;
    x.expect(Chart::TStarTQ)?;
    let (q, vq, vk, k, u) = (x.block(0), x.block(1), x.block(2), x.block(3), x.block(4));
    let mm = mass_matrix(&p.model, q, vq);
    let sing = |_| Error::SingularMass { cond: linalg::cond(&mm) };
    let xi = linalg::solve(&mm, &DVector::from_column_slice(k)).map_err(sing)?;
    let df = force_velocity_jacobian(&p.model, q, vq, u);
    let rhs = DVector::from_column_slice(vk) - df.transpose() * &xi;
    let vxi = linalg::solve(&mm, &rhs).map_err(sing)?;
    Ok(x.assemble(Chart::TTQ, [q.to_vec(), vq.to_vec(), xi.as_slice().to_vec(), vxi.as_slice().to_vec()]))
}

/// `χ̃¹(q, ξ, ϖ_q, ϖ_ξ, u) = (q, p = ϖ_ξ, λ_q = −ϖ_q, λ_p = ξ, u)`. The
/// control block is carried unchanged by the simple lift
/// `χ(q, v, u) = (q, D₂L(q, v), u)`; the Legendre inversion is checked.
pub fn chi_tilde1<M: Model>(p: &OcpProblem<M>, x: &TwistedPoint) -> Result<TwistedPoint> {
    p.require_lagrangian()?;
    x.expect(Chart::TStarTQLagrangian)?;
    let (q, xi, wq, wxi) = (x.block(0), x.block(1), x.block(2), x.block(3));
    legendre_velocity_s(&p.model, q, wxi)?;
    Ok(x.assemble(Chart::TStarTStarQForced, [q.to_vec(), wxi.to_vec(), neg(wq), xi.to_vec()]))
}

// ---------------------------------------------------------------------------
// Two-forms
// ---------------------------------------------------------------------------

/// A constant or pointwise two-form as an antisymmetric matrix over the
/// chart's coordinates, `ω(X, Y) = Xᵀ Ω Y`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoForm {
    pub matrix: DMatrix<f64>,
}

impl TwoForm {
    fn pairing(size: usize, pairs: &[(usize, usize, f64)]) -> TwoForm {
        let mut m = DMatrix::zeros(size, size);
        for &(i, j, s) in pairs {
            m[(i, j)] += s;
            m[(j, i)] -= s;
        }
        TwoForm { matrix: m }
    }

    /// `Jᵀ Ω J`.
    pub fn pullback(&self, jac: &DMatrix<f64>) -> TwoForm {
        TwoForm { matrix: jac.transpose() * &self.matrix * jac }
    }

    pub fn max_abs_diff(&self, other: &TwoForm) -> f64 {
        (&self.matrix - &other.matrix).amax()
    }

    pub fn neg(&self) -> TwoForm {
        TwoForm { matrix: -self.matrix.clone() }
    }
}

/// Canonical forms in adapted coordinates, with zero rows and columns for
/// the `m` control coordinates:
/// `T*TQ: dq∧dλ_q + dv∧dλ_v`, `T*T*Q: dq∧dp_q + dκ∧dp_κ`,
/// `TT*Q: dq∧dv_κ + dv_q∧dκ`.
pub fn presymplectic_form(chart: Chart, n: usize, m: usize) -> Result<TwoForm> {
    let size = 4 * n + m;
    let mut pairs = Vec::with_capacity(2 * n);
    for i in 0..n {
        match chart {
            Chart::TStarTQ | Chart::TStarTStarQ | Chart::TStarTStarQForced | Chart::TStarTQLagrangian => {
                pairs.push((i, 2 * n + i, 1.0));
                pairs.push((n + i, 3 * n + i, 1.0));
            }
            Chart::TTStarQ => {
                pairs.push((i, 3 * n + i, 1.0));
                pairs.push((2 * n + i, n + i, 1.0));
            }
            other => return Err(Error::Unsupported(format!("no canonical form on chart {other}"))),
        }
    }
    Ok(TwoForm::pairing(size, &pairs))
}

/// `‖Ωᵀ·X − dH‖∞` over the first `4n` coordinates.
pub fn geometric_residual(form: &TwoForm, field: &[f64], dh: &[f64], n: usize) -> f64 {
    let k = field.len().min(form.matrix.nrows());
    let x = DVector::from_iterator(form.matrix.nrows(), (0..form.matrix.nrows()).map(|i| if i < k { field[i] } else { 0.0 }));
    let lhs = form.matrix.transpose() * x;
    (0..4 * n).map(|i| (lhs[i] - dh.get(i).copied().unwrap_or(0.0)).abs()).fold(0.0, f64::max)
}

/// Central-difference Jacobian of a map `R^k → R^k'`.
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Result<Vec<f64>>, x: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let f0 = f(x)?;
    let mut j = DMatrix::zeros(f0.len(), x.len());
    let mut xp = x.to_vec();
    for c in 0..x.len() {
        xp[c] = x[c] + h;
        let fp = f(&xp)?;
        xp[c] = x[c] - h;
        let fm = f(&xp)?;
        xp[c] = x[c];
        for r in 0..f0.len() {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Jacobian of the fiber derivative `(q, κ, v_q, v_κ) ↦ (q, κ, p_q, p_κ)` of
/// `L̃ᴱ` at fixed control, from the jet Hessian.
pub fn newlag_legendre_jacobian<M: Model>(p: &OcpProblem<M>, x: &[f64], u: &[f64]) -> DMatrix<f64> {
    let n = p.n();
    let us = consts(u);
    let j = hessian(|y| new_lagrangian_s(&p.model, &y[..n], &y[n..2 * n], &y[2 * n..3 * n], &y[3 * n..4 * n], &us), x);
    let d = 4 * n;
    let mut jac = DMatrix::zeros(d, d);
    for i in 0..2 * n {
        jac[(i, i)] = 1.0;
    }
    for r in 0..2 * n {
        for c in 0..d {
            jac[(2 * n + r, c)] = j.hess(2 * n + r, c);
        }
    }
    jac
}

/// Poincaré–Cartan form of `L̃ᴱ` at fixed control: pullback of the
/// canonical form of `T*T*Q` by the fiber derivative.
pub fn newlag_poincare_cartan<M: Model>(p: &OcpProblem<M>, x: &[f64], u: &[f64]) -> TwoForm {
    let n = p.n();
    let w = presymplectic_form(Chart::TStarTStarQ, n, 0).expect("canonical chart");
    w.pullback(&newlag_legendre_jacobian(p, x, u))
}

/// Largest cyclic sum `∂_i W_jk + ∂_j W_ki + ∂_k W_ij` of
/// `W = ω_L̃ − ω_α` by central differences: zero for a closed form.
pub fn closedness_defect<M: Model>(p: &OcpProblem<M>, x: &[f64], u: &[f64], h: f64) -> f64 {
    let n = p.n();
    let d = 4 * n;
    let wa = presymplectic_form(Chart::TTStarQ, n, 0).expect("canonical chart");
    let w_at = |y: &[f64]| &newlag_poincare_cartan(p, y, u).matrix - &wa.matrix;
    let mut dw = Vec::with_capacity(d);
    let mut xp = x.to_vec();
    for i in 0..d {
        xp[i] = x[i] + h;
        let wp = w_at(&xp);
        xp[i] = x[i] - h;
        let wm = w_at(&xp);
        xp[i] = x[i];
        dw.push((wp - wm) / (2.0 * h));
    }
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                worst = worst.max((dw[i][(j, k)] + dw[j][(k, i)] + dw[k][(i, j)]).abs());
            }
        }
    }
    worst
}
