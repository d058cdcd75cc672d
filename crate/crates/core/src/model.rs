//! Problem definitions: controlled second-order dynamics, costs, optional
//! force-controlled Lagrangian structure, and boundary data.

use std::fmt::Debug;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::diff::{consts, jacobian, solve_generic, Dual, Scalar};
use crate::error::{Error, Result};
use crate::linalg;

/// A controlled SODE `q̈ = X_v(q, q̇, u)` with running cost `C(q, q̇, u)` and,
/// optionally, a Lagrangian `L(q, v)` with control force `f_L(q, v, u)`.
///
/// Controls are evaluated on the same `(q, v, u)` signature whether the
/// control fiber depends on the velocity or only on the configuration.
pub trait Model: Clone + Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn dim_q(&self) -> usize;
    fn dim_u(&self) -> usize;
    fn accel<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> Vec<S>;
    fn cost<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> S;

    fn has_lagrangian(&self) -> bool {
        false
    }
    /// Only called when [`Model::has_lagrangian`] is true.
    fn lagrangian<S: Scalar>(&self, _q: &[S], _v: &[S]) -> S {
        unreachable!("model has no Lagrangian")
    }
    /// Control force covector; only called when a Lagrangian is present.
    fn force<S: Scalar>(&self, _q: &[S], _v: &[S], _u: &[S]) -> Vec<S> {
        unreachable!("model has no Lagrangian")
    }

    fn check_domain(&self, _q: &[f64], _v: &[f64]) -> Result<()> {
        Ok(())
    }
    /// Box for random sampling of states and controls.
    fn sample_box(&self) -> SampleBox;
    fn params(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }
    fn set_param(&mut self, name: &str, _value: f64) -> Result<()> {
        Err(Error::UnknownKey(format!("params.{name}")))
    }
}

/// Coordinate ranges for random sampling. Adjoint coordinates are drawn
/// with magnitude in `adj` and random sign so they stay away from zero.
#[derive(Clone, Debug, Serialize)]
pub struct SampleBox {
    pub q: Vec<(f64, f64)>,
    pub v: Vec<(f64, f64)>,
    pub u: Vec<(f64, f64)>,
    pub adj: (f64, f64),
}

/// A random point of the extended phase space: state, two adjoint blocks
/// and a control.
#[derive(Clone, Debug)]
pub struct Sample {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub u: Vec<f64>,
}

impl SampleBox {
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Sample {
        let pick = |rng: &mut R, r: &[(f64, f64)]| r.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect::<Vec<_>>();
        let adj = |rng: &mut R, n: usize| {
            (0..n)
                .map(|_| {
                    let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    s * rng.gen_range(self.adj.0..=self.adj.1)
                })
                .collect::<Vec<_>>()
        };
        let q = pick(rng, &self.q);
        let v = pick(rng, &self.v);
        let a = adj(rng, q.len());
        let b = adj(rng, q.len());
        let u = pick(rng, &self.u);
        Sample { q, v, a, b, u }
    }
}

/// Terminal (Mayer) cost `φ(q, v)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Mayer {
    Zero,
    /// `½‖v‖²`
    HalfSquaredVelocity,
    /// `(w/2)(‖q‖² − R²)²`, invariant under rotations.
    RadialPenalty { weight: f64, radius: f64 },
    /// `(w/2)(‖q − q*‖² + ‖v − v*‖²)`
    Quadratic { weight: f64, q: Vec<f64>, v: Vec<f64> },
}

impl Mayer {
    pub fn eval<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        match self {
            Mayer::Zero => S::cst(0.0),
            Mayer::HalfSquaredVelocity => crate::diff::dot(v, v) * 0.5,
            Mayer::RadialPenalty { weight, radius } => {
                let d = crate::diff::dot(q, q) - radius * radius;
                d.square() * (0.5 * weight)
            }
            Mayer::Quadratic { weight, q: qt, v: vt } => {
                let mut acc = S::cst(0.0);
                for (x, t) in q.iter().zip(qt).chain(v.iter().zip(vt)) {
                    acc = acc + (x.clone() - *t).square();
                }
                acc * (0.5 * weight)
            }
        }
    }

    /// `(D₁φ, D₂φ)` at a real point.
    pub fn grad(&self, q: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = q.len();
        let x: Vec<f64> = q.iter().chain(v).copied().collect();
        let (_, g) = crate::diff::gradient(|y| self.eval(&y[..n], &y[n..]), &x);
        (g[..n].to_vec(), g[n..].to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Terminal {
    Fixed { q: Vec<f64>, v: Vec<f64> },
    Free(Mayer),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundarySpec {
    pub t_final: f64,
    pub q0: Vec<f64>,
    pub v0: Vec<f64>,
    pub terminal: Terminal,
}

impl BoundarySpec {
    pub fn mayer(&self) -> Mayer {
        match &self.terminal {
            Terminal::Fixed { .. } => Mayer::Zero,
            Terminal::Free(m) => m.clone(),
        }
    }
}

/// One optimal control problem: dynamics, costs and boundary data.
#[derive(Clone, Debug)]
pub struct OcpProblem<M> {
    pub model: M,
    pub boundary: BoundarySpec,
    /// Stationarity tolerance of the pointwise control solve, relative to
    /// the control Hessian scale.
    pub control_tol: f64,
}

pub const DEFAULT_CONTROL_TOL: f64 = 1e-12;

impl<M: Model> OcpProblem<M> {
    pub fn new(model: M, boundary: BoundarySpec) -> Self {
        OcpProblem { model, boundary, control_tol: DEFAULT_CONTROL_TOL }
    }
    pub fn n(&self) -> usize {
        self.model.dim_q()
    }
    pub fn m(&self) -> usize {
        self.model.dim_u()
    }
    pub fn require_lagrangian(&self) -> Result<()> {
        if self.model.has_lagrangian() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("problem `{}` has no Lagrangian structure", self.model.name())))
        }
    }
}

// ---------------------------------------------------------------------------
// SODE from a forced Lagrangian
// ---------------------------------------------------------------------------

/// Value, gradient and Hessian of `f` over any base scalar, by nesting duals.
pub fn hessian_generic<S, F>(f: F, x: &[S]) -> (S, Vec<S>, Vec<Vec<S>>)
where
    S: Scalar,
    F: FnOnce(&[Dual<Dual<S>>]) -> Dual<Dual<S>>,
{
    let n = x.len();
    let seeded: Vec<Dual<Dual<S>>> = x
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let mut g = vec![Dual::constant(S::cst(0.0)); n];
            g[i] = Dual::constant(S::cst(1.0));
            Dual { v: Dual::var(xi.clone(), i, n), g }
        })
        .collect();
    let y = f(&seeded);
    let grad = (0..n).map(|i| y.v.grad(i)).collect();
    let hess = (0..n).map(|i| (0..n).map(|j| y.grad(i).grad(j)).collect()).collect();
    (y.v.v, grad, hess)
}

/// Mass matrix `D₂₂L(q, v)` at a real point.
pub fn mass_matrix<M: Model>(m: &M, q: &[f64], v: &[f64]) -> DMatrix<f64> {
    let n = q.len();
    let x: Vec<f64> = q.iter().chain(v).copied().collect();
    let (_, _, h) = hessian_generic(|y| m.lagrangian(&y[..n], &y[n..]), &x);
    DMatrix::from_fn(n, n, |i, j| h[n + i][n + j])
}

/// Explicit acceleration of the forced Euler–Lagrange equations,
/// `(D₂₂L)⁻¹ (D₁L + f_L − D₁₂L·v)`, over any scalar.
pub fn lagrangian_accel<M: Model, S: Scalar>(m: &M, q: &[S], v: &[S], u: &[S]) -> Result<Vec<S>> {
    let n = q.len();
    let x: Vec<S> = q.iter().chain(v).cloned().collect();
    let (_, g, h) = hessian_generic(|y| m.lagrangian(&y[..n], &y[n..]), &x);
    let f = m.force(q, v, u);
    let mass: Vec<Vec<S>> = (0..n).map(|i| (0..n).map(|j| h[n + i][n + j].clone()).collect()).collect();
    let rhs: Vec<S> = (0..n)
        .map(|i| {
            let mut r = g[i].clone() + f[i].clone();
            for (j, vj) in v.iter().enumerate() {
                r = r - h[n + i][j].clone() * vj.clone();
            }
            r
        })
        .collect();
    solve_generic(mass, rhs).map_err(|_| {
        let mm = DMatrix::from_fn(n, n, |i, j| h[n + i][n + j].value());
        Error::SingularMass { cond: linalg::cond(&mm) }
    })
}

/// The controlled SODE induced by a force-controlled Lagrangian system.
#[derive(Clone, Debug)]
pub struct LagrangianSode<'a, M> {
    model: &'a M,
}

pub fn sode_from_lagrangian<M: Model>(model: &M) -> Result<LagrangianSode<'_, M>> {
    if !model.has_lagrangian() {
        return Err(Error::Unsupported(format!("problem `{}` has no Lagrangian", model.name())));
    }
    Ok(LagrangianSode { model })
}

impl<M: Model> LagrangianSode<'_, M> {
    pub fn accel<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> Result<Vec<S>> {
        lagrangian_accel(self.model, q, v, u)
    }

    /// Residual of the forced Euler–Lagrange equation
    /// `D₂₂L·a + D₁₂L·v − D₁L − f_L` for a given acceleration.
    pub fn el_residual(&self, q: &[f64], v: &[f64], u: &[f64], a: &[f64]) -> f64 {
        let n = q.len();
        let x: Vec<f64> = q.iter().chain(v).copied().collect();
        let (_, g, h) = hessian_generic(|y| self.model.lagrangian(&y[..n], &y[n..]), &x);
        let f = self.model.force(q, v, u);
        (0..n)
            .map(|i| {
                let mut r = -g[i] - f[i];
                for j in 0..n {
                    r += h[n + i][n + j] * a[j] + h[n + i][j] * v[j];
                }
                r.abs()
            })
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// Actuation and validation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Actuation {
    Full,
    Under,
}

/// `D₃X_v(q, v, u)`, an `n × m` matrix.
pub fn control_jacobian<M: Model>(m: &M, q: &[f64], v: &[f64], u: &[f64]) -> DMatrix<f64> {
    let (qs, vs) = (consts::<Dual<f64>>(q), consts::<Dual<f64>>(v));
    let (_, jac) = jacobian(|us| m.accel(&qs, &vs, us), u);
    let (rows, cols) = (q.len(), u.len());
    DMatrix::from_fn(rows, cols, |i, j| jac[i][j])
}

/// Full actuation iff `rank D₃X_v = dim Q` at every sample.
pub fn actuation_classify<M: Model>(m: &M, samples: &[Sample]) -> Actuation {
    let n = m.dim_q();
    let full = samples.iter().all(|s| linalg::rank(&control_jacobian(m, &s.q, &s.v, &s.u), 1e-10) == n);
    if full {
        Actuation::Full
    } else {
        Actuation::Under
    }
}

/// Seeded samples from a model's box.
pub fn samples<M: Model>(m: &M, count: usize, seed: u64) -> Vec<Sample> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let b = m.sample_box();
    (0..count).map(|_| b.draw(&mut rng)).collect()
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub errors: Vec<String>,
    /// Max `‖X_v − X_v^L‖∞` over samples, when a Lagrangian is present.
    pub lagrangian_residual: Option<f64>,
    /// Largest mass-matrix condition number seen.
    pub mass_condition: Option<f64>,
}

impl Diagnostics {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Dimension consistency, Lagrangian/SODE agreement and finiteness at
/// random points. Problems are collected, never thrown.
pub fn validate_problem<M: Model>(p: &OcpProblem<M>, count: usize, seed: u64) -> Diagnostics {
    let mut d = Diagnostics::default();
    let (n, mu) = (p.n(), p.m());
    let b = &p.boundary;
    let mut dim = |what: &str, len: usize, want: usize| {
        if len != want {
            d.errors.push(format!("dimension: {what} has length {len}, expected {want}"));
        }
    };
    dim("q0", b.q0.len(), n);
    dim("v0", b.v0.len(), n);
    if let Terminal::Fixed { q, v } = &b.terminal {
        dim("qT", q.len(), n);
        dim("vT", v.len(), n);
    }
    let sb = p.model.sample_box();
    dim("sample box q", sb.q.len(), n);
    dim("sample box v", sb.v.len(), n);
    dim("sample box u", sb.u.len(), mu);
    if mu > n {
        d.errors.push(format!("over-actuated: dim_u = {mu} > dim_q = {n}"));
    }
    if !(b.t_final > 0.0) {
        d.errors.push(format!("horizon T = {} must be positive", b.t_final));
    }
    if !d.errors.is_empty() {
        return d;
    }
    let pts = samples(&p.model, count, seed);
    let mut worst: f64 = 0.0;
    let mut cond: f64 = 0.0;
    for s in &pts {
        let a = p.model.accel(&s.q, &s.v, &s.u);
        if a.len() != n {
            d.errors.push(format!("dimension: acceleration has length {}, expected {n}", a.len()));
            return d;
        }
        let c = p.model.cost(&s.q, &s.v, &s.u);
        if !c.is_finite() || a.iter().any(|x| !x.is_finite()) {
            d.errors.push(format!("non-finite dynamics or cost at q={:?} v={:?} u={:?}", s.q, s.v, s.u));
        }
        if p.model.has_lagrangian() {
            cond = cond.max(linalg::cond(&mass_matrix(&p.model, &s.q, &s.v)));
            match lagrangian_accel(&p.model, &s.q, &s.v, &s.u) {
                Ok(al) => worst = worst.max(linalg::max_abs_diff(&a, &al)),
                Err(e) => d.errors.push(e.to_string()),
            }
        }
    }
    if p.model.has_lagrangian() {
        d.lagrangian_residual = Some(worst);
        d.mass_condition = Some(cond);
        if worst > 1e-10 {
            d.errors.push(format!("registered dynamics differ from the Euler–Lagrange expansion by {worst:.3e}"));
        }
    }
    d
}
