//! Built-in problems.

use crate::diff::{dot, Scalar};
use crate::error::{Error, Result};
use crate::model::{BoundarySpec, Mayer, Model, OcpProblem, SampleBox, Terminal};

pub const PROBLEMS: [&str; 6] =
    ["double_integrator", "low_thrust", "scalar_singular", "scalar_regular", "scalar_superregular", "rot_oscillator"];

/// `q̈ = u`, `C = ½u²`, unit-mass Lagrangian `½v²` with force `u`.
#[derive(Clone, Debug, Default)]
pub struct DoubleIntegrator;

impl Model for DoubleIntegrator {
    fn name(&self) -> &'static str {
        "double_integrator"
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
        u[0].square() * 0.5
    }
    fn has_lagrangian(&self) -> bool {
        true
    }
    fn lagrangian<S: Scalar>(&self, _q: &[S], v: &[S]) -> S {
        v[0].square() * 0.5
    }
    fn force<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        vec![u[0].clone()]
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox { q: vec![(-2.0, 2.0)], v: vec![(-2.0, 2.0)], u: vec![(-2.0, 2.0)], adj: (0.5, 2.0) }
    }
}

/// Planar central-force transfer in polar coordinates `(r, φ)` with a
/// tangential thrust `u`: `L = ½m(v_r² + r²v_φ²) + γMm/r`, `f_L = (0, m r u)`.
#[derive(Clone, Debug)]
pub struct LowThrust {
    pub mass: f64,
    pub gamma_m: f64,
}

impl Default for LowThrust {
    fn default() -> Self {
        LowThrust { mass: 1.0, gamma_m: 1.0 }
    }
}

/// Radii at or below this are outside the low-thrust domain.
pub const R_MIN: f64 = 1e-6;

impl Model for LowThrust {
    fn name(&self) -> &'static str {
        "low_thrust"
    }
    fn dim_q(&self) -> usize {
        2
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn accel<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> Vec<S> {
        let (r, vr, vp) = (&q[0], &v[0], &v[1]);
        let rinv = r.recip();
        vec![
            r.clone() * vp.square() - rinv.square() * self.gamma_m,
            -(vr.clone() * vp.clone() * rinv.clone()) * 2.0 + u[0].clone() * rinv,
        ]
    }
    fn cost<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> S {
        u[0].square() * 0.5
    }
    fn has_lagrangian(&self) -> bool {
        true
    }
    fn lagrangian<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        let r = &q[0];
        (v[0].square() + r.square() * v[1].square()) * (0.5 * self.mass) + r.recip() * (self.gamma_m * self.mass)
    }
    fn force<S: Scalar>(&self, q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        vec![S::cst(0.0), q[0].clone() * u[0].clone() * self.mass]
    }
    fn check_domain(&self, q: &[f64], _v: &[f64]) -> Result<()> {
        if q[0] > R_MIN {
            Ok(())
        } else {
            Err(Error::Domain(format!("radius {} ≤ {R_MIN}", q[0])))
        }
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox {
            q: vec![(0.7, 1.6), (-3.0, 3.0)],
            v: vec![(-0.5, 0.5), (0.3, 1.5)],
            u: vec![(-1.0, 1.0)],
            adj: (0.5, 2.0),
        }
    }
    fn params(&self) -> Vec<(&'static str, f64)> {
        vec![("m", self.mass), ("gammaM", self.gamma_m)]
    }
    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "m" if value > 0.0 => self.mass = value,
            "gammaM" => self.gamma_m = value,
            "m" => return Err(Error::Config(format!("params.m must be positive, got {value}"))),
            _ => return Err(Error::UnknownKey(format!("params.{name}"))),
        }
        Ok(())
    }
}

/// `q̈ = u`, `C = q² + (1 + q²)u`: the maximization condition carries no
/// information on `u`.
#[derive(Clone, Debug, Default)]
pub struct ScalarSingular;

impl Model for ScalarSingular {
    fn name(&self) -> &'static str {
        "scalar_singular"
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
    fn cost<S: Scalar>(&self, q: &[S], _v: &[S], u: &[S]) -> S {
        q[0].square() + (q[0].square() + 1.0) * u[0].clone()
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox { q: vec![(-2.0, 2.0)], v: vec![(-2.0, 2.0)], u: vec![(-2.0, 2.0)], adj: (0.5, 2.0) }
    }
}

/// `q̈ = u + (1 + q²)u²`, `C = (1 + q²)u`: regular where the adjoint is
/// nonzero, never superregular.
#[derive(Clone, Debug, Default)]
pub struct ScalarRegular;

impl Model for ScalarRegular {
    fn name(&self) -> &'static str {
        "scalar_regular"
    }
    fn dim_q(&self) -> usize {
        1
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn accel<S: Scalar>(&self, q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        vec![u[0].clone() + (q[0].square() + 1.0) * u[0].square()]
    }
    fn cost<S: Scalar>(&self, q: &[S], _v: &[S], u: &[S]) -> S {
        (q[0].square() + 1.0) * u[0].clone()
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox { q: vec![(-2.0, 2.0)], v: vec![(-2.0, 2.0)], u: vec![(-2.0, 2.0)], adj: (0.5, 2.0) }
    }
}

/// `q̈ = u`, `C = e^q u²`: superregular everywhere.
#[derive(Clone, Debug, Default)]
pub struct ScalarSuperregular;

impl Model for ScalarSuperregular {
    fn name(&self) -> &'static str {
        "scalar_superregular"
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
    fn cost<S: Scalar>(&self, q: &[S], _v: &[S], u: &[S]) -> S {
        q[0].exp() * u[0].square()
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox { q: vec![(-2.0, 2.0)], v: vec![(-2.0, 2.0)], u: vec![(-2.0, 2.0)], adj: (0.5, 2.0) }
    }
}

/// Isotropic planar oscillator `L = ½‖v‖² − ½‖q‖²` driven by a radial force
/// `f_L = u·q`, `C = ½u²`. Invariant under rotations, with the force
/// orthogonal to the rotation generator.
#[derive(Clone, Debug, Default)]
pub struct RotOscillator;

impl Model for RotOscillator {
    fn name(&self) -> &'static str {
        "rot_oscillator"
    }
    fn dim_q(&self) -> usize {
        2
    }
    fn dim_u(&self) -> usize {
        1
    }
    fn accel<S: Scalar>(&self, q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        q.iter().map(|qi| qi.clone() * (u[0].clone() - 1.0)).collect()
    }
    fn cost<S: Scalar>(&self, _q: &[S], _v: &[S], u: &[S]) -> S {
        u[0].square() * 0.5
    }
    fn has_lagrangian(&self) -> bool {
        true
    }
    fn lagrangian<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        (dot(v, v) - dot(q, q)) * 0.5
    }
    fn force<S: Scalar>(&self, q: &[S], _v: &[S], u: &[S]) -> Vec<S> {
        q.iter().map(|qi| qi.clone() * u[0].clone()).collect()
    }
    fn sample_box(&self) -> SampleBox {
        SampleBox {
            q: vec![(-1.5, 1.5), (-1.5, 1.5)],
            v: vec![(-1.5, 1.5), (-1.5, 1.5)],
            u: vec![(-1.0, 1.0)],
            adj: (0.5, 2.0),
        }
    }
}

/// Closed set of built-in models.
#[derive(Clone, Debug)]
pub enum Registered {
    DoubleIntegrator(DoubleIntegrator),
    LowThrust(LowThrust),
    ScalarSingular(ScalarSingular),
    ScalarRegular(ScalarRegular),
    ScalarSuperregular(ScalarSuperregular),
    RotOscillator(RotOscillator),
}

macro_rules! dispatch {
    ($self:expr, $m:ident => $e:expr) => {
        match $self {
            Registered::DoubleIntegrator($m) => $e,
            Registered::LowThrust($m) => $e,
            Registered::ScalarSingular($m) => $e,
            Registered::ScalarRegular($m) => $e,
            Registered::ScalarSuperregular($m) => $e,
            Registered::RotOscillator($m) => $e,
        }
    };
}

impl Model for Registered {
    fn name(&self) -> &'static str {
        dispatch!(self, m => m.name())
    }
    fn dim_q(&self) -> usize {
        dispatch!(self, m => m.dim_q())
    }
    fn dim_u(&self) -> usize {
        dispatch!(self, m => m.dim_u())
    }
    fn accel<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> Vec<S> {
        dispatch!(self, m => m.accel(q, v, u))
    }
    fn cost<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> S {
        dispatch!(self, m => m.cost(q, v, u))
    }
    fn has_lagrangian(&self) -> bool {
        dispatch!(self, m => m.has_lagrangian())
    }
    fn lagrangian<S: Scalar>(&self, q: &[S], v: &[S]) -> S {
        dispatch!(self, m => m.lagrangian(q, v))
    }
    fn force<S: Scalar>(&self, q: &[S], v: &[S], u: &[S]) -> Vec<S> {
        dispatch!(self, m => m.force(q, v, u))
    }
    fn check_domain(&self, q: &[f64], v: &[f64]) -> Result<()> {
        dispatch!(self, m => m.check_domain(q, v))
    }
    fn sample_box(&self) -> SampleBox {
        dispatch!(self, m => m.sample_box())
    }
    fn params(&self) -> Vec<(&'static str, f64)> {
        dispatch!(self, m => m.params())
    }
    fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        dispatch!(self, m => m.set_param(name, value))
    }
}

pub type Problem = OcpProblem<Registered>;

fn fixed(t: f64, q0: &[f64], v0: &[f64], q: &[f64], v: &[f64]) -> BoundarySpec {
    BoundarySpec { t_final: t, q0: q0.to_vec(), v0: v0.to_vec(), terminal: Terminal::Fixed { q: q.to_vec(), v: v.to_vec() } }
}

/// Default boundary data for each built-in problem.
pub fn default_boundary(name: &str) -> Result<BoundarySpec> {
    Ok(match name {
        "double_integrator" | "scalar_singular" | "scalar_superregular" => fixed(1.0, &[0.0], &[0.0], &[1.0], &[0.0]),
        // The acceleration is bounded below by −1/(4(1 + q²)), so a rest to
        // rest transfer covers only a short distance in unit time.
        "scalar_regular" => fixed(1.0, &[0.0], &[0.0], &[0.1], &[0.0]),
        // From the unit circular orbit to a slightly raised state reachable
        // with modest tangential thrust.
        "low_thrust" => fixed(1.0, &[1.0, 0.0], &[0.0, 1.0], &[1.032, 1.033], &[0.092, 1.0337]),
        "rot_oscillator" => BoundarySpec {
            t_final: 1.0,
            q0: vec![1.0, 0.0],
            v0: vec![0.0, 1.0],
            terminal: Terminal::Free(Mayer::RadialPenalty { weight: 10.0, radius: 1.2 }),
        },
        other => return Err(Error::Config(format!("unknown problem `{other}`"))),
    })
}

pub fn model(name: &str) -> Result<Registered> {
    Ok(match name {
        "double_integrator" => Registered::DoubleIntegrator(DoubleIntegrator),
        "low_thrust" => Registered::LowThrust(LowThrust::default()),
        "scalar_singular" => Registered::ScalarSingular(ScalarSingular),
        "scalar_regular" => Registered::ScalarRegular(ScalarRegular),
        "scalar_superregular" => Registered::ScalarSuperregular(ScalarSuperregular),
        "rot_oscillator" => Registered::RotOscillator(RotOscillator),
        other => return Err(Error::Config(format!("unknown problem `{other}`"))),
    })
}

/// Initial Pontryagin adjoint `(λ_q, λ_v)` for shooting. Zero except where
/// the maximization condition degenerates at `λ = 0`.
pub fn pmp_guess(name: &str, n: usize) -> Vec<f64> {
    match name {
        // A maximum needs λ_v < 0.
        "scalar_regular" => vec![0.0, -1.0],
        _ => vec![0.0; 2 * n],
    }
}

/// A built-in problem with its default boundary data.
pub fn problem(name: &str) -> Result<Problem> {
    Ok(OcpProblem::new(model(name)?, default_boundary(name)?))
}
