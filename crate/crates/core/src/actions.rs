//! One-parameter group actions on `Q` and their lifts to `TQ`, `T*Q` and
//! the three double bundles.
//!
//! Lifts are assembled from the action itself by nested forward
//! differentiation, so the second-derivative terms of the double-bundle
//! lifts are exact.

use serde::Serialize;

use crate::diff::{jacobian, Scalar};
use crate::error::{Error, Result};
use crate::tulczyjew::Chart;

pub const ACTIONS: [&str; 3] = ["rotation", "phi_translation", "reciprocal"];

pub const S_GRID: [f64; 6] = [0.1, -0.1, 0.01, -0.01, 1.0, -1.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Action {
    /// Rotation of the plane by angle `s`; also rotates planar controls.
    Rotation,
    /// `(r, φ) ↦ (r, φ + s)` in polar coordinates.
    PhiTranslation,
    /// `q_i ↦ q_i / (1 − s q_i)`, a nonlinear flow with generator `q_i²`.
    /// Defined while `s q_i < 1`.
    Reciprocal,
}

impl Action {
    pub fn from_name(name: &str) -> Result<Action> {
        match name {
            "rotation" => Ok(Action::Rotation),
            "phi_translation" => Ok(Action::PhiTranslation),
            "reciprocal" => Ok(Action::Reciprocal),
            other => Err(Error::Config(format!("unknown action `{other}`"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Action::Rotation => "rotation",
            Action::PhiTranslation => "phi_translation",
            Action::Reciprocal => "reciprocal",
        }
    }

    pub fn phi<S: Scalar>(&self, s: f64, q: &[S]) -> Vec<S> {
        match self {
            Action::Rotation => {
                let (c, sn) = (s.cos(), s.sin());
                vec![q[0].clone() * c - q[1].clone() * sn, q[0].clone() * sn + q[1].clone() * c]
            }
            Action::PhiTranslation => vec![q[0].clone(), q[1].clone() + s],
            Action::Reciprocal => q.iter().map(|x| x.clone() / (S::cst(1.0) - x.clone() * s)).collect(),
        }
    }

    /// Analytic infinitesimal generator `X^Q(q) = ∂_sΦ_s(q)|₀`.
    pub fn generator<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        match self {
            Action::Rotation => vec![-q[1].clone(), q[0].clone()],
            Action::PhiTranslation => vec![S::cst(0.0), S::cst(1.0)],
            Action::Reciprocal => q.iter().map(|x| x.square()).collect(),
        }
    }

    /// Induced action on controls.
    pub fn act_control(&self, s: f64, u: &[f64]) -> Vec<f64> {
        match (self, u.len()) {
            (Action::Rotation, 2) => self.phi(s, u),
            _ => u.to_vec(),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match (self, n) {
            (Action::Rotation | Action::PhiTranslation, 2) | (Action::Reciprocal, _) => Ok(()),
            _ => Err(Error::Dimension(format!("action `{}` does not act on a {n}-dimensional space", self.name()))),
        }
    }

    /// `(Φ_s(q), D_qΦ_s(q)·v)`.
    pub fn tangent<S: Scalar>(&self, s: f64, q: &[S], v: &[S]) -> Vec<S> {
        let (y, j) = jacobian(|x| self.phi(s, x), q);
        let mut out = y;
        out.extend(matvec(&j, v));
        out
    }

    /// `(Φ_s(q), (D_qΦ_{−s}(Φ_s q))ᵀ·λ)`.
    pub fn cotangent<S: Scalar>(&self, s: f64, q: &[S], l: &[S]) -> Vec<S> {
        let y = self.phi(s, q);
        let (_, j) = jacobian(|x| self.phi(-s, x), &y);
        let mut out = y;
        out.extend(matvec_t(&j, l));
        out
    }

    /// Lift to `T*TQ`: cotangent lift of the tangent lift.
    pub fn lift_tstar_tq<S: Scalar>(&self, s: f64, x: &[S]) -> Vec<S> {
        let n = x.len() / 4;
        let fz = self.tangent(s, &x[..n], &x[n..2 * n]);
        let (_, j) = jacobian(|w| self.tangent(-s, &w[..n], &w[n..]), &fz);
        let mut out = fz;
        out.extend(matvec_t(&j, &x[2 * n..]));
        out
    }

    /// Lift to `TT*Q`: tangent lift of the cotangent lift.
    pub fn lift_tt_starq<S: Scalar>(&self, s: f64, x: &[S]) -> Vec<S> {
        let n = x.len() / 4;
        let (y, j) = jacobian(|w| self.cotangent(s, &w[..n], &w[n..]), &x[..2 * n]);
        let mut out = y;
        out.extend(matvec(&j, &x[2 * n..]));
        out
    }

    /// Lift to `T*T*Q`: cotangent lift of the cotangent lift.
    pub fn lift_tstar_tstarq<S: Scalar>(&self, s: f64, x: &[S]) -> Vec<S> {
        let n = x.len() / 4;
        let py = self.cotangent(s, &x[..n], &x[n..2 * n]);
        let (_, j) = jacobian(|w| self.cotangent(-s, &w[..n], &w[n..]), &py);
        let mut out = py;
        out.extend(matvec_t(&j, &x[2 * n..]));
        out
    }

    /// Lift of a chart point `(4n coordinates, m controls)`.
    pub fn lift(&self, chart: Chart, s: f64, coords: &[f64], n: usize) -> Result<Vec<f64>> {
        self.check_dim(n)?;
        let (x, u) = coords.split_at(4 * n);
        let mut out = match chart {
            Chart::TStarTQ => self.lift_tstar_tq(s, x),
            Chart::TTStarQ => self.lift_tt_starq(s, x),
            Chart::TStarTStarQ => self.lift_tstar_tstarq(s, x),
            // (q, ξ, v_q, v_ξ): tangent lift of the tangent lift, reordered.
            Chart::TTQKappa => {
                let reordered: Vec<f64> = [&x[..n], &x[2 * n..3 * n], &x[n..2 * n], &x[3 * n..]].concat();
                let (y, j) = jacobian(|w| self.tangent(s, &w[..n], &w[n..]), &reordered[..2 * n]);
                let t = matvec(&j, &reordered[2 * n..]);
                [&y[..n], &t[..n], &y[n..], &t[n..]].concat()
            }
            other => return Err(Error::Unsupported(format!("no lift on chart {other}"))),
        };
        out.extend(self.act_control(s, u));
        Ok(out)
    }

    /// Generator by a central difference in `s`.
    pub fn generator_fd(&self, q: &[f64], h: f64) -> Vec<f64> {
        let p = self.phi(h, q);
        let m = self.phi(-h, q);
        p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }

    /// `D X^Q(q)·v`, the generator of the tangent lift's fiber part.
    pub fn generator_tangent(&self, q: &[f64], v: &[f64]) -> Vec<f64> {
        let (_, j) = jacobian(|x| self.generator(x), q);
        matvec(&j, v)
    }
}

/// Infinitesimal generator as a callable record.
#[derive(Clone, Copy, Debug)]
pub struct Generator {
    pub action: Action,
    pub step: f64,
}

impl Generator {
    pub fn eval(&self, q: &[f64]) -> Vec<f64> {
        self.action.generator_fd(q, self.step)
    }
}

/// Generator by central differences in `s` with step `1e-6`.
pub fn generator_eval(a: Action) -> Generator {
    Generator { action: a, step: 1e-6 }
}

/// `max_s |f(lift_s(x)) − f(x)|` over the grid.
pub fn invariance_residual(
    f: impl Fn(&[f64]) -> Result<f64>,
    a: Action,
    chart: Chart,
    x: &[f64],
    n: usize,
    s_grid: &[f64],
) -> Result<f64> {
    let f0 = f(x)?;
    let mut worst: f64 = 0.0;
    for &s in s_grid {
        let y = a.lift(chart, s, x, n)?;
        worst = worst.max((f(&y)? - f0).abs());
    }
    Ok(worst)
}

fn matvec<S: Scalar>(j: &[Vec<S>], v: &[S]) -> Vec<S> {
    j.iter().map(|row| crate::diff::dot(row, v)).collect()
}

fn matvec_t<S: Scalar>(j: &[Vec<S>], l: &[S]) -> Vec<S> {
    let cols = j.first().map_or(0, |r| r.len());
    (0..cols)
        .map(|c| {
            let mut acc = S::cst(0.0);
            for (r, row) in j.iter().enumerate() {
                acc = acc + row[c].clone() * l[r].clone();
            }
            acc
        })
        .collect()
}
