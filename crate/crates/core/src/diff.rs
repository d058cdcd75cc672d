//! Forward-mode differentiation.
//!
//! Model functions are written once, generic over [`Scalar`], and evaluated
//! with `f64`, first-order [`Dual`] numbers or second-order [`Jet2`] jets.
//! `Dual<S>` nests over any scalar, so `Dual<Jet2>` yields third derivatives
//! where a formula already contains a gradient (forced Lagrangians).

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Arithmetic needed by every model function.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(c: f64) -> Self;
    /// Underlying real value (innermost for nested types).
    fn value(&self) -> f64;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, n: i32) -> Self;

    fn recip(&self) -> Self {
        Self::cst(1.0) / self.clone()
    }
    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Scalar for f64 {
    fn cst(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
}

/// Sum of two scalars of a slice pairing, `Σ a_i b_i`.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = S::cst(0.0);
    for (x, y) in a.iter().zip(b) {
        acc = acc + x.clone() * y.clone();
    }
    acc
}

/// Lift a real slice into constants of `S`.
pub fn consts<S: Scalar>(x: &[f64]) -> Vec<S> {
    x.iter().map(|&c| S::cst(c)).collect()
}

/// Real values of a scalar slice.
pub fn values<S: Scalar>(x: &[S]) -> Vec<f64> {
    x.iter().map(Scalar::value).collect()
}

// ---------------------------------------------------------------------------
// Dual numbers
// ---------------------------------------------------------------------------

/// First-order dual number over an arbitrary scalar. An empty gradient is a
/// constant.
#[derive(Clone, Debug, PartialEq)]
pub struct Dual<S> {
    pub v: S,
    pub g: Vec<S>,
}

impl<S: Scalar> Dual<S> {
    pub fn constant(v: S) -> Self {
        Dual { v, g: Vec::new() }
    }

    /// Independent variable `i` of `n`.
    pub fn var(v: S, i: usize, n: usize) -> Self {
        let mut g = vec![S::cst(0.0); n];
        g[i] = S::cst(1.0);
        Dual { v, g }
    }

    /// Seed a whole vector of independents.
    pub fn vars(x: &[S]) -> Vec<Self> {
        let n = x.len();
        x.iter().enumerate().map(|(i, xi)| Self::var(xi.clone(), i, n)).collect()
    }

    pub fn grad(&self, i: usize) -> S {
        self.g.get(i).cloned().unwrap_or_else(|| S::cst(0.0))
    }

    fn map(&self, f0: S, f1: S) -> Self {
        Dual { v: f0, g: self.g.iter().map(|gi| gi.clone() * f1.clone()).collect() }
    }

    fn zip(a: &[S], b: &[S], f: impl Fn(S, S) -> S) -> Vec<S> {
        let n = a.len().max(b.len());
        let z = S::cst(0.0);
        (0..n)
            .map(|i| {
                f(a.get(i).cloned().unwrap_or_else(|| z.clone()), b.get(i).cloned().unwrap_or_else(|| z.clone()))
            })
            .collect()
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let g = if o.g.is_empty() {
            self.g
        } else if self.g.is_empty() {
            o.g
        } else {
            Self::zip(&self.g, &o.g, |x, y| x + y)
        };
        Dual { v: self.v + o.v, g }
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let g = if o.g.is_empty() {
            self.g
        } else {
            Self::zip(&self.g, &o.g, |x, y| x - y)
        };
        Dual { v: self.v - o.v, g }
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let g = match (self.g.is_empty(), o.g.is_empty()) {
            (true, true) => Vec::new(),
            (false, true) => self.g.iter().map(|x| x.clone() * o.v.clone()).collect(),
            (true, false) => o.g.iter().map(|x| x.clone() * self.v.clone()).collect(),
            (false, false) => {
                let (av, bv) = (self.v.clone(), o.v.clone());
                Self::zip(&self.g, &o.g, |x, y| x * bv.clone() + y * av.clone())
            }
        };
        Dual { v: self.v * o.v, g }
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        if o.g.is_empty() {
            let inv = S::cst(1.0) / o.v;
            return Dual { v: self.v * inv.clone(), g: self.g.into_iter().map(|x| x * inv.clone()).collect() };
        }
        self * o.recip()
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual { v: -self.v, g: self.g.into_iter().map(|x| -x).collect() }
    }
}

impl<S: Scalar> Add<f64> for Dual<S> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        Dual { v: self.v + c, g: self.g }
    }
}

impl<S: Scalar> Sub<f64> for Dual<S> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        Dual { v: self.v - c, g: self.g }
    }
}

impl<S: Scalar> Mul<f64> for Dual<S> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        Dual { v: self.v * c, g: self.g.into_iter().map(|x| x * c).collect() }
    }
}

impl<S: Scalar> Div<f64> for Dual<S> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self * (1.0 / c)
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn cst(c: f64) -> Self {
        Dual::constant(S::cst(c))
    }
    fn value(&self) -> f64 {
        self.v.value()
    }
    fn sin(&self) -> Self {
        self.map(self.v.sin(), self.v.cos())
    }
    fn cos(&self) -> Self {
        self.map(self.v.cos(), -self.v.sin())
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.map(e.clone(), e)
    }
    fn ln(&self) -> Self {
        self.map(self.v.ln(), self.v.recip())
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        let d = (s.clone() * 2.0).recip();
        self.map(s, d)
    }
    fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Self::cst(1.0);
        }
        let d = self.v.powi(n - 1) * n as f64;
        self.map(self.v.powi(n), d)
    }
    fn recip(&self) -> Self {
        let r = self.v.recip();
        let d = -(r.clone() * r.clone());
        self.map(r, d)
    }
}

// ---------------------------------------------------------------------------
// Second-order jets
// ---------------------------------------------------------------------------

/// Value, gradient and full Hessian with respect to `n` independents.
///
/// Constants carry empty gradient and Hessian. Only the upper triangle is
/// computed; the lower triangle is mirrored, so Hessians are exactly
/// symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub g: Vec<f64>,
    /// Row-major `n × n`.
    pub h: Vec<f64>,
}

impl Jet2 {
    pub fn constant(v: f64) -> Self {
        Jet2 { v, g: Vec::new(), h: Vec::new() }
    }

    pub fn var(v: f64, i: usize, n: usize) -> Self {
        let mut g = vec![0.0; n];
        g[i] = 1.0;
        Jet2 { v, g, h: vec![0.0; n * n] }
    }

    pub fn vars(x: &[f64]) -> Vec<Self> {
        let n = x.len();
        x.iter().enumerate().map(|(i, &xi)| Self::var(xi, i, n)).collect()
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn grad(&self, i: usize) -> f64 {
        self.g.get(i).copied().unwrap_or(0.0)
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        let n = self.g.len();
        if n == 0 {
            0.0
        } else {
            self.h[i * n + j]
        }
    }

    fn is_const(&self) -> bool {
        self.g.is_empty()
    }

    /// Composition with a scalar function given by its value and first two
    /// derivatives at `self.v`.
    pub fn chain(&self, f0: f64, f1: f64, f2: f64) -> Self {
        if self.is_const() {
            return Jet2::constant(f0);
        }
        let n = self.g.len();
        let g: Vec<f64> = self.g.iter().map(|x| f1 * x).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let x = f1 * self.h[i * n + j] + f2 * self.g[i] * self.g[j];
                h[i * n + j] = x;
                h[j * n + i] = x;
            }
        }
        Jet2 { v: f0, g, h }
    }

    fn scale(self, c: f64) -> Self {
        Jet2 { v: self.v * c, g: self.g.into_iter().map(|x| x * c).collect(), h: self.h.into_iter().map(|x| x * c).collect() }
    }

    fn linear(a: &Jet2, ca: f64, b: &Jet2, cb: f64) -> Jet2 {
        let v = ca * a.v + cb * b.v;
        match (a.is_const(), b.is_const()) {
            (true, true) => Jet2::constant(v),
            (false, true) => Jet2 { v, g: a.g.iter().map(|x| ca * x).collect(), h: a.h.iter().map(|x| ca * x).collect() },
            (true, false) => Jet2 { v, g: b.g.iter().map(|x| cb * x).collect(), h: b.h.iter().map(|x| cb * x).collect() },
            (false, false) => {
                assert_eq!(a.g.len(), b.g.len(), "jet dimension mismatch");
                Jet2 {
                    v,
                    g: a.g.iter().zip(&b.g).map(|(x, y)| ca * x + cb * y).collect(),
                    h: a.h.iter().zip(&b.h).map(|(x, y)| ca * x + cb * y).collect(),
                }
            }
        }
    }
}

impl Add for Jet2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Jet2::linear(&self, 1.0, &o, 1.0)
    }
}

impl Sub for Jet2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Jet2::linear(&self, 1.0, &o, -1.0)
    }
}

impl Mul for Jet2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        if o.is_const() {
            return self.scale(o.v);
        }
        if self.is_const() {
            return o.scale(self.v);
        }
        let n = self.g.len();
        assert_eq!(n, o.g.len(), "jet dimension mismatch");
        let (a, b) = (&self, &o);
        let g: Vec<f64> = (0..n).map(|i| a.v * b.g[i] + b.v * a.g[i]).collect();
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = i * n + j;
                let x = a.v * b.h[k] + b.v * a.h[k] + a.g[i] * b.g[j] + b.g[i] * a.g[j];
                h[k] = x;
                h[j * n + i] = x;
            }
        }
        Jet2 { v: a.v * b.v, g, h }
    }
}

impl Div for Jet2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        if o.is_const() {
            return self.scale(1.0 / o.v);
        }
        self * o.recip()
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet2 {
    type Output = Self;
    fn add(mut self, c: f64) -> Self {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Self;
    fn sub(mut self, c: f64) -> Self {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.scale(c)
    }
}

impl Div<f64> for Jet2 {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self.scale(1.0 / c)
    }
}

impl Scalar for Jet2 {
    fn cst(c: f64) -> Self {
        Jet2::constant(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(&self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(&self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(&self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(&self) -> Self {
        let x = self.v;
        self.chain(x.ln(), 1.0 / x, -1.0 / (x * x))
    }
    fn sqrt(&self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn powi(&self, n: i32) -> Self {
        let x = self.v;
        let nf = n as f64;
        let f1 = if n == 0 { 0.0 } else { nf * x.powi(n - 1) };
        let f2 = if n == 0 || n == 1 { 0.0 } else { nf * (nf - 1.0) * x.powi(n - 2) };
        self.chain(x.powi(n), f1, f2)
    }
    fn recip(&self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

/// Value and gradient of a scalar function.
pub fn gradient<F>(f: F, x: &[f64]) -> (f64, Vec<f64>)
where
    F: FnOnce(&[Dual<f64>]) -> Dual<f64>,
{
    let y = f(&Dual::vars(x));
    let g = (0..x.len()).map(|i| y.grad(i)).collect();
    (y.v, g)
}

/// Value and Jacobian (`m × n`, row per output) of a vector function, over
/// any base scalar.
pub fn jacobian<S, F>(f: F, x: &[S]) -> (Vec<S>, Vec<Vec<S>>)
where
    S: Scalar,
    F: FnOnce(&[Dual<S>]) -> Vec<Dual<S>>,
{
    let y = f(&Dual::vars(x));
    let n = x.len();
    let vals = y.iter().map(|d| d.v.clone()).collect();
    let jac = y.iter().map(|d| (0..n).map(|j| d.grad(j)).collect()).collect();
    (vals, jac)
}

/// Gradient over an arbitrary base scalar.
pub fn gradient_generic<S, F>(f: F, x: &[S]) -> (S, Vec<S>)
where
    S: Scalar,
    F: FnOnce(&[Dual<S>]) -> Dual<S>,
{
    let y = f(&Dual::vars(x));
    let g = (0..x.len()).map(|i| y.grad(i)).collect();
    (y.v, g)
}

/// Second-order jet of a scalar function.
pub fn hessian<F>(f: F, x: &[f64]) -> Jet2
where
    F: FnOnce(&[Jet2]) -> Jet2,
{
    let n = x.len();
    let mut y = f(&Jet2::vars(x));
    if y.g.is_empty() {
        y.g = vec![0.0; n];
        y.h = vec![0.0; n * n];
    }
    y
}

/// Solve a small dense system `a·x = b` by Gaussian elimination with
/// partial pivoting on the real values. Works for any scalar, so derivatives
/// propagate through the solve.
pub fn solve_generic<S: Scalar>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Result<Vec<S>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("solve: matrix is not {n}x{n}")));
    }
    let scale = a.iter().flatten().map(|x| x.value().abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].value().abs().total_cmp(&a[j][k].value().abs())).unwrap();
        if a[p][k].value().abs() <= 1e-14 * scale {
            return Err(Error::Singular(format!("pivot {k} vanishes")));
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k].clone() / a[k][k].clone();
            for j in k..n {
                let t = a[k][j].clone();
                a[i][j] = a[i][j].clone() - f.clone() * t;
            }
            let t = b[k].clone();
            b[i] = b[i].clone() - f * t;
        }
    }
    let mut x = vec![S::cst(0.0); n];
    for i in (0..n).rev() {
        let mut s = b[i].clone();
        for j in i + 1..n {
            s = s - a[i][j].clone() * x[j].clone();
        }
        x[i] = s / a[i][i].clone();
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Block-tagged evaluation
// ---------------------------------------------------------------------------

/// A named slice of the input vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockTag {
    pub name: String,
    pub size: usize,
}

impl BlockTag {
    pub fn new(name: &str, size: usize) -> Self {
        BlockTag { name: name.to_string(), size }
    }
}

/// A smooth vector-valued function that can be evaluated at any scalar type.
pub trait VectorFn {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S>;
}

/// Derivative record of a vector function at a point, split by blocks.
#[derive(Clone, Debug)]
pub struct JetEval {
    pub blocks: Vec<BlockTag>,
    pub value: Vec<f64>,
    /// `grad[k][b]`: partials of output `k` with respect to block `b`.
    pub grad: Vec<Vec<Vec<f64>>>,
    /// `hess[k][b1 * nblocks + b2]`: row-major `size(b1) × size(b2)` block.
    pub hess: Vec<Vec<Vec<f64>>>,
    pub order: u8,
}

impl JetEval {
    fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.blocks.len() + 1);
        let mut acc = 0;
        o.push(0);
        for b in &self.blocks {
            acc += b.size;
            o.push(acc);
        }
        o
    }

    fn block_index(&self, name: &str) -> Result<usize> {
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| Error::Dimension(format!("unknown block `{name}`")))
    }

    /// First partials of output `k` with respect to block `name`.
    pub fn d(&self, k: usize, name: &str) -> Result<&[f64]> {
        let b = self.block_index(name)?;
        Ok(&self.grad[k][b])
    }

    /// Second partials of output `k`, block pair `(r, c)`, row-major.
    pub fn dd(&self, k: usize, r: &str, c: &str) -> Result<&[f64]> {
        let (i, j) = (self.block_index(r)?, self.block_index(c)?);
        let nb = self.blocks.len();
        Ok(&self.hess[k][i * nb + j])
    }

    /// Largest relative asymmetry over all Hessian block pairs.
    pub fn max_asymmetry(&self) -> f64 {
        let off = self.offsets();
        let nb = self.blocks.len();
        let mut worst: f64 = 0.0;
        for hk in &self.hess {
            for i in 0..nb {
                for j in 0..nb {
                    let a = &hk[i * nb + j];
                    let b = &hk[j * nb + i];
                    let (ri, cj) = (off[i + 1] - off[i], off[j + 1] - off[j]);
                    for r in 0..ri {
                        for c in 0..cj {
                            let x = a[r * cj + c];
                            let y = b[c * ri + r];
                            worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(1.0));
                        }
                    }
                }
            }
        }
        worst
    }
}

fn check_input(f_in: usize, blocks: &[BlockTag], x: &[f64]) -> Result<()> {
    let total: usize = blocks.iter().map(|b| b.size).sum();
    if blocks.iter().any(|b| b.size == 0) {
        return Err(Error::Dimension("block sizes must be positive".into()));
    }
    if total != x.len() || f_in != x.len() {
        return Err(Error::Dimension(format!(
            "input length {} does not match block total {} / function arity {}",
            x.len(),
            total,
            f_in
        )));
    }
    Ok(())
}

/// Evaluate `f` at `x` with derivatives up to `order` split by `blocks`.
pub fn jet_eval<F: VectorFn>(f: &F, blocks: &[BlockTag], x: &[f64], order: u8) -> Result<JetEval> {
    check_input(f.dim_in(), blocks, x)?;
    if order > 2 {
        return Err(Error::Dimension(format!("derivative order {order} unsupported")));
    }
    let n = x.len();
    let outs: Vec<Jet2> = match order {
        0 => f.eval(x).into_iter().map(Jet2::constant).collect(),
        1 => f
            .eval(&Dual::vars(x))
            .into_iter()
            .map(|d| Jet2 { v: d.v, g: (0..n).map(|i| d.grad(i)).collect(), h: vec![0.0; n * n] })
            .collect(),
        _ => f.eval(&Jet2::vars(x)),
    };
    if outs.len() != f.dim_out() {
        return Err(Error::Dimension(format!("function returned {} outputs, declared {}", outs.len(), f.dim_out())));
    }
    let mut off = vec![0];
    for b in blocks {
        off.push(off.last().unwrap() + b.size);
    }
    let nb = blocks.len();
    let mut value = Vec::with_capacity(outs.len());
    let mut grad = Vec::with_capacity(outs.len());
    let mut hess = Vec::with_capacity(outs.len());
    for y in outs {
        if !y.v.is_finite() || y.g.iter().chain(&y.h).any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("jet evaluation".into()));
        }
        value.push(y.v);
        if order == 0 {
            grad.push(Vec::new());
            hess.push(Vec::new());
            continue;
        }
        grad.push((0..nb).map(|b| (off[b]..off[b + 1]).map(|i| y.grad(i)).collect()).collect());
        if order < 2 {
            hess.push(Vec::new());
            continue;
        }
        let mut hk = Vec::with_capacity(nb * nb);
        for bi in 0..nb {
            for bj in 0..nb {
                let mut m = Vec::new();
                for i in off[bi]..off[bi + 1] {
                    for j in off[bj]..off[bj + 1] {
                        m.push(y.hess(i, j));
                    }
                }
                hk.push(m);
            }
        }
        hess.push(hk);
    }
    Ok(JetEval { blocks: blocks.to_vec(), value, grad, hess, order })
}

/// Maximum deviation between jet first derivatives and central differences,
/// per entry relative to `max(1, |jet entry|)`.
pub fn fd_check<F: VectorFn>(f: &F, x: &[f64], step: f64) -> Result<f64> {
    if step <= 0.0 {
        return Err(Error::Dimension("fd step must be positive".into()));
    }
    let n = x.len();
    let jet: Vec<Dual<f64>> = f.eval(&Dual::vars(x));
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + step;
        let fp = f.eval(&xp);
        xp[j] = x[j] - step;
        let fm = f.eval(&xp);
        xp[j] = x[j];
        for (k, d) in jet.iter().enumerate() {
            let fd = (fp[k] - fm[k]) / (2.0 * step);
            let exact = d.grad(j);
            if !fd.is_finite() {
                return Err(Error::NonFinite("finite-difference evaluation".into()));
            }
            worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Maximum deviation between jet second derivatives and central second
/// differences of the jet gradient.
pub fn fd_check_second<F: VectorFn>(f: &F, x: &[f64], step: f64) -> Result<f64> {
    if step <= 0.0 {
        return Err(Error::Dimension("fd step must be positive".into()));
    }
    let n = x.len();
    let jet = f.eval(&Jet2::vars(x));
    let grad_at = |y: &[f64]| -> Vec<Vec<f64>> {
        f.eval(&Dual::vars(y)).iter().map(|d| (0..n).map(|i| d.grad(i)).collect()).collect()
    };
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + step;
        let gp = grad_at(&xp);
        xp[j] = x[j] - step;
        let gm = grad_at(&xp);
        xp[j] = x[j];
        for (k, y) in jet.iter().enumerate() {
            for i in 0..n {
                let fd = (gp[k][i] - gm[k][i]) / (2.0 * step);
                let exact = y.hess(i, j);
                worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
            }
        }
    }
    Ok(worst)
}
