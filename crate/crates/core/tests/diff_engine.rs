use proptest::prelude::*;
use socp_core::diff::{fd_check, fd_check_second, hessian, jet_eval, BlockTag, Dual, Jet2, Scalar, VectorFn};
use socp_core::formulations::new_lagrangian_s;
use socp_core::registry::DoubleIntegrator;

struct NewLagDi;
impl VectorFn for NewLagDi {
    fn dim_in(&self) -> usize {
        5
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        vec![new_lagrangian_s(&DoubleIntegrator, &x[0..1], &x[1..2], &x[2..3], &x[3..4], &x[4..5])]
    }
}

struct Mixed;
impl VectorFn for Mixed {
    fn dim_in(&self) -> usize {
        3
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let (a, b, c) = (x[0].clone(), x[1].clone(), x[2].clone());
        vec![a.sin() * b.exp() + c.square() / (b.square() + 2.0), (a.clone() * c.clone()).cos() + (b.square() + 1.0).ln().sqrt()]
    }
}

struct Constant;
impl VectorFn for Constant {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        1
    }
    fn eval<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
        vec![S::cst(4.25)]
    }
}

#[test]
fn new_lagrangian_of_double_integrator_matches_central_differences() {
    let x = [0.3, -1.2, 0.7, 2.1, -0.4];
    assert!(fd_check(&NewLagDi, &x, 1e-5).unwrap() <= 1e-6);
    assert!(fd_check_second(&NewLagDi, &x, 1e-5).unwrap() <= 1e-6);
}

#[test]
fn constant_function_has_zero_deviation() {
    assert_eq!(fd_check(&Constant, &[1.0, 2.0], 1e-4).unwrap(), 0.0);
}

#[test]
fn block_split_matches_flat_hessian() {
    let blocks = [BlockTag::new("a", 1), BlockTag::new("bc", 2)];
    let x = [0.4, -0.3, 1.1];
    let j = jet_eval(&Mixed, &blocks, &x, 2).unwrap();
    let flat = hessian(|y| Mixed.eval(y)[0].clone(), &x);
    assert_eq!(j.d(0, "a").unwrap(), &[flat.grad(0)]);
    assert_eq!(j.d(0, "bc").unwrap(), &[flat.grad(1), flat.grad(2)]);
    assert_eq!(j.dd(0, "a", "bc").unwrap(), &[flat.hess(0, 1), flat.hess(0, 2)]);
    assert!(j.max_asymmetry() <= 1e-14);
}

#[test]
fn mismatched_blocks_are_rejected() {
    let blocks = [BlockTag::new("a", 2)];
    assert!(jet_eval(&Mixed, &blocks, &[0.0, 1.0, 2.0], 1).is_err());
    assert!(jet_eval(&Mixed, &[BlockTag::new("a", 3)], &[0.0, 1.0, 2.0], 3).is_err());
}

#[test]
fn nested_duals_give_third_derivatives() {
    // d³/dx³ x⁴ = 24 x
    let x = 1.5;
    let inner = Jet2::var(x, 0, 1);
    let outer = Dual::var(inner, 0, 1);
    let y = outer.clone() * outer.clone() * outer.clone() * outer;
    assert!((y.grad(0).hess(0, 0) - 24.0 * x).abs() < 1e-12);
}

proptest! {
    #[test]
    fn jets_agree_with_differences(a in -2.0..2.0f64, b in -1.5..1.5f64, c in -2.0..2.0f64) {
        let x = [a, b, c];
        prop_assert!(fd_check(&Mixed, &x, 1e-5).unwrap() <= 1e-7);
        prop_assert!(fd_check_second(&Mixed, &x, 1e-5).unwrap() <= 1e-6);
    }

    #[test]
    fn hessians_are_symmetric(a in -2.0..2.0f64, b in -1.5..1.5f64, c in -2.0..2.0f64) {
        let j = jet_eval(&Mixed, &[BlockTag::new("x", 3)], &[a, b, c], 2).unwrap();
        prop_assert!(j.max_asymmetry() <= 1e-13);
    }

    #[test]
    fn product_rule(a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let xs = Dual::vars(&[a, b]);
        let y = xs[0].sin() * xs[1].exp();
        prop_assert!((y.grad(0) - a.cos() * b.exp()).abs() <= 1e-12 * (1.0 + b.exp()));
        prop_assert!((y.grad(1) - a.sin() * b.exp()).abs() <= 1e-12 * (1.0 + b.exp()));
    }
}
