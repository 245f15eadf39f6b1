mod common;

use hyperctrl_core::characteristics::CharacteristicFlow;
use hyperctrl_core::system_model::{CouplingField, Speed, SystemSpec};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spec_with(minus: Speed, plus: Speed) -> SystemSpec {
    SystemSpec::new(1, 1, vec![minus, plus], CouplingField::zero(2), DMatrix::from_element(1, 1, 1.0)).unwrap()
}

#[test]
fn constant_lines() {
    let s = spec_with(Speed::Const(2.0), Speed::Const(2.0));
    let f = CharacteristicFlow::new(&s);
    assert!((f.flow(0, 0.2, 0.0, 0.1) - 0.5).abs() < 1e-15);
    assert!((f.flow(1, 0.2, 0.0, 0.9) - 0.5).abs() < 1e-15);
    assert!((f.crossing_time(1, 0.5) - 0.25).abs() < 1e-15);
    let s = spec_with(Speed::Const(1.0), Speed::Const(0.5));
    let f = CharacteristicFlow::new(&s);
    assert!((f.crossing_time(0, 0.25) - 0.75).abs() < 1e-15);
}

#[test]
fn affine_flow_closed_form() {
    let s = spec_with(Speed::Affine { a: 1.0, b: 1.0 }, Speed::Const(1.0));
    let f = CharacteristicFlow::new(&s);
    for &(t, xi) in &[(0.1, 0.0), (0.3, 0.2), (0.05, 0.8), (0.25, 0.5)] {
        let exact = (1.0 + xi) * f64::exp(t) - 1.0;
        assert!(exact <= 1.0);
        let got = f.flow_rk4(0, t, 0.0, xi);
        assert!((got - exact).abs() < 1e-10, "t={t} xi={xi}: {got} vs {exact}");
    }
}

#[test]
fn affine_crossing_time() {
    let s = spec_with(Speed::Const(2.0), Speed::Affine { a: 1.0, b: 1.0 });
    let f = CharacteristicFlow::new(&s);
    assert!((f.crossing_time(1, 0.5) - 1.5f64.ln()).abs() < 1e-11);
    // coordinate is the same integral seen from x = 0
    assert!((f.coordinate(1, 0.5) - 1.5f64.ln()).abs() < 1e-12);
    assert!((f.position(1, 1.5f64.ln()) - 0.5).abs() < 1e-12);
}

#[test]
fn omega_intercepts() {
    let f = CharacteristicFlow::new(&common::unit_pair(1.0));
    let c = f.omega_boundary(2.0).unwrap();
    assert!((c.intercept - 1.0).abs() < 1e-15);
    assert!((c.time_at(0.4) - 1.4).abs() < 1e-12);
    assert!(c.contains(1.2, 0.4) && !c.contains(1.5, 0.4));

    // the curve follows component k − m + 1 = 2
    let s = SystemSpec::constant(2, 1, &[3.0, 2.0, 3.0], DMatrix::from_column_slice(2, 1, &[1.0, 1.0])).unwrap();
    let c = CharacteristicFlow::new(&s).omega_boundary(1.5).unwrap();
    assert_eq!(c.comp, 1);
    assert!((c.intercept - 1.0).abs() < 1e-15);
    assert!((c.time_at(0.5) - 1.25).abs() < 1e-12);

    let s = spec_with(Speed::Affine { a: 1.0, b: 1.0 }, Speed::Const(2.0));
    let c = CharacteristicFlow::new(&s).omega_boundary(2.0).unwrap();
    assert!((c.intercept - (2.0 - std::f64::consts::LN_2)).abs() < 1e-12);
}

#[test]
fn omega_needs_k_at_least_m() {
    assert!(CharacteristicFlow::new(&common::k1m2_zero()).omega_boundary(2.0).is_err());
    assert!(CharacteristicFlow::new(&common::unit_pair(1.0)).omega_boundary(0.5).is_err());
}

fn variable() -> CharacteristicFlow {
    let s = spec_with(Speed::Affine { a: 1.0, b: 0.5 }, Speed::custom(|x| 1.0 + 0.3 * (3.0 * x).sin()));
    CharacteristicFlow::new(&s)
}

proptest! {
    #[test]
    fn flow_identity(i in 0usize..2, s in 0.0f64..1.0, xi in 0.0f64..1.0) {
        prop_assert_eq!(variable().flow(i, s, s, xi), xi);
    }

    #[test]
    fn flow_group(i in 0usize..2, t1 in 0.0f64..0.3, t2 in 0.0f64..0.3, xi in 0.2f64..0.8) {
        let f = variable();
        let mid = f.flow(i, t1, 0.0, xi);
        let a = f.flow(i, t2, t1, mid);
        let b = f.flow(i, t2, 0.0, xi);
        prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn flow_monotone(i in 0usize..2, t in -0.3f64..0.3, xi in 0.0f64..0.9, d in 1e-3f64..0.1) {
        let f = variable();
        prop_assert!(f.flow(i, t, 0.0, xi + d) > f.flow(i, t, 0.0, xi));
    }

    #[test]
    fn coordinate_roundtrip(i in 0usize..2, x in 0.0f64..1.0) {
        let f = variable();
        prop_assert!((f.position(i, f.coordinate(i, x)) - x).abs() < 1e-10);
    }
}
