mod common;

use hyperctrl_core::broad_solver::Resolution;
use hyperctrl_core::counterexample::*;
use hyperctrl_core::parallel::Sequential;
use hyperctrl_core::Error;
use proptest::prelude::*;

/// Composite Simpson, independent of the library quadrature.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn mollifier_mass_and_peak() {
    let raw = simpson(|s: f64| if s.abs() < 1.0 { (-1.0 / (1.0 - s * s)).exp() } else { 0.0 }, -1.0, 1.0, 20000);
    assert!((raw - MOLLIFIER_MASS).abs() < 1e-12, "{raw}");
    let b = build_bump(-1.0, 1.0).unwrap();
    assert!((b.eval(0.0) - (-1f64).exp() / 0.443_994).abs() < 1e-5);
    assert!((b.mass() - 1.0).abs() < 1e-12);
}

#[test]
fn bump_shape() {
    let b = build_bump(0.3, 0.9).unwrap();
    let m = simpson(|t| b.eval(t), 0.3, 0.9, 4000);
    assert!((m - 1.0).abs() < 1e-10);
    for t in [0.0, 0.3, 0.9, 1.2] {
        assert_eq!(b.eval(t), 0.0);
    }
    for d in [0.01, 0.1, 0.25] {
        assert!((b.eval(0.6 - d) - b.eval(0.6 + d)).abs() < 1e-12);
    }
    assert!(b.eval(0.6) > b.eval(0.7));
    assert!(matches!(build_bump(1.0, 1.0), Err(Error::Precondition(_))));
}

#[test]
fn reference_constants() {
    let cx = CounterexampleSpec::reference(0.1);
    let g = cx.gammas();
    assert!((g[0] - 1.0).abs() < 1e-15 && (g[1] - 0.5).abs() < 1e-15);
    let (a, b) = cx.thetas();
    assert!((a - 2.0 / 3.0).abs() < 1e-15 && (b - 2.0).abs() < 1e-15);
    assert!((cx.critical_time() - 2.0).abs() < 1e-15);
    assert!((cx.horizon() - 1.9).abs() < 1e-15);
    // (τ₃, τ₂) ∩ (T − τ₁, T) = (0.5, 1) ∩ (0.9, 1.9)
    let (lo, hi) = cx.interval();
    assert!((lo - 0.9).abs() < 1e-15 && (hi - 1.0).abs() < 1e-15);
}

#[test]
fn coupling_structure() {
    let cx = CounterexampleSpec::reference(0.1);
    let c = build_coefficients(&cx).unwrap();
    let mut out = [0.0; 9];
    let mut hit = false;
    for i in 0..=40 {
        for j in 0..=10 {
            let (t, x) = (1.9 * i as f64 / 40.0, j as f64 / 10.0);
            c.eval(t, x, &mut out);
            for (idx, v) in out.iter().enumerate() {
                if idx != 2 && idx != 5 {
                    assert_eq!(*v, 0.0);
                }
            }
            // both entries ride the same ridge t + τ₃ x
            let w = Witness::new(&cx).unwrap();
            let p = w.bump.eval(t + 0.5 * x);
            // amplitudes λ₃γ₃(τ₁ + τ₃) and λ₃γ₃(τ₂ − τ₃)/γ₂
            assert!((out[2] + 1.5 * p).abs() < 1e-12);
            assert!((out[5] + 0.5 * p).abs() < 1e-12);
            hit |= p > 0.0;
        }
    }
    assert!(hit);
}

#[test]
fn preconditions() {
    let cx = CounterexampleSpec::reference(0.1);
    assert!(matches!(cx.with_eps(0.0).validate(), Err(Error::Precondition(_))));
    // interval (0.5, 1) ∩ (1 − ε, 2 − ε) empties once ε ≥ 1, but T < T_opt first
    assert!(matches!(cx.with_eps(0.6).validate(), Err(Error::Precondition(_))));
    let mut bad = cx.clone();
    bad.b[(0, 1)] = 0.0;
    assert!(matches!(bad.validate(), Err(Error::Precondition(_))));
    let mut short = cx.clone();
    short.m = 1;
    assert!(short.validate().is_err());
}

#[test]
fn witness_reference() {
    for eps in [0.05, 0.1, 0.2] {
        let cx = CounterexampleSpec::reference(eps);
        let (_, rep) = build_dual_witness(&cx, 800).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert!(rep.obs_norm / rep.initial_norm < 1e-6);
        assert!(rep.initial_norm > 1e-3);
        assert!(rep.identity_defects.max() < 1e-8, "{:?}", rep.identity_defects);
        assert!(rep.threshold_band_max < 1e-8);
    }
}

// The grid backward solve from the same terminal data is an independent
// check of the closed form.
#[test]
fn witness_matches_grid_solve() {
    let cx = CounterexampleSpec::reference(0.1);
    let (_, coarse) = build_dual_witness(&cx, 200).unwrap();
    let (_, fine) = build_dual_witness(&cx, 400).unwrap();
    assert!(fine.grid_initial_deviation < 1e-10, "{}", fine.grid_initial_deviation);
    assert!(fine.grid_obs_ratio < 1e-3, "{}", fine.grid_obs_ratio);
    assert!(coarse.grid_obs_ratio / fine.grid_obs_ratio > 3.0);
}

#[test]
fn failure_scan() {
    let cx = CounterexampleSpec::reference(0.1);
    let res = Resolution::with_step(1.0 / 40.0);
    let scan = observability_failure_scan(&cx, &[], 200, &res, &Sequential).unwrap();
    assert!(scan.rows.is_empty() && scan.reference.is_none());
    let scan = observability_failure_scan(&cx, &[0.1, 0.2], 400, &res, &Sequential).unwrap();
    assert_eq!(scan.rows.len(), 2);
    for row in &scan.rows {
        assert!(row.witness_pass && row.witness_ratio < 1e-6);
        assert!(row.constant_rel_trace < 1e-3, "{row:?}");
    }
    let reference = scan.reference.unwrap();
    assert!(reference.constant > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn witness_observation_vanishes(eps in 0.02f64..0.45) {
        let w = Witness::new(&CounterexampleSpec::reference(eps)).unwrap();
        for i in 0..=50 {
            let t = w.horizon * i as f64 / 50.0;
            prop_assert!(w.value(1, t, 1.0).abs() < 1e-9);
            prop_assert!(w.value(2, t, 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn bump_unit_mass(a in -2.0f64..2.0, len in 0.05f64..3.0) {
        let b = build_bump(a, a + len).unwrap();
        prop_assert!((simpson(|t| b.eval(t), a, a + len, 2000) - 1.0).abs() < 1e-8);
    }
}
