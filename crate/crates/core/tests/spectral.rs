mod common;

use hyperctrl_core::broad_solver::Resolution;
use hyperctrl_core::counterexample::{CounterexampleSpec, Witness};
use hyperctrl_core::parallel::Sequential;
use hyperctrl_core::spectral::*;
use hyperctrl_core::Error;

fn thm1() -> hyperctrl_core::system_model::SystemSpec {
    CounterexampleSpec::reference(0.1).system().unwrap()
}

#[test]
fn no_coupling_no_k() {
    for spec in [common::unit_pair(1.0), common::k2m1_zero(), common::k2m2_zero()] {
        let ops = assemble_operators(&spec, 0.0, spec.t_opt(), &Resolution::with_step(1.0 / 40.0), &Sequential).unwrap();
        assert!(ops.k_norm() < 1e-8, "{}", ops.k_norm());
        assert!((ops.l_window() - (spec.t_opt() - spec.taus()[spec.k() - spec.m()])).abs() < 0.05);
    }
}

#[test]
fn no_coupling_trivial_h() {
    let res = Resolution::with_step(1.0 / 40.0);
    for spec in [common::unit_pair(1.0), common::k1m2_zero(), common::k2m1_zero(), common::k2m2_zero()] {
        for t in [spec.t_opt(), spec.t_opt() + 0.2] {
            let h = compute_h(&spec, 0.0, t, &res, &Sequential).unwrap();
            assert_eq!(h.dim(), 0, "{:?} T={t}: {:?}", spec.taus(), h.spectrum.iter().rev().take(3).collect::<Vec<_>>());
        }
    }
}

#[test]
fn below_optimal_time_rejected() {
    let spec = common::unit_pair(1.0);
    let r = compute_h(&spec, 0.0, 1.5, &Resolution::with_step(1.0 / 40.0), &Sequential);
    assert!(matches!(r, Err(Error::Precondition(_))));
    let spec = common::k1m2_zero();
    assert!(matches!(
        assemble_operators(&spec, 0.0, 2.0, &Resolution::with_step(1.0 / 40.0), &Sequential),
        Err(Error::Precondition(_))
    ));
}

// The witness v(0, ·) has zero observation, so it must lie in H(0, T).
#[test]
fn counterexample_obstruction() {
    let cx = CounterexampleSpec::reference(0.1);
    let spec = cx.system().unwrap();
    let h = compute_h(&spec, 0.0, cx.horizon(), &Resolution::with_step(1.0 / 160.0), &Sequential).unwrap();
    assert!(h.dim() >= 1, "{:?}", &h.spectrum[..4]);
    let w = Witness::new(&cx).unwrap();
    let v0 = w.state_at(&h.grid, 0.0);
    let cos = h.alignment(&h.grid, &v0);
    assert!(cos > 0.9, "{cos}");
    assert_eq!(h.route, KernelRoute::Gramian);
    // √(eigenvalue / trace), so the kernel threshold reads 1e-4 here
    assert!(h.certificate.iter().all(|c| *c < 1e-4), "{:?}", h.certificate);
}

#[test]
fn analytic_coupling_trivial() {
    let spec = common::analytic_t();
    let taus = [0.0, 0.25, 0.5];
    let rows = dim_scan(&spec, &taus, spec.t_opt() + 0.2, &Resolution::with_step(1.0 / 40.0), &Sequential).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.dim == 0 && !r.flagged), "{rows:?}");
    assert!(dim_scan(&spec, &[], 2.0, &Resolution::with_step(1.0 / 40.0), &Sequential).unwrap().is_empty());
}

#[test]
fn attainable_and_j_nesting() {
    let spec = thm1();
    let res = Resolution::with_step(1.0 / 80.0);
    let horizon = 1.9;
    let h0 = compute_h(&spec, 0.0, horizon, &res, &Sequential).unwrap();
    let mut prev: Option<JSpace> = None;
    for eps in [0.1, 0.3, 0.45, 0.6] {
        let h1 = compute_h(&spec, eps, horizon, &res, &Sequential).unwrap();
        let a = attainable_projection(&spec, 0.0, eps, &h1, &res, &Sequential).unwrap();
        assert!(a.basis.ncols() <= h1.dim());
        let j = j_space(&spec, 0.0, eps, &h0, &h1, &a, &res).unwrap();
        assert!(j.dim() <= h0.dim());
        // J ⊆ H: the vectors are combinations of H's basis
        let resid = &j.vectors - &h0.vectors * (h0.vectors.transpose() * &j.vectors);
        assert!(resid.norm() < 1e-10);
        // J(τ, ε) grows with ε
        if let Some(p) = &prev {
            if p.dim() > 0 {
                let outside = &p.coords - &j.coords * (j.coords.transpose() * &p.coords);
                let sines = outside.norm();
                assert!(j.dim() >= p.dim() && sines < 1e-6, "eps {eps}: {sines:e}");
            }
        }
        prev = Some(j);
    }
    assert_eq!(prev.unwrap().dim(), h0.dim());
}

#[test]
fn deterministic() {
    let spec = thm1();
    let res = Resolution::with_step(1.0 / 40.0);
    let a = compute_h(&spec, 0.0, 1.9, &res, &Sequential).unwrap();
    let b = compute_h(&spec, 0.0, 1.9, &res, &Sequential).unwrap();
    assert_eq!(a.spectrum, b.spectrum);
    assert_eq!(a.vectors, b.vectors);
}

#[test]
fn gramian_route_for_more_plus() {
    let spec = common::k1m2_zero();
    let h = compute_h(&spec, 0.0, spec.t_opt() + 0.2, &Resolution::with_step(1.0 / 40.0), &Sequential).unwrap();
    assert_eq!(h.route, KernelRoute::Gramian);
    assert_eq!(h.dim(), 0);
}
