#![allow(dead_code)]

use hyperctrl_core::broad_solver::Grid;
use hyperctrl_core::system_model::{CouplingField, Speed, SystemSpec};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// k = m = 1, unit speeds, B = [b], no coupling.
pub fn unit_pair(b: f64) -> SystemSpec {
    SystemSpec::constant(1, 1, &[1.0, 1.0], DMatrix::from_element(1, 1, b)).unwrap()
}

pub fn k1m2_zero() -> SystemSpec {
    SystemSpec::constant(1, 2, &[1.0, 1.0, 2.0], DMatrix::from_row_slice(1, 2, &[1.0, 1.0])).unwrap()
}

pub fn k2m1_zero() -> SystemSpec {
    SystemSpec::constant(2, 1, &[1.25, 1.0, 2.0], DMatrix::from_column_slice(2, 1, &[1.0, 1.0])).unwrap()
}

pub fn k2m2_zero() -> SystemSpec {
    SystemSpec::constant(2, 2, &[1.5, 1.0, 1.25, 2.0], DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap()
}

/// k = m = 1, unit speeds, constant coupling.
pub fn coupled_pair() -> SystemSpec {
    let c = DMatrix::from_row_slice(2, 2, &[0.0, 0.6, -0.4, 0.3]);
    unit_pair(1.0).with_coupling(CouplingField::constant(c).unwrap()).unwrap()
}

/// k = 2, m = 1 with C polynomial in t.
pub fn analytic_t() -> SystemSpec {
    let c0 = DMatrix::from_row_slice(3, 3, &[0.0, 0.4, -0.3, 0.2, 0.0, 0.5, -0.4, 0.3, 0.0]);
    let c1 = DMatrix::from_row_slice(3, 3, &[0.1, 0.0, 0.2, 0.0, -0.2, 0.1, 0.3, 0.0, 0.1]);
    k2m1_zero().with_coupling(CouplingField::poly_t(vec![c0, c1]).unwrap()).unwrap()
}

/// k = m = 1 with an affine speed on the plus side and an x-dependent coupling.
pub fn affine_coupled() -> SystemSpec {
    let speeds = vec![Speed::Const(1.0), Speed::Affine { a: 1.0, b: 1.0 }];
    let c = CouplingField::closed_form(2, "affine", true, |_t, x, out| {
        out.copy_from_slice(&[0.0, 0.5 * x, -0.3, 0.2 * (1.0 - x)]);
    });
    SystemSpec::new(1, 1, speeds, c, DMatrix::from_element(1, 1, 0.8)).unwrap()
}

/// Smooth random function: a few sine modes with random amplitudes and phases.
#[derive(Debug, Clone)]
pub struct Smooth {
    modes: Vec<(f64, f64, f64)>,
}

impl Smooth {
    pub fn random(r: &mut impl Rng) -> Self {
        let modes = (1..=4).map(|j| (r.gen_range(-1.0..1.0) / j as f64, j as f64 * 1.3, r.gen_range(0.0..std::f64::consts::TAU))).collect();
        Self { modes }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.modes.iter().map(|(a, w, p)| a * (w * x + p).sin()).sum()
    }
}

/// Random smooth state sampled on the grid.
pub fn random_state(g: &Grid, r: &mut impl Rng) -> Vec<Vec<f64>> {
    let fs: Vec<Smooth> = (0..g.n()).map(|_| Smooth::random(r)).collect();
    g.sample_state(&|i, x| fs[i].eval(x))
}

/// Random smooth traces sampled at every level.
pub fn random_trace(g: &Grid, count: usize, r: &mut impl Rng) -> Vec<Vec<f64>> {
    let fs: Vec<Smooth> = (0..count).map(|_| Smooth::random(r)).collect();
    g.sample_trace(count, &|j, t| fs[j].eval(t))
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random smooth state vanishing to second order at x = 0 and x = 1, so that
/// every corner compatibility condition holds.
pub fn random_compatible_state(g: &Grid, r: &mut impl Rng) -> Vec<Vec<f64>> {
    let fs: Vec<Smooth> = (0..g.n()).map(|_| Smooth::random(r)).collect();
    g.sample_state(&|i, x| 16.0 * (x * (1.0 - x)).powi(2) * fs[i].eval(x))
}

/// Random smooth traces vanishing to second order at the start of the window.
pub fn random_compatible_trace(g: &Grid, count: usize, r: &mut impl Rng) -> Vec<Vec<f64>> {
    let fs: Vec<Smooth> = (0..count).map(|_| Smooth::random(r)).collect();
    let t0 = g.t0;
    g.sample_trace(count, &|j, t| (t - t0).powi(2) * fs[j].eval(t))
}
