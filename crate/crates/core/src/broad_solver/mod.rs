//! Broad solutions of the control system, its dual and the Ω / rectangle
//! problems with staggered boundary conditions.
//!
//! Every component lives on its own grid whose nodes sit at characteristic
//! coordinates p = j·dt, so a characteristic moves exactly one node per time
//! step. Values are constant-plus-integral along characteristics; the source
//! integral uses the trapezoid rule, and the coupling between components is
//! resolved by Picard iteration with lagged sources. Boundary couplings are
//! resolved inside each sweep, so only the coupling matrix is iterated.

mod engine;
mod grid;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::sync::Arc;
use alloc::vec::Vec;

pub use engine::{ProblemKind, Solver};
pub use grid::{CompGrid, Grid, Resolution};

use crate::system_model::SystemSpec;
use crate::Result;

/// Outcome of the Picard iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    pub iterations: usize,
    /// Ratios of successive weighted differences, recorded while the
    /// difference is above roundoff.
    pub contraction_estimates: Vec<f64>,
    pub weight_l: f64,
    pub converged: bool,
    /// Last unweighted max-node difference.
    pub final_difference: f64,
}

impl PicardReport {
    pub fn max_contraction(&self) -> f64 {
        self.contraction_estimates.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Rectangle,
    /// Region below the characteristic of component `comp` (0-based) through (1, horizon).
    Omega { comp: usize, horizon: f64 },
    Hat { horizon: f64 },
}

/// Data of one solve. Empty vectors mean zero data.
///
/// * `state`: per component on its grid. Initial state (forward), terminal
///   state (adjoint), initial plus-part `g` (Ω and hat; minus entries ignored).
/// * `boundary`: per level. Controls for the m plus components (forward) or the
///   x = 1 traces `f` of all n components (Ω and hat).
/// * `terminal`: hat only, terminal values of the fast minus components.
/// * `source`: interior source per component, level-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProblemData {
    pub state: Vec<Vec<f64>>,
    pub boundary: Vec<Vec<f64>>,
    pub terminal: Vec<Vec<f64>>,
    pub source: Vec<Vec<f64>>,
}

/// Node values on a [`Grid`], NaN outside the domain.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub domain: Domain,
    pub grid: Arc<Grid>,
    /// Per component, level-major: `values[i][level * len_i + node]`.
    pub values: Vec<Vec<f64>>,
}

impl SolutionField {
    pub fn levels(&self) -> usize {
        self.grid.nt + 1
    }

    pub fn time(&self, level: usize) -> f64 {
        self.grid.time(level)
    }

    pub fn value(&self, i: usize, level: usize, node: usize) -> f64 {
        self.values[i][level * self.grid.comps[i].len() + node]
    }

    /// All components at one level.
    pub fn slice(&self, level: usize) -> Vec<Vec<f64>> {
        self.grid
            .comps
            .iter()
            .zip(&self.values)
            .map(|(c, v)| v[level * c.len()..(level + 1) * c.len()].to_vec())
            .collect()
    }

    /// Component `i` at its node `node` for every level.
    pub fn space_slice(&self, i: usize, node: usize) -> Vec<f64> {
        let len = self.grid.comps[i].len();
        (0..self.levels()).map(|l| self.values[i][l * len + node]).collect()
    }

    pub fn trace_x0(&self, i: usize) -> Vec<f64> {
        self.space_slice(i, 0)
    }

    pub fn trace_x1(&self, i: usize) -> Vec<f64> {
        self.space_slice(i, self.grid.comps[i].last())
    }

    /// Bilinear sample of component `i` at (t, x), clamped to the window.
    pub fn sample(&self, i: usize, t: f64, x: f64) -> f64 {
        let g = &*self.grid;
        let pos = ((t - g.t0) / g.dt).clamp(0.0, g.nt as f64);
        let l0 = (pos.floor() as usize).min(g.nt.saturating_sub(1));
        let a = if g.nt == 0 { 0.0 } else { pos - l0 as f64 };
        let c = &g.comps[i];
        let len = c.len();
        let row = |l: usize| c.interpolate(&self.values[i][l * len..(l + 1) * len], x);
        if a == 0.0 {
            row(l0)
        } else {
            (1.0 - a) * row(l0) + a * row((l0 + 1).min(g.nt))
        }
    }

    /// Norm of the broad-solution class: the larger of max over t of the L²
    /// norm in x and max over nodes of the L² norm in t. NaN entries are skipped.
    pub fn y_norm(&self) -> f64 {
        let g = &*self.grid;
        let tw = g.time_weights();
        let mut space: f64 = 0.0;
        for l in 0..=g.nt {
            let mut s = 0.0;
            for (c, v) in g.comps.iter().zip(&self.values) {
                for j in 0..c.len() {
                    let u = v[l * c.len() + j];
                    if u.is_finite() {
                        s += c.w[j] * u * u;
                    }
                }
            }
            space = space.max(s);
        }
        let mut time: f64 = 0.0;
        for (c, v) in g.comps.iter().zip(&self.values) {
            for j in 0..c.len() {
                let s: f64 = (0..=g.nt)
                    .map(|l| v[l * c.len() + j])
                    .zip(&tw)
                    .filter(|(u, _)| u.is_finite())
                    .map(|(u, w)| w * u * u)
                    .sum();
                time = time.max(s);
            }
        }
        space.max(time).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().filter(|v| v.is_finite()).fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Forward solve of the control system on `window` from `u0(i, x)` with
/// controls `control(j, t)` on the plus components (j = 0..m).
pub fn solve_forward(
    spec: &SystemSpec,
    u0: &dyn Fn(usize, f64) -> f64,
    control: &dyn Fn(usize, f64) -> f64,
    window: (f64, f64),
    res: &Resolution,
) -> Result<(SolutionField, PicardReport)> {
    let solver = Solver::forward(spec, window.0, window.1, res)?;
    let g = solver.grid();
    let data = ProblemData {
        state: g.sample_state(u0),
        boundary: g.sample_trace(spec.m(), control),
        ..Default::default()
    };
    solver.solve(&data)
}

/// Backward solve of the dual system from `phi(i, x)` at the end of `window`.
pub fn solve_adjoint(
    spec: &SystemSpec,
    phi: &dyn Fn(usize, f64) -> f64,
    window: (f64, f64),
    res: &Resolution,
) -> Result<(SolutionField, PicardReport)> {
    let solver = Solver::adjoint(spec, window.0, window.1, res)?;
    let data = ProblemData { state: solver.grid().sample_state(phi), ..Default::default() };
    solver.solve(&data)
}

/// Closed-form data for the Ω and rectangle problems.
pub struct OmegaData<'a> {
    /// Trace at x = 1, `f(i, t)` for all n components.
    pub f: &'a dyn Fn(usize, f64) -> f64,
    /// Initial plus-part `g(i, x)` (called for i = k..n).
    pub g: &'a dyn Fn(usize, f64) -> f64,
    /// Interior source `γ(i, t, x)`.
    pub gamma: Option<&'a dyn Fn(usize, f64, f64) -> f64>,
    /// Terminal data of the fast minus components (rectangle problem only).
    pub q: Option<&'a dyn Fn(usize, f64) -> f64>,
}

fn omega_data(solver: &Solver, d: &OmegaData) -> ProblemData {
    let g = solver.grid();
    let k = solver.spec().k();
    let state = g.sample_state(&|i, x| if i >= k { (d.g)(i, x) } else { 0.0 });
    let boundary = g.sample_trace(g.n(), d.f);
    let source = match d.gamma {
        None => Vec::new(),
        Some(gm) => g
            .comps
            .iter()
            .enumerate()
            .map(|(i, c)| (0..=g.nt).flat_map(|l| c.x.iter().map(move |&x| gm(i, g.time(l), x))).collect())
            .collect(),
    };
    let terminal = match d.q {
        None => Vec::new(),
        Some(q) => g.sample_state(&|i, x| if i < k { q(i, x) } else { 0.0 }),
    };
    ProblemData { state, boundary, terminal, source }
}

/// Ω problem for the system shifted by `tau`, horizon `horizon`.
pub fn solve_omega(
    spec: &SystemSpec,
    tau: f64,
    horizon: f64,
    data: &OmegaData,
    res: &Resolution,
) -> Result<(SolutionField, PicardReport)> {
    let solver = Solver::omega(spec, tau, horizon, res)?;
    solver.solve(&omega_data(&solver, data))
}

/// Full-rectangle problem for the system shifted by `tau`.
pub fn solve_rectangle_hat(
    spec: &SystemSpec,
    tau: f64,
    horizon: f64,
    data: &OmegaData,
    res: &Resolution,
) -> Result<(SolutionField, PicardReport)> {
    let solver = Solver::hat(spec, tau, horizon, res)?;
    solver.solve(&omega_data(&solver, data))
}
