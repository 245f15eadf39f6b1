#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use crate::characteristics::CharacteristicFlow;
use crate::system_model::SystemSpec;
use crate::{Error, Result};

/// Requested resolution. The time step is
/// `min(window / nt, τ_max / nx, τ_min / 4)` unless `step` overrides the first
/// two terms, then shrunk so the window holds a whole number of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub nt: usize,
    pub nx: usize,
    pub step: Option<f64>,
}

impl Resolution {
    pub fn new(nt: usize, nx: usize) -> Self {
        Self { nt, nx, step: None }
    }

    pub fn uniform(n: usize) -> Self {
        Self::new(n, n)
    }

    /// Fixed target step, so that windows of different length share one grid.
    pub fn with_step(dt: f64) -> Self {
        Self { nt: 1, nx: 1, step: Some(dt) }
    }

    pub(crate) fn resolve(&self, window: f64, taus: &[f64]) -> Result<(f64, usize)> {
        if !(window > 0.0) || !window.is_finite() {
            return Err(Error::Config(format!("time window must be positive, got {window}")));
        }
        let tau_max = taus.iter().cloned().fold(0.0, f64::max);
        let tau_min = taus.iter().cloned().fold(f64::INFINITY, f64::min);
        let base = match self.step {
            Some(h) if h > 0.0 => h,
            Some(h) => return Err(Error::Config(format!("time step must be positive, got {h}"))),
            None => {
                if self.nt == 0 || self.nx == 0 {
                    return Err(Error::Config("grid counts must be positive".into()));
                }
                (window / self.nt as f64).min(tau_max / self.nx as f64)
            }
        };
        let dt0 = base.min(tau_min / 4.0);
        let r = window / dt0;
        let nt = if (r - r.round()).abs() < 1e-9 * r.max(1.0) { r.round() } else { r.ceil() };
        let nt = (nt as usize).max(1);
        Ok((window / nt as f64, nt))
    }
}

/// How a node at one level is reached from the previous level of a march.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Pred {
    /// Same characteristic through node `j` of the previous level.
    Aligned(usize),
    /// Characteristic passes between nodes `a` and `a + 1` (fraction `f` from `a`).
    Interp(usize, f64),
    /// Characteristic enters through x = 1 a time `δ` before (in march order).
    Partial(f64),
    /// Node sits on the inflow boundary.
    Inflow,
}

/// Nodes of one component, placed at characteristic coordinates p = j·dt
/// (plus a final node at x = 1 when τ_i is not a multiple of dt).
#[derive(Debug, Clone)]
pub struct CompGrid {
    /// P_i(x) = ∫₀ˣ 1/λ_i at each node.
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    /// Trapezoid weights in x.
    pub w: Vec<f64>,
    pub has_end: bool,
    /// March where p increases with the march (minus forward, plus backward).
    pub(crate) up: Vec<Pred>,
    /// March where p decreases (minus backward, plus forward).
    pub(crate) down: Vec<Pred>,
}

impl CompGrid {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Index of the node at x = 1.
    pub fn last(&self) -> usize {
        self.x.len() - 1
    }

    /// Node interval containing `x`: `(a, f)` with x ≈ (1 − f)·x_a + f·x_{a+1}.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let n = self.x.len();
        if x <= self.x[0] {
            return (0, 0.0);
        }
        if x >= self.x[n - 1] {
            return (n - 2, 1.0);
        }
        let a = self.x.partition_point(|v| *v <= x) - 1;
        let a = a.min(n - 2);
        (a, (x - self.x[a]) / (self.x[a + 1] - self.x[a]))
    }

    /// Linear interpolation of node values.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let (a, f) = self.locate(x);
        (1.0 - f) * values[a] + f * values[a + 1]
    }
}

/// Space–time grid on `[t0, t0 + nt·dt]`.
#[derive(Debug, Clone)]
pub struct Grid {
    pub t0: f64,
    pub dt: f64,
    pub nt: usize,
    pub k: usize,
    pub comps: Vec<CompGrid>,
}

impl Grid {
    pub fn new(spec: &SystemSpec, t0: f64, t1: f64, res: &Resolution) -> Result<Self> {
        let (dt, nt) = res.resolve(t1 - t0, spec.taus())?;
        let flow = CharacteristicFlow::new(spec);
        let mut comps = Vec::with_capacity(spec.n());
        for (i, &tau) in spec.taus().iter().enumerate() {
            let aligned = (tau / dt + 1e-9).floor() as usize;
            if aligned < 4 {
                return Err(Error::Config(format!(
                    "component {} has fewer than 4 cells (τ = {tau}, dt = {dt})",
                    i + 1
                )));
            }
            let has_end = tau - aligned as f64 * dt > 1e-9 * dt;
            let mut p: Vec<f64> = (0..=aligned).map(|j| j as f64 * dt).collect();
            if has_end {
                p.push(tau);
            } else {
                *p.last_mut().unwrap() = tau;
            }
            let mut x: Vec<f64> = p.iter().map(|&q| flow.position(i, q)).collect();
            x[0] = 0.0;
            *x.last_mut().unwrap() = 1.0;
            let len = x.len();
            let mut w = alloc::vec![0.0; len];
            for j in 0..len - 1 {
                let h = 0.5 * (x[j + 1] - x[j]);
                w[j] += h;
                w[j + 1] += h;
            }
            let end_frac = (tau - dt - p[aligned - 1]) / dt;
            let up = (0..len)
                .map(|j| {
                    if j == 0 {
                        Pred::Inflow
                    } else if j <= aligned {
                        Pred::Aligned(j - 1)
                    } else {
                        Pred::Interp(aligned - 1, end_frac)
                    }
                })
                .collect();
            let down = (0..len)
                .map(|j| {
                    if j < aligned {
                        Pred::Aligned(j + 1)
                    } else if j == aligned && has_end {
                        Pred::Partial(tau - p[aligned])
                    } else {
                        Pred::Inflow
                    }
                })
                .collect();
            comps.push(CompGrid { p, x, w, has_end, up, down });
        }
        Ok(Self { t0, dt, nt, k: spec.k(), comps })
    }

    pub fn n(&self) -> usize {
        self.comps.len()
    }

    pub fn time(&self, level: usize) -> f64 {
        self.t0 + level as f64 * self.dt
    }

    pub fn t1(&self) -> f64 {
        self.time(self.nt)
    }

    /// Total node count of one time level.
    pub fn level_size(&self) -> usize {
        self.comps.iter().map(|c| c.len()).sum()
    }

    /// Sample `f(i, x)` at every node (i is the 0-based component).
    pub fn sample_state(&self, f: &dyn Fn(usize, f64) -> f64) -> Vec<Vec<f64>> {
        self.comps.iter().enumerate().map(|(i, c)| c.x.iter().map(|&x| f(i, x)).collect()).collect()
    }

    /// Sample `f(j, t)` for `count` traces at every level.
    pub fn sample_trace(&self, count: usize, f: &dyn Fn(usize, f64) -> f64) -> Vec<Vec<f64>> {
        (0..count).map(|j| (0..=self.nt).map(|n| f(j, self.time(n))).collect()).collect()
    }

    pub fn zero_state(&self) -> Vec<Vec<f64>> {
        self.comps.iter().map(|c| alloc::vec![0.0; c.len()]).collect()
    }

    /// Trapezoid weights in time.
    pub fn time_weights(&self) -> Vec<f64> {
        let mut w = alloc::vec![self.dt; self.nt + 1];
        w[0] = 0.5 * self.dt;
        w[self.nt] = 0.5 * self.dt;
        w
    }

    /// ⟨a, b⟩ in L²(0,1)ⁿ by per-component trapezoid.
    pub fn state_dot(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        self.comps
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(c, (u, v))| c.w.iter().zip(u.iter().zip(v.iter())).map(|(w, (x, y))| w * x * y).sum::<f64>())
            .sum()
    }

    pub fn state_norm(&self, a: &[Vec<f64>]) -> f64 {
        self.state_dot(a, a).max(0.0).sqrt()
    }

    /// ⟨a, b⟩ in L²(t0, t1)^count by trapezoid.
    pub fn trace_dot(&self, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let w = self.time_weights();
        a.iter()
            .zip(b.iter())
            .map(|(u, v)| w.iter().zip(u.iter().zip(v.iter())).map(|(w, (x, y))| w * x * y).sum::<f64>())
            .sum()
    }

    pub fn trace_norm(&self, a: &[Vec<f64>]) -> f64 {
        self.trace_dot(a, a).max(0.0).sqrt()
    }

    /// Flatten a state into one vector (component-major).
    pub fn flatten(&self, state: &[Vec<f64>]) -> Vec<f64> {
        state.iter().flat_map(|c| c.iter().cloned()).collect()
    }

    pub fn unflatten(&self, flat: &[f64]) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n());
        let mut off = 0;
        for c in &self.comps {
            out.push(flat[off..off + c.len()].to_vec());
            off += c.len();
        }
        out
    }

    /// Square roots of the trapezoid mass, flattened.
    pub fn mass_sqrt(&self) -> Vec<f64> {
        self.comps.iter().flat_map(|c| c.w.iter().map(|w| w.sqrt())).collect()
    }

    /// Move a state sampled on `other` onto this grid by linear interpolation.
    pub fn resample_from(&self, other: &Grid, state: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.comps
            .iter()
            .zip(other.comps.iter().zip(state.iter()))
            .map(|(mine, (theirs, vals))| mine.x.iter().map(|&x| theirs.interpolate(vals, x)).collect())
            .collect()
    }
}
