#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::grid::{Grid, Pred, Resolution};
use super::{Domain, PicardReport, ProblemData, SolutionField};
use crate::characteristics::CharacteristicFlow;
use crate::linalg::is_invertible;
use crate::quad::integrate;
use crate::system_model::SystemSpec;
use crate::{Error, Result};

/// Which integral system a [`Solver`] discretises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Control system forward in time, coefficient C.
    Forward,
    /// Dual system backward in time, coefficient Σ′ − Cᵀ.
    Adjoint,
    /// Dual system forward in time on Ω with staggered boundary conditions.
    Omega,
    /// Same on the full rectangle, with terminal data for the fast minus components.
    Hat,
}

/// Coefficient F_il sampled at the nodes of component i, with the
/// interpolation stencil into component l.
#[derive(Debug, Clone)]
struct Coef {
    l: usize,
    values: Vec<f64>,
    /// 0 when the coefficient does not depend on time.
    stride: usize,
    stencil: Vec<(usize, f64)>,
}

/// Prepared solver: grid, sampled coefficients and boundary matrices are
/// computed once and reused for every right-hand side.
#[derive(Debug, Clone)]
pub struct Solver {
    kind: ProblemKind,
    spec: SystemSpec,
    grid: Arc<Grid>,
    coefs: Vec<Vec<Coef>>,
    /// Reflection matrix of the problem (row = inflowing component).
    refl: DMatrix<f64>,
    /// Inverse boundary blocks for s = 1..=m unknowns (Ω and hat only).
    q_inv: Vec<Option<DMatrix<f64>>>,
    /// First valid node per component and level.
    lo: Vec<Vec<usize>>,
    /// Minus components: first node of the region fed from x = 1.
    split: Vec<Vec<usize>>,
    /// Φ at the nodes (Ω and hat weights).
    phi: Vec<Vec<f64>>,
    /// First minus component carrying Q-boundary values (Ω and hat).
    c: usize,
    horizon: f64,
    weight_l: f64,
    pub tol: f64,
    pub max_iter: usize,
}

const MAX_ITER: usize = 200;
const TOL: f64 = 1e-12;

impl Solver {
    pub fn forward(spec: &SystemSpec, t0: f64, t1: f64, res: &Resolution) -> Result<Self> {
        Self::build(ProblemKind::Forward, spec.clone(), t0, t1, res)
    }

    pub fn adjoint(spec: &SystemSpec, t0: f64, t1: f64, res: &Resolution) -> Result<Self> {
        Self::build(ProblemKind::Adjoint, spec.clone(), t0, t1, res)
    }

    /// Ω problem for the system shifted by `tau`, on `(0, horizon)`.
    pub fn omega(spec: &SystemSpec, tau: f64, horizon: f64, res: &Resolution) -> Result<Self> {
        Self::build(ProblemKind::Omega, spec.shifted(tau), 0.0, horizon, res)
    }

    /// Full-rectangle problem for the system shifted by `tau`, on `(0, horizon)`.
    pub fn hat(spec: &SystemSpec, tau: f64, horizon: f64, res: &Resolution) -> Result<Self> {
        Self::build(ProblemKind::Hat, spec.shifted(tau), 0.0, horizon, res)
    }

    fn build(kind: ProblemKind, spec: SystemSpec, t0: f64, t1: f64, res: &Resolution) -> Result<Self> {
        let grid = Grid::new(&spec, t0, t1, res)?;
        let (k, m, n) = (spec.k(), spec.m(), spec.n());
        let nt = grid.nt;
        let dual = kind != ProblemKind::Forward;

        // sample F at every node; keep only pairs that are not identically zero
        let mut coefs = Vec::with_capacity(n);
        let time_dep = !spec.coupling().is_time_independent();
        let levels = if time_dep { nt + 1 } else { 1 };
        let mut buf = vec![0.0; n * n];
        for i in 0..n {
            let len = grid.comps[i].len();
            let mut full = vec![vec![0.0; levels * len]; n];
            let trivial = spec.coupling().is_zero() && (!dual || spec.is_constant_speed());
            if !trivial {
                for lev in 0..levels {
                    let t = grid.time(lev);
                    for j in 0..len {
                        let x = grid.comps[i].x[j];
                        if dual {
                            spec.cbold(t, x, &mut buf);
                        } else {
                            spec.coupling().eval(t, x, &mut buf);
                        }
                        for l in 0..n {
                            full[l][lev * len + j] = buf[i * n + l];
                        }
                    }
                }
            }
            let mut row = Vec::new();
            for (l, values) in full.into_iter().enumerate() {
                if values.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let stencil = if l == i {
                    (0..len).map(|j| (j, 0.0)).collect()
                } else {
                    grid.comps[i].x.iter().map(|&x| grid.comps[l].locate(x)).collect()
                };
                row.push(Coef { l, values, stride: if time_dep { len } else { 0 }, stencil });
            }
            coefs.push(row);
        }

        let lam0 = |i: usize| spec.speeds()[i].value(0.0);
        let b = spec.boundary();
        let refl = if dual {
            // λ_{k+r} v_{k+r}(t,0) = Σ_i B_{i,r} λ_i v_i(t,0)
            DMatrix::from_fn(m, k, |r, i| b[(i, r)] * lam0(i) / lam0(k + r))
        } else {
            b.clone()
        };

        let flow = CharacteristicFlow::new(&spec);
        let mut lo = vec![vec![0usize; nt + 1]; n];
        let mut split = vec![vec![0usize; nt + 1]; n];
        let mut phi = vec![Vec::new(); n];
        let mut q_inv = vec![None; m + 1];
        let mut c = 0;
        let horizon = t1 - t0;
        if matches!(kind, ProblemKind::Omega | ProblemKind::Hat) {
            if k < m {
                return Err(Error::Precondition(format!("Ω problems need k ≥ m (k = {k}, m = {m})")));
            }
            c = k - m;
            let tau_c = spec.taus()[c];
            if horizon < tau_c - 1e-12 {
                return Err(Error::Domain(format!("horizon {horizon} is below τ_{} = {tau_c}", c + 1)));
            }
            let max_s = if kind == ProblemKind::Hat { m } else { m - 1 };
            for s in 1..=max_s {
                let corner = b.view((k - s, m - s), (s, s)).into_owned();
                if !is_invertible(&corner) {
                    return Err(Error::Precondition(format!(
                        "boundary matrix fails the row condition for i = {s}; Q-matrix undefined"
                    )));
                }
                // rows r = m−s..m, unknowns i = k−s..k
                let mat = DMatrix::from_fn(s, s, |r, i| b[(k - s + i, m - s + r)] * lam0(k - s + i));
                q_inv[s] = Some(mat.try_inverse().ok_or_else(|| {
                    Error::Precondition(format!("Q-matrix for {s} unknowns is singular"))
                })?);
            }
            let tol = 1e-9 * grid.dt;
            let lam_c_min = (0..=256).map(|j| spec.speeds()[c].value(j as f64 / 256.0)).fold(f64::INFINITY, f64::min);
            let eps = lam_c_min / 4.0;
            for i in 0..n {
                let cg = &grid.comps[i];
                let pc: Vec<f64> = if i == c { cg.p.clone() } else { cg.x.iter().map(|&x| flow.coordinate(c, x)).collect() };
                phi[i] = cg
                    .x
                    .iter()
                    .map(|&x| {
                        if spec.speeds()[c].constant_value().is_some() {
                            x / (spec.speeds()[c].value(0.0) + eps)
                        } else {
                            integrate(&|s| 1.0 / (spec.speeds()[c].value(s) + eps), 0.0, x, 1e-13)
                        }
                    })
                    .collect();
                for lev in 0..=nt {
                    let t = grid.time(lev);
                    if kind == ProblemKind::Omega {
                        lo[i][lev] = pc.iter().position(|&q| t <= horizon - tau_c + q + tol).unwrap_or(cg.len());
                    }
                    if i < k && (kind == ProblemKind::Omega || i >= c) {
                        let tau_i = spec.taus()[i];
                        split[i][lev] = cg.p.iter().position(|&q| t + tau_i - q <= horizon + tol).unwrap_or(cg.len());
                    }
                }
            }
        }

        let est = estimate_l(&spec, &refl, dual, t0, t1);
        Ok(Self {
            kind,
            spec,
            grid: Arc::new(grid),
            coefs,
            refl,
            q_inv,
            lo,
            split,
            phi,
            c,
            horizon,
            weight_l: est,
            tol: TOL,
            max_iter: MAX_ITER,
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_arc(&self) -> Arc<Grid> {
        self.grid.clone()
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn weight_l(&self) -> f64 {
        self.weight_l
    }

    /// True when no coupling term survives on this grid.
    pub fn is_uncoupled(&self) -> bool {
        self.coefs.iter().all(|r| r.is_empty())
    }

    /// Solve for the given data, starting Picard from zero.
    pub fn solve(&self, data: &ProblemData) -> Result<(SolutionField, PicardReport)> {
        self.solve_from(data, None)
    }

    /// Solve starting Picard from `init` (values per component, level-major).
    pub fn solve_from(&self, data: &ProblemData, init: Option<&[Vec<f64>]>) -> Result<(SolutionField, PicardReport)> {
        self.check_data(data)?;
        let (values, report) = self.picard(data, init)?;
        Ok((self.field(values), report))
    }

    /// Like [`solve`](Self::solve) but returns the raw node values without the
    /// field wrapper, for assembly loops.
    pub fn solve_values(&self, data: &ProblemData) -> Result<Vec<Vec<f64>>> {
        self.check_data(data)?;
        Ok(self.picard(data, None)?.0)
    }

    fn field(&self, mut values: Vec<Vec<f64>>) -> SolutionField {
        let domain = match self.kind {
            ProblemKind::Forward | ProblemKind::Adjoint => Domain::Rectangle,
            ProblemKind::Omega => Domain::Omega { comp: self.c, horizon: self.horizon },
            ProblemKind::Hat => Domain::Hat { horizon: self.horizon },
        };
        if self.kind == ProblemKind::Omega {
            for (i, v) in values.iter_mut().enumerate() {
                let len = self.grid.comps[i].len();
                for lev in 0..=self.grid.nt {
                    for j in 0..self.lo[i][lev].min(len) {
                        v[lev * len + j] = f64::NAN;
                    }
                }
            }
        }
        SolutionField { domain, grid: self.grid.clone(), values }
    }

    fn check_data(&self, d: &ProblemData) -> Result<()> {
        let g = &*self.grid;
        let n = g.n();
        let state_ok = |s: &Vec<Vec<f64>>| s.is_empty() || (s.len() == n && s.iter().zip(&g.comps).all(|(v, c)| v.len() == c.len()));
        if !state_ok(&d.state) || !state_ok(&d.terminal) {
            return Err(Error::Config("state data does not match the grid".into()));
        }
        let traces = match self.kind {
            ProblemKind::Forward => self.spec.m(),
            _ => n,
        };
        if !(d.boundary.is_empty() || (d.boundary.len() == traces && d.boundary.iter().all(|v| v.len() == g.nt + 1))) {
            return Err(Error::Config(format!("boundary data must be {traces} traces of {} samples", g.nt + 1)));
        }
        if !(d.source.is_empty()
            || (d.source.len() == n && d.source.iter().zip(&g.comps).all(|(v, c)| v.len() == c.len() * (g.nt + 1))))
        {
            return Err(Error::Config("source data does not match the grid".into()));
        }
        if d.state.iter().chain(d.boundary.iter()).chain(d.terminal.iter()).chain(d.source.iter()).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("data contain non-finite values".into()));
        }
        Ok(())
    }

    fn weight(&self, i: usize, lev: usize, j: usize) -> f64 {
        let t = self.grid.time(lev);
        let l = self.weight_l;
        match self.kind {
            ProblemKind::Forward => libm::exp(-l * (t - self.grid.t0)),
            ProblemKind::Adjoint => libm::exp(-l * (self.grid.t1() - t)),
            ProblemKind::Omega | ProblemKind::Hat => libm::exp(l * (-t + self.phi[i][j])),
        }
    }

    fn picard(&self, data: &ProblemData, init: Option<&[Vec<f64>]>) -> Result<(Vec<Vec<f64>>, PicardReport)> {
        let g = &*self.grid;
        let mut prev: Vec<Vec<f64>> = match init {
            Some(v) => v.to_vec(),
            None => g.comps.iter().map(|c| vec![0.0; c.len() * (g.nt + 1)]).collect(),
        };
        let mut report = PicardReport {
            iterations: 0,
            contraction_estimates: Vec::new(),
            weight_l: self.weight_l,
            converged: false,
            final_difference: f64::INFINITY,
        };
        let uncoupled = self.is_uncoupled();
        let mut last_weighted: Option<f64> = None;
        let mut bad_run = 0;
        loop {
            report.iterations += 1;
            let src = self.sources(&prev, data);
            let next = self.sweep(&src, data);
            let (mut diff, mut norm, mut wdiff, mut wnorm) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for i in 0..g.n() {
                let len = g.comps[i].len();
                for lev in 0..=g.nt {
                    for j in self.lo[i][lev].min(len)..len {
                        let idx = lev * len + j;
                        let d = (next[i][idx] - prev[i][idx]).abs();
                        diff = diff.max(d);
                        norm = norm.max(next[i][idx].abs());
                        let w = self.weight(i, lev, j);
                        wdiff = wdiff.max(d * w);
                        wnorm = wnorm.max(next[i][idx].abs() * w);
                    }
                }
            }
            report.final_difference = diff;
            prev = next;
            if uncoupled && init.is_none() {
                report.converged = true;
                return Ok((prev, report));
            }
            if diff <= self.tol * norm || diff == 0.0 {
                report.converged = true;
                return Ok((prev, report));
            }
            // ratios are only meaningful above roundoff
            if wdiff > 1e-11 * wnorm {
                if let Some(lw) = last_weighted {
                    if lw > 0.0 {
                        let r = wdiff / lw;
                        report.contraction_estimates.push(r);
                        bad_run = if r >= 1.0 { bad_run + 1 } else { 0 };
                    }
                }
            }
            last_weighted = Some(wdiff);
            if report.iterations >= self.max_iter || bad_run >= 5 {
                return Err(Error::NonConvergence(report));
            }
        }
    }

    /// Value of component `l` at level `lev` interpolated at node `j` of
    /// component `i`, clamped to the valid part of the level.
    #[inline]
    fn cross_value(&self, vals: &[Vec<f64>], coef: &Coef, lev: usize, j: usize) -> f64 {
        let l = coef.l;
        let len = self.grid.comps[l].len();
        let row = &vals[l][lev * len..(lev + 1) * len];
        let (a, f) = coef.stencil[j];
        let lo = self.lo[l][lev];
        if a >= lo {
            if f == 0.0 {
                row[a]
            } else {
                (1.0 - f) * row[a] + f * row[a + 1]
            }
        } else if a + 1 >= lo {
            row[a + 1]
        } else if lo < len {
            row[lo]
        } else {
            0.0
        }
    }

    fn sources(&self, vals: &[Vec<f64>], data: &ProblemData) -> Vec<Vec<f64>> {
        let g = &*self.grid;
        let mut out = Vec::with_capacity(g.n());
        for i in 0..g.n() {
            let len = g.comps[i].len();
            let mut s = if data.source.is_empty() { vec![0.0; len * (g.nt + 1)] } else { data.source[i].clone() };
            if !self.coefs[i].is_empty() {
                for lev in 0..=g.nt {
                    for j in self.lo[i][lev].min(len)..len {
                        let mut acc = 0.0;
                        for coef in &self.coefs[i] {
                            acc += coef.values[lev * coef.stride + j] * self.cross_value(vals, coef, lev, j);
                        }
                        s[lev * len + j] += acc;
                    }
                }
            }
            out.push(s);
        }
        out
    }

    /// One sweep: every component marched once with the given sources.
    fn sweep(&self, src: &[Vec<f64>], data: &ProblemData) -> Vec<Vec<f64>> {
        let g = &*self.grid;
        let (k, m, nt) = (self.spec.k(), self.spec.m(), g.nt);
        let mut vals: Vec<Vec<f64>> = g.comps.iter().map(|c| vec![f64::NAN; c.len() * (nt + 1)]).collect();
        let zeros = vec![0.0; nt + 1];
        let state = |i: usize| -> Option<&[f64]> { data.state.get(i).map(|v| v.as_slice()) };
        let bound = |i: usize| -> &[f64] { data.boundary.get(i).map(|v| v.as_slice()).unwrap_or(&zeros) };
        let x0 = |vals: &Vec<Vec<f64>>, i: usize, lev: usize| vals[i][lev * g.comps[i].len()];
        let full = |_: usize| (0usize, usize::MAX);

        match self.kind {
            ProblemKind::Forward => {
                for j in 0..m {
                    let i = k + j;
                    let mut inflow = bound(j).to_vec();
                    let s0 = state(i).map(|s| s[g.comps[i].last()]).unwrap_or(0.0);
                    inflow[0] = 0.5 * (inflow[0] + s0);
                    self.march(i, true, &mut vals[i], &src[i], &full, state(i), &inflow, bound(j));
                }
                for i in 0..k {
                    let mut inflow: Vec<f64> = (0..=nt)
                        .map(|lev| (0..m).map(|j| self.refl[(i, j)] * x0(&vals, k + j, lev)).sum())
                        .collect();
                    let s0 = state(i).map(|s| s[0]).unwrap_or(0.0);
                    inflow[0] = 0.5 * (inflow[0] + s0);
                    self.march(i, true, &mut vals[i], &src[i], &full, state(i), &inflow, &zeros);
                }
            }
            ProblemKind::Adjoint => {
                for i in 0..k {
                    let mut inflow = zeros.clone();
                    let s1 = state(i).map(|s| s[g.comps[i].last()]).unwrap_or(0.0);
                    inflow[nt] = 0.5 * s1;
                    self.march(i, false, &mut vals[i], &src[i], &full, state(i), &inflow, &zeros);
                }
                for j in 0..m {
                    let i = k + j;
                    let mut inflow: Vec<f64> = (0..=nt)
                        .map(|lev| (0..k).map(|r| self.refl[(j, r)] * x0(&vals, r, lev)).sum())
                        .collect();
                    let s0 = state(i).map(|s| s[0]).unwrap_or(0.0);
                    inflow[nt] = 0.5 * (inflow[nt] + s0);
                    self.march(i, false, &mut vals[i], &src[i], &full, state(i), &inflow, &zeros);
                }
            }
            ProblemKind::Omega | ProblemKind::Hat => {
                let hat = self.kind == ProblemKind::Hat;
                // plus components forward from t = 0 and x = 1
                for j in 0..m {
                    let i = k + j;
                    let mut inflow = bound(i).to_vec();
                    let s0 = state(i).map(|s| s[g.comps[i].last()]).unwrap_or(0.0);
                    inflow[0] = 0.5 * (inflow[0] + s0);
                    let lo = &self.lo[i];
                    self.march(i, true, &mut vals[i], &src[i], &|lev| (lo[lev], usize::MAX), state(i), &inflow, bound(i));
                }
                // minus components backward from x = 1 (and from t = T for the fast ones)
                for i in 0..k {
                    let mut inflow = bound(i).to_vec();
                    let terminal = if hat && i < self.c { data.terminal.get(i).map(|v| v.as_slice()) } else { None };
                    if let Some(q) = terminal {
                        inflow[nt] = 0.5 * (inflow[nt] + q[g.comps[i].last()]);
                    }
                    let lo = &self.lo[i];
                    let split = &self.split[i];
                    self.march(i, false, &mut vals[i], &src[i], &|lev| (lo[lev].max(split[lev]), usize::MAX), terminal, &inflow, bound(i));
                }
                // staggered boundary values at x = 0, then the remaining minus regions forward
                let mut qvals = vec![vec![0.0; nt + 1]; k];
                for lev in 0..=nt {
                    let unknown: Vec<usize> =
                        (self.c..k).filter(|&i| self.split[i][lev] > 0 && self.lo[i][lev] == 0).collect();
                    let s = unknown.len();
                    if s == 0 {
                        continue;
                    }
                    let first = k - s;
                    let b = self.spec.boundary();
                    let lam0 = |i: usize| self.spec.speeds()[i].value(0.0);
                    let rhs = DVector::from_fn(s, |r, _| {
                        let row = m - s + r;
                        let mut v = lam0(k + row) * x0(&vals, k + row, lev);
                        for i in 0..first {
                            v -= b[(i, row)] * lam0(i) * x0(&vals, i, lev);
                        }
                        v
                    });
                    let sol = self.q_inv[s].as_ref().expect("checked at construction") * rhs;
                    for (r, i) in (first..k).enumerate() {
                        qvals[i][lev] = sol[r];
                    }
                }
                for i in self.c..k {
                    let lo = &self.lo[i];
                    let split = &self.split[i];
                    let len = g.comps[i].len();
                    self.march(i, true, &mut vals[i], &src[i], &|lev| (lo[lev], split[lev].min(len)), None, &qvals[i], &zeros);
                }
            }
        }
        vals
    }

    /// March one component along its characteristics.
    ///
    /// `range(lev)` bounds the nodes handled at each level; `start` holds data
    /// on the first level of the march, `inflow` the boundary values per level
    /// and `datum` the x = 1 trace used inside partial boundary cells.
    #[allow(clippy::too_many_arguments)]
    fn march(
        &self,
        i: usize,
        forward_time: bool,
        vals: &mut [f64],
        src: &[f64],
        range: &dyn Fn(usize) -> (usize, usize),
        start: Option<&[f64]>,
        inflow: &[f64],
        datum: &[f64],
    ) {
        let g = &*self.grid;
        let cg = &g.comps[i];
        let len = cg.len();
        let nt = g.nt;
        let dt = g.dt;
        let minus = i < self.spec.k();
        let preds = if minus == forward_time { &cg.up } else { &cg.down };
        let sg = if forward_time { 1.0 } else { -1.0 };
        let xb = cg.last();
        for step in 0..=nt {
            let lev = if forward_time { step } else { nt - step };
            let (a, b) = range(lev);
            let b = b.min(len);
            if a >= b {
                continue;
            }
            if step == 0 {
                for j in a..b {
                    vals[lev * len + j] = match preds[j] {
                        Pred::Inflow => inflow[lev],
                        _ => start.map(|s| s[j]).unwrap_or(0.0),
                    };
                }
                continue;
            }
            let pl = if forward_time { lev - 1 } else { lev + 1 };
            for j in a..b {
                let here = src[lev * len + j];
                let v = match preds[j] {
                    Pred::Inflow => inflow[lev],
                    Pred::Aligned(jp) => vals[pl * len + jp] + sg * 0.5 * dt * (here + src[pl * len + jp]),
                    Pred::Interp(ap, f) => {
                        let v0 = (1.0 - f) * vals[pl * len + ap] + f * vals[pl * len + ap + 1];
                        let s0 = (1.0 - f) * src[pl * len + ap] + f * src[pl * len + ap + 1];
                        v0 + sg * 0.5 * dt * (here + s0)
                    }
                    Pred::Partial(delta) => {
                        let w = delta / dt;
                        let d = (1.0 - w) * datum[lev] + w * datum[pl];
                        let sb = (1.0 - w) * src[lev * len + xb] + w * src[pl * len + xb];
                        d + sg * 0.5 * delta * (here + sb)
                    }
                };
                vals[lev * len + j] = v;
            }
        }
    }
}

/// L = 2 · sup|F| · (1 + reflection gain) · (λ_max / λ_min).
fn estimate_l(spec: &SystemSpec, refl: &DMatrix<f64>, dual: bool, t0: f64, t1: f64) -> f64 {
    let n = spec.n();
    let mut sup = spec.coupling().sup_norm(t0, t1);
    if dual && !spec.is_constant_speed() {
        let d = (0..=64)
            .map(|j| (0..n).map(|i| spec.sigma_deriv(i, j as f64 / 64.0).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        sup += d;
    }
    let gain = refl.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let speeds: Vec<f64> = spec.speeds().iter().flat_map(|s| [s.value(0.0), s.value(1.0)]).collect();
    let ratio = speeds.iter().cloned().fold(0.0, f64::max) / speeds.iter().cloned().fold(f64::INFINITY, f64::min);
    2.0 * sup * (1.0 + gain) * ratio
}
