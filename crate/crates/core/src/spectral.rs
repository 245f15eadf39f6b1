//! Obstruction space H(τ) = ker(I + 𝒦(τ)) ∩ ker ℒ(τ), attainable projections
//! and the spaces J(τ, ε).
//!
//! For k ≥ m the operators come from Ω solves with f = 0 and g = φ₊:
//! (φ + 𝒦φ)₋ = φ₋ − w₋(0, ·), and the plus rows are the boundary residual
//! w_{k+j}(t, 0) − λ_{k+j}(0)⁻¹ Σᵢ B_{ij} λᵢ(0) wᵢ(t, 0) read at the arrival time
//! t = P_{k+j}(x) of the characteristic started at (0, x). ℒφ samples
//! λ₊(0) w₊(t, 0) − Bᵀ λ₋(0) w₋(t, 0) on (0, T − τ_{k−m+1}).
//!
//! For m > k there is no Ω problem. H(τ, T) is then taken as the set of v(τ)
//! over dual solutions on [τ, τ + T] with vanishing observation, that is the
//! image of the Gramian kernel under the backward solve.
//!
//! Functions are nodal on a characteristic grid and vectors are stored in
//! mass-normalised coordinates y = M^{1/2} φ, so Euclidean geometry of the
//! coefficient vectors is the L² geometry of the functions.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::broad_solver::{Grid, ProblemData, Resolution, Solver};
use crate::controllability::GramianOperator;
use crate::duality::ControlToStateMap;
use crate::linalg::{numerical_kernel, orthonormal_range, sym_eigen_sorted};
use crate::parallel::ColumnMap;
use crate::system_model::SystemSpec;
use crate::{Error, Result};

/// Kernel threshold of the stacked (I + K; wL) matrix, relative to σ_max.
pub const KERNEL_REL: f64 = 1e-8;
/// Kernel threshold of the Gramian, relative to its trace.
pub const GRAM_KERNEL_REL: f64 = 1e-8;
/// Gap below which a kernel decision is reported as low confidence.
pub const GAP_MIN: f64 = 10.0;
/// Rank threshold for attainable sets and the J condition. Attainable
/// singular values are measured against the largest reachable state norm,
/// J residuals against the norm of the free-evolution block. Leakage of the
/// discrete reachable set into H shrinks like h³ and sits near 1e-4 at
/// h = 1/80, so the cut has to be loose.
pub const RANK_REL: f64 = 1e-2;

/// Discretised 𝒦(τ) and ℒ(τ) in mass-normalised coordinates.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub tau: f64,
    pub horizon: f64,
    /// Grid of φ (the initial level of the Ω grid).
    pub grid: Arc<Grid>,
    /// I + 𝒦, evaluated directly.
    pub i_plus_k: DMatrix<f64>,
    /// 𝒦 = (I + 𝒦) − I.
    pub k: DMatrix<f64>,
    /// ℒ rows, √(time weight) scaled, m rows per sample time.
    pub l: DMatrix<f64>,
    /// Sample times of ℒ relative to τ.
    pub l_times: Vec<f64>,
}

impl OperatorMatrix {
    pub fn k_norm(&self) -> f64 {
        crate::linalg::norm2(&self.k)
    }

    /// Window length T − τ_{k−m+1} of ℒ.
    pub fn l_window(&self) -> f64 {
        self.l_times.last().cloned().unwrap_or(0.0)
    }
}

fn offsets(grid: &Grid) -> Vec<usize> {
    let mut offs = Vec::with_capacity(grid.n() + 1);
    let mut o = 0;
    offs.push(0);
    for c in &grid.comps {
        o += c.len();
        offs.push(o);
    }
    offs
}

/// Assemble both operators from one Ω solve per plus-node basis vector.
pub fn assemble_operators(
    spec: &SystemSpec,
    tau: f64,
    horizon: f64,
    res: &Resolution,
    cols: &dyn ColumnMap,
) -> Result<OperatorMatrix> {
    let (k, m) = (spec.k(), spec.m());
    if k < m {
        return Err(Error::Precondition(alloc::format!(
            "𝒦 and ℒ need k ≥ m (k = {k}, m = {m}); use the Gramian route"
        )));
    }
    let solver = Solver::omega(spec, tau, horizon, res)?;
    let grid = solver.grid_arc();
    let g = &*grid;
    let dim = g.level_size();
    let offs = offsets(g);
    let c = k - m;
    let t_lim = horizon - spec.taus()[c];
    let l_levels: Vec<usize> = (1..=g.nt).filter(|&l| g.time(l) - g.t0 <= t_lim + 1e-9 * g.dt).collect();
    let lam0: Vec<f64> = spec.speeds().iter().map(|s| s.value(0.0)).collect();
    let b = spec.boundary().clone();
    let ms = g.mass_sqrt();
    let lw: Vec<f64> = {
        let mut w = vec![g.dt; l_levels.len()];
        if let Some(last) = w.last_mut() {
            *last *= 0.5;
        }
        w.iter().map(|v| v.sqrt()).collect()
    };

    // raw nodal columns of (I + K) and L for plus basis vectors
    let column = |col: usize| -> Result<Vec<f64>> {
        let mut state = g.zero_state();
        let i = offs.partition_point(|&o| o <= col) - 1;
        state[i][col - offs[i]] = 1.0;
        // the x = 1 node of a plus component is a corner with f; give f the
        // matching value at t = 0 so the basis datum is compatible
        let boundary = if col - offs[i] == g.comps[i].last() {
            let mut b = vec![vec![0.0; g.nt + 1]; g.n()];
            b[i][0] = 1.0;
            b
        } else {
            Vec::new()
        };
        let (field, _) = solver.solve(&ProblemData { state, boundary, ..Default::default() })?;
        let traces: Vec<Vec<f64>> = (0..g.n()).map(|i| field.trace_x0(i)).collect();
        // residual of boundary equation j at fractional level s
        let resid = |j: usize, s: f64| -> f64 {
            let l0 = (s.floor() as usize).min(g.nt);
            let a = s - l0 as f64;
            let at = |tr: &Vec<f64>| {
                if a <= 1e-12 || l0 == g.nt {
                    tr[l0]
                } else {
                    (1.0 - a) * tr[l0] + a * tr[l0 + 1]
                }
            };
            let mut r = at(&traces[k + j]);
            for ii in 0..k {
                if b[(ii, j)] != 0.0 {
                    r -= b[(ii, j)] * lam0[ii] / lam0[k + j] * at(&traces[ii]);
                }
            }
            r
        };
        let mut out = vec![0.0; dim + m * l_levels.len()];
        let first = field.slice(0);
        for ii in 0..k {
            for (a, v) in first[ii].iter().enumerate() {
                out[offs[ii] + a] = -v;
            }
        }
        for j in 0..m {
            let cg = &g.comps[k + j];
            for a in 0..cg.len() {
                out[offs[k + j] + a] = resid(j, cg.p[a] / g.dt);
            }
        }
        for (r, &l) in l_levels.iter().enumerate() {
            for j in 0..m {
                out[dim + r * m + j] = lam0[k + j] * resid(j, l as f64) * lw[r];
            }
        }
        Ok(out)
    };

    let plus_start = offs[k];
    let count = dim - plus_start;
    let raw = cols.map_columns(count, &|c| column(plus_start + c).unwrap_or_default());
    if let Some(bad) = raw.iter().position(|c| c.is_empty()) {
        column(plus_start + bad)?;
        return Err(Error::Config("operator column assembly failed".into()));
    }

    let rows_l = m * l_levels.len();
    let mut ik = DMatrix::zeros(dim, dim);
    let mut l = DMatrix::zeros(rows_l, dim);
    for a in 0..plus_start {
        ik[(a, a)] = 1.0;
    }
    for (c, colv) in raw.iter().enumerate() {
        let b = plus_start + c;
        for a in 0..dim {
            ik[(a, b)] = colv[a] * ms[a] / ms[b];
        }
        for r in 0..rows_l {
            l[(r, b)] = colv[dim + r] / ms[b];
        }
    }
    let kk = &ik - DMatrix::identity(dim, dim);
    let l_times = l_levels.iter().map(|&lv| g.time(lv) - g.t0).collect();
    Ok(OperatorMatrix { tau, horizon, grid, i_plus_k: ik, k: kk, l, l_times })
}

/// How H was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelRoute {
    /// Joint kernel of (I + 𝒦, ℒ).
    Operators,
    /// Backward image of the Gramian kernel.
    Gramian,
}

/// Orthonormal basis (mass-normalised) of functions on `grid`.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    pub grid: Arc<Grid>,
    pub vectors: DMatrix<f64>,
    pub route: KernelRoute,
    /// Singular values (Operators) or eigenvalues (Gramian), in the order used
    /// for the kernel decision: descending for singular values, ascending for
    /// eigenvalues.
    pub spectrum: Vec<f64>,
    pub threshold: f64,
    /// Ratio between the smallest retained and largest discarded value
    /// (infinite when nothing straddles the threshold).
    pub gap: f64,
    pub low_confidence: bool,
    /// Residual of each basis vector relative to the operator scale.
    pub certificate: Vec<f64>,
}

impl SubspaceBasis {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    fn empty(grid: Arc<Grid>, route: KernelRoute) -> Self {
        let dim = grid.level_size();
        Self {
            grid,
            vectors: DMatrix::zeros(dim, 0),
            route,
            spectrum: Vec::new(),
            threshold: 0.0,
            gap: f64::INFINITY,
            low_confidence: false,
            certificate: Vec::new(),
        }
    }

    /// Nodal values of basis vector `j`.
    pub fn function(&self, j: usize) -> Vec<Vec<f64>> {
        let ms = self.grid.mass_sqrt();
        let flat: Vec<f64> = self.vectors.column(j).iter().zip(&ms).map(|(v, s)| v / s).collect();
        self.grid.unflatten(&flat)
    }

    /// L² inner products of a state on `grid` with every basis vector.
    pub fn coefficients(&self, grid: &Grid, state: &[Vec<f64>]) -> DVector<f64> {
        let here = self.grid.resample_from(grid, state);
        let ms = self.grid.mass_sqrt();
        let y = DVector::from_iterator(ms.len(), self.grid.flatten(&here).iter().zip(&ms).map(|(v, s)| v * s));
        self.vectors.transpose() * y
    }

    /// Largest |cos| between `state` and the span.
    pub fn alignment(&self, grid: &Grid, state: &[Vec<f64>]) -> f64 {
        let here = self.grid.resample_from(grid, state);
        let n = self.grid.state_norm(&here);
        if n == 0.0 || self.dim() == 0 {
            return 0.0;
        }
        (self.coefficients(&self.grid, &here).norm() / n).min(1.0)
    }
}

/// Kernel of the stacked, balanced operator.
pub fn kernel_from_operators(ops: &OperatorMatrix) -> SubspaceBasis {
    let dim = ops.i_plus_k.nrows();
    let ik_norm = crate::linalg::norm2(&ops.i_plus_k);
    let l_norm = crate::linalg::norm2(&ops.l);
    let w = if l_norm > 0.0 { ik_norm / l_norm } else { 0.0 };
    let rows = dim + ops.l.nrows();
    let stacked = DMatrix::from_fn(rows, dim, |r, c| if r < dim { ops.i_plus_k[(r, c)] } else { w * ops.l[(r - dim, c)] });
    let (ker, sv) = numerical_kernel(&stacked, KERNEL_REL);
    let smax = sv.first().cloned().unwrap_or(0.0);
    let threshold = KERNEL_REL * smax;
    let kept = dim - ker.ncols();
    let at = |i: usize| sv.get(i).cloned().unwrap_or(0.0);
    let gap = if ker.ncols() == 0 {
        // margin of the smallest singular value above the threshold
        at(dim - 1) / threshold.max(f64::MIN_POSITIVE)
    } else if kept == 0 {
        f64::INFINITY
    } else {
        at(kept - 1) / at(kept).max(f64::MIN_POSITIVE)
    };
    let certificate = (0..ker.ncols())
        .map(|j| {
            let v = ker.column(j);
            ((&ops.i_plus_k * v).norm() + (&ops.l * v).norm() * w) / smax.max(f64::MIN_POSITIVE)
        })
        .collect();
    SubspaceBasis {
        grid: ops.grid.clone(),
        vectors: ker,
        route: KernelRoute::Operators,
        spectrum: sv,
        threshold,
        gap,
        low_confidence: gap < GAP_MIN,
        certificate,
    }
}

/// H(τ, T) from the Gramian on [τ, τ + T].
pub fn kernel_from_gramian(gram: &GramianOperator) -> Result<SubspaceBasis> {
    let map = gram.map();
    let grid = Arc::new(map.grid().clone());
    let (vals, vecs) = gram.eigen();
    let trace = gram.trace();
    let threshold = GRAM_KERNEL_REL * trace;
    let nker = vals.iter().take_while(|&&v| v <= threshold).count();
    let gap = if nker == vals.len() {
        f64::INFINITY
    } else if nker == 0 {
        vals[0] / threshold.max(f64::MIN_POSITIVE)
    } else {
        vals[nker] / vals[nker - 1].max(f64::MIN_POSITIVE)
    };
    if nker == 0 {
        let mut out = SubspaceBasis::empty(grid, KernelRoute::Gramian);
        out.spectrum = vals;
        out.threshold = threshold;
        out.gap = gap;
        out.low_confidence = gap < GAP_MIN;
        return Ok(out);
    }
    let ms = grid.mass_sqrt();
    let dim = ms.len();
    let mut images = DMatrix::zeros(dim, nker);
    for j in 0..nker {
        let y = vecs.column(j).into_owned();
        let psi = grid.unflatten(&gram.from_normalized(&y));
        let field = map.adjoint_field(&psi)?;
        let v0 = grid.flatten(&field.slice(0));
        for a in 0..dim {
            images[(a, j)] = v0[a] * ms[a];
        }
    }
    let basis = orthonormal_range(&images, 1e-8);
    let certificate = vals.iter().take(nker).map(|v| (v.max(0.0) / trace).sqrt()).collect();
    Ok(SubspaceBasis {
        grid,
        vectors: basis,
        route: KernelRoute::Gramian,
        spectrum: vals,
        threshold,
        gap,
        low_confidence: gap < GAP_MIN,
        certificate,
    })
}

/// H(τ, T): operator route for k ≥ m, Gramian route otherwise.
pub fn compute_h(spec: &SystemSpec, tau: f64, horizon: f64, res: &Resolution, cols: &dyn ColumnMap) -> Result<SubspaceBasis> {
    if horizon < spec.t_opt() - 1e-12 {
        return Err(Error::Precondition(alloc::format!(
            "horizon {horizon} is below the optimal time {}",
            spec.t_opt()
        )));
    }
    if spec.k() >= spec.m() {
        let ops = assemble_operators(spec, tau, horizon, res, cols)?;
        Ok(kernel_from_operators(&ops))
    } else {
        let gram = GramianOperator::assemble(spec, tau, horizon, res, cols)?;
        kernel_from_gramian(&gram)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanEntry {
    pub tau: f64,
    pub dim: usize,
    pub gap: f64,
    pub low_confidence: bool,
    /// The dimension differs from a neighbour and the jump survived 4× refinement.
    pub flagged: bool,
}

/// dim H(τ) over a τ grid. A jump between neighbours is recomputed at four
/// times the resolution and flagged only if it persists.
pub fn dim_scan(
    spec: &SystemSpec,
    taus: &[f64],
    horizon: f64,
    res: &Resolution,
    cols: &dyn ColumnMap,
) -> Result<Vec<ScanEntry>> {
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let h = compute_h(spec, tau, horizon, res, cols)?;
        rows.push(ScanEntry { tau, dim: h.dim(), gap: h.gap, low_confidence: h.low_confidence, flagged: false });
    }
    let fine = refine(res);
    let mut cache: Vec<Option<usize>> = vec![None; rows.len()];
    for i in 1..rows.len() {
        if rows[i].dim != rows[i - 1].dim {
            for j in [i - 1, i] {
                if cache[j].is_none() {
                    cache[j] = Some(compute_h(spec, rows[j].tau, horizon, &fine, cols)?.dim());
                }
            }
            if cache[i] != cache[i - 1] {
                rows[i].flagged = true;
                rows[i - 1].flagged = true;
            }
        }
    }
    Ok(rows)
}

fn refine(res: &Resolution) -> Resolution {
    match res.step {
        Some(h) => Resolution::with_step(h / 4.0),
        None => Resolution::new(res.nt * 4, res.nx * 4),
    }
}

/// A_{τ,ε} in the coordinates of `h_next` = H(τ + ε).
#[derive(Debug, Clone)]
pub struct Attainable {
    /// Orthonormal columns, `h_next.dim()` rows.
    pub basis: DMatrix<f64>,
    /// Singular values of the projected reachable set.
    pub singular_values: Vec<f64>,
    /// Largest norm of a reachable state from a unit control.
    pub reference: f64,
}

/// Project every grid-basis control on (τ, τ + ε) onto H(τ + ε).
pub fn attainable_projection(
    spec: &SystemSpec,
    tau: f64,
    eps: f64,
    h_next: &SubspaceBasis,
    res: &Resolution,
    cols: &dyn ColumnMap,
) -> Result<Attainable> {
    let d = h_next.dim();
    if d == 0 {
        return Ok(Attainable { basis: DMatrix::zeros(0, 0), singular_values: Vec::new(), reference: 0.0 });
    }
    let map = ControlToStateMap::new(spec, tau, eps, res)?;
    let g = map.grid();
    let m = spec.m();
    let levels = g.nt + 1;
    let count = m * levels;
    let sw: Vec<f64> = g.time_weights().iter().map(|w| w.sqrt()).collect();
    let columns = cols.map_columns(count, &|c| {
        let (j, l) = (c / levels, c % levels);
        let mut ctrl = vec![vec![0.0; levels]; m];
        // unit L² mass in time
        ctrl[j][l] = 1.0 / sw[l].max(f64::MIN_POSITIVE);
        match map.forward_map(&ctrl) {
            Ok(end) => {
                let mut col: Vec<f64> = h_next.coefficients(g, &end).iter().cloned().collect();
                col.push(g.state_norm(&end));
                col
            }
            Err(_) => Vec::new(),
        }
    });
    if let Some(bad) = columns.iter().position(|c| c.is_empty()) {
        let (j, l) = (bad / levels, bad % levels);
        let mut ctrl = vec![vec![0.0; levels]; m];
        ctrl[j][l] = 1.0;
        map.forward_map(&ctrl)?;
        return Err(Error::Config("attainable set assembly failed".into()));
    }
    let reference = columns.iter().map(|c| c[d]).fold(0.0, f64::max);
    let p = DMatrix::from_fn(d, count, |r, c| columns[c][r]);
    let (vals, vecs) = sym_eigen_sorted(&(&p * p.transpose()));
    let singular_values: Vec<f64> = vals.iter().rev().map(|v| v.max(0.0).sqrt()).collect();
    let keep: Vec<usize> = (0..d).filter(|&i| vals[i].max(0.0).sqrt() > RANK_REL * reference).collect();
    let basis = DMatrix::from_fn(d, keep.len(), |r, c| vecs[(r, keep[c])]);
    Ok(Attainable { basis, singular_values, reference })
}

/// J(τ, ε) in the coordinates of `h` = H(τ): columns are coefficient vectors
/// with respect to `h.vectors`.
#[derive(Debug, Clone)]
pub struct JSpace {
    pub coords: DMatrix<f64>,
    /// Same space as functions (mass-normalised, on `h.grid`).
    pub vectors: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl JSpace {
    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }
}

/// {φ ∈ H(τ) : Proj_{H(τ+ε)} 𝒯ᴵ φ ∈ A_{τ,ε}}.
pub fn j_space(
    spec: &SystemSpec,
    tau: f64,
    eps: f64,
    h: &SubspaceBasis,
    h_next: &SubspaceBasis,
    attainable: &Attainable,
    res: &Resolution,
) -> Result<JSpace> {
    let d = h.dim();
    if d == 0 {
        return Ok(JSpace { coords: DMatrix::zeros(0, 0), vectors: DMatrix::zeros(h.grid.level_size(), 0), singular_values: Vec::new() });
    }
    let dn = h_next.dim();
    if dn == 0 {
        // every state is steerable once H(τ + ε) is trivial
        return Ok(JSpace { coords: DMatrix::identity(d, d), vectors: h.vectors.clone(), singular_values: Vec::new() });
    }
    let map = ControlToStateMap::new(spec, tau, eps, res)?;
    let g = map.grid();
    let mut c = DMatrix::zeros(dn, d);
    for j in 0..d {
        let phi = g.resample_from(&h.grid, &h.function(j));
        let end = map.free_evolution(&phi)?;
        c.set_column(j, &h_next.coefficients(g, &end));
    }
    let a = &attainable.basis;
    let proj = if a.ncols() == 0 { DMatrix::zeros(dn, dn) } else { a * a.transpose() };
    let cond = (DMatrix::identity(dn, dn) - proj) * &c;
    let scale = crate::linalg::norm2(&c).max(f64::MIN_POSITIVE);
    let gram = cond.transpose() * &cond;
    let (vals, vecs) = sym_eigen_sorted(&gram);
    let singular_values: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    let keep: Vec<usize> = (0..d).filter(|&i| singular_values[i] <= RANK_REL * scale).collect();
    let coords = DMatrix::from_fn(d, keep.len(), |r, cc| vecs[(r, keep[cc])]);
    let vectors = &h.vectors * &coords;
    Ok(JSpace { coords, vectors, singular_values })
}
