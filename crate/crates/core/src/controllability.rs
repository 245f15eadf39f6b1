//! Observability Gramian, HUM control synthesis and null-controllability verdicts.
//!
//! Terminal data φ live on the final level of the grid. In mass-normalised
//! coordinates y = M^{1/2} φ the Gramian is Ĝ = M^{-1/2} AᵀWA M^{-1/2}, where A
//! maps φ to the observation trace and W holds the time quadrature weights, so
//! yᵀĜy = ‖𝒻*φ‖² exactly and Ĝ is symmetric positive semidefinite by
//! construction.
//!
//! The corner nodes of the terminal level carry both terminal data and a
//! boundary condition. Data violating the boundary relation there cancel under
//! corner averaging and never reach the observation, so every quantity below
//! is taken on the compatible subspace
//! λ₊(0)φ₊(0) = Bᵀλ₋(0)φ₋(0), φ₋(1) = 0, with orthonormal basis Z.
//!
//! Two constants come out of the assembly. The smallest eigenvalue of ZᵀĜZ
//! bounds ‖𝒻*φ‖² below by ‖φ‖² (exact controllability). Null
//! controllability needs the weaker bound by ‖v(τ)‖², where v is the dual
//! solution from φ; [`null_observability_constant`] computes that one and the
//! verdict is based on it. The two agree whenever the dual free evolution is
//! invertible, which fails as soon as m < k.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::broad_solver::Resolution;
use crate::duality::ControlToStateMap;
use crate::linalg::{numerical_kernel, sym_eigen_sorted};
use crate::parallel::ColumnMap;
use crate::system_model::SystemSpec;
use crate::{Error, Result};

/// Verdict thresholds relative to trace(Ĝ)/dim.
pub const CONTROLLABLE_REL: f64 = 1e-6;
pub const DEGENERATE_REL: f64 = 1e-10;
/// Rank cut of the observation map in [`null_observability_constant`].
pub const NULL_RANK_REL: f64 = 1e-10;
/// Size of v(τ) on unobservable data, relative to ‖φ ↦ v(τ)‖, above which
/// the null constant is zero.
pub const NULL_LEAK_REL: f64 = 1e-6;
/// Tikhonov weight relative to trace(Ĝ)/dim.
pub const REGULARIZATION_REL: f64 = 1e-10;

/// Assembled Gramian on one window.
#[derive(Debug, Clone)]
pub struct GramianOperator {
    map: ControlToStateMap,
    /// Ĝ in mass-normalised coordinates.
    matrix: DMatrix<f64>,
    /// Orthonormal basis of compatible terminal data (normalised coordinates).
    basis: DMatrix<f64>,
    /// ZᵀĜZ.
    reduced: DMatrix<f64>,
    mass_sqrt: Vec<f64>,
    /// Rows: √w_t · observation samples; columns: grid basis vectors φ = e_b.
    obs: DMatrix<f64>,
    /// Rows: M^{1/2} v(τ); columns as in `obs`.
    initial: DMatrix<f64>,
}

impl GramianOperator {
    /// One adjoint solve per grid node of the terminal level.
    pub fn assemble(spec: &SystemSpec, tau: f64, horizon: f64, res: &Resolution, cols: &dyn ColumnMap) -> Result<Self> {
        let map = ControlToStateMap::new(spec, tau, horizon, res)?;
        Self::from_map(map, cols)
    }

    pub fn from_map(map: ControlToStateMap, cols: &dyn ColumnMap) -> Result<Self> {
        let g = map.grid().clone();
        let dim = g.level_size();
        let tw = g.time_weights();
        let sw: Vec<f64> = tw.iter().map(|w| w.sqrt()).collect();
        let ms = g.mass_sqrt();
        let columns = cols.map_columns(dim, &|b| {
            let mut phi = vec![0.0; dim];
            phi[b] = 1.0;
            match map.adjoint_trace_and_initial(&g.unflatten(&phi)) {
                Ok((tr, v0)) => {
                    let mut col: Vec<f64> = tr.iter().flat_map(|row| row.iter().zip(&sw).map(|(v, s)| v * s)).collect();
                    col.extend(g.flatten(&v0).iter().zip(&ms).map(|(v, s)| v * s));
                    col
                }
                Err(_) => Vec::new(),
            }
        });
        if columns.iter().any(|c| c.is_empty()) {
            // rerun one failing column sequentially to surface the error
            for b in 0..dim {
                if columns[b].is_empty() {
                    let mut phi = vec![0.0; dim];
                    phi[b] = 1.0;
                    map.adjoint_map(&g.unflatten(&phi))?;
                }
            }
            return Err(Error::Config("Gramian column assembly failed".into()));
        }
        let rows = columns[0].len() - dim;
        let obs = DMatrix::from_fn(rows, dim, |r, c| columns[c][r]);
        let initial = DMatrix::from_fn(dim, dim, |r, c| columns[c][rows + r]);
        let mass_sqrt = g.mass_sqrt();
        let gram = obs.transpose() * &obs;
        let matrix = DMatrix::from_fn(dim, dim, |a, b| gram[(a, b)] / (mass_sqrt[a] * mass_sqrt[b]));
        let matrix = 0.5 * (&matrix + matrix.transpose());
        let basis = compatible_basis(&map, &mass_sqrt);
        let reduced = basis.transpose() * &matrix * &basis;
        let reduced = 0.5 * (&reduced + reduced.transpose());
        Ok(Self { map, matrix, basis, reduced, mass_sqrt, obs, initial })
    }

    pub fn map(&self) -> &ControlToStateMap {
        &self.map
    }

    /// Ĝ on all terminal nodes.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Z, one column per compatible direction.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// ZᵀĜZ.
    pub fn reduced(&self) -> &DMatrix<f64> {
        &self.reduced
    }

    /// Dimension of the compatible subspace.
    pub fn dim(&self) -> usize {
        self.reduced.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.reduced.trace()
    }

    pub fn mass_sqrt(&self) -> &[f64] {
        &self.mass_sqrt
    }

    /// Observation matrix (rows weighted by √w_t).
    pub fn observation_matrix(&self) -> &DMatrix<f64> {
        &self.obs
    }

    /// Dual initial slice: columns φ = e_b (nodal), rows M^{1/2} v(τ).
    pub fn initial_matrix(&self) -> &DMatrix<f64> {
        &self.initial
    }

    /// φ (flat, nodal) → y = M^{1/2} φ.
    pub fn to_normalized(&self, phi: &[f64]) -> DVector<f64> {
        DVector::from_fn(phi.len(), |i, _| phi[i] * self.mass_sqrt[i])
    }

    pub fn from_normalized(&self, y: &DVector<f64>) -> Vec<f64> {
        y.iter().zip(&self.mass_sqrt).map(|(v, s)| v / s).collect()
    }

    /// Eigenpairs of ZᵀĜZ, ascending; eigenvectors lifted to normalised coordinates.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let (vals, vecs) = sym_eigen_sorted(&self.reduced);
        (vals, &self.basis * vecs)
    }

    /// Symmetry defect and smallest eigenvalue relative to the largest.
    pub fn check_invariants(&self) -> (f64, f64) {
        let asym = (&self.matrix - self.matrix.transpose()).amax() / self.matrix.amax().max(f64::MIN_POSITIVE);
        let (vals, _) = self.eigen();
        let lmax = vals.last().cloned().unwrap_or(0.0);
        let lmin = vals.first().cloned().unwrap_or(0.0);
        (asym, if lmax > 0.0 { lmin / lmax } else { 0.0 })
    }
}

fn compatible_basis(map: &ControlToStateMap, mass_sqrt: &[f64]) -> DMatrix<f64> {
    let spec = map.spec();
    let g = map.grid();
    let (k, m) = (spec.k(), spec.m());
    let dim = g.level_size();
    let mut offs = Vec::with_capacity(g.n());
    let mut off = 0;
    for c in &g.comps {
        offs.push(off);
        off += c.len();
    }
    let lam0: Vec<f64> = spec.speeds().iter().map(|s| s.value(0.0)).collect();
    let b = spec.boundary();
    let mut rows = DMatrix::zeros(k + m, dim);
    for r in 0..m {
        let j = offs[k + r];
        rows[(r, j)] = lam0[k + r] / mass_sqrt[j];
        for i in 0..k {
            let j = offs[i];
            rows[(r, j)] -= b[(i, r)] * lam0[i] / mass_sqrt[j];
        }
    }
    for i in 0..k {
        let j = offs[i] + g.comps[i].last();
        rows[(m + i, j)] = 1.0 / mass_sqrt[j];
    }
    numerical_kernel(&rows, 1e-12).0
}

/// 𝒻(𝒻*(φ)): adjoint solve, then forward solve from zero driven by the observation.
pub fn gramian_apply(map: &ControlToStateMap, phi: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let trace = map.adjoint_map(phi)?;
    map.forward_map(&trace)
}

/// Smallest Rayleigh quotient of Ĝ over compatible data, optionally further
/// restricted to the span of the orthonormal columns of `projector`
/// (normalised coordinates).
pub fn observability_constant(gram: &GramianOperator, projector: Option<&DMatrix<f64>>) -> f64 {
    match projector {
        None => gram.eigen().0.first().cloned().unwrap_or(0.0),
        Some(q) => {
            let q = compatible_part(gram.basis(), q);
            if q.ncols() == 0 {
                return f64::INFINITY;
            }
            let reduced = q.transpose() * gram.matrix() * &q;
            sym_eigen_sorted(&reduced).0.first().cloned().unwrap_or(0.0)
        }
    }
}

/// Largest C with ‖𝒻*φ‖² ≥ C ‖v(τ)‖² for all compatible φ, v the dual
/// solution from φ. Infinite when every compatible φ has v(τ) = 0.
///
/// With A: φ ↦ 𝒻*φ and N: φ ↦ v(τ), C = 0 when some φ ∈ ker A carries a
/// non-negligible v(τ), and C = σ_max(N A⁺)⁻² otherwise.
pub fn null_observability_constant(gram: &GramianOperator) -> f64 {
    let z = gram.basis();
    let d = z.ncols();
    if d == 0 {
        return f64::INFINITY;
    }
    let inv_ms: Vec<f64> = gram.mass_sqrt.iter().map(|s| 1.0 / s).collect();
    let a = DMatrix::from_fn(gram.obs.nrows(), gram.obs.ncols(), |r, c| gram.obs[(r, c)] * inv_ms[c]) * z;
    let n = DMatrix::from_fn(gram.initial.nrows(), gram.initial.ncols(), |r, c| gram.initial[(r, c)] * inv_ms[c]) * z;
    let n_norm = crate::linalg::norm2(&n);
    if n_norm == 0.0 {
        return f64::INFINITY;
    }
    // full right singular basis of A through the eigenvectors of AᵀA
    let (vals, vecs) = sym_eigen_sorted(&(a.transpose() * &a));
    let smax = vals.last().cloned().unwrap_or(0.0).max(0.0).sqrt();
    let range: Vec<usize> = (0..d).filter(|&i| vals[i].max(0.0).sqrt() > NULL_RANK_REL * smax).collect();
    let kernel: Vec<usize> = (0..d).filter(|&i| vals[i].max(0.0).sqrt() <= NULL_RANK_REL * smax).collect();
    if !kernel.is_empty() {
        let q = DMatrix::from_fn(d, kernel.len(), |r, c| vecs[(r, kernel[c])]);
        if crate::linalg::norm2(&(&n * q)) > NULL_LEAK_REL * n_norm {
            return 0.0;
        }
    }
    if range.is_empty() {
        return 0.0;
    }
    let pinv = DMatrix::from_fn(d, range.len(), |r, c| vecs[(r, range[c])] / vals[range[c]].sqrt());
    let s = crate::linalg::norm2(&(&n * pinv));
    if s == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (s * s)
    }
}

/// Orthonormal basis of range(q) ∩ range(z).
fn compatible_part(z: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    if q.ncols() == 0 {
        return q.clone();
    }
    // q a = z b  ⇔  [q, −z] (a, b) = 0
    let stacked = DMatrix::from_fn(q.nrows(), q.ncols() + z.ncols(), |r, c| {
        if c < q.ncols() {
            q[(r, c)]
        } else {
            -z[(r, c - q.ncols())]
        }
    });
    let (ker, _) = numerical_kernel(&stacked, 1e-10);
    if ker.ncols() == 0 {
        return DMatrix::zeros(q.nrows(), 0);
    }
    let a = ker.rows(0, q.ncols()).into_owned();
    crate::linalg::orthonormal_range(&(q * a), 1e-10)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Controllable,
    Degenerate,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Controllable => "controllable",
            Verdict::Degenerate => "degenerate",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerdictReport {
    pub horizon: f64,
    /// Null-controllability constant, see [`null_observability_constant`].
    pub constant: f64,
    /// Smallest eigenvalue of ZᵀĜZ.
    pub gramian_constant: f64,
    pub trace: f64,
    pub dim: usize,
    pub largest: f64,
    /// largest / smallest eigenvalue of ZᵀĜZ (infinite when the smallest is ≤ 0).
    pub condition_number: f64,
    pub controllable_threshold: f64,
    pub degenerate_threshold: f64,
    pub verdict: Verdict,
    pub note: String,
}

pub fn null_controllability_verdict(gram: &GramianOperator) -> VerdictReport {
    let (vals, _) = gram.eigen();
    let gramian_constant = vals.first().cloned().unwrap_or(0.0);
    let largest = vals.last().cloned().unwrap_or(0.0);
    let constant = null_observability_constant(gram);
    let dim = gram.dim();
    let trace = gram.trace();
    let scale = if dim > 0 { trace / dim as f64 } else { 0.0 };
    let hi = CONTROLLABLE_REL * scale;
    let lo = DEGENERATE_REL * scale;
    let verdict = if constant > hi {
        Verdict::Controllable
    } else if constant < lo {
        Verdict::Degenerate
    } else {
        Verdict::Inconclusive
    };
    let g = gram.map().grid();
    VerdictReport {
        horizon: g.t1() - g.t0,
        constant,
        gramian_constant,
        trace,
        dim,
        largest,
        condition_number: if gramian_constant > 0.0 { largest / gramian_constant } else { f64::INFINITY },
        controllable_threshold: hi,
        degenerate_threshold: lo,
        verdict,
        note: format!(
            "thresholds are calibration choices: controllable above {CONTROLLABLE_REL:e}·trace/dim, degenerate below {DEGENERATE_REL:e}·trace/dim"
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HumOptions {
    pub max_iter: usize,
    /// Relative residual target of CG.
    pub tol: f64,
    /// Use gramian_apply instead of the assembled matrix.
    pub matrix_free: bool,
}

impl Default for HumOptions {
    fn default() -> Self {
        Self { max_iter: 500, tol: 1e-12, matrix_free: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlSolution {
    /// Control on the m plus components, one sample per level.
    pub control: Vec<Vec<f64>>,
    /// HUM multiplier φ (nodal, per component).
    pub phi: Vec<Vec<f64>>,
    /// ‖u(τ+T)‖ from an independent forward solve with `control`.
    pub residual: f64,
    pub initial_norm: f64,
    pub cg_iterations: usize,
    pub cg_relative_residual: f64,
    pub converged: bool,
    pub regularization: f64,
    /// ε_reg ‖φ‖ / ‖Λ‖.
    pub floor: f64,
}

/// HUM: solve Zᵀ(Ĝ + ε)Z z = −ZᵀM^{1/2} S u0 by CG, y = Zz, set U = 𝒻*φ and verify by a
/// forward solve from `u0`.
pub fn hum_control(gram: &GramianOperator, u0: &[Vec<f64>], opts: &HumOptions) -> Result<ControlSolution> {
    let map = gram.map();
    let g = map.grid();
    let dim = gram.dim();
    let initial_norm = g.state_norm(u0);
    let scale = if dim > 0 { gram.trace() / dim as f64 } else { 0.0 };
    let eps = REGULARIZATION_REL * scale;
    let free = map.free_evolution(u0)?;
    let z = gram.basis();
    let rhs = -(z.transpose() * gram.to_normalized(&g.flatten(&free)));

    let apply = |c: &DVector<f64>| -> Result<DVector<f64>> {
        if opts.matrix_free {
            let y = z * c;
            let phi = g.unflatten(&gram.from_normalized(&y));
            let out = gramian_apply(map, &phi)?;
            Ok(z.transpose() * gram.to_normalized(&g.flatten(&out)) + eps * c)
        } else {
            Ok(gram.reduced() * c + eps * c)
        }
    };

    let (c, iters, rel, converged) = conjugate_gradient(&apply, &rhs, opts.max_iter, opts.tol)?;
    let y = z * c;
    let phi_flat = gram.from_normalized(&y);
    let phi = g.unflatten(&phi_flat);
    let control = map.adjoint_map(&phi)?;
    let end = map.final_state(u0, &control)?;
    let residual = g.state_norm(&end);
    let lam_norm = crate::linalg::norm2(gram.reduced());
    let phi_norm = g.state_norm(&phi);
    Ok(ControlSolution {
        control,
        phi,
        residual,
        initial_norm,
        cg_iterations: iters,
        cg_relative_residual: rel,
        converged,
        regularization: eps,
        floor: if lam_norm > 0.0 { eps * phi_norm / lam_norm } else { 0.0 },
    })
}

/// CG with a stagnation guard: stops when the relative residual has not
/// halved over 50 iterations and returns the best iterate.
fn conjugate_gradient(
    apply: &dyn Fn(&DVector<f64>) -> Result<DVector<f64>>,
    b: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<(DVector<f64>, usize, f64, bool)> {
    let n = b.len();
    let bnorm = b.norm();
    let mut x = DVector::zeros(n);
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0, true));
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    let mut best = (x.clone(), 1.0f64);
    let mut history: Vec<f64> = vec![1.0];
    for it in 1..=max_iter {
        let ap = apply(&p)?;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Ok((best.0, it, best.1, false));
        }
        let alpha = rr / pap;
        x += alpha * &p;
        r -= alpha * &ap;
        let rr_new = r.dot(&r);
        let rel = rr_new.sqrt() / bnorm;
        if rel < best.1 {
            best = (x.clone(), rel);
        }
        history.push(rel);
        if rel <= tol {
            return Ok((x, it, rel, true));
        }
        if it >= 50 && rel > 0.5 * history[it - 50] {
            return Ok((best.0, it, best.1, false));
        }
        p = &r + (rr_new / rr) * &p;
        rr = rr_new;
    }
    Ok((best.0, max_iter, best.1, false))
}
