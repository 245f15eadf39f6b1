//! System definition, structural checks and time constants.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::DMatrix;

use crate::linalg::is_invertible;
use crate::quad::integrate;
use crate::{Error, Result};

/// Number of uniform samples used by the ordering and positivity checks.
const CHECK_SAMPLES: usize = 2048;

/// Absolute zero test used by [`check_assumption_b`].
const ZERO_TOL: f64 = 1e-12;

/// Natural cubic spline through `(x_i, v_i)`, used for grid-sampled speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    x: Vec<f64>,
    v: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    /// Nodes must be strictly increasing and span `[0, 1]`.
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || v.len() != n {
            return Err(Error::Config(format!(
                "grid speed needs at least two (x, v) pairs of equal length, got {} and {}",
                x.len(),
                v.len()
            )));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid speed abscissae must be strictly increasing".into()));
        }
        if x[0].abs() > 1e-12 || (x[n - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::Config("grid speed abscissae must start at 0 and end at 1".into()));
        }
        // tridiagonal solve for the second derivatives, natural end conditions
        let mut m = vec![0.0; n];
        if n > 2 {
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((v[i + 1] - v[i]) / h1 - (v[i] - v[i - 1]) / h0);
            }
            for i in 2..n - 1 {
                let w = (x[i] - x[i - 1]) / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            for i in (1..n - 1).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Ok(Self { x, v, m })
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.x.len();
        match self.x.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - x) / h;
        let b = (x - self.x[i]) / h;
        a * self.v[i]
            + b * self.v[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - x) / h;
        let b = (x - self.x[i]) / h;
        (self.v[i + 1] - self.v[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }

    pub fn second_deriv(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - x) / h;
        a * self.m[i] + (1.0 - a) * self.m[i + 1]
    }

    pub fn nodes(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.v)
    }
}

/// Magnitude λ_i of one characteristic speed on `[0, 1]`.
///
/// Outside `[0, 1]` the speed is extended by its end values and its derivative
/// by zero.
#[derive(Clone)]
pub enum Speed {
    Const(f64),
    /// `a + b·x`
    Affine { a: f64, b: f64 },
    Grid(CubicSpline),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speed::Const(c) => write!(f, "Const({c})"),
            Speed::Affine { a, b } => write!(f, "Affine {{ a: {a}, b: {b} }}"),
            Speed::Grid(s) => write!(f, "Grid({} nodes)", s.x.len()),
            Speed::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Speed {
    pub fn custom(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Speed::Custom(Arc::new(f))
    }

    pub fn value(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Speed::Const(c) => *c,
            Speed::Affine { a, b } => a + b * x,
            Speed::Grid(s) => s.eval(x),
            Speed::Custom(f) => f(x),
        }
    }

    /// λ′(x), zero outside `(0, 1)`.
    pub fn deriv(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self {
            Speed::Const(_) => 0.0,
            Speed::Affine { b, .. } => *b,
            Speed::Grid(s) => s.deriv(x),
            Speed::Custom(f) => {
                let h = 1e-6;
                let lo = (x - h).max(0.0);
                let hi = (x + h).min(1.0);
                (f(hi) - f(lo)) / (hi - lo)
            }
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self {
            Speed::Const(c) => Some(*c),
            Speed::Affine { a, b } if *b == 0.0 => Some(*a),
            _ => None,
        }
    }

    /// Sampled bound on |λ′′|, used for the advisory smoothness check.
    fn second_deriv_bound(&self) -> f64 {
        match self {
            Speed::Const(_) | Speed::Affine { .. } => 0.0,
            Speed::Grid(s) => (0..=256).map(|i| s.second_deriv(i as f64 / 256.0).abs()).fold(0.0, f64::max),
            Speed::Custom(f) => {
                let h = 1.0 / 256.0;
                (1..256)
                    .map(|i| {
                        let x = i as f64 * h;
                        ((f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)).abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }
}

/// Travel time ∫₀¹ 1/λ.
pub fn travel_time(speed: &Speed) -> Result<f64> {
    for i in 0..=CHECK_SAMPLES {
        let x = i as f64 / CHECK_SAMPLES as f64;
        let v = speed.value(x);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!("speed is not strictly positive at x = {x} (value {v})")));
        }
    }
    if let Some(c) = speed.constant_value() {
        return Ok(1.0 / c);
    }
    Ok(integrate(&|x| 1.0 / speed.value(x), 0.0, 1.0, 1e-14))
}

/// max{τ_i + τ_{m+i}, τ_{k+1}} for m ≥ k, max{τ_{k+1−m+j} + τ_{k+1+j}} for m < k
/// (0-based `taus`).
pub fn optimal_time(k: usize, m: usize, taus: &[f64]) -> f64 {
    if m >= k {
        let mut t = taus[k];
        for i in 0..k {
            t = t.max(taus[i] + taus[m + i]);
        }
        t
    } else {
        (0..m).map(|j| taus[k - m + j] + taus[k + j]).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CouplingKind {
    Zero,
    ClosedForm(String),
    GridSampled,
}

type CouplingFn = Arc<dyn Fn(f64, f64, &mut [f64]) + Send + Sync>;

/// Coupling matrix C(t, x), stored row-major `n × n`.
#[derive(Clone)]
pub struct CouplingField {
    n: usize,
    kind: CouplingKind,
    time_independent: bool,
    f: Option<CouplingFn>,
}

impl fmt::Debug for CouplingField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CouplingField")
            .field("n", &self.n)
            .field("kind", &self.kind)
            .field("time_independent", &self.time_independent)
            .finish()
    }
}

impl CouplingField {
    pub fn zero(n: usize) -> Self {
        Self { n, kind: CouplingKind::Zero, time_independent: true, f: None }
    }

    /// Constant matrix.
    pub fn constant(c: DMatrix<f64>) -> Result<Self> {
        Self::poly_t(vec![c])
    }

    /// C(t) = Σ_p t^p M_p, independent of x.
    pub fn poly_t(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = coeffs.first().map(|c| c.nrows()).unwrap_or(0);
        if coeffs.is_empty() || coeffs.iter().any(|c| c.nrows() != n || c.ncols() != n) {
            return Err(Error::Config("coupling coefficients must be non-empty square matrices of equal size".into()));
        }
        if coeffs.iter().all(|c| c.iter().all(|v| *v == 0.0)) {
            return Ok(Self::zero(n));
        }
        let id = if coeffs.len() == 1 { "constant" } else { "poly-t" };
        let ti = coeffs.len() == 1;
        let coeffs = Arc::new(coeffs);
        Ok(Self::closed_form(n, id, ti, move |t, _x, out| {
            for (idx, o) in out.iter_mut().enumerate() {
                let (r, c) = (idx / n, idx % n);
                let mut acc = 0.0;
                for p in coeffs.iter().rev() {
                    acc = acc * t + p[(r, c)];
                }
                *o = acc;
            }
        }))
    }

    /// Arbitrary closed form. `f(t, x, out)` fills `out` row-major.
    pub fn closed_form(
        n: usize,
        id: &str,
        time_independent: bool,
        f: impl Fn(f64, f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self { n, kind: CouplingKind::ClosedForm(id.into()), time_independent, f: Some(Arc::new(f)) }
    }

    /// Bilinear interpolation of samples `values[it][ix]` (each row-major `n × n`).
    /// Times and positions outside the sample range are clamped.
    pub fn grid(n: usize, ts: Vec<f64>, xs: Vec<f64>, values: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if ts.is_empty() || xs.is_empty() || values.len() != ts.len() {
            return Err(Error::Config("grid coupling: sample counts do not match".into()));
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid coupling: sample coordinates must increase".into()));
        }
        for row in &values {
            if row.len() != xs.len() || row.iter().any(|m| m.len() != n * n) {
                return Err(Error::Config("grid coupling: each sample must be an n×n matrix".into()));
            }
        }
        let ti = ts.len() == 1;
        let locate = |grid: &[f64], v: f64| -> (usize, usize, f64) {
            if grid.len() == 1 || v <= grid[0] {
                return (0, 0, 0.0);
            }
            let last = grid.len() - 1;
            if v >= grid[last] {
                return (last, last, 0.0);
            }
            let i = grid.partition_point(|g| *g <= v) - 1;
            (i, i + 1, (v - grid[i]) / (grid[i + 1] - grid[i]))
        };
        Ok(Self {
            n,
            kind: CouplingKind::GridSampled,
            time_independent: ti,
            f: Some(Arc::new(move |t, x, out: &mut [f64]| {
                let (t0, t1, a) = locate(&ts, t);
                let (x0, x1, b) = locate(&xs, x);
                for (idx, o) in out.iter_mut().enumerate() {
                    let v00 = values[t0][x0][idx];
                    let v01 = values[t0][x1][idx];
                    let v10 = values[t1][x0][idx];
                    let v11 = values[t1][x1][idx];
                    *o = (1.0 - a) * ((1.0 - b) * v00 + b * v01) + a * ((1.0 - b) * v10 + b * v11);
                }
            })),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &CouplingKind {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        self.f.is_none()
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn eval(&self, t: f64, x: f64, out: &mut [f64]) {
        match &self.f {
            None => out.iter_mut().for_each(|v| *v = 0.0),
            Some(f) => f(t, x, out),
        }
    }

    pub fn matrix(&self, t: f64, x: f64) -> DMatrix<f64> {
        let mut buf = vec![0.0; self.n * self.n];
        self.eval(t, x, &mut buf);
        DMatrix::from_row_slice(self.n, self.n, &buf)
    }

    fn wrap(&self, ti: bool, g: impl Fn(&CouplingFn, f64, f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        match &self.f {
            None => self.clone(),
            Some(f) => {
                let f = f.clone();
                Self {
                    n: self.n,
                    kind: self.kind.clone(),
                    time_independent: ti,
                    f: Some(Arc::new(move |t, x, out: &mut [f64]| g(&f, t, x, out))),
                }
            }
        }
    }

    /// C(t + τ, x).
    pub fn shifted(&self, tau: f64) -> Self {
        if tau == 0.0 {
            return self.clone();
        }
        self.wrap(self.time_independent, move |f, t, x, out| f(t + tau, x, out))
    }

    /// C scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        if s == 0.0 {
            return Self::zero(self.n);
        }
        self.wrap(self.time_independent, move |f, t, x, out| {
            f(t, x, out);
            out.iter_mut().for_each(|v| *v *= s);
        })
    }

    /// Sampled max row-sum norm over `[t0, t1] × [0, 1]`.
    pub fn sup_norm(&self, t0: f64, t1: f64) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        let n = self.n;
        let mut buf = vec![0.0; n * n];
        let mut best: f64 = 0.0;
        let nt = if self.time_independent { 0 } else { 64 };
        for it in 0..=nt {
            let t = if nt == 0 { t0 } else { t0 + (t1 - t0) * it as f64 / nt as f64 };
            for ix in 0..=64 {
                self.eval(t, ix as f64 / 64.0, &mut buf);
                for r in 0..n {
                    best = best.max(buf[r * n..(r + 1) * n].iter().map(|v| v.abs()).sum());
                }
            }
        }
        best
    }
}

/// Boundary-matrix class selector for [`check_b_class`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BClass {
    /// Row conditions for 1 ≤ i ≤ min{k, m − 1}.
    Generic,
    /// Row conditions for 1 ≤ i ≤ k (needs m ≥ k).
    Extended,
    /// The i×i block from the last i rows and last i columns is invertible.
    RowCondition(usize),
}

fn corner_block(b: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    let (k, m) = b.shape();
    b.view((k - i, m - i), (i, i)).into_owned()
}

pub fn check_b_class(b: &DMatrix<f64>, k: usize, m: usize, which: BClass) -> Result<bool> {
    if b.shape() != (k, m) {
        return Err(Error::Precondition(format!("B must be {k}×{m}, got {}×{}", b.nrows(), b.ncols())));
    }
    match which {
        BClass::RowCondition(i) => {
            if i == 0 || i > k.min(m) {
                return Err(Error::Precondition(format!("row condition index {i} outside 1..={}", k.min(m))));
            }
            Ok(is_invertible(&corner_block(b, i)))
        }
        BClass::Generic => Ok((1..=k.min(m.saturating_sub(1))).all(|i| is_invertible(&corner_block(b, i)))),
        BClass::Extended => {
            if m < k {
                return Err(Error::Precondition(format!("extended class needs m ≥ k (k = {k}, m = {m})")));
            }
            Ok((1..=k).all(|i| is_invertible(&corner_block(b, i))))
        }
    }
}

/// B_{k,1} ≠ 0, B_{k,ℓ} ≠ 0 and B_{k,j} = 0 for the other j ≥ 2 (ℓ is 1-based).
pub fn check_assumption_b(b: &DMatrix<f64>, k: usize, m: usize, ell: usize) -> Result<bool> {
    if b.shape() != (k, m) {
        return Err(Error::Precondition(format!("B must be {k}×{m}")));
    }
    if ell < 2 || ell > m {
        return Err(Error::Precondition(format!("ℓ = {ell} outside 2..={m}")));
    }
    let row = b.row(k - 1);
    let nz = |v: f64| v.abs() > ZERO_TOL;
    Ok(nz(row[0]) && nz(row[ell - 1]) && (2..=m).filter(|&j| j != ell).all(|j| !nz(row[j - 1])))
}

/// The control system (k, m, Σ, C, B) with derived time constants.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    k: usize,
    m: usize,
    speeds: Vec<Speed>,
    coupling: CouplingField,
    b: DMatrix<f64>,
    taus: Vec<f64>,
    t_opt: f64,
    t_russell: f64,
    warnings: Vec<String>,
}

impl SystemSpec {
    /// `speeds` lists λ_1..λ_{k+m} (magnitudes); `b` is k×m.
    pub fn new(k: usize, m: usize, speeds: Vec<Speed>, coupling: CouplingField, b: DMatrix<f64>) -> Result<Self> {
        let n = k + m;
        if k == 0 || m == 0 {
            return Err(Error::Config(format!("need k ≥ 1 and m ≥ 1, got k = {k}, m = {m}")));
        }
        if speeds.len() != n {
            return Err(Error::Config(format!("expected {n} speeds, got {}", speeds.len())));
        }
        if coupling.n() != n {
            return Err(Error::Config(format!("coupling is {0}×{0}, expected {n}×{n}", coupling.n())));
        }
        if b.shape() != (k, m) {
            return Err(Error::Config(format!("B must be {k}×{m}, got {}×{}", b.nrows(), b.ncols())));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("B has non-finite entries".into()));
        }
        let mut taus = Vec::with_capacity(n);
        for (i, s) in speeds.iter().enumerate() {
            taus.push(travel_time(s).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!("component {}: {msg}", i + 1)),
                other => other,
            })?);
        }
        for j in 0..=CHECK_SAMPLES {
            let x = j as f64 / CHECK_SAMPLES as f64;
            for i in 0..n - 1 {
                if i + 1 == k {
                    continue;
                }
                let (a, c) = (speeds[i].value(x), speeds[i + 1].value(x));
                let ok = if i < k { a > c } else { a < c };
                if !ok {
                    return Err(Error::Domain(format!(
                        "speed ordering violated between components {} and {} at x = {x}",
                        i + 1,
                        i + 2
                    )));
                }
            }
        }
        let mut warnings = Vec::new();
        for (i, s) in speeds.iter().enumerate() {
            let d2 = s.second_deriv_bound();
            if !d2.is_finite() || d2 > 1e6 {
                warnings.push(format!("speed {} may not be C² (sampled |λ''| up to {d2:.3e})", i + 1));
            }
        }
        let t_opt = optimal_time(k, m, &taus);
        let t_russell = taus[k - 1] + taus[k];
        Ok(Self { k, m, speeds, coupling, b, taus, t_opt, t_russell, warnings })
    }

    /// Constant speeds, zero coupling.
    pub fn constant(k: usize, m: usize, lambdas: &[f64], b: DMatrix<f64>) -> Result<Self> {
        Self::new(k, m, lambdas.iter().map(|&l| Speed::Const(l)).collect(), CouplingField::zero(k + m), b)
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.k + self.m
    }
    pub fn speeds(&self) -> &[Speed] {
        &self.speeds
    }
    pub fn coupling(&self) -> &CouplingField {
        &self.coupling
    }
    pub fn boundary(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn taus(&self) -> &[f64] {
        &self.taus
    }
    pub fn t_opt(&self) -> f64 {
        self.t_opt
    }
    pub fn t_russell(&self) -> f64 {
        self.t_russell
    }
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// τ_i for a 1-based component index.
    pub fn travel_time(&self, i: usize) -> Result<f64> {
        if i == 0 || i > self.n() {
            return Err(Error::Precondition(format!("component index {i} outside 1..={}", self.n())));
        }
        Ok(self.taus[i - 1])
    }

    pub fn is_constant_speed(&self) -> bool {
        self.speeds.iter().all(|s| s.constant_value().is_some())
    }

    /// Signed speed entry Σ_ii(x) (0-based i).
    pub fn sigma(&self, i: usize, x: f64) -> f64 {
        let v = self.speeds[i].value(x);
        if i < self.k {
            -v
        } else {
            v
        }
    }

    /// Σ′_ii(x), zero outside `[0, 1]`.
    pub fn sigma_deriv(&self, i: usize, x: f64) -> f64 {
        let d = self.speeds[i].deriv(x);
        if i < self.k {
            -d
        } else {
            d
        }
    }

    /// Adjoint coefficient Σ′(x) − C(t, x)ᵀ, row-major.
    pub fn cbold(&self, t: f64, x: f64, out: &mut [f64]) {
        let n = self.n();
        self.coupling.eval(t, x, out);
        for r in 0..n {
            for c in r + 1..n {
                out.swap(r * n + c, c * n + r);
            }
        }
        out.iter_mut().for_each(|v| *v = -*v);
        for i in 0..n {
            out[i * n + i] += self.sigma_deriv(i, x);
        }
    }

    /// Same system with coupling C(t + τ, x).
    pub fn shifted(&self, tau: f64) -> Self {
        let mut s = self.clone();
        s.coupling = self.coupling.shifted(tau);
        s
    }

    /// Same system with the coupling replaced.
    pub fn with_coupling(&self, coupling: CouplingField) -> Result<Self> {
        Self::new(self.k, self.m, self.speeds.clone(), coupling, self.b.clone())
    }

    pub fn with_boundary(&self, b: DMatrix<f64>) -> Result<Self> {
        Self::new(self.k, self.m, self.speeds.clone(), self.coupling.clone(), b)
    }
}

fn reflect(b: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = b.shape();
    DMatrix::from_fn(r, c, |i, j| b[(r - 1 - i, c - 1 - j)])
}

/// Time reversal w̃(t, x) = R w(T − t, x) with R the full index reversal.
///
/// The reversed system has speeds in reversed order, coupling −R C(T − t, x) R
/// and boundary matrix B̃⁻¹ where B̃ is B with both indices reflected.
pub fn time_reversal_dual_system(spec: &SystemSpec, t_final: f64) -> Result<SystemSpec> {
    let (k, m) = (spec.k(), spec.m());
    if k != m {
        return Err(Error::Precondition(format!("time reversal needs m = k (k = {k}, m = {m})")));
    }
    let bt = reflect(spec.boundary());
    if !is_invertible(&bt) {
        return Err(Error::Domain("boundary matrix B is singular".into()));
    }
    let binv = bt.try_inverse().ok_or_else(|| Error::Domain("boundary matrix B is singular".into()))?;
    if !check_b_class(&binv, k, m, BClass::Generic)? {
        return Err(Error::Precondition("reversed boundary matrix is not in the generic class".into()));
    }
    let n = spec.n();
    let speeds: Vec<Speed> = spec.speeds().iter().rev().cloned().collect();
    let c = spec.coupling();
    let coupling = if c.is_zero() {
        CouplingField::zero(n)
    } else {
        let inner = c.clone();
        let mut buf_n = n;
        buf_n *= n;
        let f = move |t: f64, x: f64, out: &mut [f64]| {
            let mut tmp = vec![0.0; buf_n];
            inner.eval(t_final - t, x, &mut tmp);
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = -tmp[(n - 1 - i) * n + (n - 1 - j)];
                }
            }
        };
        let mut out = CouplingField::closed_form(n, "time-reversed", c.is_time_independent(), f);
        out.kind = c.kind().clone();
        out
    };
    SystemSpec::new(k, m, speeds, coupling, binv)
}

/// Adds m − k artificial fast minus components so that k′ = m′ = m.
///
/// New speeds (1 + m − k − j)/ε come first, the boundary matrix becomes
/// `[[I, 0], [B]]` (m × m) and the coupling is embedded with zero blocks.
pub fn augment_system(spec: &SystemSpec, eps: f64) -> Result<SystemSpec> {
    let (k, m) = (spec.k(), spec.m());
    if m <= k {
        return Err(Error::Precondition(format!("augmentation needs m > k (k = {k}, m = {m})")));
    }
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("ε must be positive, got {eps}")));
    }
    let extra = m - k;
    let fastest = (0..=64).map(|i| spec.speeds()[0].value(i as f64 / 64.0)).fold(0.0, f64::max);
    if 1.0 / eps <= fastest {
        return Err(Error::Precondition(format!(
            "ε = {eps} too large: artificial speed 1/ε must exceed λ_1 (up to {fastest})"
        )));
    }
    let mut speeds: Vec<Speed> = (1..=extra).map(|j| Speed::Const((1 + extra - j) as f64 / eps)).collect();
    speeds.extend(spec.speeds().iter().cloned());
    let n_old = spec.n();
    let n_new = n_old + extra;
    let c = spec.coupling();
    let coupling = if c.is_zero() {
        CouplingField::zero(n_new)
    } else {
        let inner = c.clone();
        let mut out = CouplingField::closed_form(n_new, "augmented", c.is_time_independent(), move |t, x, out| {
            let mut tmp = vec![0.0; n_old * n_old];
            inner.eval(t, x, &mut tmp);
            out.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..n_old {
                for j in 0..n_old {
                    out[(i + extra) * n_new + j + extra] = tmp[i * n_old + j];
                }
            }
        });
        out.kind = c.kind().clone();
        out
    };
    let mut b = DMatrix::zeros(m, m);
    for j in 0..extra {
        b[(j, j)] = 1.0;
    }
    b.view_mut((extra, 0), (k, m)).copy_from(spec.boundary());
    SystemSpec::new(m, m, speeds, coupling, b)
}
