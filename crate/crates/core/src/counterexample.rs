//! Smooth time-varying coupling that destroys null-controllability below
//! τ_k + τ_{k+1}, together with the dual solution that witnesses it.
//!
//! Speeds are constant. With γ_{k+r} = λ_k B_{k,r} / λ_{k+r} and a bump φ of
//! unit mass supported in (τ_{k+ℓ}, τ_{k+1}) ∩ (T − τ_k, T), the coupling has
//! two nonzero entries
//!
//! ```text
//! C_{k,k+ℓ}   = −λ_{k+ℓ} γ_{k+ℓ} (τ_k + τ_{k+ℓ}) φ(t + τ_{k+ℓ} x)
//! C_{k+1,k+ℓ} = −λ_{k+ℓ} γ_{k+ℓ} (τ_{k+1} − τ_{k+ℓ}) φ(t + τ_{k+ℓ} x) / γ_{k+1}
//! ```
//!
//! and the dual solution with v_k(T, x) = φ(T − τ_k x)/γ_{k+ℓ} (all other
//! components zero at T) has v₊(·, 1) ≡ 0 while v(0, ·) ≠ 0.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::broad_solver::{Domain, Grid, ProblemData, Resolution, SolutionField, Solver};
use crate::controllability::{null_controllability_verdict, GramianOperator, VerdictReport};
use crate::parallel::ColumnMap;
use crate::quad::integrate;
use crate::system_model::{check_assumption_b, optimal_time, CouplingField, Speed, SystemSpec};
use crate::{Error, Result};

/// ∫_{−1}^{1} exp(−1/(1 − s²)) ds, recomputed by [`Bump::new`]; kept for reference.
pub const MOLLIFIER_MASS: f64 = 0.443_993_816_168_079_4;

/// Relative margin by which the witness bump stays inside the admissible interval.
pub const BUMP_MARGIN: f64 = 0.025;

/// exp(−1/(1 − s²)) rescaled to `(a, b)` with unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub a: f64,
    pub b: f64,
    pub scale: f64,
}

fn mollifier(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        libm::exp(-1.0 / (1.0 - s * s))
    }
}

impl Bump {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Precondition(format!("bump interval ({a}, {b}) is empty")));
        }
        let mass = integrate(&mollifier, -1.0, 1.0, 1e-15);
        Ok(Self { a, b, scale: 2.0 / ((b - a) * mass) })
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.a || t >= self.b {
            return 0.0;
        }
        let s = (2.0 * t - self.a - self.b) / (self.b - self.a);
        self.scale * mollifier(s)
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    /// ∫_{s0}^{s1} φ(c0 + c1 s) ds, restricted to the support.
    pub fn integrate_affine(&self, c0: f64, c1: f64, s0: f64, s1: f64) -> f64 {
        if s1 <= s0 {
            return 0.0;
        }
        if c1.abs() < 1e-14 {
            return self.eval(c0) * (s1 - s0);
        }
        let (p, q) = ((self.a - c0) / c1, (self.b - c0) / c1);
        let (lo, hi) = (p.min(q).max(s0), p.max(q).min(s1));
        if hi <= lo {
            return 0.0;
        }
        integrate(&|s| self.eval(c0 + c1 * s), lo, hi, 1e-15)
    }

    pub fn mass(&self) -> f64 {
        integrate(&|t| self.eval(t), self.a, self.b, 1e-15)
    }
}

/// Smooth bump supported in `(a, b)` with unit mass.
pub fn build_bump(a: f64, b: f64) -> Result<Bump> {
    Bump::new(a, b)
}

/// Parameters of the construction. `ell` is 1-based (2 ≤ ℓ ≤ m).
#[derive(Debug, Clone, PartialEq)]
pub struct CounterexampleSpec {
    pub k: usize,
    pub m: usize,
    pub ell: usize,
    pub lambdas: Vec<f64>,
    pub b: DMatrix<f64>,
    pub eps: f64,
}

impl CounterexampleSpec {
    /// k = 1, m = 2, ℓ = 2, λ = (1, 1, 2), B = [1, 1].
    pub fn reference(eps: f64) -> Self {
        Self { k: 1, m: 2, ell: 2, lambdas: vec![1.0, 1.0, 2.0], b: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), eps }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }

    pub fn taus(&self) -> Vec<f64> {
        self.lambdas.iter().map(|l| 1.0 / l).collect()
    }

    /// T = τ_k + τ_{k+1} − ε.
    pub fn horizon(&self) -> f64 {
        let t = self.taus();
        t[self.k - 1] + t[self.k] - self.eps
    }

    /// τ_k + τ_{k+1}.
    pub fn critical_time(&self) -> f64 {
        let t = self.taus();
        t[self.k - 1] + t[self.k]
    }

    /// γ_{k+r} for r = 1..m (index r − 1).
    pub fn gammas(&self) -> Vec<f64> {
        let k = self.k;
        (0..self.m).map(|r| self.lambdas[k - 1] * self.b[(k - 1, r)] / self.lambdas[k + r]).collect()
    }

    /// (θ_k, θ_{k+1}).
    pub fn thetas(&self) -> (f64, f64) {
        let t = self.taus();
        let (k, l) = (self.k, self.ell);
        (1.0 / (t[k - 1] + t[k + l - 1]), 1.0 / (t[k] - t[k + l - 1]))
    }

    /// Admissible support interval (τ_{k+ℓ}, τ_{k+1}) ∩ (T − τ_k, T).
    pub fn interval(&self) -> (f64, f64) {
        let t = self.taus();
        let h = self.horizon();
        let (k, l) = (self.k, self.ell);
        (t[k + l - 1].max(h - t[k - 1]), t[k].min(h))
    }

    pub fn validate(&self) -> Result<()> {
        let (k, m, n) = (self.k, self.m, self.k + self.m);
        if k < 1 || m < 2 {
            return Err(Error::Precondition(format!("need k ≥ 1 and m ≥ 2 (k = {k}, m = {m})")));
        }
        if self.lambdas.len() != n {
            return Err(Error::Precondition(format!("expected {n} speeds, got {}", self.lambdas.len())));
        }
        if !check_assumption_b(&self.b, k, m, self.ell)? {
            return Err(Error::Precondition(format!(
                "row k of B must have nonzero entries exactly in columns 1 and ℓ = {}",
                self.ell
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Precondition(format!("ε must be positive, got {}", self.eps)));
        }
        let taus = self.taus();
        let h = self.horizon();
        let t_opt = optimal_time(k, m, &taus);
        if h < t_opt - 1e-12 {
            return Err(Error::Precondition(format!("T = {h} is below the optimal time {t_opt}; decrease ε")));
        }
        let need = taus[k - 1] + taus[k + self.ell - 1];
        if h < need - 1e-12 {
            return Err(Error::Precondition(format!("T = {h} is below τ_k + τ_(k+ℓ) = {need}; decrease ε")));
        }
        let (a, b) = self.interval();
        if !(b > a) {
            return Err(Error::Precondition(format!("support interval ({a}, {b}) is empty; decrease ε")));
        }
        Ok(())
    }

    fn bump(&self) -> Result<Bump> {
        let (a, b) = self.interval();
        let d = BUMP_MARGIN * (b - a);
        build_bump(a + d, b - d)
    }

    /// (α, β) amplitudes: α(t, x) = amp_α φ(t + τ_{k+ℓ} x), same for β.
    fn amplitudes(&self) -> (f64, f64) {
        let g = self.gammas();
        let (th_k, th_k1) = self.thetas();
        let lam = self.lambdas[self.k + self.ell - 1];
        let gl = g[self.ell - 1];
        (lam * gl / th_k, lam * gl / (g[0] * th_k1))
    }

    /// The control system with the constructed coupling.
    pub fn system(&self) -> Result<SystemSpec> {
        self.validate()?;
        let coupling = build_coefficients(self)?;
        SystemSpec::new(
            self.k,
            self.m,
            self.lambdas.iter().map(|&l| Speed::Const(l)).collect(),
            coupling,
            self.b.clone(),
        )
    }
}

/// Coupling with exactly two nonzero entries (see the module docs).
pub fn build_coefficients(cx: &CounterexampleSpec) -> Result<CouplingField> {
    cx.validate()?;
    let bump = cx.bump()?;
    let (amp_a, amp_b) = cx.amplitudes();
    let n = cx.k + cx.m;
    let tau_l = 1.0 / cx.lambdas[cx.k + cx.ell - 1];
    let row_a = cx.k - 1;
    let row_b = cx.k;
    let col = cx.k + cx.ell - 1;
    Ok(CouplingField::closed_form(n, "thm1", false, move |t, x, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        let p = bump.eval(t + tau_l * x.clamp(0.0, 1.0));
        out[row_a * n + col] = -amp_a * p;
        out[row_b * n + col] = -amp_b * p;
    }))
}

/// Closed-form evaluation of the dual witness.
#[derive(Debug, Clone)]
pub struct Witness {
    pub cx: CounterexampleSpec,
    pub bump: Bump,
    pub horizon: f64,
    gammas: Vec<f64>,
    taus: Vec<f64>,
    amp_a: f64,
    amp_b: f64,
}

impl Witness {
    pub fn new(cx: &CounterexampleSpec) -> Result<Self> {
        cx.validate()?;
        let (amp_a, amp_b) = cx.amplitudes();
        Ok(Self {
            cx: cx.clone(),
            bump: cx.bump()?,
            horizon: cx.horizon(),
            gammas: cx.gammas(),
            taus: cx.taus(),
            amp_a,
            amp_b,
        })
    }

    fn gamma_l(&self) -> f64 {
        self.gammas[self.cx.ell - 1]
    }

    /// v_i(t, x), 0-based component.
    pub fn value(&self, i: usize, t: f64, x: f64) -> f64 {
        let k = self.cx.k;
        let gl = self.gamma_l();
        let big_t = self.horizon;
        if i + 1 == k {
            return self.bump.eval(t - self.taus[k - 1] * x) / gl;
        }
        if i < k {
            return 0.0;
        }
        let r = i - k + 1;
        let tau = self.taus[i];
        let arrival = t + tau * x;
        if r != self.cx.ell {
            if arrival >= big_t {
                return 0.0;
            }
            return self.gammas[r - 1] / gl * self.bump.eval(arrival);
        }
        let (base, upper) = if arrival < big_t { (self.bump.eval(arrival), arrival) } else { (0.0, big_t) };
        let ridge = self.bump.eval(arrival);
        if ridge == 0.0 || upper <= t {
            return base;
        }
        let tk = self.taus[k - 1];
        let tk1 = self.taus[k];
        let g1 = self.gammas[0];
        // along the characteristic x(s) = (arrival − s)/τ both sources are the
        // bump of an affine function of s, integrated over its support only
        let vk = self.bump.integrate_affine(arrival * -tk / tau, 1.0 + tk / tau, t, upper) / gl;
        let vk1 = g1 / gl * self.bump.integrate_affine(arrival * tk1 / tau, 1.0 - tk1 / tau, t, upper);
        base - ridge * (self.amp_a * vk + self.amp_b * vk1)
    }

    /// Sample one time level on a grid.
    pub fn state_at(&self, grid: &Grid, t: f64) -> Vec<Vec<f64>> {
        grid.sample_state(&|i, x| self.value(i, t, x))
    }
}

/// Identity residuals of the construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityDefects {
    /// max |v_{k+1}(t,0) − γ_{k+1} v_k(t,0)| and the ℓ analogue, over (0, T).
    pub trace_ratios: f64,
    /// max |v_{k+ℓ}(t,0) − φ(t)∫v_{k+ℓ}(s,0)ds| over the bump window.
    pub bump_consistency: f64,
    /// max |v_{k+ℓ}(t,1)| over (0, T).
    pub right_trace: f64,
    /// max |v_k(t,0) − φ(t)/γ_{k+ℓ}| over (0, T).
    pub left_trace: f64,
}

impl IdentityDefects {
    pub fn max(&self) -> f64 {
        self.trace_ratios.max(self.bump_consistency).max(self.right_trace).max(self.left_trace)
    }

    pub fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("trace_ratios", self.trace_ratios),
            ("bump_consistency", self.bump_consistency),
            ("right_trace", self.right_trace),
            ("left_trace", self.left_trace),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    pub eps: f64,
    pub horizon: f64,
    pub interval: (f64, f64),
    pub samples: usize,
    /// ‖v₊(·, 1)‖ in L²(0, T).
    pub obs_norm: f64,
    /// ‖v(0, ·)‖ in L²(0, 1).
    pub initial_norm: f64,
    pub identity_defects: IdentityDefects,
    /// Largest |v_k(T, x)| within the guard band around the threshold x = (T − τ_{k+1})/τ_k.
    pub threshold_band_max: f64,
    /// Observation ratio of the grid backward solve from the same terminal data.
    pub grid_obs_ratio: f64,
    /// Relative L² gap between the grid solution at t = 0 and the closed form.
    pub grid_initial_deviation: f64,
    pub pass: bool,
}

pub const WITNESS_TOL_ABS: f64 = 1e-12;
pub const WITNESS_TOL_REL: f64 = 1e-6;
pub const WITNESS_FLOOR: f64 = 1e-8;
pub const IDENTITY_TOL: f64 = 1e-8;

/// Builds the witness, samples it on an `samples`-step grid and checks every
/// identity. The grid backward solve at resolution `samples` is reported as a
/// diagnostic.
pub fn build_dual_witness(cx: &CounterexampleSpec, samples: usize) -> Result<(SolutionField, WitnessReport)> {
    let w = Witness::new(cx)?;
    let spec = cx.system()?;
    let (k, m, n) = (cx.k, cx.m, cx.k + cx.m);
    let big_t = w.horizon;
    let ns = samples.max(16);
    let ts: Vec<f64> = (0..=ns).map(|i| big_t * i as f64 / ns as f64).collect();
    let trap = |vals: &[f64], h: f64| -> f64 {
        let s: f64 = vals.iter().map(|v| v * v).sum::<f64>() - 0.5 * (vals[0].powi(2) + vals[vals.len() - 1].powi(2));
        (s * h).max(0.0)
    };

    let mut obs_sq = 0.0;
    for r in 0..m {
        let tr: Vec<f64> = ts.iter().map(|&t| w.value(k + r, t, 1.0)).collect();
        obs_sq += trap(&tr, big_t / ns as f64);
    }
    let xs: Vec<f64> = (0..=ns).map(|i| i as f64 / ns as f64).collect();
    let mut init_sq = 0.0;
    for i in 0..n {
        let v: Vec<f64> = xs.iter().map(|&x| w.value(i, 0.0, x)).collect();
        init_sq += trap(&v, 1.0 / ns as f64);
    }
    let obs_norm = obs_sq.sqrt();
    let initial_norm = init_sq.sqrt();

    let gl = w.gamma_l();
    let g1 = w.gammas[0];
    let inner: Vec<f64> = ts[1..ns].to_vec();
    let vk0 = |t: f64| w.value(k - 1, t, 0.0);
    let trace_ratios = inner
        .iter()
        .map(|&t| {
            let a = (w.value(k, t, 0.0) - g1 * vk0(t)).abs();
            let b = (w.value(k + cx.ell - 1, t, 0.0) - gl * vk0(t)).abs();
            a.max(b)
        })
        .fold(0.0, f64::max);
    let left_trace = inner.iter().map(|&t| (vk0(t) - w.bump.eval(t) / gl).abs()).fold(0.0, f64::max);
    let right_trace = inner.iter().map(|&t| w.value(k + cx.ell - 1, t, 1.0).abs()).fold(0.0, f64::max);
    let taus = cx.taus();
    let (lo, hi) = (taus[k + cx.ell - 1], taus[k]);
    let trace_l = |s: f64| w.value(k + cx.ell - 1, s, 0.0);
    let bump_consistency = (1..ns)
        .map(|i| lo + (hi - lo) * i as f64 / ns as f64)
        .map(|t| {
            let (a, b) = (w.bump.a.max(lo), w.bump.b.min(hi));
            let left = if t > a { integrate(&trace_l, a, t.min(b), 1e-15) } else { 0.0 };
            let right = if t < b { integrate(&trace_l, t.max(a), b, 1e-15) } else { 0.0 };
            let p = w.bump.eval(t);
            (trace_l(t) - (p * left + p * right)).abs()
        })
        .fold(0.0, f64::max);
    let identity_defects = IdentityDefects { trace_ratios, bump_consistency, right_trace, left_trace };

    let threshold = (big_t - taus[k]) / taus[k - 1];
    let band = BUMP_MARGIN * (w.cx.interval().1 - w.cx.interval().0) / taus[k - 1];
    let threshold_band_max = (0..=64)
        .map(|i| threshold - band + 2.0 * band * i as f64 / 64.0)
        .filter(|x| (0.0..=1.0).contains(x))
        .map(|x| w.value(k - 1, big_t, x).abs())
        .fold(0.0, f64::max);

    let data_norm = 1.0f64.max(initial_norm);
    for (name, d) in identity_defects.named() {
        if d > IDENTITY_TOL * data_norm {
            return Err(Error::Precondition(format!("witness identity '{name}' fails: defect {d:.3e}")));
        }
    }
    if threshold_band_max > IDENTITY_TOL {
        return Err(Error::Precondition(format!(
            "terminal datum does not vanish near the threshold x = {threshold}: {threshold_band_max:.3e}"
        )));
    }

    // grid backward solve from the same terminal data
    let solver = Solver::adjoint(&spec, 0.0, big_t, &Resolution::uniform(ns))?;
    let grid = solver.grid_arc();
    let phi = w.state_at(&grid, big_t);
    let (gfield, _) = solver.solve(&ProblemData { state: phi, ..Default::default() })?;
    let gobs: Vec<Vec<f64>> = (0..m)
        .map(|r| gfield.trace_x1(k + r))
        .collect();
    let g_init = gfield.slice(0);
    let exact_init = w.state_at(&grid, 0.0);
    let diff: Vec<Vec<f64>> =
        g_init.iter().zip(&exact_init).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect();
    let grid_obs_ratio = grid.trace_norm(&gobs) / grid.state_norm(&g_init).max(f64::MIN_POSITIVE);
    let grid_initial_deviation = grid.state_norm(&diff) / grid.state_norm(&exact_init).max(f64::MIN_POSITIVE);

    let pass = obs_norm <= WITNESS_TOL_ABS + WITNESS_TOL_REL * initial_norm && initial_norm > WITNESS_FLOOR;
    let values = (0..n)
        .map(|i| {
            let c = &grid.comps[i];
            (0..=grid.nt).flat_map(|l| c.x.iter().map(move |&x| (l, x))).map(|(l, x)| w.value(i, grid.time(l), x)).collect()
        })
        .collect();
    let field = SolutionField { domain: Domain::Rectangle, grid: grid.clone(), values };
    let report = WitnessReport {
        eps: cx.eps,
        horizon: big_t,
        interval: (w.bump.a, w.bump.b),
        samples: ns,
        obs_norm,
        initial_norm,
        identity_defects,
        threshold_band_max,
        grid_obs_ratio,
        grid_initial_deviation,
        pass,
    };
    Ok((field, report))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub eps: f64,
    pub horizon: f64,
    pub witness_ratio: f64,
    pub witness_pass: bool,
    /// Smallest Gramian eigenvalue and its size relative to the trace.
    pub constant: f64,
    pub constant_rel_trace: f64,
    pub verdict: VerdictReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureScan {
    pub rows: Vec<ScanRow>,
    /// Same coupling at T = τ_k + τ_{k+1} + 0.1 (absent for an empty ε list).
    pub reference: Option<VerdictReport>,
}

/// Witness ratio and Gramian constant for each ε, plus the control verdict
/// just above the critical time.
pub fn observability_failure_scan(
    cx: &CounterexampleSpec,
    eps_list: &[f64],
    witness_samples: usize,
    gramian_res: &Resolution,
    cols: &dyn ColumnMap,
) -> Result<FailureScan> {
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let c = cx.with_eps(eps);
        let (_, rep) = build_dual_witness(&c, witness_samples)?;
        let spec = c.system()?;
        let gram = GramianOperator::assemble(&spec, 0.0, c.horizon(), gramian_res, cols)?;
        let verdict = null_controllability_verdict(&gram);
        rows.push(ScanRow {
            eps,
            horizon: c.horizon(),
            witness_ratio: rep.obs_norm / rep.initial_norm,
            witness_pass: rep.pass,
            constant: verdict.gramian_constant,
            constant_rel_trace: verdict.gramian_constant / verdict.trace,
            verdict,
        });
    }
    let reference = match eps_list.first() {
        None => None,
        Some(&eps) => {
            let c = cx.with_eps(eps);
            let spec = c.system()?;
            let gram = GramianOperator::assemble(&spec, 0.0, c.critical_time() + 0.1, gramian_res, cols)?;
            Some(null_controllability_verdict(&gram))
        }
    };
    Ok(FailureScan { rows, reference })
}

/// |cos| of the angle between two states in L²(0,1)ⁿ.
pub fn state_cosine(grid: &Grid, a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let na = grid.state_norm(a);
    let nb = grid.state_norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (grid.state_dot(a, b) / (na * nb)).abs()
}

/// Human-readable summary line.
pub fn summary(rep: &WitnessReport) -> String {
    format!(
        "ε = {} T = {} obs/initial = {:.3e} pass = {}",
        rep.eps,
        rep.horizon,
        rep.obs_norm / rep.initial_norm,
        rep.pass
    )
}
