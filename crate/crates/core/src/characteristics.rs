//! Characteristic flows x_i(t, s, ξ) and boundary crossings.
//!
//! dx/dt = +λ_i(x) for minus components, −λ_i(x) for plus components, with λ_i
//! extended by its end values outside `[0, 1]`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::format;
use alloc::vec::Vec;

use crate::quad::integrate;
use crate::system_model::SystemSpec;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CharacteristicFlow {
    spec: SystemSpec,
    h: f64,
}

impl CharacteristicFlow {
    pub fn new(spec: &SystemSpec) -> Self {
        let n = spec.n() as f64;
        let dmax = spec
            .speeds()
            .iter()
            .flat_map(|s| (0..=128).map(move |i| s.deriv(i as f64 / 128.0).abs()))
            .fold(0.0, f64::max);
        let h = if dmax > 0.0 { (0.1 / (n * dmax)).min(1e-3) } else { 1e-3 };
        Self { spec: spec.clone(), h }
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    fn velocity(&self, i: usize, x: f64) -> f64 {
        let v = self.spec.speeds()[i].value(x);
        if i < self.spec.k() {
            v
        } else {
            -v
        }
    }

    /// Position at time `t` of the characteristic of component `i` (0-based)
    /// passing through `ξ` at time `s`.
    pub fn flow(&self, i: usize, t: f64, s: f64, xi: f64) -> f64 {
        if t == s {
            return xi;
        }
        if let Some(c) = self.spec.speeds()[i].constant_value() {
            let sign = if i < self.spec.k() { 1.0 } else { -1.0 };
            return xi + sign * c * (t - s);
        }
        self.flow_rk4(i, t, s, xi)
    }

    /// Generic integrator; also used for non-constant speeds by [`flow`](Self::flow).
    pub fn flow_rk4(&self, i: usize, t: f64, s: f64, xi: f64) -> f64 {
        let mut x = xi;
        let mut rem = t - s;
        if rem == 0.0 {
            return xi;
        }
        let dir = rem.signum();
        // leg outside [0, 1]: constant speed
        if !(0.0..=1.0).contains(&x) {
            let v = self.velocity(i, x) * dir;
            let target = if x < 0.0 { 0.0 } else { 1.0 };
            let toward = (target - x) * v > 0.0;
            if !toward {
                return x + v * rem.abs();
            }
            let need = (target - x).abs() / v.abs();
            if need >= rem.abs() {
                return x + v * rem.abs();
            }
            x = target;
            rem -= dir * need;
        }
        let h = self.h;
        while rem.abs() > 0.0 {
            let dt = if rem.abs() <= h { rem } else { dir * h };
            let next = self.rk4(i, x, dt);
            if (0.0..=1.0).contains(&next) {
                x = next;
                rem -= dt;
                if rem.abs() < 1e-15 {
                    break;
                }
                continue;
            }
            // crossed the boundary inside this step
            let bound = if next < 0.0 { 0.0 } else { 1.0 };
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let y = self.rk4(i, x, mid * dt);
                if (0.0..=1.0).contains(&y) {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if (hi - lo) * dt.abs() < 1e-13 {
                    break;
                }
            }
            let used = 0.5 * (lo + hi) * dt;
            let outside = rem - used;
            return bound + self.velocity(i, bound + (bound - 0.5)) * outside;
        }
        x
    }

    fn rk4(&self, i: usize, x: f64, dt: f64) -> f64 {
        let k1 = self.velocity(i, x);
        let k2 = self.velocity(i, x + 0.5 * dt * k1);
        let k3 = self.velocity(i, x + 0.5 * dt * k2);
        let k4 = self.velocity(i, x + dt * k3);
        x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }

    /// Characteristic coordinate P_i(x) = ∫₀ˣ 1/λ_i, linear outside `[0, 1]`.
    pub fn coordinate(&self, i: usize, x: f64) -> f64 {
        let speed = &self.spec.speeds()[i];
        if let Some(c) = speed.constant_value() {
            return x / c;
        }
        let tau = self.spec.taus()[i];
        if x <= 0.0 {
            return x / speed.value(0.0);
        }
        if x >= 1.0 {
            return tau + (x - 1.0) / speed.value(1.0);
        }
        integrate(&|y| 1.0 / speed.value(y), 0.0, x, 1e-14)
    }

    /// Inverse of [`coordinate`](Self::coordinate), by Newton iteration.
    pub fn position(&self, i: usize, p: f64) -> f64 {
        let speed = &self.spec.speeds()[i];
        if let Some(c) = speed.constant_value() {
            return p * c;
        }
        let tau = self.spec.taus()[i];
        if p <= 0.0 {
            return p * speed.value(0.0);
        }
        if p >= tau {
            return 1.0 + (p - tau) * speed.value(1.0);
        }
        let mut x = p / tau;
        for _ in 0..60 {
            let f = self.coordinate(i, x) - p;
            let nx = (x - f * speed.value(x)).clamp(0.0, 1.0);
            if (nx - x).abs() < 1e-15 {
                x = nx;
                break;
            }
            x = nx;
        }
        x
    }

    /// Time τ(j, x) ≥ 0 for the flow started at (0, x) to reach x = 1 (minus
    /// components) or x = 0 (plus components). Located by bisection.
    pub fn crossing_time(&self, j: usize, x: f64) -> f64 {
        let k = self.spec.k();
        let target = if j < k { 1.0 } else { 0.0 };
        if let Some(c) = self.spec.speeds()[j].constant_value() {
            return (target - x).abs() / c;
        }
        let reached = |t: f64| {
            let y = self.flow(j, t, 0.0, x);
            if j < k {
                y >= 1.0
            } else {
                y <= 0.0
            }
        };
        let mut hi = self.spec.taus()[j] * 1.01 + 1e-9;
        while !reached(hi) {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if reached(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Characteristic of component k − m + 1 through (x = 1, t = T).
    pub fn omega_boundary(&self, t_final: f64) -> Result<OmegaCurve> {
        let (k, m) = (self.spec.k(), self.spec.m());
        if k < m {
            return Err(Error::Precondition(format!("the Ω region needs k ≥ m (k = {k}, m = {m})")));
        }
        let comp = k - m;
        let tau = self.spec.taus()[comp];
        if t_final < tau - 1e-12 {
            return Err(Error::Domain(format!(
                "T = {t_final} is below τ_{} = {tau}: the boundary curve leaves through t < 0",
                comp + 1
            )));
        }
        let xs: Vec<f64> = (0..=256).map(|i| i as f64 / 256.0).collect();
        let ts = xs.iter().map(|&x| t_final - tau + self.coordinate(comp, x)).collect();
        Ok(OmegaCurve { comp, t_final, intercept: t_final - tau, xs, ts })
    }
}

/// Sampled curve t = γ(x) bounding Ω from above.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaCurve {
    /// 0-based component whose characteristic forms the curve.
    pub comp: usize,
    pub t_final: f64,
    /// γ(0) = T − τ_{comp}.
    pub intercept: f64,
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
}

impl OmegaCurve {
    /// Linear interpolation of the samples.
    pub fn time_at(&self, x: f64) -> f64 {
        let n = self.xs.len() - 1;
        let pos = (x.clamp(0.0, 1.0) * n as f64).min(n as f64);
        let i = (pos.floor() as usize).min(n - 1);
        let a = pos - i as f64;
        (1.0 - a) * self.ts[i] + a * self.ts[i + 1]
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        t > 0.0 && t < self.time_at(x)
    }
}
