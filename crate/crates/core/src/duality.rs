//! Control-to-state map 𝒻, its adjoint 𝒻*φ = Σ₊(1) v₊(·, 1) and the pairing
//! identities linking the control system to its dual.

use alloc::format;
use alloc::vec::Vec;

use crate::broad_solver::{Grid, ProblemData, Resolution, SolutionField, Solver};
use crate::system_model::SystemSpec;
use crate::{Error, Result};

/// Relative size below which a trace counts as vanishing in [`pairing_check`].
pub const VANISHING_TRACE_TOL: f64 = 1e-8;

/// 𝒻 on the window `[τ, τ + T]` together with the dual solver on the same grid.
#[derive(Debug, Clone)]
pub struct ControlToStateMap {
    forward: Solver,
    adjoint: Solver,
    spec: SystemSpec,
}

impl ControlToStateMap {
    pub fn new(spec: &SystemSpec, tau: f64, horizon: f64, res: &Resolution) -> Result<Self> {
        let forward = Solver::forward(spec, tau, tau + horizon, res)?;
        let adjoint = Solver::adjoint(spec, tau, tau + horizon, res)?;
        Ok(Self { forward, adjoint, spec: spec.clone() })
    }

    pub fn grid(&self) -> &Grid {
        self.forward.grid()
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn forward_solver(&self) -> &Solver {
        &self.forward
    }

    pub fn adjoint_solver(&self) -> &Solver {
        &self.adjoint
    }

    /// Full forward field from `u0` with control `control` (m traces).
    pub fn forward_field(&self, u0: &[Vec<f64>], control: &[Vec<f64>]) -> Result<SolutionField> {
        let data = ProblemData { state: u0.to_vec(), boundary: control.to_vec(), ..Default::default() };
        Ok(self.forward.solve(&data)?.0)
    }

    /// Final state from `u0` under `control`.
    pub fn final_state(&self, u0: &[Vec<f64>], control: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let data = ProblemData { state: u0.to_vec(), boundary: control.to_vec(), ..Default::default() };
        let vals = self.forward.solve_values(&data)?;
        Ok(last_level(self.grid(), &vals))
    }

    /// 𝒻U: final state from zero initial state.
    pub fn forward_map(&self, control: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.final_state(&[], control)
    }

    /// Final state from `u0` with zero control.
    pub fn free_evolution(&self, u0: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.final_state(u0, &[])
    }

    pub fn adjoint_field(&self, phi: &[Vec<f64>]) -> Result<SolutionField> {
        let data = ProblemData { state: phi.to_vec(), ..Default::default() };
        Ok(self.adjoint.solve(&data)?.0)
    }

    /// Observation Σ₊(1) v₊(·, 1) of a dual field.
    pub fn observation(&self, field: &SolutionField) -> Vec<Vec<f64>> {
        let k = self.spec.k();
        (0..self.spec.m())
            .map(|j| {
                let lam = self.spec.speeds()[k + j].value(1.0);
                field.trace_x1(k + j).into_iter().map(|v| lam * v).collect()
            })
            .collect()
    }

    /// 𝒻*φ.
    pub fn adjoint_map(&self, phi: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self.observation(&self.adjoint_field(phi)?))
    }

    /// Observation trace and initial slice v(τ) of the dual solution from φ.
    pub fn adjoint_trace_and_initial(&self, phi: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let f = self.adjoint_field(phi)?;
        Ok((self.observation(&f), f.slice(0)))
    }
}

fn last_level(g: &Grid, vals: &[Vec<f64>]) -> Vec<Vec<f64>> {
    g.comps.iter().zip(vals).map(|(c, v)| v[g.nt * c.len()..].to_vec()).collect()
}

/// Which side of the pairing carries the vanishing trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairingMode {
    /// u₊(·, 1) = 0: the control is zero.
    ControlledU,
    /// v₊(·, 1) = 0: the dual observation vanishes.
    ZeroObservationV,
}

/// |⟨u(τ+T), v(τ+T)⟩ − ⟨u(τ), v(τ)⟩| for u from (`u0`, `control`) and v from `phi`.
pub fn pairing_check(
    map: &ControlToStateMap,
    u0: &[Vec<f64>],
    control: &[Vec<f64>],
    phi: &[Vec<f64>],
    mode: PairingMode,
) -> Result<f64> {
    let g = map.grid();
    let scale = g.state_norm(u0) + g.trace_norm(control) + g.state_norm(phi);
    let vfield = map.adjoint_field(phi)?;
    match mode {
        PairingMode::ControlledU => {
            let c = g.trace_norm(control);
            if c > VANISHING_TRACE_TOL * scale.max(1.0) {
                return Err(Error::Precondition(format!("controlled-u mode needs u₊(·,1) = 0, control norm is {c:.3e}")));
            }
        }
        PairingMode::ZeroObservationV => {
            let o = g.trace_norm(&map.observation(&vfield));
            if o > VANISHING_TRACE_TOL * scale.max(1.0) {
                return Err(Error::Precondition(format!(
                    "zero-observation-v mode needs v₊(·,1) = 0, observation norm is {o:.3e}"
                )));
            }
        }
    }
    let u_end = map.final_state(u0, control)?;
    let v_start = vfield.slice(0);
    let u_start = if u0.is_empty() { g.zero_state() } else { u0.to_vec() };
    Ok((g.state_dot(&u_end, phi) - g.state_dot(&u_start, &v_start)).abs())
}

/// |⟨𝒻U, φ⟩ − ⟨U, 𝒻*φ⟩|.
pub fn adjoint_identity_defect(map: &ControlToStateMap, control: &[Vec<f64>], phi: &[Vec<f64>]) -> Result<f64> {
    let g = map.grid();
    let lhs = g.state_dot(&map.forward_map(control)?, phi);
    let rhs = g.trace_dot(control, &map.adjoint_map(phi)?);
    Ok((lhs - rhs).abs())
}
