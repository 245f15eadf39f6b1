//! JSON system configuration and bundled presets.
//!
//! ```json
//! { "k": 1, "m": 2,
//!   "speeds": [{"kind": "const", "value": 1.0}, {"kind": "affine", "a": 1.0, "b": 0.5},
//!              {"kind": "grid", "x": [0.0, 0.5, 1.0], "v": [2.0, 2.1, 2.3]}],
//!   "B": [[1.0, 1.0]],
//!   "coupling": {"kind": "zero"} }
//! ```
//!
//! Couplings are `zero`, `grid` (bilinear samples, `values[it][ix]` row-major
//! n×n) or `closed-form` with an `id`: `poly` sums `t^t_pow x^x_pow matrix`
//! over its terms, `thm1` is the time-varying coupling of the counterexample
//! module with parameters `ell` and `eps`.

use std::path::Path;
use std::sync::Arc;

use hyperctrl_core::counterexample::{build_coefficients, CounterexampleSpec};
use hyperctrl_core::system_model::{CouplingField, CubicSpline, Speed, SystemSpec};
use hyperctrl_core::Error;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub k: usize,
    pub m: usize,
    pub speeds: Vec<SpeedConfig>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(default)]
    pub coupling: CouplingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpeedConfig {
    Const { value: f64 },
    Affine { a: f64, b: f64 },
    Grid { x: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CouplingConfig {
    #[default]
    Zero,
    ClosedForm(ClosedForm),
    Grid { t: Vec<f64>, x: Vec<f64>, values: Vec<Vec<Vec<f64>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum ClosedForm {
    Poly { terms: Vec<PolyTerm> },
    Thm1 {
        #[serde(default = "default_ell")]
        ell: usize,
        eps: f64,
    },
}

fn default_ell() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    #[serde(default)]
    pub t_pow: u32,
    #[serde(default)]
    pub x_pow: u32,
    pub matrix: Vec<Vec<f64>>,
}

const PRESETS: [(&str, &str); 8] = [
    ("kmm1-ref", include_str!("../presets/kmm1-ref.json")),
    ("k1m2-zero", include_str!("../presets/k1m2-zero.json")),
    ("k2m1-zero", include_str!("../presets/k2m1-zero.json")),
    ("k2m2-zero", include_str!("../presets/k2m2-zero.json")),
    ("thm1-ref", include_str!("../presets/thm1-ref.json")),
    ("coupled-pair", include_str!("../presets/coupled-pair.json")),
    ("analytic-t", include_str!("../presets/analytic-t.json")),
    ("affine-coupled", include_str!("../presets/affine-coupled.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset(name: &str) -> Result<SystemConfig, CliError> {
    let text = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let known: Vec<_> = preset_names().collect();
            CliError::Config(format!("unknown preset '{name}' (known: {})", known.join(", ")))
        })?;
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("preset '{name}': {e}")))
}

pub fn load(path: &Path) -> Result<SystemConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read system file {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<DMatrix<f64>, Error> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what} must be {r}×{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl SystemConfig {
    pub fn n(&self) -> usize {
        self.k + self.m
    }

    pub fn boundary(&self) -> Result<DMatrix<f64>, Error> {
        matrix(&self.b, self.k, self.m, "B")
    }

    /// Replace ε of a `thm1` coupling; other couplings are left alone.
    pub fn set_eps(&mut self, eps: f64) -> bool {
        match &mut self.coupling {
            CouplingConfig::ClosedForm(ClosedForm::Thm1 { eps: e, .. }) => {
                *e = eps;
                true
            }
            _ => false,
        }
    }

    /// The counterexample parameters behind a `thm1` coupling.
    pub fn counterexample(&self) -> Result<CounterexampleSpec, Error> {
        let (ell, eps) = match &self.coupling {
            CouplingConfig::ClosedForm(ClosedForm::Thm1 { ell, eps }) => (*ell, *eps),
            _ => return Err(Error::Precondition("the system does not carry a thm1 coupling".into())),
        };
        let lambdas = self
            .speeds
            .iter()
            .map(|s| match s {
                SpeedConfig::Const { value } => Ok(*value),
                _ => Err(Error::Precondition("thm1 coupling needs constant speeds".into())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CounterexampleSpec { k: self.k, m: self.m, ell, lambdas, b: self.boundary()?, eps })
    }

    pub fn build(&self) -> Result<SystemSpec, Error> {
        let n = self.n();
        let speeds = self
            .speeds
            .iter()
            .map(|s| {
                Ok(match s {
                    SpeedConfig::Const { value } => Speed::Const(*value),
                    SpeedConfig::Affine { a, b } => Speed::Affine { a: *a, b: *b },
                    SpeedConfig::Grid { x, v } => Speed::Grid(CubicSpline::new(x.clone(), v.clone())?),
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let coupling = match &self.coupling {
            CouplingConfig::Zero => CouplingField::zero(n),
            CouplingConfig::Grid { t, x, values } => {
                CouplingField::grid(n, t.clone(), x.clone(), values.clone())?
            }
            CouplingConfig::ClosedForm(ClosedForm::Thm1 { .. }) => build_coefficients(&self.counterexample()?)?,
            CouplingConfig::ClosedForm(ClosedForm::Poly { terms }) => poly(n, terms)?,
        };
        SystemSpec::new(self.k, self.m, speeds, coupling, self.boundary()?)
    }
}

fn poly(n: usize, terms: &[PolyTerm]) -> Result<CouplingField, Error> {
    if terms.is_empty() {
        return Ok(CouplingField::zero(n));
    }
    let mats = terms
        .iter()
        .map(|t| Ok((t.t_pow as i32, t.x_pow as i32, matrix(&t.matrix, n, n, "coupling matrix")?)))
        .collect::<Result<Vec<_>, Error>>()?;
    if mats.iter().all(|(_, _, m)| m.iter().all(|v| *v == 0.0)) {
        return Ok(CouplingField::zero(n));
    }
    if mats.iter().any(|(_, _, m)| m.iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain("coupling matrix has non-finite entries".into()));
    }
    let ti = mats.iter().all(|(p, _, _)| *p == 0);
    let mats = Arc::new(mats);
    Ok(CouplingField::closed_form(n, "poly", ti, move |t, x, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (p, q, m) in mats.iter() {
            let w = t.powi(*p) * x.powi(*q);
            for (idx, o) in out.iter_mut().enumerate() {
                *o += w * m[(idx / n, idx % n)];
            }
        }
    }))
}
