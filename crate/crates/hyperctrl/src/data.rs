//! Initial states, terminal data and boundary traces given on the command line.
//!
//! A source is either a tag or a CSV path. States take `zero`, `const:<c>`,
//! `sin:<k>` (sin(kπx) in every component), `bump` (16x²(1−x)² in every
//! component) and `random:<seed>`; CSV files have a header `x,u_1,…,u_n` and
//! are interpolated linearly. Traces take the same tags with time rescaled to
//! the window; their CSV header is `t,c_1,…`.
//!
//! Random data are smooth (six sine modes) and vanish where the boundary
//! relations would otherwise be violated: states carry the factor
//! 16x²(1−x)², traces the factor ((t − t₀)/T)².

use std::f64::consts::PI;
use std::path::Path;

use hyperctrl_core::broad_solver::Grid;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::CliError;

/// Sum of sine modes with random amplitude, frequency and phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Smooth {
    modes: Vec<(f64, f64, f64)>,
}

impl Smooth {
    pub fn random(r: &mut impl Rng) -> Self {
        let modes = (1..=6)
            .map(|j| (r.gen_range(-1.0..1.0) / j as f64, j as f64 * PI, r.gen_range(0.0..2.0 * PI)))
            .collect();
        Self { modes }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.modes.iter().map(|(a, w, p)| a * (w * s + p).sin()).sum()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn window_factor(x: f64) -> f64 {
    16.0 * (x * (1.0 - x)).powi(2)
}

/// Smooth state vanishing to second order at both ends of every component.
pub fn random_compatible_state(g: &Grid, r: &mut impl Rng) -> Vec<Vec<f64>> {
    let fs: Vec<Smooth> = (0..g.n()).map(|_| Smooth::random(r)).collect();
    g.sample_state(&|i, x| window_factor(x) * fs[i].eval(x))
}

/// Smooth traces vanishing to second order at the start of the window.
pub fn random_compatible_trace(g: &Grid, count: usize, r: &mut impl Rng) -> Vec<Vec<f64>> {
    let fs: Vec<Smooth> = (0..count).map(|_| Smooth::random(r)).collect();
    let (t0, len) = (g.t0, g.t1() - g.t0);
    g.sample_trace(count, &|j, t| ((t - t0) / len).powi(2) * fs[j].eval((t - t0) / len))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Zero,
    Const(f64),
    Sin(f64),
    Bump,
    Random(u64),
    /// Abscissae and one column per component.
    Table(Vec<f64>, Vec<Vec<f64>>),
}

impl Source {
    /// Parse a tag or read a CSV file with first column `axis`.
    pub fn parse(spec: &str, axis: &str) -> Result<Self, CliError> {
        let (tag, arg) = match spec.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (spec, None),
        };
        let number = |what: &str| -> Result<f64, CliError> {
            arg.ok_or_else(|| CliError::Config(format!("'{spec}': {what} needs a value")))?
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("'{spec}': {e}")))
        };
        match tag {
            "zero" => Ok(Source::Zero),
            "const" => Ok(Source::Const(number("const")?)),
            "sin" => Ok(Source::Sin(number("sin")?)),
            "bump" => Ok(Source::Bump),
            "random" => {
                let seed = arg
                    .ok_or_else(|| CliError::Config(format!("'{spec}': random needs a seed")))?
                    .parse::<u64>()
                    .map_err(|e| CliError::Config(format!("'{spec}': {e}")))?;
                Ok(Source::Random(seed))
            }
            _ => read_table(Path::new(spec), axis),
        }
    }

    fn check_columns(&self, count: usize) -> Result<(), CliError> {
        match self {
            Source::Table(_, cols) if cols.len() != count => {
                Err(CliError::Config(format!("data table has {} value columns, expected {count}", cols.len())))
            }
            _ => Ok(()),
        }
    }

    /// Nodal state on `g`.
    pub fn state(&self, g: &Grid) -> Result<Vec<Vec<f64>>, CliError> {
        self.check_columns(g.n())?;
        Ok(match self {
            Source::Random(seed) => random_compatible_state(g, &mut rng(*seed)),
            _ => g.sample_state(&|i, x| self.value(i, x)),
        })
    }

    /// `count` traces on the levels of `g`, time rescaled to [0, 1].
    pub fn trace(&self, g: &Grid, count: usize) -> Result<Vec<Vec<f64>>, CliError> {
        self.check_columns(count)?;
        let (t0, len) = (g.t0, g.t1() - g.t0);
        Ok(match self {
            Source::Random(seed) => random_compatible_trace(g, count, &mut rng(*seed)),
            // tables are given in absolute time
            Source::Table(..) => g.sample_trace(count, &|j, t| self.value(j, t)),
            _ => g.sample_trace(count, &|j, t| self.value(j, (t - t0) / len)),
        })
    }

    /// Closed-form value for component `i` at `s`.
    pub fn value(&self, i: usize, s: f64) -> f64 {
        match self {
            Source::Zero | Source::Random(_) => 0.0,
            Source::Const(c) => *c,
            Source::Sin(k) => (k * PI * s).sin(),
            Source::Bump => window_factor(s.clamp(0.0, 1.0)),
            Source::Table(xs, cols) => interpolate(xs, &cols[i], s),
        }
    }
}

fn interpolate(xs: &[f64], vs: &[f64], s: f64) -> f64 {
    let n = xs.len();
    if n == 1 || s <= xs[0] {
        return vs[0];
    }
    if s >= xs[n - 1] {
        return vs[n - 1];
    }
    let a = xs.partition_point(|v| *v <= s) - 1;
    let f = (s - xs[a]) / (xs[a + 1] - xs[a]);
    (1.0 - f) * vs[a] + f * vs[a + 1]
}

fn read_table(path: &Path, axis: &str) -> Result<Source, CliError> {
    let bad = |msg: String| CliError::Config(format!("{}: {msg}", path.display()));
    let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.get(0).map(str::trim) != Some(axis) || header.len() < 2 {
        return Err(bad(format!("expected a header starting with '{axis}' and at least one value column")));
    }
    let width = header.len();
    let mut xs = Vec::new();
    let mut cols = vec![Vec::new(); width - 1];
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != width {
            return Err(bad(format!("row {} has {} fields, expected {width}", line + 2, rec.len())));
        }
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("row {}: {e}", line + 2)))?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("row {} has non-finite values", line + 2)));
        }
        xs.push(vals[0]);
        for (c, v) in cols.iter_mut().zip(&vals[1..]) {
            c.push(*v);
        }
    }
    if xs.is_empty() {
        return Err(bad("no data rows".into()));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad(format!("'{axis}' must be strictly increasing")));
    }
    Ok(Source::Table(xs, cols))
}
