//! Argument parsing and the subcommands.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use hyperctrl_core::broad_solver::{PicardReport, ProblemData, Resolution, SolutionField, Solver};
use hyperctrl_core::characteristics::CharacteristicFlow;
use hyperctrl_core::controllability::{hum_control, null_controllability_verdict, GramianOperator, HumOptions, VerdictReport};
use hyperctrl_core::counterexample::{build_dual_witness, observability_failure_scan, WitnessReport};
use hyperctrl_core::duality::{adjoint_identity_defect, pairing_check, ControlToStateMap, PairingMode};
use hyperctrl_core::spectral::{compute_h, dim_scan, KernelRoute};
use hyperctrl_core::system_model::{check_b_class, BClass, SystemSpec};
use hyperctrl_core::Error;
use serde_json::{json, Value};

use crate::config::{self, SystemConfig};
use crate::data::{self, Source};
use crate::output::{num, nums, provenance, report, OutDir};
use crate::threads::RayonColumns;
use crate::CliError;

/// Smallest accepted grid counts.
pub const MIN_CELLS: usize = 16;

#[derive(Parser, Debug)]
#[command(name = "hyperctrl", version, about = "Simulation, control and observability of 1-D linear hyperbolic systems")]
pub struct Cli {
    /// Worker threads for Gramian and operator assembly (0 = one per core).
    #[arg(long, global = true, env = "HYPERCTRL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
#[group(multiple = false)]
pub struct SystemArgs {
    /// JSON system file.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Bundled preset (kmm1-ref, k1m2-zero, k2m1-zero, k2m2-zero, thm1-ref, coupled-pair, analytic-t, affine-coupled).
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    /// Time cells over the window.
    #[arg(long, default_value_t = 200)]
    pub nt: usize,
    /// Cells across the slowest component.
    #[arg(long, default_value_t = 200)]
    pub nx: usize,
    /// Fixed time step; overrides --nt and --nx so that windows share one grid.
    #[arg(long)]
    pub step: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PicardArgs {
    /// Picard stopping tolerance on the max-node difference.
    #[arg(long, default_value_t = 1e-12)]
    pub picard_tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Check {
    /// ⟨u(T), φ⟩ = ⟨u0, v(0)⟩ for zero control.
    St1,
    /// Same pairing for a dual solution with vanishing observation.
    St2,
    /// ⟨𝒻U, φ⟩ = ⟨U, 𝒻*φ⟩.
    Adjoint,
}

impl Check {
    fn as_str(&self) -> &'static str {
        match self {
            Check::St1 => "st1",
            Check::St2 => "st2",
            Check::Adjoint => "adjoint",
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print n, k, m, travel times, T_opt, τ_k + τ_{k+1} and B-class memberships.
    Info {
        #[command(flatten)]
        system: SystemArgs,
        /// Print the expanded JSON configuration instead.
        #[arg(long)]
        dump: bool,
    },
    /// Characteristic x_i(t; s, ξ) sampled between s and t, as CSV on stdout.
    Flow {
        #[command(flatten)]
        system: SystemArgs,
        /// Component, 1-based.
        #[arg(long)]
        i: usize,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        xi: f64,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 16)]
        samples: usize,
    },
    /// Forward solve from u0 with boundary controls.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        picard: PicardArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// Initial state: tag or CSV (x,u_1,…).
        #[arg(long, default_value = "zero")]
        u0: String,
        /// Controls on the plus components: tag or CSV (t,c_1,…).
        #[arg(long, default_value = "zero")]
        control: String,
    },
    /// Backward solve of the dual system from terminal data φ.
    Adjoint {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        picard: PicardArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value = "zero")]
        phi: String,
    },
    /// Ω problem with staggered boundary conditions.
    Omega {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        picard: PicardArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long)]
        horizon: f64,
        /// x = 1 traces of all components: tag or CSV (t,f_1,…).
        #[arg(long, default_value = "zero")]
        f: String,
        /// Initial plus part: tag or CSV (x,g_1,…,g_n; minus columns ignored).
        #[arg(long, default_value = "zero")]
        g: String,
    },
    /// Duality identities on random smooth data.
    Duality {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_enum)]
        check: Check,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pass threshold on the relative defect.
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
    },
    /// Minimal-norm (HUM) control steering u0 to zero.
    Hum {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long = "T")]
        horizon: f64,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        #[arg(long, default_value = "random:0")]
        u0: String,
        #[arg(long, default_value_t = 1e-10)]
        cg_tol: f64,
        #[arg(long, default_value_t = 500)]
        cg_max_iter: usize,
        /// Apply the Gramian by solves instead of the assembled matrix.
        #[arg(long)]
        matrix_free: bool,
    },
    /// Observability constants and null-controllability verdicts.
    Observability {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long = "T", required_unless_present = "scan")]
        horizon: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        /// Horizons T0:T1:points (endpoints included).
        #[arg(long)]
        scan: Option<String>,
    },
    /// Dual witness of the smooth-coupling counterexample.
    Counterexample {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long)]
        eps: Option<f64>,
        /// Sample count of the witness checks.
        #[arg(long, default_value_t = 800)]
        samples: usize,
        /// Also scan ε with the Gramian constant.
        #[arg(long)]
        scan: bool,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2")]
        eps_list: Vec<f64>,
        /// Time step of the Gramian used by --scan.
        #[arg(long, default_value_t = 0.025)]
        gramian_step: f64,
        /// Points per axis of the witness field dump.
        #[arg(long, default_value_t = 101)]
        field_points: usize,
    },
    /// Obstruction space H(τ) and its dimension.
    Spectrum {
        #[command(flatten)]
        system: SystemArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, required_unless_present = "scan")]
        tau: Option<f64>,
        /// Defaults to T_opt.
        #[arg(long)]
        horizon: Option<f64>,
        /// τ values t0:t1:points.
        #[arg(long)]
        scan: Option<String>,
        /// Write the basis of H(τ) (single τ only).
        #[arg(long)]
        basis: bool,
    },
}

/// Parse `argv` (program name first) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli) {
        Ok(line) => {
            // a closed pipe (`| head`) is not an error
            let _ = writeln!(std::io::stdout().lock(), "{line}");
            0
        }
        Err(e) => {
            eprintln!("hyperctrl: {e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command; returns the one-line summary.
pub fn execute(cli: Cli) -> Result<String, CliError> {
    let threads = cli.threads.unwrap_or(0);
    match cli.command {
        Command::Info { system, dump } => info(&system, dump),
        Command::Flow { system, i, s, xi, t, samples } => flow(&system, i, s, xi, t, samples),
        Command::Simulate { system, grid, picard, out, horizon, t0, u0, control } => {
            let ctx = Ctx::new(&system, Some(&grid), &out, threads)?;
            simulate(&ctx, &picard, t0, horizon, &u0, &control)
        }
        Command::Adjoint { system, grid, picard, out, horizon, t0, phi } => {
            let ctx = Ctx::new(&system, Some(&grid), &out, threads)?;
            adjoint(&ctx, &picard, t0, horizon, &phi)
        }
        Command::Omega { system, grid, picard, out, tau, horizon, f, g } => {
            let ctx = Ctx::new(&system, Some(&grid), &out, threads)?;
            omega(&ctx, &picard, tau, horizon, &f, &g)
        }
        Command::Duality { system, grid, out, check, horizon, samples, seed, tolerance } => {
            let ctx = Ctx::new(&system, Some(&grid), &out, threads)?;
            duality(&ctx, check, horizon, samples, seed, tolerance)
        }
        Command::Hum { system, grid, out, horizon, tau, u0, cg_tol, cg_max_iter, matrix_free } => {
            let ctx = Ctx::new(&system, Some(&grid), &out, threads)?;
            let opts = HumOptions { max_iter: cg_max_iter, tol: cg_tol, matrix_free };
            hum(&ctx, tau, horizon, &u0, &opts)
        }
        Command::Observability { system, grid, out, horizon, tau, scan } => {
            let ctx = Ctx::new(&system, Some(&grid), &out, threads)?;
            let ts = match (&scan, horizon) {
                (Some(s), _) => parse_scan(s)?,
                (None, Some(t)) => vec![t],
                (None, None) => unreachable!("clap requires --T or --scan"),
            };
            observability(&ctx, tau, &ts)
        }
        Command::Counterexample { system, out, eps, samples, scan, eps_list, gramian_step, field_points } => {
            let mut sys = system.clone();
            if sys.system.is_none() && sys.preset.is_none() {
                sys.preset = Some("thm1-ref".into());
            }
            let mut ctx = Ctx::new(&sys, None, &out, threads)?;
            if let Some(e) = eps {
                if !ctx.cfg.set_eps(e) {
                    return Err(CliError::Core(Error::Precondition("--eps needs a thm1 coupling".into())));
                }
                ctx.spec = ctx.cfg.build()?;
            }
            let params = CxParams { samples, scan, eps_list, gramian_step, field_points };
            counterexample(&ctx, &params)
        }
        Command::Spectrum { system, grid, out, tau, horizon, scan, basis } => {
            let ctx = Ctx::new(&system, Some(&grid), &out, threads)?;
            let taus = match (&scan, tau) {
                (Some(s), _) => parse_scan(s)?,
                (None, Some(t)) => vec![t],
                (None, None) => unreachable!("clap requires --tau or --scan"),
            };
            if basis && taus.len() != 1 {
                return Err(CliError::Config("--basis needs a single --tau".into()));
            }
            let horizon = horizon.unwrap_or(ctx.spec.t_opt());
            spectrum(&ctx, &taus, horizon, basis, scan.is_some())
        }
    }
}

fn load_config(system: &SystemArgs) -> Result<(SystemConfig, String), CliError> {
    match (&system.system, &system.preset) {
        (Some(p), _) => Ok((config::load(p)?, p.display().to_string())),
        (None, Some(name)) => Ok((config::preset(name)?, format!("preset:{name}"))),
        (None, None) => Err(CliError::Usage("either --system or --preset is required".into())),
    }
}

/// Validated inputs shared by the solving commands.
struct Ctx {
    cfg: SystemConfig,
    source: String,
    spec: SystemSpec,
    res: Resolution,
    grid_echo: Value,
    cols: RayonColumns,
    out: OutDir,
}

impl Ctx {
    fn new(system: &SystemArgs, grid: Option<&GridArgs>, out: &OutArgs, threads: usize) -> Result<Self, CliError> {
        let (cfg, source) = load_config(system)?;
        let (res, grid_echo) = match grid {
            Some(g) => resolution(g)?,
            None => (Resolution::uniform(200), Value::Null),
        };
        let out = OutDir::prepare(&out.out)?;
        let spec = cfg.build()?;
        let cols = RayonColumns::new(threads)?;
        Ok(Self { cfg, source, spec, res, grid_echo, cols, out })
    }

    fn config(&self, params: Value) -> Value {
        json!({ "source": self.source, "system": self.cfg, "grid": self.grid_echo, "parameters": params })
    }

    fn provenance(&self, grid: Value, tolerances: Value) -> Value {
        provenance(grid, tolerances, self.cols.threads())
    }
}

fn resolution(g: &GridArgs) -> Result<(Resolution, Value), CliError> {
    match g.step {
        Some(h) => {
            if !(h > 0.0) || !h.is_finite() {
                return Err(CliError::Config(format!("--step must be positive, got {h}")));
            }
            Ok((Resolution::with_step(h), json!({ "step": h })))
        }
        None => {
            if g.nt < MIN_CELLS || g.nx < MIN_CELLS {
                return Err(CliError::Config(format!("--nt and --nx must be at least {MIN_CELLS} (got {}, {})", g.nt, g.nx)));
            }
            Ok((Resolution::new(g.nt, g.nx), json!({ "nt": g.nt, "nx": g.nx })))
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

/// `a:b:points`, endpoints included.
pub fn parse_scan(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("scan '{s}' must look like start:end:points"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![a]);
    }
    Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect())
}

fn grid_value(g: &hyperctrl_core::broad_solver::Grid) -> Value {
    json!({
        "t0": g.t0,
        "dt": g.dt,
        "levels": g.nt + 1,
        "nodes": g.comps.iter().map(|c| c.len()).collect::<Vec<_>>(),
    })
}

fn picard_value(r: &PicardReport) -> Value {
    json!({
        "iterations": r.iterations,
        "converged": r.converged,
        "final_difference": num(r.final_difference),
        "weight_l": num(r.weight_l),
        "contraction_estimates": nums(&r.contraction_estimates),
        "max_contraction": num(r.max_contraction()),
    })
}

fn field_header(n: usize, prefix: &str) -> Vec<String> {
    let mut h = vec!["t".to_string(), "x".to_string()];
    h.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    h
}

/// Rows t, x, u_1..u_n on a uniform x grid at every level (NaN outside the domain).
fn field_rows(field: &SolutionField) -> Vec<Vec<f64>> {
    let g = &*field.grid;
    let nx = g.comps.iter().map(|c| c.len() - 1).max().unwrap_or(1).max(1);
    let mut rows = Vec::with_capacity((g.nt + 1) * (nx + 1));
    for l in 0..=g.nt {
        let t = g.time(l);
        for j in 0..=nx {
            let x = j as f64 / nx as f64;
            let mut row = vec![t, x];
            row.extend((0..g.n()).map(|i| field.sample(i, t, x)));
            rows.push(row);
        }
    }
    rows
}

fn solve_or_report(
    ctx: &Ctx,
    command: &str,
    solver: &Solver,
    data: &ProblemData,
    params: Value,
    tol: Value,
) -> Result<(SolutionField, PicardReport), CliError> {
    match solver.solve(data) {
        Ok(r) => Ok(r),
        Err(Error::NonConvergence(rep)) => {
            let body = json!({ "picard": picard_value(&rep) });
            ctx.out.write_json(
                "picard_report.json",
                report(command, ctx.config(params), ctx.provenance(grid_value(solver.grid()), tol), body),
            )?;
            Err(CliError::Core(Error::NonConvergence(rep)))
        }
        Err(e) => Err(e.into()),
    }
}

fn info(system: &SystemArgs, dump: bool) -> Result<String, CliError> {
    let (cfg, source) = load_config(system)?;
    if dump {
        let value = serde_json::to_value(&cfg).map_err(|e| CliError::Io(e.to_string()))?;
        return Ok(crate::output::to_json_string(&value));
    }
    let spec = cfg.build()?;
    let (k, m) = (spec.k(), spec.m());
    let b = spec.boundary();
    let yes = |v: Result<bool, Error>| match v {
        Ok(true) => "yes",
        Ok(false) => "no",
        Err(_) => "n/a",
    };
    let mut lines = vec![
        format!("system: {source}"),
        format!("n = {}, k = {k}, m = {m}", spec.n()),
        format!("tau = [{}]", spec.taus().iter().map(|t| format!("{t}")).collect::<Vec<_>>().join(", ")),
        format!("T_opt = {}", spec.t_opt()),
        format!("T_1 = tau_k + tau_k+1 = {}", spec.t_russell()),
        format!("B generic class: {}", yes(check_b_class(b, k, m, BClass::Generic))),
        format!("B extended class: {}", yes(check_b_class(b, k, m, BClass::Extended))),
    ];
    for i in 1..=k.min(m) {
        lines.push(format!("B row condition i = {i}: {}", yes(check_b_class(b, k, m, BClass::RowCondition(i)))));
    }
    lines.extend(spec.warnings().iter().map(|w| format!("warning: {w}")));
    Ok(lines.join("\n"))
}

fn flow(system: &SystemArgs, i: usize, s: f64, xi: f64, t: f64, samples: usize) -> Result<String, CliError> {
    let (cfg, _) = load_config(system)?;
    let spec = cfg.build()?;
    if i == 0 || i > spec.n() {
        return Err(CliError::Config(format!("--i must be between 1 and {}", spec.n())));
    }
    if samples == 0 || ![s, xi, t].iter().all(|v| v.is_finite()) {
        return Err(CliError::Config("--s, --xi, --t must be finite and --samples positive".into()));
    }
    let fl = CharacteristicFlow::new(&spec);
    let rows = (0..=samples).map(|j| {
        let tj = s + (t - s) * j as f64 / samples as f64;
        vec![tj, fl.flow(i - 1, tj, s, xi)]
    });
    let text = crate::output::csv_string(&["t".into(), "x".into()], rows);
    Ok(text.trim_end().to_string())
}

fn simulate(ctx: &Ctx, picard: &PicardArgs, t0: f64, horizon: f64, u0: &str, control: &str) -> Result<String, CliError> {
    check_positive("--T", horizon)?;
    check_positive("--picard-tol", picard.picard_tol)?;
    let (u0_src, c_src) = (Source::parse(u0, "x")?, Source::parse(control, "t")?);
    let mut solver = Solver::forward(&ctx.spec, t0, t0 + horizon, &ctx.res)?;
    solver.tol = picard.picard_tol;
    solver.max_iter = picard.max_iter;
    let g = solver.grid();
    let data = ProblemData { state: u0_src.state(g)?, boundary: c_src.trace(g, ctx.spec.m())?, ..Default::default() };
    let params = json!({ "T": horizon, "t0": t0, "u0": u0, "control": control });
    let tol = json!({ "picard_tol": picard.picard_tol, "max_iter": picard.max_iter });
    let (field, rep) = solve_or_report(ctx, "simulate", &solver, &data, params.clone(), tol.clone())?;
    let end = field.slice(g.nt);
    let body = json!({
        "picard": picard_value(&rep),
        "final_state_norm": num(g.state_norm(&end)),
        "max_abs": num(field.max_abs()),
    });
    ctx.out.write_csv("field.csv", &field_header(ctx.spec.n(), "u"), field_rows(&field))?;
    ctx.out.write_json("picard_report.json", report("simulate", ctx.config(params), ctx.provenance(grid_value(g), tol), body))?;
    Ok(format!(
        "simulate: {} Picard iterations, |u(T)| = {:.6e}, wrote {}",
        rep.iterations,
        g.state_norm(&end),
        ctx.out.path().display()
    ))
}

fn adjoint(ctx: &Ctx, picard: &PicardArgs, t0: f64, horizon: f64, phi: &str) -> Result<String, CliError> {
    check_positive("--T", horizon)?;
    check_positive("--picard-tol", picard.picard_tol)?;
    let src = Source::parse(phi, "x")?;
    let mut solver = Solver::adjoint(&ctx.spec, t0, t0 + horizon, &ctx.res)?;
    solver.tol = picard.picard_tol;
    solver.max_iter = picard.max_iter;
    let g = solver.grid();
    let data = ProblemData { state: src.state(g)?, ..Default::default() };
    let params = json!({ "T": horizon, "t0": t0, "phi": phi });
    let tol = json!({ "picard_tol": picard.picard_tol, "max_iter": picard.max_iter });
    let (field, rep) = solve_or_report(ctx, "adjoint", &solver, &data, params.clone(), tol.clone())?;
    let k = ctx.spec.k();
    let obs: Vec<Vec<f64>> = (0..ctx.spec.m()).map(|r| field.trace_x1(k + r)).collect();
    let obs_norm = g.trace_norm(&obs);
    let body = json!({
        "picard": picard_value(&rep),
        "observation_norm": num(obs_norm),
        "initial_norm": num(g.state_norm(&field.slice(0))),
    });
    ctx.out.write_csv("field.csv", &field_header(ctx.spec.n(), "v"), field_rows(&field))?;
    ctx.out.write_json("picard_report.json", report("adjoint", ctx.config(params), ctx.provenance(grid_value(g), tol), body))?;
    Ok(format!("adjoint: {} Picard iterations, |v_+(.,1)| = {obs_norm:.6e}, wrote {}", rep.iterations, ctx.out.path().display()))
}

fn omega(ctx: &Ctx, picard: &PicardArgs, tau: f64, horizon: f64, f: &str, g_src: &str) -> Result<String, CliError> {
    check_positive("--horizon", horizon)?;
    check_positive("--picard-tol", picard.picard_tol)?;
    let (fs, gs) = (Source::parse(f, "t")?, Source::parse(g_src, "x")?);
    let mut solver = Solver::omega(&ctx.spec, tau, horizon, &ctx.res)?;
    solver.tol = picard.picard_tol;
    solver.max_iter = picard.max_iter;
    let g = solver.grid();
    let k = ctx.spec.k();
    let mut state = gs.state(g)?;
    for c in state.iter_mut().take(k) {
        c.iter_mut().for_each(|v| *v = 0.0);
    }
    let data = ProblemData { state, boundary: fs.trace(g, ctx.spec.n())?, ..Default::default() };
    let params = json!({ "tau": tau, "horizon": horizon, "f": f, "g": g_src });
    let tol = json!({ "picard_tol": picard.picard_tol, "max_iter": picard.max_iter });
    let (field, rep) = solve_or_report(ctx, "omega", &solver, &data, params.clone(), tol.clone())?;
    let body = json!({ "picard": picard_value(&rep), "max_abs": num(field.max_abs()) });
    ctx.out.write_csv("field.csv", &field_header(ctx.spec.n(), "w"), field_rows(&field))?;
    ctx.out.write_json("picard_report.json", report("omega", ctx.config(params), ctx.provenance(grid_value(g), tol), body))?;
    Ok(format!("omega: {} Picard iterations, wrote {}", rep.iterations, ctx.out.path().display()))
}

/// Travel time from `a` to x = 1 at the fastest local speed, a lower bound
/// for any path through the coupled dual system.
fn fastest_travel(spec: &SystemSpec, a: f64) -> f64 {
    const N: usize = 400;
    let h = (1.0 - a) / N as f64;
    let inv = |x: f64| 1.0 / spec.speeds().iter().map(|s| s.value(x)).fold(0.0, f64::max);
    (0..N).map(|j| 0.5 * h * (inv(a + j as f64 * h) + inv(a + (j + 1) as f64 * h))).sum()
}

/// Margin between the observation window and the travel time of the data.
const ST2_MARGIN: f64 = 1.5;

/// Terminal datum supported in [0, a) where no characteristic path reaches
/// x = 1 within the window.
fn silent_phi(spec: &SystemSpec, horizon: f64, g: &hyperctrl_core::broad_solver::Grid, seed: u64) -> Result<(Vec<Vec<f64>>, f64), CliError> {
    let need = ST2_MARGIN * horizon;
    if fastest_travel(spec, 0.0) <= need {
        return Err(CliError::Core(Error::Precondition(format!(
            "st2 needs T < {:.6} so that data near x = 0 stay unobserved",
            fastest_travel(spec, 0.0) / ST2_MARGIN
        ))));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if fastest_travel(spec, mid) > need {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = lo;
    let mut r = data::rng(seed ^ 0x5eed);
    let fs: Vec<data::Smooth> = (0..spec.n()).map(|_| data::Smooth::random(&mut r)).collect();
    let phi = g.sample_state(&|i, x| {
        if x >= a {
            0.0
        } else {
            let s = x / a;
            16.0 * (s * (1.0 - s)).powi(2) * fs[i].eval(s)
        }
    });
    Ok((phi, a))
}

fn duality(ctx: &Ctx, check: Check, horizon: f64, samples: usize, seed: u64, tolerance: f64) -> Result<String, CliError> {
    check_positive("--T", horizon)?;
    check_positive("--tolerance", tolerance)?;
    if samples == 0 {
        return Err(CliError::Config("--samples must be positive".into()));
    }
    let map = ControlToStateMap::new(&ctx.spec, 0.0, horizon, &ctx.res)?;
    let g = map.grid();
    let m = ctx.spec.m();
    let mut defects = Vec::with_capacity(samples);
    let mut support = Value::Null;
    for s in 0..samples as u64 {
        let mut r = data::rng(seed.wrapping_add(s));
        let u0 = data::random_compatible_state(g, &mut r);
        let d = match check {
            Check::St1 => {
                let phi = data::random_compatible_state(g, &mut r);
                let zero = vec![vec![0.0; g.nt + 1]; m];
                let d = pairing_check(&map, &u0, &zero, &phi, PairingMode::ControlledU)?;
                d / (g.state_norm(&u0) * g.state_norm(&phi))
            }
            Check::St2 => {
                let u = data::random_compatible_trace(g, m, &mut r);
                let (phi, a) = silent_phi(&ctx.spec, horizon, g, seed.wrapping_add(s))?;
                support = num(a);
                let d = pairing_check(&map, &u0, &u, &phi, PairingMode::ZeroObservationV)?;
                d / ((g.state_norm(&u0) + g.trace_norm(&u)) * g.state_norm(&phi))
            }
            Check::Adjoint => {
                let u = data::random_compatible_trace(g, m, &mut r);
                let phi = data::random_compatible_state(g, &mut r);
                adjoint_identity_defect(&map, &u, &phi)? / (g.trace_norm(&u) * g.state_norm(&phi))
            }
        };
        defects.push(d);
    }
    let defect = defects.iter().cloned().fold(0.0, f64::max);
    let pass = defect < tolerance;
    let params = json!({ "check": check.as_str(), "T": horizon, "samples": samples, "seed": seed, "tolerance": tolerance });
    let body = json!({
        "check": check.as_str(),
        "defect": num(defect),
        "defects": nums(&defects),
        "tolerance": num(tolerance),
        "pass": pass,
        "phi_support_end": support,
    });
    ctx.out.write_json(
        "duality_report.json",
        report("duality", ctx.config(params), ctx.provenance(grid_value(g), json!({ "tolerance": tolerance })), body),
    )?;
    Ok(format!("duality {}: max relative defect {defect:.3e} (tolerance {tolerance:e}) pass = {pass}", check.as_str()))
}

fn hum(ctx: &Ctx, tau: f64, horizon: f64, u0: &str, opts: &HumOptions) -> Result<String, CliError> {
    check_positive("--T", horizon)?;
    check_positive("--cg-tol", opts.tol)?;
    let src = Source::parse(u0, "x")?;
    let gram = GramianOperator::assemble(&ctx.spec, tau, horizon, &ctx.res, &ctx.cols)?;
    let map = gram.map();
    let g = map.grid();
    let state = src.state(g)?;
    let sol = hum_control(&gram, &state, opts)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=ctx.spec.m()).map(|j| format!("c_{j}")));
    let rows = (0..=g.nt).map(|l| {
        let mut row = vec![g.time(l)];
        row.extend(sol.control.iter().map(|c| c[l]));
        row
    });
    ctx.out.write_csv("control.csv", &header, rows)?;
    let rel = if sol.initial_norm > 0.0 { sol.residual / sol.initial_norm } else { 0.0 };
    let params = json!({ "T": horizon, "tau": tau, "u0": u0, "matrix_free": opts.matrix_free });
    let tol = json!({ "cg_tol": opts.tol, "cg_max_iter": opts.max_iter });
    let body = json!({
        "residual": num(sol.residual),
        "initial_norm": num(sol.initial_norm),
        "relative_residual": num(rel),
        "control_norm": num(g.trace_norm(&sol.control)),
        "cg_iterations": sol.cg_iterations,
        "cg_relative_residual": num(sol.cg_relative_residual),
        "converged": sol.converged,
        "regularization": num(sol.regularization),
        "floor": num(sol.floor),
        "compatible_dim": gram.dim(),
    });
    ctx.out.write_json("hum_report.json", report("hum", ctx.config(params), ctx.provenance(grid_value(g), tol), body))?;
    if !sol.converged {
        return Err(CliError::NonConvergence(format!(
            "CG stopped after {} iterations at relative residual {:.3e}",
            sol.cg_iterations, sol.cg_relative_residual
        )));
    }
    Ok(format!(
        "hum: |u(T)|/|u0| = {rel:.3e} after {} CG iterations, wrote {}",
        sol.cg_iterations,
        ctx.out.path().display()
    ))
}

fn verdict_value(v: &VerdictReport) -> Value {
    json!({
        "T": num(v.horizon),
        "constant": num(v.gramian_constant),
        "null_constant": num(v.constant),
        "trace": num(v.trace),
        "dim": v.dim,
        "largest": num(v.largest),
        "condition_number": num(v.condition_number),
        "controllable_threshold": num(v.controllable_threshold),
        "degenerate_threshold": num(v.degenerate_threshold),
        "verdict": v.verdict.as_str(),
        "note": v.note,
    })
}

fn observability(ctx: &Ctx, tau: f64, ts: &[f64]) -> Result<String, CliError> {
    for t in ts {
        check_positive("--T", *t)?;
    }
    let mut rows = Vec::with_capacity(ts.len());
    let mut grids = Vec::with_capacity(ts.len());
    for &t in ts {
        let gram = GramianOperator::assemble(&ctx.spec, tau, t, &ctx.res, &ctx.cols)?;
        grids.push(grid_value(gram.map().grid()));
        rows.push(null_controllability_verdict(&gram));
    }
    ctx.out.write_csv(
        "scan.csv",
        &["T".into(), "constant".into()],
        ts.iter().zip(&rows).map(|(t, v)| vec![*t, v.gramian_constant]),
    )?;
    let params = json!({ "T": ts, "tau": tau });
    let body = json!({ "rows": rows.iter().map(verdict_value).collect::<Vec<_>>() });
    ctx.out.write_json(
        "observability_report.json",
        report("observability", ctx.config(params), ctx.provenance(Value::Array(grids), Value::Null), body),
    )?;
    let last = rows.last().expect("at least one horizon");
    Ok(format!(
        "observability: {} horizon(s), last T = {} constant {:.3e} verdict {}",
        rows.len(),
        ts[ts.len() - 1],
        last.gramian_constant,
        last.verdict.as_str()
    ))
}

struct CxParams {
    samples: usize,
    scan: bool,
    eps_list: Vec<f64>,
    gramian_step: f64,
    field_points: usize,
}

fn witness_value(r: &WitnessReport) -> Value {
    let defects: serde_json::Map<String, Value> =
        r.identity_defects.named().iter().map(|(k, v)| (k.to_string(), num(*v))).collect();
    json!({
        "eps": num(r.eps),
        "horizon": num(r.horizon),
        "interval": nums(&[r.interval.0, r.interval.1]),
        "samples": r.samples,
        "obs_norm": num(r.obs_norm),
        "initial_norm": num(r.initial_norm),
        "ratio": num(r.obs_norm / r.initial_norm),
        "identity_defects": defects,
        "threshold_band_max": num(r.threshold_band_max),
        "grid_obs_ratio": num(r.grid_obs_ratio),
        "grid_initial_deviation": num(r.grid_initial_deviation),
        "pass": r.pass,
    })
}

fn counterexample(ctx: &Ctx, p: &CxParams) -> Result<String, CliError> {
    let cx = ctx.cfg.counterexample()?;
    if p.field_points < 2 {
        return Err(CliError::Config("--field-points must be at least 2".into()));
    }
    check_positive("--gramian-step", p.gramian_step)?;
    let (field, rep) = build_dual_witness(&cx, p.samples)?;
    let n = ctx.spec.n();
    let np = p.field_points - 1;
    let rows = (0..=np).flat_map(|a| {
        let t = rep.horizon * a as f64 / np as f64;
        let field = &field;
        (0..=np).map(move |b| {
            let x = b as f64 / np as f64;
            let mut row = vec![t, x];
            row.extend((0..n).map(|i| field.sample(i, t, x)));
            row
        })
    });
    ctx.out.write_csv("witness_field.csv", &field_header(n, "v"), rows)?;
    let mut body = witness_value(&rep);
    if p.scan {
        let res = Resolution::with_step(p.gramian_step);
        let scan = observability_failure_scan(&cx, &p.eps_list, p.samples, &res, &ctx.cols)?;
        let rows: Vec<Value> = scan
            .rows
            .iter()
            .map(|r| {
                json!({
                    "eps": num(r.eps),
                    "T": num(r.horizon),
                    "witness_ratio": num(r.witness_ratio),
                    "witness_pass": r.witness_pass,
                    "constant": num(r.constant),
                    "constant_rel_trace": num(r.constant_rel_trace),
                    "verdict": verdict_value(&r.verdict),
                })
            })
            .collect();
        ctx.out.write_csv(
            "failure_scan.csv",
            &["eps".into(), "T".into(), "witness_ratio".into(), "constant".into(), "constant_rel_trace".into()],
            scan.rows.iter().map(|r| vec![r.eps, r.horizon, r.witness_ratio, r.constant, r.constant_rel_trace]),
        )?;
        body["scan"] = json!({ "rows": rows, "reference": scan.reference.as_ref().map(verdict_value) });
    }
    let params = json!({
        "eps": num(cx.eps),
        "samples": p.samples,
        "scan": p.scan,
        "eps_list": nums(&p.eps_list),
        "gramian_step": num(p.gramian_step),
        "field_points": p.field_points,
    });
    let tol = json!({
        "witness_abs": hyperctrl_core::counterexample::WITNESS_TOL_ABS,
        "witness_rel": hyperctrl_core::counterexample::WITNESS_TOL_REL,
        "identity": hyperctrl_core::counterexample::IDENTITY_TOL,
    });
    ctx.out.write_json(
        "counterexample_report.json",
        report("counterexample", ctx.config(params), ctx.provenance(grid_value(&field.grid), tol), body),
    )?;
    Ok(hyperctrl_core::counterexample::summary(&rep))
}

fn spectrum(ctx: &Ctx, taus: &[f64], horizon: f64, basis: bool, scanned: bool) -> Result<String, CliError> {
    check_positive("--horizon", horizon)?;
    let params = json!({ "tau": taus, "horizon": horizon, "basis": basis });
    let tol = json!({
        "kernel_rel": hyperctrl_core::spectral::KERNEL_REL,
        "gram_kernel_rel": hyperctrl_core::spectral::GRAM_KERNEL_REL,
        "gap_min": hyperctrl_core::spectral::GAP_MIN,
    });
    let route = |r: KernelRoute| match r {
        KernelRoute::Operators => "operators",
        KernelRoute::Gramian => "gramian",
    };
    let (rows, dims): (Vec<Value>, Vec<usize>) = if scanned {
        let scan = dim_scan(&ctx.spec, taus, horizon, &ctx.res, &ctx.cols)?;
        let rows = scan
            .iter()
            .map(|r| json!({ "tau": num(r.tau), "dim": r.dim, "gap": num(r.gap), "low_confidence": r.low_confidence, "flagged": r.flagged }))
            .collect();
        (rows, scan.iter().map(|r| r.dim).collect())
    } else {
        let h = compute_h(&ctx.spec, taus[0], horizon, &ctx.res, &ctx.cols)?;
        if basis {
            let mut header = vec!["component".to_string(), "x".to_string()];
            header.extend((1..=h.dim()).map(|j| format!("phi_{j}")));
            let funcs: Vec<Vec<Vec<f64>>> = (0..h.dim()).map(|j| h.function(j)).collect();
            let g = &*h.grid;
            let rows = g.comps.iter().enumerate().flat_map(|(i, c)| {
                let funcs = &funcs;
                c.x.iter().enumerate().map(move |(node, &x)| {
                    let mut row = vec![(i + 1) as f64, x];
                    row.extend(funcs.iter().map(|f| f[i][node]));
                    row
                })
            });
            ctx.out.write_csv("basis.csv", &header, rows)?;
        }
        let row = json!({
            "tau": num(taus[0]),
            "dim": h.dim(),
            "gap": num(h.gap),
            "low_confidence": h.low_confidence,
            "flagged": false,
            "route": route(h.route),
            "threshold": num(h.threshold),
            "certificate": nums(&h.certificate),
            "spectrum_tail": nums(&h.spectrum.iter().rev().take(8).cloned().collect::<Vec<_>>()),
        });
        (vec![row], vec![h.dim()])
    };
    let body = json!({ "horizon": num(horizon), "rows": rows });
    ctx.out.write_json(
        "spectrum_report.json",
        report("spectrum", ctx.config(params), ctx.provenance(json!({ "resolution": ctx.grid_echo }), tol), body),
    )?;
    Ok(format!("spectrum: dim H = {dims:?} at horizon {horizon}, wrote {}", ctx.out.path().display()))
}
