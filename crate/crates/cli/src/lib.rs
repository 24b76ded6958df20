//! Command implementations behind the `imexlava` binary.
//!
//! Every command writes to the supplied streams and returns an exit code, so
//! the whole interface can be driven in-process.
//!
//! Exit codes: 0 success, 1 a check ran and failed, 2 usage or configuration
//! error, 3 numerical failure, 4 internal invariant breach.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use imexlava::butcher::{canonical_pair, parse_pair, ButcherPair, PairId, PairReport};
use imexlava::error::Error;
use imexlava::mesh2d::field_to_string;
use imexlava::scenarios::{self, centerline_l2, linf_errors, ExactSolution, InitialCondition, ScenarioConfig};
use imexlava::scheme1d::{self, exact_solution};
use imexlava::solver2d::{LogRow, RunLog, SolverState};
use imexlava::vn_lab::{check_space_time_l_stability, sweep, write_sweep_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "imexlava", version, about = "IMEX staggered solvers for shallow lava flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Algebraic checks on a Butcher pair
    #[command(subcommand)]
    Tableau(TableauCmd),
    /// Von Neumann analysis of the one-dimensional scheme
    #[command(subcommand)]
    Stability(StabilityCmd),
    /// One-dimensional linear advection-reaction runs
    Run1d(Run1dArgs),
    /// Run a scenario file
    Run(RunArgs),
    /// Mesh convergence study against the exact solution
    Converge(ConvergeArgs),
    /// Print a built-in scenario in the scenario file format
    Scenario {
        /// One of the built-in scenario names
        name: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum TableauCmd {
    /// Print the condition report of a canonical pair or a tableau file
    Check {
        /// C_EQ_CTILDE, MAX_NU, or a path to a tableau file
        pair: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum StabilityCmd {
    /// |G| over the (Φ, θ) grid at a fixed Courant number, as CSV
    Sweep {
        #[arg(long)]
        pair: String,
        #[arg(long)]
        nu: f64,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Condition report, stability certificate and Courant bound
    Certify {
        #[arg(long)]
        pair: String,
    },
}

#[derive(Debug, Args)]
pub struct Run1dArgs {
    #[arg(long, value_parser = ["reaction", "advreact", "alternating"])]
    pub case: String,
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub courant: Option<f64>,
    /// Fixed time step; overrides the Courant number
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Reaction rate χ; defaults to the first rate of the case
    #[arg(long)]
    pub rate: Option<f64>,
    /// Steps between emitted profiles; 0 emits the initial and final ones
    #[arg(long, default_value_t = 0)]
    pub every: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file
    pub config: PathBuf,
    /// `section.key=value`, applied before validation
    #[arg(long = "key", value_name = "SECTION.KEY=VALUE")]
    pub keys: Vec<String>,
    /// Shorthand for `--key scenario.pair=...`
    #[arg(long)]
    pub pair: Option<String>,
    /// Directory for the log and the snapshots
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// Built-in scenario name or scenario file
    pub scenario: String,
    /// Comma-separated cell counts along x; y is scaled with the aspect ratio
    #[arg(long, value_delimiter = ',', required = true)]
    pub meshes: Vec<usize>,
    #[arg(long)]
    pub pair: Option<String>,
    #[arg(long = "key", value_name = "SECTION.KEY=VALUE")]
    pub keys: Vec<String>,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_numerical() => EXIT_NUMERICAL,
            Error::OutOfRange { .. } => EXIT_INTERNAL,
            _ => EXIT_CONFIG,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::config(format!("io error: {e}"))
    }
}

type CmdResult = Result<i32, CliError>;

/// `{:.16e}`, 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return EXIT_OK;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Tableau(TableauCmd::Check { pair }) => tableau_check(&pair, out),
        Command::Stability(StabilityCmd::Sweep { pair, nu, out: path }) => stability_sweep(&pair, nu, path.as_deref(), out),
        Command::Stability(StabilityCmd::Certify { pair }) => stability_certify(&pair, out),
        Command::Run1d(a) => run1d(&a, out, err),
        Command::Run(a) => run(&a, out, err),
        Command::Converge(a) => converge(&a, out, err),
        Command::Scenario { name } => {
            write!(out, "{}", scenarios::build(&name)?.to_config_string())?;
            Ok(EXIT_OK)
        }
    }
}

/// A canonical pair by name, otherwise a tableau file.
pub fn resolve_pair(spec: &str) -> Result<(String, ButcherPair), CliError> {
    if let Ok(id) = spec.parse::<PairId>() {
        return Ok((id.name().to_string(), canonical_pair(id)));
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| CliError::config(format!("'{spec}' is neither a known pair nor a readable tableau file: {e}")))?;
    Ok((spec.to_string(), parse_pair(&text)?))
}

fn kv_text(f: impl FnOnce(&mut String) -> std::fmt::Result) -> String {
    let mut s = String::new();
    f(&mut s).expect("writing to a String cannot fail");
    s
}

fn tableau_check(spec: &str, out: &mut dyn Write) -> CmdResult {
    let (name, pair) = resolve_pair(spec)?;
    let report = PairReport::for_pair(&pair);
    writeln!(out, "pair = {name}")?;
    write!(out, "{}", kv_text(|s| report.write_kv(s)))?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn stability_sweep(spec: &str, nu: f64, path: Option<&Path>, out: &mut dyn Write) -> CmdResult {
    let (_, pair) = resolve_pair(spec)?;
    let rows = sweep(&pair, nu)?;
    match path {
        Some(p) => {
            let mut f = std::io::BufWriter::new(fs::File::create(p)?);
            write_sweep_csv(&rows, &mut f)?;
            f.flush()?;
        }
        None => write_sweep_csv(&rows, &mut &mut *out)?,
    }
    Ok(EXIT_OK)
}

fn stability_certify(spec: &str, out: &mut dyn Write) -> CmdResult {
    let (name, pair) = resolve_pair(spec)?;
    let report = PairReport::for_pair(&pair);
    let cert = check_space_time_l_stability(&pair, &name);
    write!(out, "{}", kv_text(|s| cert.write_kv(s)))?;
    write!(out, "{}", kv_text(|s| report.write_kv(s)))?;
    for (k, r) in cert.conditions.iter().enumerate() {
        if !cert.space_time_l_stable && *r != 0.0 {
            writeln!(out, "failed = l_stability_residual_{}", k + 1)?;
        }
    }
    let ok = cert.space_time_l_stable && report.passed();
    writeln!(out, "certified = {ok}")?;
    Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
}

fn run1d(a: &Run1dArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let name = if a.case == "alternating" { "advreact-alternating" } else { a.case.as_str() };
    let mut cfg = scenarios::build(name)?;
    if let Some(n) = a.cells {
        cfg.mesh.nx = n;
    }
    if let Some(t) = a.t_final {
        cfg.time.t_final = t;
    }
    if let Some(nu) = a.courant {
        cfg.time.courant = nu;
        cfg.time.dt = None;
    }
    if a.dt.is_some() {
        cfg.time.dt = a.dt;
    }
    let (pair_name, pair) = match &a.pair {
        Some(p) => resolve_pair(p)?,
        None => (cfg.pair.name().to_string(), cfg.pair.pair()),
    };
    cfg.validate()?;
    let probs = cfg.linear_problems()?;
    let prob = match a.rate {
        None => probs.into_iter().next().expect("validated configs carry a rate"),
        Some(chi) => {
            let mut p = probs.into_iter().next().expect("validated configs carry a rate");
            p.reaction_rate = chi;
            p
        }
    };
    let grid = cfg.grid1d(&prob)?;
    let ts = scheme1d::run(&prob, &grid, &pair, cfg.stepping1d(), cfg.time.t_final, a.every)?;

    let mut csv = String::from("t,x,q_numeric,q_exact,err\n");
    for (t, values) in &ts.snapshots {
        for (j, q) in values.iter().enumerate() {
            let x = grid.x(j);
            let e = exact_solution(&prob, x, *t);
            let _ = writeln!(csv, "{},{},{},{},{}", num(*t), num(x), num(*q), num(e), num((q - e).abs()));
        }
    }
    let summary = format!(
        "case = {} pair = {pair_name} cells = {} chi = {} steps = {} t = {} linf = {} l2 = {}",
        a.case,
        cfg.mesh.nx,
        num(prob.reaction_rate),
        ts.steps(),
        num(*ts.times.last().unwrap_or(&0.0)),
        num(ts.final_linf()),
        num(ts.final_l2())
    );
    match &a.out {
        Some(p) => {
            fs::write(p, csv)?;
            writeln!(out, "{summary}")?;
        }
        None => {
            out.write_all(csv.as_bytes())?;
            writeln!(err, "{summary}")?;
        }
    }
    Ok(EXIT_OK)
}

fn load_config(path: &Path, keys: &[String], pair: Option<&str>) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read scenario file '{}': {e}", path.display())))?;
    let mut keys = keys.to_vec();
    if let Some(p) = pair {
        keys.push(format!("scenario.pair={p}"));
    }
    let cfg = scenarios::parse_config_with(&text, &keys)?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let cfg = load_config(&a.config, &a.keys, a.pair.as_deref())?;
    fs::create_dir_all(&a.out_dir)?;
    let started = Instant::now();
    if cfg.is_1d() {
        run_scenario_1d(&cfg, &a.out_dir, out)?;
    } else {
        run_scenario_2d(&cfg, &a.out_dir, out, err)?;
    }
    writeln!(out, "wall_seconds = {}", num(started.elapsed().as_secs_f64()))?;
    Ok(EXIT_OK)
}

fn run_scenario_1d(cfg: &ScenarioConfig, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let pair = cfg.pair.pair();
    let mut csv = String::from("chi,step,t,dt,linf,l2\n");
    for prob in cfg.linear_problems()? {
        let grid = cfg.grid1d(&prob)?;
        let ts = scheme1d::run(&prob, &grid, &pair, cfg.stepping1d(), cfg.time.t_final, cfg.output.snapshot_every)?;
        for k in 0..ts.times.len() {
            let dt = if k == 0 { 0.0 } else { ts.dts[k - 1] };
            let _ = writeln!(
                csv,
                "{},{k},{},{},{},{}",
                num(prob.reaction_rate),
                num(ts.times[k]),
                num(dt),
                num(ts.linf[k]),
                num(ts.l2[k])
            );
        }
        writeln!(
            out,
            "chi = {} steps = {} linf = {} l2 = {}",
            num(prob.reaction_rate),
            ts.steps(),
            num(ts.final_linf()),
            num(ts.final_l2())
        )?;
    }
    fs::write(dir.join(&cfg.output.log), csv)?;
    Ok(())
}

fn snapshot_path(dir: &Path, cfg: &ScenarioConfig, step: usize) -> PathBuf {
    dir.join(format!("{}_{step:06}.txt", cfg.output.snapshot_prefix))
}

fn run_scenario_2d(cfg: &ScenarioConfig, dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let solver = cfg.solver()?;
    for w in cfg.time.control().validate()? {
        writeln!(err, "warning: {w}")?;
    }
    let mesh = solver.mesh.clone();
    let mut state = SolverState::new(&mesh, cfg.initial_field(&mesh)?)?;
    let mut log = solver.start_log(&state);
    let every = cfg.output.snapshot_every;
    let mut write_err: Option<std::io::Error> = None;
    let res = solver.advance_with(&mut state, cfg.time.t_final, &mut log, |s: &SolverState, row: &LogRow| {
        if every > 0 && row.step.is_multiple_of(every) && write_err.is_none() {
            if let Err(e) = fs::write(snapshot_path(dir, cfg, row.step), field_to_string(&mesh, &s.node_field)) {
                write_err = Some(e);
            }
        }
    });
    // outputs are kept whatever the outcome
    fs::write(dir.join(&cfg.output.log), log.to_csv())?;
    fs::write(snapshot_path(dir, cfg, state.step_count), field_to_string(&mesh, &state.node_field))?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    writeln!(out, "scenario = {}", cfg.name)?;
    writeln!(out, "pair = {}", cfg.pair)?;
    writeln!(out, "steps = {}", state.step_count)?;
    writeln!(out, "t = {}", num(state.time))?;
    writeln!(out, "min_dt = {}", num(log.min_dt().unwrap_or(f64::NAN)))?;
    writeln!(out, "mass_balance_error = {}", num(log.mass_balance_error()))?;
    if let Err(e) = res {
        writeln!(out, "status = failed")?;
        return Err(e.into());
    }
    if let Some(exact) = cfg.exact_field(&mesh, state.time)? {
        let e = linf_errors(&state.node_field, &exact);
        for (k, v) in ["h", "hu", "hv", "hT"].iter().zip(e) {
            writeln!(out, "linf_{k} = {}", num(v))?;
        }
        if let InitialCondition::Vortex(p) = &cfg.ic {
            writeln!(out, "centerline_l2_h = {}", num(centerline_l2(&mesh, &state.node_field, &exact, p.center[1])))?;
        }
    }
    writeln!(out, "status = completed")?;
    Ok(())
}

/// Least-squares slope of `ln e` against `ln(1/dx)`; `None` below two points.
pub fn observed_order(dx: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = dx
        .iter()
        .zip(err)
        .filter(|(d, e)| **d > 0.0 && **e > 0.0 && e.is_finite())
        .map(|(d, e)| (-d.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub linf: f64,
    pub l2: f64,
    pub status: String,
}

/// Mesh convergence results; orders are fitted over the completed rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub pair: String,
    pub rows: Vec<ConvergenceRow>,
    pub order_linf: Option<f64>,
    pub order_l2: Option<f64>,
    pub wall_seconds: f64,
    pub partial: bool,
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nx,ny,dx,linf,l2,status\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.nx, r.ny, num(r.dx), num(r.linf), num(r.l2), r.status);
        }
        s
    }

    pub fn table(&self) -> String {
        let mut s = format!("scenario {} pair {}\n", self.scenario, self.pair);
        let _ = writeln!(s, "{:>6} {:>6} {:>12} {:>12} {:>12}  status", "nx", "ny", "dx", "linf", "l2");
        for r in &self.rows {
            let _ = writeln!(s, "{:>6} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}  {}", r.nx, r.ny, r.dx, r.linf, r.l2, r.status);
        }
        let order = |o: Option<f64>| o.map_or("undefined".to_string(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "order linf {} l2 {}", order(self.order_linf), order(self.order_l2));
        let _ = writeln!(s, "wall seconds {:.2}{}", self.wall_seconds, if self.partial { " (partial)" } else { "" });
        s
    }
}

fn converge_one(cfg: &ScenarioConfig) -> Result<(f64, f64), Error> {
    if cfg.is_1d() {
        let prob = cfg.linear_problems()?.into_iter().next().expect("validated configs carry a rate");
        let ts = scheme1d::run(&prob, &cfg.grid1d(&prob)?, &cfg.pair.pair(), cfg.stepping1d(), cfg.time.t_final, 0)?;
        return Ok((ts.final_linf(), ts.final_l2()));
    }
    let solver = cfg.solver()?;
    let mesh = solver.mesh.clone();
    let mut state = SolverState::new(&mesh, cfg.initial_field(&mesh)?)?;
    let mut log = RunLog::default();
    solver.advance(&mut state, cfg.time.t_final, &mut log)?;
    let exact = cfg.exact_field(&mesh, state.time)?.expect("exact solution checked before running");
    let linf = linf_errors(&state.node_field, &exact)[0];
    let y = match &cfg.ic {
        InitialCondition::Vortex(p) => p.center[1],
        _ => mesh.origin[1] + 0.5 * cfg.mesh.ly,
    };
    Ok((linf, centerline_l2(&mesh, &state.node_field, &exact, y)))
}

/// Runs the scenario on each mesh; the L² column is the centerline norm of
/// `h` for 2D scenarios.
pub fn convergence_study(base: &ScenarioConfig, meshes: &[usize]) -> Result<RunReport, CliError> {
    if base.exact == ExactSolution::None {
        return Err(CliError::config(format!("scenario '{}' has no exact solution", base.name)));
    }
    let started = Instant::now();
    let mut rows = Vec::with_capacity(meshes.len());
    for &nx in meshes {
        let mut cfg = base.clone();
        cfg.mesh.nx = nx;
        if !cfg.is_1d() {
            cfg.mesh.ny = ((nx as f64) * cfg.mesh.ly / cfg.mesh.lx).round().max(1.0) as usize;
        }
        cfg.validate()?;
        let dx = cfg.mesh.lx / nx as f64;
        let (linf, l2, status) = match converge_one(&cfg) {
            Ok((a, b)) => (a, b, "ok".to_string()),
            Err(e) if e.is_numerical() => (f64::NAN, f64::NAN, format!("failed: {e}")),
            Err(e) => return Err(e.into()),
        };
        rows.push(ConvergenceRow { nx, ny: cfg.mesh.ny, dx, linf, l2, status });
    }
    let ok: Vec<&ConvergenceRow> = rows.iter().filter(|r| r.status == "ok").collect();
    let dxs: Vec<f64> = ok.iter().map(|r| r.dx).collect();
    Ok(RunReport {
        scenario: base.name.clone(),
        pair: base.pair.name().to_string(),
        order_linf: observed_order(&dxs, &ok.iter().map(|r| r.linf).collect::<Vec<_>>()),
        order_l2: observed_order(&dxs, &ok.iter().map(|r| r.l2).collect::<Vec<_>>()),
        partial: ok.len() < rows.len(),
        rows,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn converge(a: &ConvergeArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let cfg = if scenarios::BUILTIN_NAMES.contains(&a.scenario.as_str()) {
        let text = scenarios::build(&a.scenario)?.to_config_string();
        let mut keys = a.keys.clone();
        if let Some(p) = &a.pair {
            keys.push(format!("scenario.pair={p}"));
        }
        scenarios::parse_config_with(&text, &keys)?
    } else {
        load_config(Path::new(&a.scenario), &a.keys, a.pair.as_deref())?
    };
    let report = convergence_study(&cfg, &a.meshes)?;
    match &a.out {
        Some(p) => {
            fs::write(p, report.to_csv())?;
            write!(out, "{}", report.table())?;
        }
        None => {
            write!(out, "{}", report.to_csv())?;
            write!(err, "{}", report.table())?;
        }
    }
    Ok(if report.partial { EXIT_NUMERICAL } else { EXIT_OK })
}
