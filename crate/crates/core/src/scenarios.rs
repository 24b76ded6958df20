//! Built-in experiments, their exact solutions, and the scenario file format.
//!
//! # File format
//!
//! Line oriented. `#` starts a comment, blank lines are ignored, `[name]`
//! opens a section and every other line is `key = value`. Sections:
//!
//! | section      | keys |
//! |--------------|------|
//! | `[scenario]` | `name`, `pair`, `exact` (`none`, `linear`, `vortex`, `stationary`) |
//! | `[mesh]`     | `nx`, `ny`, `lx`, `ly`, `x0`, `y0`, `bc_x`, `bc_y` |
//! | `[physics]`  | `gravity`, `nu_r` (required), `b`, `t_ref`, `t_e`, `h_min`, `lambda_cap` |
//! | `[time]`     | `t_final`, `courant`, `dt`, `dt_init`, `dt_floor`, `dt_max`, `max_steps` |
//! | `[ic]`       | `kind` plus the keys of that kind, see below |
//! | `[vent.N]`   | `x`, `y`, `sigma`, `discharge` (`constant`, `chaotic`), `q`, `t_e` |
//! | `[output]`   | `log`, `snapshot_every`, `snapshot_prefix` |
//!
//! Initial-condition kinds:
//!
//! * `linear` (1D): `speed`, `rates` (comma separated), `profile` (`constant`,
//!   `bell`, `alternating`), `q0`;
//! * `vortex`: `h0`, `depth_min`, `u_inf`, `xc`, `yc`, `r0`, `temperature`;
//! * `lake-at-rest`: `zeta`, `ht`, `topography` (`flat`, `wb-bump`);
//! * `dry`: `topography`.
//!
//! Vent sections are numbered from 0 without gaps. Unknown sections and keys
//! are errors. Floats are written in shortest round-trip form, so a written
//! config parses back to an identical value.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::butcher::PairId;
use crate::error::{Error, Result};
use crate::lava_model::{Discharge, PhysicsParams, VentSpec};
use crate::mesh2d::{BoundaryKind, Field, Layout, Mesh2D, State};
use crate::scheme1d::{Grid1D, LinearProblem, Profile, Stepping};
use crate::solver2d::{Solver, TimeControl};

pub const BUILTIN_NAMES: [&str; 7] = [
    "reaction",
    "advreact",
    "advreact-alternating",
    "vortex",
    "lake-at-rest",
    "vent-constant",
    "vent-chaotic",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactSolution {
    None,
    /// `q0(x - a t) e^{-χ t}`
    Linear,
    /// Initial vortex translated by `u_inf t`.
    Vortex,
    /// The initial state itself.
    Stationary,
}

impl ExactSolution {
    pub fn name(self) -> &'static str {
        match self {
            ExactSolution::None => "none",
            ExactSolution::Linear => "linear",
            ExactSolution::Vortex => "vortex",
            ExactSolution::Stationary => "stationary",
        }
    }
}

impl FromStr for ExactSolution {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "linear" => Ok(Self::Linear),
            "vortex" => Ok(Self::Vortex),
            "stationary" => Ok(Self::Stationary),
            _ => Err(Error::Config(format!("unknown exact solution '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub origin: [f64; 2],
    pub bc: [BoundaryKind; 2],
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh2D> {
        Mesh2D::rectangle(self.nx, self.ny, self.lx, self.ly, self.origin, self.bc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSpec {
    pub t_final: f64,
    pub courant: f64,
    /// Fixed step; 1D only.
    pub dt: Option<f64>,
    pub dt_init: f64,
    pub dt_floor: f64,
    pub dt_max: f64,
    pub max_steps: Option<usize>,
}

impl TimeSpec {
    pub fn control(&self) -> TimeControl {
        TimeControl {
            courant: self.courant,
            dt_init: self.dt_init,
            dt_floor: self.dt_floor,
            dt_max: self.dt_max,
            max_steps: self.max_steps.unwrap_or(usize::MAX),
        }
    }
}

impl Default for TimeSpec {
    fn default() -> Self {
        let tc = TimeControl::default();
        Self {
            t_final: 1.0,
            courant: tc.courant,
            dt: None,
            dt_init: tc.dt_init,
            dt_floor: tc.dt_floor,
            dt_max: tc.dt_max,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearProfile {
    Constant,
    Bell,
    Alternating,
}

impl LinearProfile {
    pub fn name(self) -> &'static str {
        match self {
            LinearProfile::Constant => "constant",
            LinearProfile::Bell => "bell",
            LinearProfile::Alternating => "alternating",
        }
    }
}

impl FromStr for LinearProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "bell" => Ok(Self::Bell),
            "alternating" => Ok(Self::Alternating),
            _ => Err(Error::Config(format!("unknown profile '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topography {
    Flat,
    /// See [`wb_topography`].
    WbBump,
}

impl Topography {
    pub fn name(self) -> &'static str {
        match self {
            Topography::Flat => "flat",
            Topography::WbBump => "wb-bump",
        }
    }

    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            Topography::Flat => 0.0,
            Topography::WbBump => wb_topography(x, y),
        }
    }
}

impl FromStr for Topography {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Self::Flat),
            "wb-bump" => Ok(Self::WbBump),
            _ => Err(Error::Config(format!("unknown topography '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexParams {
    pub h0: f64,
    /// Depth at the vortex centre (not the wet threshold).
    pub depth_min: f64,
    pub u_inf: f64,
    pub center: [f64; 2],
    pub r0: f64,
    pub temperature: f64,
}

impl Default for VortexParams {
    fn default() -> Self {
        Self {
            h0: 1.0,
            depth_min: 0.9,
            u_inf: 6.0,
            center: [0.5, 0.5],
            r0: 0.25,
            temperature: 300.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Linear {
        speed: f64,
        rates: Vec<f64>,
        profile: LinearProfile,
        q0: f64,
    },
    Vortex(VortexParams),
    LakeAtRest {
        zeta: f64,
        ht: f64,
        topography: Topography,
    },
    Dry {
        topography: Topography,
    },
}

impl InitialCondition {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialCondition::Linear { .. } => "linear",
            InitialCondition::Vortex(_) => "vortex",
            InitialCondition::LakeAtRest { .. } => "lake-at-rest",
            InitialCondition::Dry { .. } => "dry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSpec {
    pub log: String,
    /// Steps between field snapshots; 0 writes the final field only.
    pub snapshot_every: usize,
    pub snapshot_prefix: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            log: "run_log.csv".into(),
            snapshot_every: 0,
            snapshot_prefix: "field".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub pair: PairId,
    pub exact: ExactSolution,
    pub mesh: MeshSpec,
    pub physics: PhysicsParams,
    pub time: TimeSpec,
    pub ic: InitialCondition,
    pub vents: Vec<VentSpec>,
    pub output: OutputSpec,
}

/// `H₁(x) = ∫ x cos⁴x dx`
pub fn h1(x: f64) -> f64 {
    let (s, c) = x.sin_cos();
    let c2 = c * c;
    x * c * s / 4.0 * (c2 + 1.5) + c2 * (3.0 + c2) / 16.0 + 3.0 / 16.0 * x * x
}

/// Strength giving `h(0) = depth_min`.
pub fn vortex_gamma(p: &VortexParams, g: f64) -> f64 {
    let dh = h1(PI / 2.0) - h1(0.0);
    PI / (4.0 * p.r0) * (g * (p.h0 - p.depth_min) / dh).sqrt()
}

/// `(h, u, v)` of the vortex centred at `p.center`.
pub fn vortex_initial_state(x: f64, y: f64, p: &VortexParams, g: f64) -> (f64, f64, f64) {
    vortex_at(x - p.center[0], y - p.center[1], p, g)
}

fn vortex_at(dx: f64, dy: f64, p: &VortexParams, g: f64) -> (f64, f64, f64) {
    let r = dx.hypot(dy);
    if r > p.r0 {
        return (p.h0, p.u_inf, 0.0);
    }
    let gamma = vortex_gamma(p, g);
    let rho = PI * r / p.r0;
    let amp = 2.0 * gamma * p.r0 / PI;
    let h = p.h0 - 4.0 / g * amp * amp * (h1(PI / 2.0) - h1(rho / 2.0));
    let c = (rho / 2.0).cos();
    let omega = 2.0 * gamma * c * c;
    (h, p.u_inf - dy * omega, dx * omega)
}

/// Vortex after translation by `u_inf t`, periodic in x with period `lx`.
pub fn vortex_exact(x: f64, y: f64, t: f64, p: &VortexParams, g: f64, lx: f64) -> (f64, f64, f64) {
    let mut dx = (x - p.center[0] - p.u_inf * t).rem_euclid(lx);
    if dx > 0.5 * lx {
        dx -= lx;
    }
    vortex_at(dx, y - p.center[1], p, g)
}

/// `5 exp(-(2/5)((x-5)² + (y-5)²))` on `[3,7]²`, zero elsewhere.
pub fn wb_topography(x: f64, y: f64) -> f64 {
    if (3.0..=7.0).contains(&x) && (3.0..=7.0).contains(&y) {
        5.0 * (-0.4 * (x - 5.0).powi(2) - 0.4 * (y - 5.0).powi(2)).exp()
    } else {
        0.0
    }
}

fn base(name: &str, ic: InitialCondition, mesh: MeshSpec) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        pair: PairId::MaxNu,
        exact: ExactSolution::None,
        mesh,
        physics: PhysicsParams::default(),
        time: TimeSpec::default(),
        ic,
        vents: Vec::new(),
        output: OutputSpec::default(),
    }
}

fn line_mesh(nx: usize, lx: f64) -> MeshSpec {
    MeshSpec {
        nx,
        ny: 1,
        lx,
        ly: 1.0,
        origin: [0.0; 2],
        bc: [BoundaryKind::Periodic; 2],
    }
}

fn vent_scenario(name: &str, discharge: Discharge) -> ScenarioConfig {
    let mesh = MeshSpec {
        nx: 400,
        ny: 400,
        lx: 200.0,
        ly: 200.0,
        origin: [0.0; 2],
        bc: [BoundaryKind::Wall; 2],
    };
    let mut c = base(name, InitialCondition::Dry { topography: Topography::Flat }, mesh);
    c.physics = PhysicsParams {
        nu_r: 1.0,
        b_coeff: 1e-2,
        t_ref: 2000.0,
        t_e: 2000.0,
        ..PhysicsParams::default()
    };
    c.time = TimeSpec {
        t_final: 90.0,
        courant: 1.1,
        dt_init: 1e-4,
        ..TimeSpec::default()
    };
    c.vents.push(VentSpec {
        position: [100.0, 100.0],
        sigma: 0.1,
        discharge,
        effusion_temperature: 2000.0,
    });
    c.output.snapshot_every = 0;
    c
}

pub fn build(name: &str) -> Result<ScenarioConfig> {
    let c = match name {
        "reaction" => {
            let ic = InitialCondition::Linear {
                speed: 0.0,
                rates: vec![3.0, 10.0, 100.0, 1000.0],
                profile: LinearProfile::Constant,
                q0: 1.0,
            };
            let mut c = base(name, ic, line_mesh(300, 1.0));
            c.exact = ExactSolution::Linear;
            c.time.t_final = 1.0;
            c.time.dt = Some(0.01);
            c
        }
        "advreact" | "advreact-alternating" => {
            let alternating = name == "advreact-alternating";
            let ic = InitialCondition::Linear {
                speed: 1.0,
                rates: vec![if alternating { 1e3 } else { 0.05 }],
                profile: if alternating { LinearProfile::Alternating } else { LinearProfile::Bell },
                q0: 1.0,
            };
            let mut c = base(name, ic, line_mesh(if alternating { 300 } else { 200 }, 500.0));
            c.exact = ExactSolution::Linear;
            c.time.t_final = 100.0;
            c.time.courant = 1.22;
            c
        }
        "vortex" => {
            let mesh = MeshSpec {
                nx: 128,
                ny: 64,
                lx: 2.0,
                ly: 1.0,
                origin: [0.0; 2],
                bc: [BoundaryKind::Periodic; 2],
            };
            let mut c = base(name, InitialCondition::Vortex(VortexParams::default()), mesh);
            c.exact = ExactSolution::Vortex;
            c.time.t_final = 1.0 / 6.0;
            c.time.courant = 1.1;
            c
        }
        "lake-at-rest" => {
            let mesh = MeshSpec {
                nx: 200,
                ny: 200,
                lx: 10.0,
                ly: 10.0,
                origin: [0.0; 2],
                bc: [BoundaryKind::Wall; 2],
            };
            let ic = InitialCondition::LakeAtRest {
                zeta: 10.0,
                ht: 1e3,
                topography: Topography::WbBump,
            };
            let mut c = base(name, ic, mesh);
            c.exact = ExactSolution::Stationary;
            c.time.t_final = 1.0;
            c.time.courant = 1.1;
            c
        }
        "vent-constant" => vent_scenario(name, Discharge::Constant(200.0)),
        "vent-chaotic" => vent_scenario(name, Discharge::Chaotic { q0: 200.0 }),
        _ => {
            return Err(Error::Config(format!(
                "unknown scenario '{name}' (known: {})",
                BUILTIN_NAMES.join(", ")
            )))
        }
    };
    Ok(c)
}

impl ScenarioConfig {
    pub fn is_1d(&self) -> bool {
        matches!(self.ic, InitialCondition::Linear { .. })
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        for v in &self.vents {
            v.validate()?;
        }
        let t = &self.time;
        if !(t.t_final >= 0.0 && t.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be finite and non-negative, got {}", t.t_final)));
        }
        if let InitialCondition::Linear { speed, rates, .. } = &self.ic {
            if rates.is_empty() {
                return Err(Error::Config("linear initial condition needs at least one rate".into()));
            }
            if t.dt.is_none() && *speed == 0.0 {
                return Err(Error::Config("courant-based stepping needs a nonzero advection speed".into()));
            }
            if !self.vents.is_empty() {
                return Err(Error::Config("vents are not supported in 1D scenarios".into()));
            }
            if self.exact == ExactSolution::Vortex || self.exact == ExactSolution::Stationary {
                return Err(Error::Config(format!("exact solution '{}' needs a 2D scenario", self.exact.name())));
            }
        } else {
            if t.dt.is_some() {
                return Err(Error::Config("fixed dt is only supported in 1D scenarios".into()));
            }
            self.time.control().validate()?;
            self.mesh.build()?;
            let ok = match self.exact {
                ExactSolution::None | ExactSolution::Stationary => true,
                ExactSolution::Vortex => matches!(self.ic, InitialCondition::Vortex(_)),
                ExactSolution::Linear => false,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "exact solution '{}' does not match initial condition '{}'",
                    self.exact.name(),
                    self.ic.kind()
                )));
            }
        }
        Ok(())
    }

    /// One problem per configured rate.
    pub fn linear_problems(&self) -> Result<Vec<LinearProblem>> {
        let InitialCondition::Linear { speed, rates, profile, q0 } = &self.ic else {
            return Err(Error::Config(format!("scenario '{}' is not 1D", self.name)));
        };
        let dx = self.mesh.lx / self.mesh.nx as f64;
        let prof = match profile {
            LinearProfile::Constant => Profile::Constant(*q0),
            LinearProfile::Bell => Profile::GaussianBell { length: self.mesh.lx },
            LinearProfile::Alternating => Profile::Alternating { length: self.mesh.lx, dx },
        };
        Ok(rates.iter().map(|&r| LinearProblem::new(*speed, r, prof.clone())).collect())
    }

    pub fn grid1d(&self, prob: &LinearProblem) -> Result<Grid1D> {
        Grid1D::sample(self.mesh.nx, self.mesh.lx, |x| prob.initial_profile.eval(x))
    }

    pub fn stepping1d(&self) -> Stepping {
        match self.time.dt {
            Some(dt) => Stepping::FixedDt(dt),
            None => Stepping::Courant(self.time.courant),
        }
    }

    pub fn initial_field(&self, mesh: &Mesh2D) -> Result<Field> {
        let g = self.physics.gravity;
        let f = match &self.ic {
            InitialCondition::Linear { .. } => {
                return Err(Error::Config(format!("scenario '{}' is 1D", self.name)));
            }
            InitialCondition::Vortex(p) => Field::from_fn(mesh, Layout::Node, |x, y| {
                let (h, u, v) = vortex_initial_state(x, y, p, g);
                State::new(h, h * u, h * v, h * p.temperature, 0.0)
            }),
            InitialCondition::LakeAtRest { zeta, ht, topography } => Field::from_fn(mesh, Layout::Node, |x, y| {
                let z0 = topography.eval(x, y);
                let h = (zeta - z0).max(0.0);
                // Z moves by at most half an ulp so that h + Z == ζ holds exactly
                let z = if h > 0.0 { zeta - h } else { z0 };
                let ht = if self.physics.is_wet(h) { *ht } else { 0.0 };
                State::new(h, 0.0, 0.0, ht, z)
            }),
            InitialCondition::Dry { topography } => {
                Field::from_fn(mesh, Layout::Node, |x, y| State::new(0.0, 0.0, 0.0, 0.0, topography.eval(x, y)))
            }
        };
        Ok(f)
    }

    /// Exact node field at time `t`, when one is known.
    pub fn exact_field(&self, mesh: &Mesh2D, t: f64) -> Result<Option<Field>> {
        match (self.exact, &self.ic) {
            (ExactSolution::Stationary, _) => self.initial_field(mesh).map(Some),
            (ExactSolution::Vortex, InitialCondition::Vortex(p)) => {
                let g = self.physics.gravity;
                let lx = self.mesh.lx;
                Ok(Some(Field::from_fn(mesh, Layout::Node, |x, y| {
                    let (h, u, v) = vortex_exact(x, y, t, p, g, lx);
                    State::new(h, h * u, h * v, h * p.temperature, 0.0)
                })))
            }
            _ => Ok(None),
        }
    }

    pub fn solver(&self) -> Result<Solver> {
        self.validate()?;
        Solver::new(self.mesh.build()?, self.pair.pair(), self.physics, self.vents.clone(), self.time.control())
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let kv = |s: &mut String, k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        let f = |v: f64| format!("{v:?}");
        s.push_str("[scenario]\n");
        kv(&mut s, "name", self.name.clone());
        kv(&mut s, "pair", self.pair.name().into());
        kv(&mut s, "exact", self.exact.name().into());

        s.push_str("\n[mesh]\n");
        let m = &self.mesh;
        kv(&mut s, "nx", m.nx.to_string());
        kv(&mut s, "ny", m.ny.to_string());
        kv(&mut s, "lx", f(m.lx));
        kv(&mut s, "ly", f(m.ly));
        kv(&mut s, "x0", f(m.origin[0]));
        kv(&mut s, "y0", f(m.origin[1]));
        kv(&mut s, "bc_x", m.bc[0].name().into());
        kv(&mut s, "bc_y", m.bc[1].name().into());

        s.push_str("\n[physics]\n");
        let p = &self.physics;
        kv(&mut s, "gravity", f(p.gravity));
        kv(&mut s, "nu_r", f(p.nu_r));
        kv(&mut s, "b", f(p.b_coeff));
        kv(&mut s, "t_ref", f(p.t_ref));
        kv(&mut s, "t_e", f(p.t_e));
        kv(&mut s, "h_min", f(p.h_min));
        kv(&mut s, "lambda_cap", f(p.lambda_cap));

        s.push_str("\n[time]\n");
        let t = &self.time;
        kv(&mut s, "t_final", f(t.t_final));
        kv(&mut s, "courant", f(t.courant));
        if let Some(dt) = t.dt {
            kv(&mut s, "dt", f(dt));
        }
        kv(&mut s, "dt_init", f(t.dt_init));
        kv(&mut s, "dt_floor", f(t.dt_floor));
        kv(&mut s, "dt_max", f(t.dt_max));
        if let Some(n) = t.max_steps {
            kv(&mut s, "max_steps", n.to_string());
        }

        s.push_str("\n[ic]\n");
        kv(&mut s, "kind", self.ic.kind().into());
        match &self.ic {
            InitialCondition::Linear { speed, rates, profile, q0 } => {
                kv(&mut s, "speed", f(*speed));
                kv(&mut s, "rates", rates.iter().map(|r| f(*r)).collect::<Vec<_>>().join(", "));
                kv(&mut s, "profile", profile.name().into());
                kv(&mut s, "q0", f(*q0));
            }
            InitialCondition::Vortex(v) => {
                kv(&mut s, "h0", f(v.h0));
                kv(&mut s, "depth_min", f(v.depth_min));
                kv(&mut s, "u_inf", f(v.u_inf));
                kv(&mut s, "xc", f(v.center[0]));
                kv(&mut s, "yc", f(v.center[1]));
                kv(&mut s, "r0", f(v.r0));
                kv(&mut s, "temperature", f(v.temperature));
            }
            InitialCondition::LakeAtRest { zeta, ht, topography } => {
                kv(&mut s, "zeta", f(*zeta));
                kv(&mut s, "ht", f(*ht));
                kv(&mut s, "topography", topography.name().into());
            }
            InitialCondition::Dry { topography } => {
                kv(&mut s, "topography", topography.name().into());
            }
        }

        for (i, v) in self.vents.iter().enumerate() {
            let _ = writeln!(s, "\n[vent.{i}]");
            kv(&mut s, "x", f(v.position[0]));
            kv(&mut s, "y", f(v.position[1]));
            kv(&mut s, "sigma", f(v.sigma));
            let (kind, q) = match v.discharge {
                Discharge::Constant(q) => ("constant", q),
                Discharge::Chaotic { q0 } => ("chaotic", q0),
            };
            kv(&mut s, "discharge", kind.into());
            kv(&mut s, "q", f(q));
            kv(&mut s, "t_e", f(v.effusion_temperature));
        }

        s.push_str("\n[output]\n");
        let o = &self.output;
        kv(&mut s, "log", o.log.clone());
        kv(&mut s, "snapshot_every", o.snapshot_every.to_string());
        kv(&mut s, "snapshot_prefix", o.snapshot_prefix.clone());
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Untyped `section -> key -> value` view of a scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let ln = idx + 1;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Parse { line: ln, msg: "unterminated section header".into() })?
                    .trim()
                    .to_string();
                if raw.sections.contains_key(&name) {
                    return Err(Error::Parse { line: ln, msg: format!("duplicate section [{name}]") });
                }
                raw.sections.insert(name.clone(), (ln, BTreeMap::new()));
                current = Some(name);
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: ln, msg: format!("expected 'key = value', got '{line}'") })?;
            let sec = current
                .as_ref()
                .ok_or_else(|| Error::Parse { line: ln, msg: "key outside of any section".into() })?;
            let map = &mut raw.sections.get_mut(sec).expect("section exists").1;
            let key = k.trim().to_string();
            if map.contains_key(&key) {
                return Err(Error::Parse { line: ln, msg: format!("duplicate key '{key}' in [{sec}]") });
            }
            map.insert(key, Entry { value: v.trim().to_string(), line: ln });
        }
        Ok(raw)
    }

    /// Applies `section.key=value`; the key is split at its last dot.
    pub fn set_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not section.key=value")))?;
        let (sec, key) = path
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not section.key=value")))?;
        let entry = self.sections.entry(sec.to_string()).or_insert((0, BTreeMap::new()));
        entry.1.insert(key.to_string(), Entry { value: value.trim().to_string(), line: 0 });
        Ok(())
    }

    pub fn into_config(self) -> Result<ScenarioConfig> {
        let mut sections = self.sections;
        fn take(sections: &mut BTreeMap<String, (usize, BTreeMap<String, Entry>)>, name: &str) -> Section {
            let (line, map) = sections.remove(name).unwrap_or_default();
            Section { name: name.to_string(), line, map }
        }

        let mut sc = take(&mut sections, "scenario");
        let name = sc.req_str("name")?;
        let pair = sc.opt("pair")?.unwrap_or(PairId::MaxNu);
        let exact = sc.opt("exact")?.unwrap_or(ExactSolution::None);
        sc.finish()?;

        let mut ms = take(&mut sections, "mesh");
        let mesh = MeshSpec {
            nx: ms.req("nx")?,
            ny: ms.opt("ny")?.unwrap_or(1),
            lx: ms.req("lx")?,
            ly: ms.opt("ly")?.unwrap_or(1.0),
            origin: [ms.opt("x0")?.unwrap_or(0.0), ms.opt("y0")?.unwrap_or(0.0)],
            bc: [
                ms.opt("bc_x")?.unwrap_or(BoundaryKind::Periodic),
                ms.opt("bc_y")?.unwrap_or(BoundaryKind::Periodic),
            ],
        };
        ms.finish()?;

        let mut ps = take(&mut sections, "physics");
        let d = PhysicsParams::default();
        let physics = PhysicsParams {
            gravity: ps.opt("gravity")?.unwrap_or(d.gravity),
            nu_r: ps.req("nu_r")?,
            b_coeff: ps.opt("b")?.unwrap_or(d.b_coeff),
            t_ref: ps.opt("t_ref")?.unwrap_or(d.t_ref),
            t_e: ps.opt("t_e")?.unwrap_or(d.t_e),
            h_min: ps.opt("h_min")?.unwrap_or(d.h_min),
            lambda_cap: ps.opt("lambda_cap")?.unwrap_or(d.lambda_cap),
        };
        ps.finish()?;

        let mut ts = take(&mut sections, "time");
        let d = TimeSpec::default();
        let time = TimeSpec {
            t_final: ts.req("t_final")?,
            courant: ts.opt("courant")?.unwrap_or(d.courant),
            dt: ts.opt("dt")?,
            dt_init: ts.opt("dt_init")?.unwrap_or(d.dt_init),
            dt_floor: ts.opt("dt_floor")?.unwrap_or(d.dt_floor),
            dt_max: ts.opt("dt_max")?.unwrap_or(d.dt_max),
            max_steps: ts.opt("max_steps")?,
        };
        ts.finish()?;

        let mut is = take(&mut sections, "ic");
        let kind = is.req_str("kind")?;
        let ic = match kind.as_str() {
            "linear" => {
                let rates_s = is.req_str("rates")?;
                let rates = rates_s
                    .split(',')
                    .map(|r| {
                        r.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Config(format!("[ic] rates: '{}': {e}", r.trim())))
                    })
                    .collect::<Result<Vec<_>>>()?;
                InitialCondition::Linear {
                    speed: is.req("speed")?,
                    rates,
                    profile: is.req("profile")?,
                    q0: is.opt("q0")?.unwrap_or(1.0),
                }
            }
            "vortex" => {
                let d = VortexParams::default();
                InitialCondition::Vortex(VortexParams {
                    h0: is.opt("h0")?.unwrap_or(d.h0),
                    depth_min: is.opt("depth_min")?.unwrap_or(d.depth_min),
                    u_inf: is.opt("u_inf")?.unwrap_or(d.u_inf),
                    center: [is.opt("xc")?.unwrap_or(d.center[0]), is.opt("yc")?.unwrap_or(d.center[1])],
                    r0: is.opt("r0")?.unwrap_or(d.r0),
                    temperature: is.opt("temperature")?.unwrap_or(d.temperature),
                })
            }
            "lake-at-rest" => InitialCondition::LakeAtRest {
                zeta: is.req("zeta")?,
                ht: is.req("ht")?,
                topography: is.opt("topography")?.unwrap_or(Topography::Flat),
            },
            "dry" => InitialCondition::Dry {
                topography: is.opt("topography")?.unwrap_or(Topography::Flat),
            },
            other => return Err(is.err("kind", format!("unknown initial condition '{other}'"))),
        };
        is.finish()?;

        let mut vents = Vec::new();
        loop {
            let key = format!("vent.{}", vents.len());
            if !sections.contains_key(&key) {
                break;
            }
            let (line, map) = sections.remove(&key).expect("checked");
            let mut vs = Section { name: key, line, map };
            let kind = vs.req_str("discharge")?;
            let q: f64 = vs.req("q")?;
            let discharge = match kind.as_str() {
                "constant" => Discharge::Constant(q),
                "chaotic" => Discharge::Chaotic { q0: q },
                other => return Err(vs.err("discharge", format!("unknown discharge '{other}'"))),
            };
            vents.push(VentSpec {
                position: [vs.req("x")?, vs.req("y")?],
                sigma: vs.req("sigma")?,
                discharge,
                effusion_temperature: vs.req("t_e")?,
            });
            vs.finish()?;
        }

        let mut os = take(&mut sections, "output");
        let d = OutputSpec::default();
        let output = OutputSpec {
            log: os.opt_str("log").unwrap_or(d.log),
            snapshot_every: os.opt("snapshot_every")?.unwrap_or(d.snapshot_every),
            snapshot_prefix: os.opt_str("snapshot_prefix").unwrap_or(d.snapshot_prefix),
        };
        os.finish()?;

        if let Some((name, (line, _))) = sections.into_iter().next() {
            return Err(Error::Parse { line, msg: format!("unknown section [{name}]") });
        }
        let cfg = ScenarioConfig {
            name,
            pair,
            exact,
            mesh,
            physics,
            time,
            ic,
            vents,
            output,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

struct Section {
    name: String,
    line: usize,
    map: BTreeMap<String, Entry>,
}

impl Section {
    fn err(&self, key: &str, msg: String) -> Error {
        let line = self.map.get(key).map_or(self.line, |e| e.line);
        Error::Parse { line, msg: format!("[{}] {key}: {msg}", self.name) }
    }

    fn opt_str(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|e| e.value)
    }

    fn req_str(&mut self, key: &str) -> Result<String> {
        self.opt_str(key).ok_or_else(|| Error::Parse {
            line: self.line,
            msg: format!("[{}] missing required key '{key}'", self.name),
        })
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.map.remove(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| Error::Parse {
                line: e.line,
                msg: format!("[{}] {key}: cannot parse '{}': {err}", self.name, e.value),
            }),
        }
    }

    fn req<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let line = self.line;
        self.opt(key)?.ok_or_else(|| Error::Parse {
            line,
            msg: format!("[{}] missing required key '{key}'", self.name),
        })
    }

    fn finish(self) -> Result<()> {
        match self.map.into_iter().next() {
            None => Ok(()),
            Some((k, e)) => Err(Error::Parse {
                line: e.line,
                msg: format!("[{}] unknown key '{k}'", self.name),
            }),
        }
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    RawConfig::parse(text)?.into_config()
}

/// Parses `text` and applies `section.key=value` overrides before typing.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    let mut raw = RawConfig::parse(text)?;
    for o in overrides {
        raw.set_override(o)?;
    }
    raw.into_config()
}

/// L∞ difference per conserved component `(h, hu, hv, hT)`.
pub fn linf_errors(a: &Field, b: &Field) -> [f64; 4] {
    let mut e = [0.0f64; 4];
    for (s, t) in a.values.iter().zip(&b.values) {
        let (p, q) = (s.conserved(), t.conserved());
        for r in 0..4 {
            e[r] = e[r].max((p[r] - q[r]).abs());
        }
    }
    e
}

/// `(Σ_i (h_i - h*_i)² Δx)^{1/2}` along the node row nearest to `y`.
pub fn centerline_l2(mesh: &Mesh2D, a: &Field, b: &Field, y: f64) -> f64 {
    let j = (((y - mesh.origin[1]) / mesh.dy).round().max(0.0) as usize).min(mesh.node_dims()[1] - 1);
    let ni = mesh.node_dims()[0];
    let s: f64 = (0..ni)
        .map(|i| {
            let n = mesh.node_index(i, j);
            (a.values[n].h - b.values[n].h).powi(2)
        })
        .sum();
    (s * mesh.dx).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: f64 = 9.81;

    #[test]
    fn h1_values() {
        assert!((h1(0.0) - 0.25).abs() < 1e-16);
        assert!((h1(PI / 2.0) - 3.0 * PI * PI / 64.0).abs() < 1e-15);
        // midpoint quadrature of ∫_0^{π/2} x cos⁴x dx
        let n = 200_000;
        let hstep = PI / 2.0 / n as f64;
        let quad: f64 = (0..n)
            .map(|k| {
                let x = (k as f64 + 0.5) * hstep;
                x * x.cos().powi(4)
            })
            .sum::<f64>()
            * hstep;
        assert!((quad - (h1(PI / 2.0) - h1(0.0))).abs() < 1e-10);
    }

    #[test]
    fn vortex_examples() {
        let p = VortexParams::default();
        let (h, u, v) = vortex_initial_state(0.5, 0.5, &p, G);
        assert!((h - 0.9).abs() < 1e-14);
        assert_eq!((u, v), (6.0, 0.0));
        assert_eq!(vortex_initial_state(0.9, 0.5, &p, G), (1.0, 6.0, 0.0));
        assert_eq!(vortex_initial_state(0.5, 0.75 + 1e-12, &p, G), (1.0, 6.0, 0.0));
    }

    #[test]
    fn vortex_is_cyclostrophic() {
        // dh/dr = ω² r / g for the azimuthal speed ω r
        let p = VortexParams::default();
        for &r in &[0.03, 0.1, 0.17, 0.22] {
            let e = 1e-6;
            let hp = vortex_initial_state(0.5 + r + e, 0.5, &p, G).0;
            let hm = vortex_initial_state(0.5 + r - e, 0.5, &p, G).0;
            let (_, _, v) = vortex_initial_state(0.5 + r, 0.5, &p, G);
            let dh = (hp - hm) / (2.0 * e);
            assert!((dh - v * v / (G * r)).abs() < 1e-7, "{r}: {dh} vs {}", v * v / (G * r));
        }
    }

    #[test]
    fn vortex_smooth_at_edge() {
        let p = VortexParams::default();
        let at = |r: f64| vortex_initial_state(0.5 + r, 0.5, &p, G);
        let e = 1e-5;
        let (hi, hm, ho) = (at(0.25 - e).0, at(0.25).0, at(0.25 + e).0);
        assert!((hi - hm).abs() < 1e-10 && (ho - hm).abs() < 1e-10);
        let slope_in = (hm - at(0.25 - 2.0 * e).0) / (2.0 * e);
        assert!(slope_in.abs() < 1e-8);
        assert!((at(0.25 - e).2).abs() < 1e-7);
    }

    #[test]
    fn vortex_translation_wraps() {
        let p = VortexParams::default();
        let a = vortex_exact(1.5, 0.6, 1.0 / 6.0, &p, G, 2.0);
        let b = vortex_initial_state(0.5, 0.6, &p, G);
        assert!((a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-13);
        let c = vortex_exact(0.1, 0.5, 0.3, &p, G, 2.0);
        let d = vortex_initial_state(0.3, 0.5, &p, G);
        assert!((c.0 - d.0).abs() < 1e-14);
    }

    #[test]
    fn topography_examples() {
        assert_eq!(wb_topography(5.0, 5.0), 5.0);
        assert_eq!(wb_topography(0.0, 0.0), 0.0);
        assert!((wb_topography(3.0, 5.0) - 5.0 * (-1.6f64).exp()).abs() < 1e-14);
        assert!((wb_topography(3.0, 5.0) - 1.00948).abs() < 1e-5);
        assert_eq!(wb_topography(3.0 - 1e-12, 5.0), 0.0);
    }

    #[test]
    fn builds_published_values() {
        let v = build("vent-constant").unwrap();
        assert_eq!(v.vents[0].sigma, 0.1);
        assert_eq!(v.vents[0].discharge, Discharge::Constant(200.0));
        assert_eq!((v.mesh.lx, v.mesh.ly), (200.0, 200.0));
        assert_eq!(v.time.dt_init, 1e-4);
        let r = build("reaction").unwrap();
        assert_eq!(r.time.dt, Some(0.01));
        assert_eq!(r.mesh.nx, 300);
        let lake = build("lake-at-rest").unwrap();
        let mesh = lake.mesh.build().unwrap();
        let f = lake.initial_field(&mesh).unwrap();
        assert!(f.values.iter().all(|s| s.h + s.z == 10.0 && s.ht == 1e3));
        for (k, s) in f.values.iter().enumerate() {
            let [x, y] = mesh.node_xy(k);
            assert!((s.z - wb_topography(x, y)).abs() <= 1e-15);
        }
        assert!(build("nope").is_err());
    }

    #[test]
    fn builtins_round_trip() {
        for name in BUILTIN_NAMES {
            let c = build(name).unwrap();
            c.validate().unwrap();
            let text = c.to_config_string();
            let back = parse_config(&text).unwrap();
            assert_eq!(back, c, "{name}");
            assert_eq!(back.to_config_string(), text);
        }
    }

    #[test]
    fn parse_errors() {
        let good = build("vortex").unwrap().to_config_string();
        let bad_key = good.replace("[mesh]\n", "[mesh]\nfoo = 1\n");
        assert!(matches!(parse_config(&bad_key), Err(Error::Parse { .. })));
        let bad_section = format!("{good}\n[bogus]\n");
        assert!(parse_config(&bad_section).is_err());
        let no_nu = good.replace("nu_r = 0.0\n", "");
        assert!(parse_config(&no_nu).unwrap_err().to_string().contains("nu_r"));
        let bad_num = good.replace("nx = 128", "nx = many");
        match parse_config(&bad_num) {
            Err(Error::Parse { line, .. }) => assert!(line > 1),
            other => panic!("{other:?}"),
        }
        assert!(parse_config("x = 1").is_err());
        let over_courant = good.replace("courant = 1.1", "courant = 1.5");
        assert!(matches!(parse_config(&over_courant), Err(Error::Config(_))));
    }

    #[test]
    fn overrides() {
        let text = build("vent-chaotic").unwrap().to_config_string();
        let c = parse_config_with(&text, &["vent.0.q=50".into(), "mesh.nx=20".into(), "scenario.pair=C_EQ_CTILDE".into()])
            .unwrap();
        assert_eq!(c.vents[0].discharge, Discharge::Chaotic { q0: 50.0 });
        assert_eq!(c.mesh.nx, 20);
        assert_eq!(c.pair, PairId::CEqCTilde);
        assert!(parse_config_with(&text, &["mesh.bogus=1".into()]).is_err());
        assert!(parse_config_with(&text, &["nodot=1".into()]).is_err());
    }

    #[test]
    fn comments_and_spacing() {
        let text = build("lake-at-rest").unwrap().to_config_string();
        let noisy = text.replace("[time]", "# timing\n  [time]   # trailing\n\n");
        assert_eq!(parse_config(&noisy).unwrap(), build("lake-at-rest").unwrap());
    }

    #[test]
    fn linear_helpers() {
        let c = build("advreact").unwrap();
        let probs = c.linear_problems().unwrap();
        assert_eq!(probs.len(), 1);
        let g = c.grid1d(&probs[0]).unwrap();
        assert_eq!(g.n_cells, 200);
        assert!((g.node_values[100] - 4.0).abs() < 1e-14);
        assert_eq!(c.stepping1d(), Stepping::Courant(1.22));
        assert_eq!(build("reaction").unwrap().linear_problems().unwrap().len(), 4);
    }

    #[test]
    fn exact_fields() {
        let c = build("vortex").unwrap();
        let mesh = c.mesh.build().unwrap();
        let f0 = c.initial_field(&mesh).unwrap();
        let e0 = c.exact_field(&mesh, 0.0).unwrap().unwrap();
        assert_eq!(linf_errors(&f0, &e0), [0.0; 4]);
        assert_eq!(centerline_l2(&mesh, &f0, &e0, 0.5), 0.0);
        let e1 = c.exact_field(&mesh, 1.0 / 6.0).unwrap().unwrap();
        assert!(centerline_l2(&mesh, &f0, &e1, 0.5) > 1e-3);
    }
}
