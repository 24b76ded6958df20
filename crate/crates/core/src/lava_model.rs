//! Depth-averaged lava model: fluxes, friction, vent forcing and dry states.

use std::f64::consts::PI;

use libm::{erf, erfc};

use crate::error::{Error, Result};
use crate::mesh2d::{Mesh2D, State, LL, LR, UL, UR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    /// m/s²
    pub gravity: f64,
    /// Reference kinematic viscosity, m²/s.
    pub nu_r: f64,
    /// 1/K
    pub b_coeff: f64,
    /// Reference temperature, K.
    pub t_ref: f64,
    /// Vent effusion temperature, K.
    pub t_e: f64,
    /// Wet threshold, m.
    pub h_min: f64,
    /// Saturation of the friction coefficient.
    pub lambda_cap: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            nu_r: 0.0,
            b_coeff: 0.0,
            t_ref: 0.0,
            t_e: 0.0,
            h_min: 1e-5,
            lambda_cap: 1e8,
        }
    }
}

impl PhysicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gravity > 0.0) {
            return Err(Error::Config(format!("gravity must be positive, got {}", self.gravity)));
        }
        if !(self.h_min > 0.0) {
            return Err(Error::Config(format!("h_min must be positive, got {}", self.h_min)));
        }
        if !(self.lambda_cap > 0.0) {
            return Err(Error::Config(format!("lambda_cap must be positive, got {}", self.lambda_cap)));
        }
        if !(self.nu_r >= 0.0) {
            return Err(Error::Config(format!("nu_r must be non-negative, got {}", self.nu_r)));
        }
        Ok(())
    }

    pub fn is_wet(&self, h: f64) -> bool {
        h >= self.h_min
    }

    /// `(u_x, u_y)`, zero on dry states.
    pub fn velocity(&self, s: &State) -> [f64; 2] {
        if self.is_wet(s.h) {
            [s.hu / s.h, s.hv / s.h]
        } else {
            [0.0, 0.0]
        }
    }

    /// `hT / h`, zero on dry states.
    pub fn temperature(&self, s: &State) -> f64 {
        if self.is_wet(s.h) {
            s.ht / s.h
        } else {
            0.0
        }
    }
}

/// Rows `h, hu_x, hu_y, hT`, columns `x, y`.
pub type FluxTensor = [[f64; 2]; 4];

pub fn flux(s: &State, p: &PhysicsParams) -> FluxTensor {
    let mut f = advective_flux(s, p);
    if p.is_wet(s.h) {
        let pr = 0.5 * p.gravity * s.h * s.h;
        f[1][0] += pr;
        f[2][1] += pr;
    }
    f
}

/// [`flux`] without the hydrostatic pressure `½ g h²`.
pub fn advective_flux(s: &State, p: &PhysicsParams) -> FluxTensor {
    if !p.is_wet(s.h) {
        return [[0.0; 2]; 4];
    }
    let [u, v] = p.velocity(s);
    [
        [s.hu, s.hv],
        [s.hu * u, s.hu * v],
        [s.hv * u, s.hv * v],
        [s.ht * u, s.ht * v],
    ]
}

/// `F(q) · n`
pub fn normal_flux(s: &State, n: [f64; 2], p: &PhysicsParams) -> [f64; 4] {
    flux(s, p).map(|r| r[0] * n[0] + r[1] * n[1])
}

/// `min(3 ν_r / h · exp(-b (T - T_r)), cap)`; callers gate on wetness.
pub fn friction_lambda(h: f64, t: f64, p: &PhysicsParams) -> f64 {
    debug_assert!(h > 0.0);
    let lambda = 3.0 * p.nu_r / h * (-p.b_coeff * (t - p.t_ref)).exp();
    lambda.min(p.lambda_cap)
}

/// Rate `κ` of the momentum source `-λ u = -κ (h u)`; zero on dry states.
pub fn friction_rate(s: &State, p: &PhysicsParams) -> f64 {
    if !p.is_wet(s.h) || p.nu_r == 0.0 {
        return 0.0;
    }
    friction_lambda(s.h, p.temperature(s), p) / s.h
}

/// Dry states keep `h` and lose momentum and energy.
pub fn enforce_dry(s: &State, p: &PhysicsParams) -> State {
    if p.is_wet(s.h) {
        *s
    } else {
        State { hu: 0.0, hv: 0.0, ht: 0.0, ..*s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discharge {
    Constant(f64),
    /// Modulated logistic-map forcing seeded with `q0`.
    Chaotic { q0: f64 },
}

impl Discharge {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Discharge::Constant(q) => q,
            Discharge::Chaotic { q0 } => chaotic_discharge(t, q0),
        }
    }
}

pub const LOGISTIC_R: f64 = 3.7;

pub fn logistic(x: f64) -> f64 {
    LOGISTIC_R * x * (1.0 - x)
}

/// `f(f(f(q0)))` on the raw value of `q0`.
pub fn chaotic_amplitude(q0: f64) -> f64 {
    logistic(logistic(logistic(q0)))
}

/// `max(0, Q̃ (1/2 + sin(4t)/2) cos(12t))`
pub fn chaotic_discharge(t: f64, q0: f64) -> f64 {
    let q = chaotic_amplitude(q0) * (0.5 + 0.5 * (4.0 * t).sin()) * (12.0 * t).cos();
    q.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VentSpec {
    pub position: [f64; 2],
    /// Gaussian spread, m².
    pub sigma: f64,
    pub discharge: Discharge,
    /// K
    pub effusion_temperature: f64,
}

impl VentSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::Config(format!("vent sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// `f_v(x, y) = exp(-r² / 2σ) / (2πσ)`
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.position[0];
        let dy = y - self.position[1];
        (-(dx * dx + dy * dy) / (2.0 * self.sigma)).exp() / (2.0 * PI * self.sigma)
    }
}

/// `∫_a^b N(c, σ)`, using the complementary function on the tails.
fn gauss_mass(a: f64, b: f64, c: f64, sigma: f64) -> f64 {
    let s = (2.0 * sigma).sqrt();
    let (al, be) = ((a - c) / s, (b - c) / s);
    if al >= 0.0 {
        0.5 * (erfc(al) - erfc(be))
    } else if be <= 0.0 {
        0.5 * (erfc(-be) - erfc(-al))
    } else {
        0.5 * (erf(be) - erf(al))
    }
}

fn gauss_pdf(x: f64, c: f64, sigma: f64) -> f64 {
    let d = x - c;
    (-d * d / (2.0 * sigma)).exp() / (2.0 * PI * sigma).sqrt()
}

/// `∫_a^b N(c, σ) (x - a) / (b - a) dx`
fn gauss_ramp(a: f64, b: f64, c: f64, sigma: f64) -> f64 {
    let m0 = gauss_mass(a, b, c, sigma);
    let m1 = (c - a) * m0 + sigma * (gauss_pdf(a, c, sigma) - gauss_pdf(b, c, sigma));
    m1 / (b - a)
}

/// `∫∫ f_v` over `[x_lo, x_hi] x [y_lo, y_hi]`.
pub fn vent_cell_integral(vent: &VentSpec, bounds: [f64; 4]) -> f64 {
    let [x0, x1, y0, y1] = bounds;
    gauss_mass(x0, x1, vent.position[0], vent.sigma) * gauss_mass(y0, y1, vent.position[1], vent.sigma)
}

/// Exact `∫_K f_v φ` for the four bilinear corner functions of a cell.
pub fn vent_corner_moments(vent: &VentSpec, bounds: [f64; 4]) -> [f64; 4] {
    let [x0, x1, y0, y1] = bounds;
    let (mx, my) = (
        gauss_mass(x0, x1, vent.position[0], vent.sigma),
        gauss_mass(y0, y1, vent.position[1], vent.sigma),
    );
    let (rx, ry) = (
        gauss_ramp(x0, x1, vent.position[0], vent.sigma),
        gauss_ramp(y0, y1, vent.position[1], vent.sigma),
    );
    let (lx, ly) = (mx - rx, my - ry);
    let mut out = [0.0; 4];
    out[LL] = lx * ly;
    out[LR] = rx * ly;
    out[UL] = lx * ry;
    out[UR] = rx * ry;
    out
}

/// Unit-discharge source densities of one or more vents on both layouts.
#[derive(Debug, Clone, PartialEq)]
pub struct VentProjection {
    /// `∫_K f_v / |K|`
    pub cell: Vec<f64>,
    /// `Σ_K ∫_K f_v φ_i / m_i`
    pub node: Vec<f64>,
}

impl VentProjection {
    pub fn new(vent: &VentSpec, mesh: &Mesh2D) -> Self {
        let area = mesh.cell_area();
        let mut cell = Vec::with_capacity(mesh.n_cells());
        let mut corner = Vec::with_capacity(mesh.n_cells());
        for c in 0..mesh.n_cells() {
            let b = mesh.cell_bounds(c);
            cell.push(vent_cell_integral(vent, b) / area);
            corner.push(vent_corner_moments(vent, b));
        }
        let node = (0..mesh.n_nodes())
            .map(|n| {
                let s: f64 = mesh.cells_of_node(n).iter().map(|&(c, k)| corner[c][k]).sum();
                s / mesh.lumped_mass()[n]
            })
            .collect();
        Self { cell, node }
    }

    /// Total projected mass on the node layout, `Σ w_i m_i`.
    pub fn node_total(&self, mesh: &Mesh2D) -> f64 {
        self.node.iter().zip(mesh.lumped_mass()).map(|(w, m)| w * m).sum()
    }

    pub fn cell_total(&self, mesh: &Mesh2D) -> f64 {
        self.cell.iter().sum::<f64>() * mesh.cell_area()
    }
}

pub fn vent_node_projection(vent: &VentSpec, mesh: &Mesh2D) -> Vec<f64> {
    VentProjection::new(vent, mesh).node
}
