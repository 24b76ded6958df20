//! Three-stage IMEX (pseudo-)staggered Galerkin update on a [`Mesh2D`].
//!
//! The second stage lives on cells (Q0), the third stage and the solution on
//! nodes (Q1, lumped mass). Fluxes and the topography term are explicit; the
//! friction is solved pointwise with the implicit diagonal; vent forcing is a
//! known function of time evaluated at the implicit abscissae.
//!
//! Spatial operators are written as `D(q)` with `∂q/∂t = -D(q) + S(q)`:
//!
//! * cells: `(∮_∂K F·n + ∫_K g h ∂Z) / |K|`, trapezoidal on edges, with the
//!   edge-mean topography integral so that the lake at rest cancels per cell;
//! * nodes, Q1 argument: the same per-cell integrals, a quarter to each corner,
//!   divided by the lumped mass;
//! * nodes, Q0 argument: `-∫ F:∇φ` (exact for piecewise constants) plus the
//!   path-conservative jump terms on interior edges and the wall flux.
//!
//! In both nodal forms the hydrostatic pressure is combined with the
//! topography term edge by edge as `½ g h̄ Δ(h + Z)`, which vanishes exactly
//! when the free surface is flat.

use std::fmt::Write as _;

use crate::butcher::{ButcherPair, ImexCoefficients};
use crate::error::{Error, Result};
use crate::lava_model::{advective_flux, friction_rate, FluxTensor, PhysicsParams, VentProjection, VentSpec};
use crate::mesh2d::{BoundaryKind, Field, Layout, Mesh2D, State, LL, LR, UL, UR};
use crate::pc_wb::{hydrostatic_jump_surface, wb_hydrostatic_integral, Direction};
use crate::vn_lab;

/// Courant numbers above this emit a warning.
pub const COURANT_WARN: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeControl {
    pub courant: f64,
    /// Step used while nothing is wet, s.
    pub dt_init: f64,
    pub dt_floor: f64,
    pub dt_max: f64,
    /// Abort with [`Error::StepLimit`] after this many steps.
    pub max_steps: usize,
}

impl Default for TimeControl {
    fn default() -> Self {
        Self {
            courant: 1.1,
            dt_init: 1e-4,
            dt_floor: 1e-12,
            dt_max: f64::INFINITY,
            max_steps: usize::MAX,
        }
    }
}

impl TimeControl {
    /// Errors above the theoretical bound; returns warnings otherwise.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bound = vn_lab::optimal_courant_bound();
        if !(self.courant > 0.0) || self.courant > bound {
            return Err(Error::Config(format!(
                "courant number {} outside (0, {bound:.4}]",
                self.courant
            )));
        }
        if !(self.dt_init > 0.0 && self.dt_floor >= 0.0 && self.dt_max > 0.0) {
            return Err(Error::Config("time steps must be positive".into()));
        }
        let mut w = Vec::new();
        if self.courant > COURANT_WARN {
            w.push(format!("courant number {} exceeds {COURANT_WARN}", self.courant));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub node_field: Field,
    /// Second stage of the last step.
    pub cell_field: Field,
    pub time: f64,
    pub dt: f64,
    pub step_count: usize,
}

impl SolverState {
    pub fn new(mesh: &Mesh2D, node_field: Field) -> Result<Self> {
        node_field.check_layout(mesh, Layout::Node)?;
        Ok(Self {
            node_field,
            cell_field: Field::zeros(mesh, Layout::Cell),
            time: 0.0,
            dt: 0.0,
            step_count: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub energy: f64,
    pub max_speed: f64,
    /// Vent volume injected during the step.
    pub inflow: f64,
    /// Volume added by clamping negative depths during the step.
    pub clamped: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub rows: Vec<LogRow>,
    pub initial_mass: f64,
    pub initial_energy: f64,
}

impl RunLog {
    pub fn min_dt(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.dt).reduce(f64::min)
    }

    pub fn total_inflow(&self) -> f64 {
        self.rows.iter().map(|r| r.inflow).sum()
    }

    pub fn total_clamped(&self) -> f64 {
        self.rows.iter().map(|r| r.clamped).sum()
    }

    /// `|M(t) - M(0) - inflow - clamped| / max(M(t), M(0))` at the last row.
    pub fn mass_balance_error(&self) -> f64 {
        let Some(last) = self.rows.last() else { return 0.0 };
        let expected = self.initial_mass + self.total_inflow() + self.total_clamped();
        (last.mass - expected).abs() / last.mass.abs().max(self.initial_mass.abs()).max(f64::MIN_POSITIVE)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,t,dt,mass,energy,max_speed\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.step, r.t, r.dt, r.mass, r.energy, r.max_speed
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepInfo {
    pub inflow: f64,
    pub clamped: f64,
}

type Residual = [f64; 4];

#[derive(Debug, Clone)]
pub struct Solver {
    pub mesh: Mesh2D,
    pub pair: ButcherPair,
    pub physics: PhysicsParams,
    pub vents: Vec<VentSpec>,
    pub tc: TimeControl,
    k: ImexCoefficients,
    projections: Vec<VentProjection>,
}

impl Solver {
    pub fn new(mesh: Mesh2D, pair: ButcherPair, physics: PhysicsParams, vents: Vec<VentSpec>, tc: TimeControl) -> Result<Self> {
        physics.validate()?;
        for v in &vents {
            v.validate()?;
        }
        let projections = vents.iter().map(|v| VentProjection::new(v, &mesh)).collect();
        let k = pair.coefficients();
        Ok(Self {
            mesh,
            pair,
            physics,
            vents,
            tc,
            k,
            projections,
        })
    }

    fn g(&self) -> f64 {
        self.physics.gravity
    }

    fn h_eff(&self, s: &State) -> f64 {
        if self.physics.is_wet(s.h) {
            s.h
        } else {
            0.0
        }
    }

    /// Advective normal flux through a wall: the mean of the state and its
    /// mirror image. The wall pressure equals the interior one and is carried
    /// by the hydrostatic terms.
    fn wall_flux(&self, s: &State, n: [f64; 2]) -> Residual {
        if !self.physics.is_wet(s.h) {
            return [0.0; 4];
        }
        let un = (s.hu * n[0] + s.hv * n[1]) / s.h;
        let m = s.h * un * un;
        [0.0, m * n[0], m * n[1], 0.0]
    }

    /// `(x_lo, x_hi, y_lo, y_hi)` sides of cell `c` lying on a wall.
    fn wall_sides(&self, c: usize) -> [bool; 4] {
        let (i, j) = self.mesh.cell_ij(c);
        let wx = self.mesh.bc[0] == BoundaryKind::Wall;
        let wy = self.mesh.bc[1] == BoundaryKind::Wall;
        [
            wx && i == 0,
            wx && i + 1 == self.mesh.nx,
            wy && j == 0,
            wy && j + 1 == self.mesh.ny,
        ]
    }

    /// Per cell, `∮_∂K F(q)·n + ∫_K g h ∇Z` from nodal values; pressure and
    /// topography enter together through the free-surface differences.
    fn cell_integrals(&self, q: &[State]) -> Vec<Residual> {
        let m = &self.mesh;
        let (dx, dy) = (m.dx, m.dy);
        let f: Vec<FluxTensor> = q.iter().map(|s| advective_flux(s, &self.physics)).collect();
        (0..m.n_cells())
            .map(|c| {
                let nodes = m.nodes_of_cell(c).expect("cell in range");
                let walls = self.wall_sides(c);
                // (corner a, corner b, normal, edge length, on wall)
                let faces = [
                    (LL, UL, [-1.0, 0.0], dy, walls[0]),
                    (LR, UR, [1.0, 0.0], dy, walls[1]),
                    (LL, LR, [0.0, -1.0], dx, walls[2]),
                    (UL, UR, [0.0, 1.0], dx, walls[3]),
                ];
                let mut acc = [0.0; 4];
                for (a, b, n, len, wall) in faces {
                    let (na, nb) = (nodes[a], nodes[b]);
                    let (fa, fb) = if wall {
                        (self.wall_flux(&q[na], n), self.wall_flux(&q[nb], n))
                    } else {
                        let dot = |t: &FluxTensor| t.map(|r| r[0] * n[0] + r[1] * n[1]);
                        (dot(&f[na]), dot(&f[nb]))
                    };
                    for r in 0..4 {
                        acc[r] += 0.5 * len * (fa[r] + fb[r]);
                    }
                }
                let h = nodes.map(|n| self.h_eff(&q[n]));
                let z = nodes.map(|n| q[n].z);
                acc[1] += wb_hydrostatic_integral(h, z, Direction::X, self.g(), dx, dy);
                acc[2] += wb_hydrostatic_integral(h, z, Direction::Y, self.g(), dx, dy);
                acc
            })
            .collect()
    }

    /// Nodal operator on a Q1 field.
    pub fn nodal_operator(&self, q: &[State]) -> Vec<Residual> {
        let area = self.mesh.cell_area();
        let dens: Vec<Residual> = self.cell_integrals(q).into_iter().map(|r| r.map(|v| v / area)).collect();
        self.mesh.lumped_mass_scatter(&dens)
    }

    /// Free surface of the second stage, `avg(h + Z) + (h⁽²⁾ - avg h)`.
    ///
    /// Equal to `h⁽²⁾ + avg Z` in exact arithmetic; the grouping keeps a flat
    /// nodal surface flat on the cells.
    pub fn cell_free_surface(&self, q: &[State], q2: &[State]) -> Vec<f64> {
        (0..self.mesh.n_cells())
            .map(|c| {
                let nodes = self.mesh.nodes_of_cell(c).expect("cell in range");
                let zeta = nodes.iter().map(|&n| q[n].h + q[n].z).sum::<f64>() / 4.0;
                let h = nodes.iter().map(|&n| q[n].h).sum::<f64>() / 4.0;
                zeta + (q2[c].h - h)
            })
            .collect()
    }

    /// Nodal operator on a piecewise-constant cell field with free surface
    /// `zeta` (see [`Solver::cell_free_surface`]).
    pub fn staggered_operator(&self, q2: &[State], zeta: &[f64]) -> Vec<Residual> {
        let m = &self.mesh;
        let (dx, dy) = (m.dx, m.dy);
        let mut acc = vec![[0.0; 4]; m.n_nodes()];
        // ∫_K ∇φ per corner slot
        let grad = {
            let mut gr = [[0.0; 2]; 4];
            gr[LL] = [-0.5 * dy, -0.5 * dx];
            gr[LR] = [0.5 * dy, -0.5 * dx];
            gr[UL] = [-0.5 * dy, 0.5 * dx];
            gr[UR] = [0.5 * dy, 0.5 * dx];
            gr
        };
        let g = self.g();
        let h_min = self.physics.h_min;
        for c in 0..m.n_cells() {
            let nodes = m.nodes_of_cell(c).expect("cell in range");
            let s = &q2[c];
            let f = advective_flux(s, &self.physics);
            for (slot, &n) in nodes.iter().enumerate() {
                for r in 0..4 {
                    acc[n][r] -= f[r][0] * grad[slot][0] + f[r][1] * grad[slot][1];
                }
            }
            let walls = self.wall_sides(c);
            let faces = [
                (LL, UL, [-1.0, 0.0], dy),
                (LR, UR, [1.0, 0.0], dy),
                (LL, LR, [0.0, -1.0], dx),
                (UL, UR, [0.0, 1.0], dx),
            ];
            for (w, (a, b, n, len)) in walls.into_iter().zip(faces) {
                if w {
                    let fw = self.wall_flux(s, n);
                    for r in 0..4 {
                        acc[nodes[a]][r] += 0.5 * len * fw[r];
                        acc[nodes[b]][r] += 0.5 * len * fw[r];
                    }
                }
            }
            // jumps across the right and top edges of this cell
            let (i, j) = m.cell_ij(c);
            let right = if i + 1 < m.nx {
                Some(m.cell_index(i + 1, j))
            } else if m.bc[0] == BoundaryKind::Periodic {
                Some(m.cell_index(0, j))
            } else {
                None
            };
            let top = if j + 1 < m.ny {
                Some(m.cell_index(i, j + 1))
            } else if m.bc[1] == BoundaryKind::Periodic {
                Some(m.cell_index(i, 0))
            } else {
                None
            };
            for (nb, normal, len, ends) in [(right, [1.0, 0.0], dy, (LR, UR)), (top, [0.0, 1.0], dx, (UL, UR))] {
                let Some(nb) = nb else { continue };
                // pressure jump of the volume terms plus both fluctuations
                let jump = hydrostatic_jump_surface((s.h, zeta[c]), (q2[nb].h, zeta[nb]), normal, g, h_min);
                for end in [ends.0, ends.1] {
                    acc[nodes[end]][1] += 0.5 * len * jump[0];
                    acc[nodes[end]][2] += 0.5 * len * jump[1];
                }
            }
        }
        let lm = m.lumped_mass();
        for (a, w) in acc.iter_mut().zip(lm) {
            for v in a.iter_mut() {
                *v /= w;
            }
        }
        acc
    }

    /// Friction source `(0, -κ hu, -κ hv, 0)`.
    fn friction(&self, s: &State) -> Residual {
        let k = friction_rate(s, &self.physics);
        [0.0, -k * s.hu, -k * s.hv, 0.0]
    }

    /// Vent forcing `(h, hT)` per unit volume flux, summed over vents, at time `t`.
    fn vent_rates(&self, t: f64, node: bool, dof: usize) -> (f64, f64) {
        let mut out = (0.0, 0.0);
        for (v, p) in self.vents.iter().zip(&self.projections) {
            let w = if node { p.node[dof] } else { p.cell[dof] };
            if w == 0.0 {
                continue;
            }
            let q = v.discharge.at(t) * w;
            out.0 += q;
            out.1 += q * v.effusion_temperature;
        }
        out
    }

    /// `Σ_v Q_v(t) ∫ f_v` over the node layout.
    fn vent_volume_rate(&self, t: f64) -> f64 {
        self.vents
            .iter()
            .zip(&self.projections)
            .map(|(v, p)| v.discharge.at(t) * p.node_total(&self.mesh))
            .sum()
    }

    /// Pointwise implicit solve: `h`, `hT` are final, momentum is divided by
    /// `1 + dt γ κ(h, T)`.
    fn implicit_friction(&self, rhs: Residual, z: f64, dt_gamma: f64) -> State {
        let mut s = State::new(rhs[0], rhs[1], rhs[2], rhs[3], z);
        let k = friction_rate(&s, &self.physics);
        let den = 1.0 + dt_gamma * k;
        s.hu /= den;
        s.hv /= den;
        crate::lava_model::enforce_dry(&s, &self.physics)
    }

    pub fn stage2(&self, q: &Field, t: f64, dt: f64) -> Result<Field> {
        let m = &self.mesh;
        let k = &self.k;
        let avg = q.node_to_cell_average(m)?;
        let area = m.cell_area();
        let integ = self.cell_integrals(&q.values);
        let (t1, t2) = (t + k.ct[0] * dt, t + k.ct[1] * dt);
        let values = (0..m.n_cells())
            .map(|c| {
                let a = &avg.values[c];
                let mut rhs = a.conserved();
                for r in 0..4 {
                    rhs[r] -= k.a21 * dt * integ[c][r] / area;
                }
                if k.at21 != 0.0 {
                    let f = self.friction(a);
                    for r in 0..4 {
                        rhs[r] += k.at21 * dt * f[r];
                    }
                }
                if !self.vents.is_empty() {
                    let (h1, e1) = self.vent_rates(t1, false, c);
                    let (h2, e2) = self.vent_rates(t2, false, c);
                    rhs[0] += dt * (k.at21 * h1 + k.at22 * h2);
                    rhs[3] += dt * (k.at21 * e1 + k.at22 * e2);
                }
                self.implicit_friction(rhs, a.z, dt * k.at22)
            })
            .collect();
        Ok(Field {
            layout: Layout::Cell,
            values,
        })
    }

    fn scatter_friction(&self, q2: &Field) -> Vec<Residual> {
        let f: Vec<Residual> = q2.values.iter().map(|s| self.friction(s)).collect();
        self.mesh.lumped_mass_scatter(&f)
    }

    pub fn stage3(&self, q: &Field, q2: &Field, t: f64, dt: f64) -> Result<Field> {
        q.check_layout(&self.mesh, Layout::Node)?;
        q2.check_layout(&self.mesh, Layout::Cell)?;
        let k = &self.k;
        let d1 = (k.a31 != 0.0).then(|| self.nodal_operator(&q.values));
        let d0 = self.staggered_operator(&q2.values, &self.cell_free_surface(&q.values, &q2.values));
        let s2 = (k.at32 != 0.0).then(|| self.scatter_friction(q2));
        let times = [t + k.ct[0] * dt, t + k.ct[1] * dt, t + k.ct[2] * dt];
        let weights = [k.at31, k.at32, k.at33];
        let values = q
            .values
            .iter()
            .enumerate()
            .map(|(n, s)| {
                let mut rhs = s.conserved();
                for r in 0..4 {
                    rhs[r] -= dt * k.a32 * d0[n][r];
                    if let Some(d1) = &d1 {
                        rhs[r] -= dt * k.a31 * d1[n][r];
                    }
                    if let Some(s2) = &s2 {
                        rhs[r] += dt * k.at32 * s2[n][r];
                    }
                }
                if k.at31 != 0.0 {
                    let f = self.friction(s);
                    for r in 0..4 {
                        rhs[r] += dt * k.at31 * f[r];
                    }
                }
                self.add_vents(&mut rhs, &times, &weights, n, dt);
                self.implicit_friction(rhs, s.z, dt * k.at33)
            })
            .collect();
        Ok(Field {
            layout: Layout::Node,
            values,
        })
    }

    fn add_vents(&self, rhs: &mut Residual, times: &[f64; 3], weights: &[f64; 3], n: usize, dt: f64) {
        if self.vents.is_empty() {
            return;
        }
        for (&tm, &w) in times.iter().zip(weights) {
            if w != 0.0 {
                let (h, e) = self.vent_rates(tm, true, n);
                rhs[0] += dt * w * h;
                rhs[3] += dt * w * e;
            }
        }
    }

    /// Returns the new node field, the injected volume and the clamped volume.
    pub fn final_update(&self, q: &Field, q2: &Field, q3: &Field, t: f64, dt: f64) -> Result<(Field, StepInfo)> {
        let k = &self.k;
        let d1n = (k.b[0] != 0.0).then(|| self.nodal_operator(&q.values));
        let d0 = self.staggered_operator(&q2.values, &self.cell_free_surface(&q.values, &q2.values));
        let d13 = self.nodal_operator(&q3.values);
        let s2 = (k.bt[1] != 0.0).then(|| self.scatter_friction(q2));
        let times = [t + k.ct[0] * dt, t + k.ct[1] * dt, t + k.ct[2] * dt];
        let lm = self.mesh.lumped_mass();
        let mut clamped = 0.0;
        let mut values = Vec::with_capacity(q.values.len());
        for (n, s) in q.values.iter().enumerate() {
            let mut r = s.conserved();
            let f1 = (k.bt[0] != 0.0).then(|| self.friction(s));
            let f3 = self.friction(&q3.values[n]);
            for c in 0..4 {
                r[c] -= dt * (k.b[1] * d0[n][c] + k.b[2] * d13[n][c]);
                if let Some(d) = &d1n {
                    r[c] -= dt * k.b[0] * d[n][c];
                }
                if let Some(f) = &f1 {
                    r[c] += dt * k.bt[0] * f[c];
                }
                if let Some(s2) = &s2 {
                    r[c] += dt * k.bt[1] * s2[n][c];
                }
                r[c] += dt * k.bt[2] * f3[c];
            }
            self.add_vents(&mut r, &times, &k.bt, n, dt);
            if r[0] < 0.0 {
                clamped -= r[0] * lm[n];
                r[0] = 0.0;
            }
            let new = crate::lava_model::enforce_dry(&s.with_conserved(r), &self.physics);
            values.push(new);
        }
        let inflow = if self.vents.is_empty() {
            0.0
        } else {
            dt * times.iter().zip(&k.bt).map(|(&tm, &w)| w * self.vent_volume_rate(tm)).sum::<f64>()
        };
        Ok((
            Field {
                layout: Layout::Node,
                values,
            },
            StepInfo { inflow, clamped },
        ))
    }

    /// Directional-maximum CFL step; `dt_init` when nothing is wet.
    pub fn compute_dt(&self, state: &SolverState) -> Result<f64> {
        let m = &self.mesh;
        let mut best = 0.0;
        let mut arg = None;
        for (n, s) in state.node_field.values.iter().enumerate() {
            if !self.physics.is_wet(s.h) {
                continue;
            }
            let c = (self.g() * s.h).sqrt();
            let [u, v] = self.physics.velocity(s);
            let rate = ((u.abs() + c) / m.dx).max((v.abs() + c) / m.dy);
            if rate > best || arg.is_none() {
                best = rate;
                arg = Some(n);
            }
        }
        let (dt, dof) = match arg {
            Some(n) if best > 0.0 => (self.tc.courant / best, n),
            _ => (self.tc.dt_init, 0),
        };
        let dt = dt.min(self.tc.dt_max);
        if !(dt >= self.tc.dt_floor) {
            let [x, y] = m.node_xy(dof);
            return Err(Error::StiffnessCollapse {
                dt,
                floor: self.tc.dt_floor,
                time: state.time,
                dof,
                x,
                y,
            });
        }
        Ok(dt)
    }

    /// One full step of size `dt`.
    pub fn step(&self, state: &mut SolverState, dt: f64) -> Result<StepInfo> {
        let t = state.time;
        let q = &state.node_field;
        let q2 = self.stage2(q, t, dt)?;
        let q3 = self.stage3(q, &q2, t, dt)?;
        let (new, info) = self.final_update(q, &q2, &q3, t, dt)?;
        if let Some(dof) = new.first_non_finite() {
            return Err(Error::NonFinite {
                quantity: "node state",
                dof,
                step: state.step_count + 1,
                time: t + dt,
            });
        }
        state.node_field = new;
        state.cell_field = q2;
        state.time = t + dt;
        state.dt = dt;
        state.step_count += 1;
        Ok(info)
    }

    pub fn total_mass(&self, f: &Field) -> f64 {
        f.values.iter().zip(self.mesh.lumped_mass()).map(|(s, w)| s.h * w).sum()
    }

    pub fn total_energy(&self, f: &Field) -> f64 {
        f.values.iter().zip(self.mesh.lumped_mass()).map(|(s, w)| s.ht * w).sum()
    }

    pub fn max_speed(&self, f: &Field) -> f64 {
        f.values
            .iter()
            .map(|s| {
                let [u, v] = self.physics.velocity(s);
                u.hypot(v)
            })
            .fold(0.0, f64::max)
    }

    pub fn start_log(&self, state: &SolverState) -> RunLog {
        RunLog {
            rows: Vec::new(),
            initial_mass: self.total_mass(&state.node_field),
            initial_energy: self.total_energy(&state.node_field),
        }
    }

    /// Steps until `t_stop`; the log keeps every completed step on failure.
    pub fn advance(&self, state: &mut SolverState, t_stop: f64, log: &mut RunLog) -> Result<()> {
        self.advance_with(state, t_stop, log, |_, _| {})
    }

    /// As [`Solver::advance`], calling `hook` after every step.
    pub fn advance_with(
        &self,
        state: &mut SolverState,
        t_stop: f64,
        log: &mut RunLog,
        mut hook: impl FnMut(&SolverState, &LogRow),
    ) -> Result<()> {
        if log.rows.is_empty() && state.step_count == 0 {
            *log = self.start_log(state);
        }
        let eps = 1e-12 * t_stop.abs().max(1.0);
        let mut taken = 0usize;
        while state.time < t_stop - eps {
            if taken >= self.tc.max_steps {
                return Err(Error::StepLimit {
                    steps: taken,
                    time: state.time,
                });
            }
            let mut dt = self.compute_dt(state)?;
            if state.time + dt > t_stop {
                dt = t_stop - state.time;
            }
            let info = self.step(state, dt)?;
            if (state.time - t_stop).abs() <= eps {
                state.time = t_stop;
            }
            taken += 1;
            let row = LogRow {
                step: state.step_count,
                t: state.time,
                dt,
                mass: self.total_mass(&state.node_field),
                energy: self.total_energy(&state.node_field),
                max_speed: self.max_speed(&state.node_field),
                inflow: info.inflow,
                clamped: info.clamped,
            };
            log.rows.push(row);
            hook(state, &row);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::butcher::{canonical_pair, PairId};
    use crate::lava_model::Discharge;
    use crate::scheme1d::{self, Grid1D, LinearProblem, Profile};
    use BoundaryKind::{Periodic, Wall};

    fn solver(mesh: Mesh2D, id: PairId) -> Solver {
        Solver::new(mesh, canonical_pair(id), PhysicsParams::default(), Vec::new(), TimeControl::default()).unwrap()
    }

    fn bump(x: f64, y: f64) -> f64 {
        0.8 * (-((x - 0.5).powi(2) + (y - 0.4).powi(2)) * 20.0).exp()
    }

    fn lake(mesh: &Mesh2D, z: impl Fn(f64, f64) -> f64) -> Field {
        Field::from_fn(mesh, Layout::Node, |x, y| {
            let zz = z(x, y);
            State::new(2.0 - zz, 0.0, 0.0, 700.0, zz)
        })
    }

    /// Per-component max error relative to `max(|b|, 1)`.
    fn linf(a: &Field, b: &Field) -> [f64; 4] {
        let mut e = [0.0f64; 4];
        let mut scale = [1.0f64; 4];
        for (s, t) in a.values.iter().zip(&b.values) {
            let (p, q) = (s.conserved(), t.conserved());
            for r in 0..4 {
                e[r] = e[r].max((p[r] - q[r]).abs());
                scale[r] = scale[r].max(q[r].abs());
            }
        }
        std::array::from_fn(|r| e[r] / scale[r])
    }

    #[test]
    fn compute_dt_rest() {
        let m = Mesh2D::new(4, 4, 0.1, 0.1, [0.0; 2], [Wall; 2]).unwrap();
        let s = solver(m.clone(), PairId::MaxNu);
        let st = SolverState::new(&m, Field::from_fn(&m, Layout::Node, |_, _| State::new(1.0, 0.0, 0.0, 1.0, 0.0))).unwrap();
        let dt = s.compute_dt(&st).unwrap();
        assert!((dt - 1.1 * 0.1 / 9.81f64.sqrt()).abs() < 1e-15);
        assert!((dt - 0.03512).abs() < 1e-5);
    }

    #[test]
    fn compute_dt_dry_and_floor() {
        let m = Mesh2D::new(4, 4, 0.1, 0.1, [0.0; 2], [Wall; 2]).unwrap();
        let s = solver(m.clone(), PairId::MaxNu);
        let dry = SolverState::new(&m, Field::zeros(&m, Layout::Node)).unwrap();
        assert_eq!(s.compute_dt(&dry).unwrap(), 1e-4);
        let mut fast = dry.clone();
        fast.node_field.values[7] = State::new(1.0, 1e14, 0.0, 0.0, 0.0);
        match s.compute_dt(&fast) {
            Err(Error::StiffnessCollapse { dof, .. }) => assert_eq!(dof, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn time_control_validation() {
        assert!(TimeControl::default().validate().unwrap().is_empty());
        let tc = TimeControl { courant: 1.2, ..TimeControl::default() };
        assert_eq!(tc.validate().unwrap().len(), 1);
        let tc = TimeControl { courant: 1.3, ..TimeControl::default() };
        assert!(tc.validate().is_err());
    }

    #[test]
    fn lake_at_rest_stages() {
        let m = Mesh2D::rectangle(12, 10, 1.0, 1.0, [0.0; 2], [Wall; 2]).unwrap();
        let q = lake(&m, bump);
        for id in PairId::ALL {
            let s = solver(m.clone(), id);
            let dt = 0.02;
            let q2 = s.stage2(&q, 0.0, dt).unwrap();
            for c in &q2.values {
                assert!((c.h + c.z - 2.0).abs() < 1e-14);
                assert!(c.hu.abs() < 1e-13 && c.hv.abs() < 1e-13);
            }
            let q3 = s.stage3(&q, &q2, 0.0, dt).unwrap();
            assert!(linf(&q3, &q).iter().all(|e| *e < 1e-13), "{:?}", linf(&q3, &q));
        }
    }

    #[test]
    fn lake_at_rest_discontinuous_topography() {
        let m = Mesh2D::rectangle(16, 16, 1.0, 1.0, [0.0; 2], [Wall, Periodic]).unwrap();
        let step_z = |x: f64, y: f64| if x > 0.3 && x < 0.7 && y > 0.2 { 1.2 } else { 0.1 * x };
        let q = lake(&m, step_z);
        let s = solver(m.clone(), PairId::MaxNu);
        let mut st = SolverState::new(&m, q.clone()).unwrap();
        for _ in 0..100 {
            let dt = s.compute_dt(&st).unwrap();
            s.step(&mut st, dt).unwrap();
        }
        assert!(linf(&st.node_field, &q).iter().all(|e| *e < 1e-11), "{:?}", linf(&st.node_field, &q));
    }

    #[test]
    fn zero_dt_is_identity() {
        let m = Mesh2D::rectangle(6, 6, 1.0, 1.0, [0.0; 2], [Wall; 2]).unwrap();
        let q = Field::from_fn(&m, Layout::Node, |x, y| State::new(1.0 + x * y, 0.3 * x, -0.2, 400.0, 0.1 * y));
        let s = solver(m.clone(), PairId::CEqCTilde);
        let q2 = s.stage2(&q, 0.0, 0.0).unwrap();
        let q3 = s.stage3(&q, &q2, 0.0, 0.0).unwrap();
        assert_eq!(q3, q);
    }

    #[test]
    fn dry_without_vent_is_identity() {
        let m = Mesh2D::rectangle(5, 5, 1.0, 1.0, [0.0; 2], [Wall; 2]).unwrap();
        let q = Field::from_fn(&m, Layout::Node, |x, _| State::new(0.0, 0.0, 0.0, 0.0, x));
        let s = solver(m.clone(), PairId::MaxNu);
        let mut st = SolverState::new(&m, q.clone()).unwrap();
        s.step(&mut st, 0.1).unwrap();
        assert_eq!(st.node_field, q);
    }

    #[test]
    fn reduces_to_one_dimensional_scheme() {
        let (nx, ny, a, dt) = (24usize, 4usize, 1.3, 0.05);
        let m = Mesh2D::rectangle(nx, ny, 3.0, 0.5, [0.0; 2], [Periodic; 2]).unwrap();
        let prof = |x: f64| 2.0 + (2.0 * std::f64::consts::PI * x / 3.0).sin() + 0.3 * (x * 5.0).cos().powi(3);
        let q = Field::from_fn(&m, Layout::Node, |x, _| State::new(1.0, a, 0.0, prof(x), 0.0));
        for id in PairId::ALL {
            let pair = canonical_pair(id);
            let s = solver(m.clone(), id);
            let mut st = SolverState::new(&m, q.clone()).unwrap();
            let mut g = Grid1D::sample(nx, 3.0, prof).unwrap();
            let prob = LinearProblem::new(a, 0.0, Profile::Constant(0.0));
            for _ in 0..10 {
                s.step(&mut st, dt).unwrap();
                scheme1d::step_in_place(&mut g, &prob, &pair, dt);
                for j in 0..ny {
                    for i in 0..nx {
                        let v = st.node_field.values[m.node_index(i, j)];
                        assert!((v.ht - g.node_values[i]).abs() < 1e-12, "{id} ({i},{j})");
                        assert!((v.h - 1.0).abs() < 1e-14 && (v.hu - a).abs() < 1e-13);
                        let c = st.cell_field.values[m.cell_index(i, j)];
                        assert!((c.ht - g.midpoint_values[i]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn periodic_conservation() {
        let m = Mesh2D::rectangle(16, 12, 2.0, 1.5, [0.0; 2], [Periodic; 2]).unwrap();
        let q = Field::from_fn(&m, Layout::Node, |x, y| {
            let h = 1.0 + 0.2 * (x * 3.1).sin() * (y * 4.2).cos();
            State::new(h, 0.4 * h, -0.1 * h, 300.0 * h + 5.0 * x, 0.05 * (x * 2.0).cos())
        });
        let s = solver(m.clone(), PairId::MaxNu);
        let mut st = SolverState::new(&m, q).unwrap();
        let mut log = RunLog::default();
        s.advance(&mut st, 0.2, &mut log).unwrap();
        let (m0, e0) = (log.initial_mass, log.initial_energy);
        let last = log.rows.last().unwrap();
        assert!(((last.mass - m0) / m0).abs() < 1e-13);
        assert!(((last.energy - e0) / e0).abs() < 1e-13);
        assert!(log.rows.len() > 5);
    }

    #[test]
    fn wall_mass_conservation() {
        let m = Mesh2D::rectangle(10, 10, 1.0, 1.0, [0.0; 2], [Wall; 2]).unwrap();
        let q = Field::from_fn(&m, Layout::Node, |x, y| State::new(1.0 + 0.3 * bump(x, y), 0.2, 0.1, 100.0, 0.0));
        let s = solver(m.clone(), PairId::CEqCTilde);
        let mut st = SolverState::new(&m, q).unwrap();
        let mut log = RunLog::default();
        s.advance(&mut st, 0.1, &mut log).unwrap();
        assert!(log.mass_balance_error() < 1e-13);
    }

    #[test]
    fn strong_friction_damps_momentum() {
        let m = Mesh2D::rectangle(4, 4, 1.0, 1.0, [0.0; 2], [Periodic; 2]).unwrap();
        let phys = PhysicsParams {
            nu_r: 1.0,
            lambda_cap: 1e8,
            ..PhysicsParams::default()
        };
        let s = Solver::new(m.clone(), canonical_pair(PairId::MaxNu), phys, Vec::new(), TimeControl::default()).unwrap();
        let q = Field::from_fn(&m, Layout::Node, |_, _| State::new(1e-3, 1e-3, 0.0, 0.0, 0.0));
        let q2 = s.stage2(&q, 0.0, 1.0).unwrap();
        // κ = min(3/h, cap)/h = 3e6, dt γ κ ≈ 8.8e5
        assert!(q2.values.iter().all(|c| c.hu.abs() < 1e-3 / 8e5));
    }

    #[test]
    fn vent_mass_balance() {
        let m = Mesh2D::rectangle(16, 16, 4.0, 4.0, [0.0; 2], [Wall; 2]).unwrap();
        let phys = PhysicsParams {
            nu_r: 1.0,
            b_coeff: 1e-2,
            t_ref: 2000.0,
            t_e: 2000.0,
            ..PhysicsParams::default()
        };
        let vent = VentSpec {
            position: [2.0, 2.0],
            sigma: 0.1,
            discharge: Discharge::Constant(2.0),
            effusion_temperature: 2000.0,
        };
        let tc = TimeControl {
            dt_max: 1e-2,
            ..TimeControl::default()
        };
        let s = Solver::new(m.clone(), canonical_pair(PairId::MaxNu), phys, vec![vent], tc).unwrap();
        let mut st = SolverState::new(&m, Field::zeros(&m, Layout::Node)).unwrap();
        let mut log = RunLog::default();
        s.advance(&mut st, 0.5, &mut log).unwrap();
        let injected = log.total_inflow();
        assert!((injected - 2.0 * 0.5).abs() < 1e-6, "{injected}");
        assert!(log.mass_balance_error() < 1e-10, "{}", log.mass_balance_error());
        assert!(st.node_field.values.iter().all(|v| v.h >= 0.0));
        for v in &st.node_field.values {
            if v.h < phys.h_min {
                assert_eq!((v.hu, v.hv, v.ht), (0.0, 0.0, 0.0));
            }
        }
    }

    #[test]
    fn step_limit() {
        let m = Mesh2D::rectangle(4, 4, 1.0, 1.0, [0.0; 2], [Wall; 2]).unwrap();
        let tc = TimeControl {
            max_steps: 2,
            ..TimeControl::default()
        };
        let s = Solver::new(m.clone(), canonical_pair(PairId::MaxNu), PhysicsParams::default(), Vec::new(), tc).unwrap();
        let mut st = SolverState::new(&m, lake(&m, |_, _| 0.0)).unwrap();
        let mut log = RunLog::default();
        let err = s.advance(&mut st, 10.0, &mut log).unwrap_err();
        assert!(matches!(err, Error::StepLimit { steps: 2, .. }));
        assert_eq!(log.rows.len(), 2);
    }

    #[test]
    fn log_csv_header() {
        let log = RunLog::default();
        assert_eq!(log.to_csv(), "step,t,dt,mass,energy,max_speed\n");
        assert_eq!(log.min_dt(), None);
    }
}
