//! Staggered IMEX scheme for `q_t + a q_x + χ q = 0` on a periodic grid.
//!
//! Nodes `x_j = j Δx` carry the solution; midpoints `x_{j+1/2}` carry the
//! piecewise-constant second stage. Advection is explicit, reaction implicit.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};
use std::sync::Arc;

use crate::butcher::{ButcherPair, ImexCoefficients};
use crate::error::{Error, Result};

/// Field type the stages are generic over: real data, or a complex Fourier mode.
pub trait Scalar:
    Copy + Default + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Div<f64, Output = Self>
{
}

impl<T> Scalar for T where
    T: Copy + Default + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> + Div<f64, Output = T>
{
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D<T = f64> {
    pub n_cells: usize,
    pub dx: f64,
    pub node_values: Vec<T>,
    /// `midpoint_values[j]` lives at `x_{j+1/2}`.
    pub midpoint_values: Vec<T>,
}

impl<T: Scalar> Grid1D<T> {
    pub fn new(n_cells: usize, dx: f64) -> Result<Self> {
        if n_cells < 4 {
            return Err(Error::Config(format!("need at least 4 cells, got {n_cells}")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(Error::Config(format!("cell size must be positive, got {dx}")));
        }
        Ok(Self {
            n_cells,
            dx,
            node_values: vec![T::default(); n_cells],
            midpoint_values: vec![T::default(); n_cells],
        })
    }

    pub fn from_nodes(dx: f64, nodes: Vec<T>) -> Result<Self> {
        let mut g = Self::new(nodes.len(), dx)?;
        g.node_values = nodes;
        Ok(g)
    }

    pub fn length(&self) -> f64 {
        self.n_cells as f64 * self.dx
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    fn prev(&self, j: usize) -> usize {
        (j + self.n_cells - 1) % self.n_cells
    }

    fn next(&self, j: usize) -> usize {
        (j + 1) % self.n_cells
    }
}

impl Grid1D<f64> {
    pub fn sample(n_cells: usize, length: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut g = Self::new(n_cells, length / n_cells as f64)?;
        for j in 0..n_cells {
            g.node_values[j] = f(g.x(j));
        }
        Ok(g)
    }

    /// `Σ q_j Δx`
    pub fn mass(&self) -> f64 {
        self.node_values.iter().sum::<f64>() * self.dx
    }
}

#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    /// `1 + 3 exp(-5 ((x - L/2) / (0.1 L))²)`
    GaussianBell { length: f64 },
    /// `(-1)^i exp(-((x_i - L/2) / (0.05 L √2))²)` with `i = round(x / dx)`.
    Alternating { length: f64, dx: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "Constant({c})"),
            Profile::GaussianBell { length } => write!(f, "GaussianBell {{ length: {length} }}"),
            Profile::Alternating { length, dx } => {
                write!(f, "Alternating {{ length: {length}, dx: {dx} }}")
            }
            Profile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::GaussianBell { length } => {
                let s = (x - length / 2.0) / (0.1 * length);
                1.0 + 3.0 * (-5.0 * s * s).exp()
            }
            Profile::Alternating { length, dx } => {
                let i = (x / dx).round() as i64;
                let sign = if i.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                let s = (x - length / 2.0) / (0.05 * length * SQRT_2);
                sign * (-s * s).exp()
            }
            Profile::Custom(f) => f(x),
        }
    }

    /// Profiles defined with periodic extension over `[0, L)`.
    fn period(&self) -> Option<f64> {
        match self {
            Profile::GaussianBell { length } | Profile::Alternating { length, .. } => Some(*length),
            Profile::Constant(_) | Profile::Custom(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub advection_speed: f64,
    pub reaction_rate: f64,
    pub initial_profile: Profile,
}

impl LinearProblem {
    pub fn new(advection_speed: f64, reaction_rate: f64, initial_profile: Profile) -> Self {
        Self {
            advection_speed,
            reaction_rate,
            initial_profile,
        }
    }

    /// Negative rates describe growth, which the decay tests do not cover.
    pub fn is_growth(&self) -> bool {
        self.reaction_rate < 0.0
    }
}

/// `q0((x - a t) mod L) e^{-χ t}`
pub fn exact_solution(prob: &LinearProblem, x: f64, t: f64) -> f64 {
    let mut xi = x - prob.advection_speed * t;
    if let Some(l) = prob.initial_profile.period() {
        xi = xi.rem_euclid(l);
    }
    prob.initial_profile.eval(xi) * (-prob.reaction_rate * t).exp()
}

/// One IMEX step; `midpoint_values` keep the second stage afterwards.
pub fn step_in_place<T: Scalar>(grid: &mut Grid1D<T>, prob: &LinearProblem, pair: &ButcherPair, dt: f64) {
    let k = pair.coefficients();
    let nu = prob.advection_speed * dt / grid.dx;
    let phi = prob.reaction_rate * dt;
    advance_stages(grid, &k, nu, phi);
}

pub fn step<T: Scalar>(grid: &Grid1D<T>, prob: &LinearProblem, pair: &ButcherPair, dt: f64) -> Grid1D<T> {
    let mut g = grid.clone();
    step_in_place(&mut g, prob, pair, dt);
    g
}

fn advance_stages<T: Scalar>(grid: &mut Grid1D<T>, k: &ImexCoefficients, nu: f64, phi: f64) {
    let n = grid.n_cells;
    let q = &grid.node_values;

    let den2 = 1.0 + k.at22 * phi;
    let q2: Vec<T> = (0..n)
        .map(|j| {
            let (l, r) = (q[j], q[grid.next(j)]);
            ((l + r) * (0.5 * (1.0 - k.at21 * phi)) - (r - l) * (k.a21 * nu)) / den2
        })
        .collect();

    let den3 = 1.0 + k.at33 * phi;
    let q3: Vec<T> = (0..n)
        .map(|j| {
            let (jm, jp) = (grid.prev(j), grid.next(j));
            let (m2l, m2r) = (q2[jm], q2[j]);
            (q[j] * (1.0 - k.at31 * phi) - (m2l + m2r) * (0.5 * k.at32 * phi)
                - (q[jp] - q[jm]) * (0.5 * k.a31 * nu)
                + (m2l - m2r) * (k.a32 * nu))
                / den3
        })
        .collect();

    let new: Vec<T> = (0..n)
        .map(|j| {
            let (jm, jp) = (grid.prev(j), grid.next(j));
            let (m2l, m2r) = (q2[jm], q2[j]);
            q[j] * (1.0 - k.bt[0] * phi) - (q[jp] - q[jm]) * (0.5 * k.b[0] * nu)
                - (m2l + m2r) * (0.5 * k.bt[1] * phi)
                + (m2l - m2r) * (k.b[1] * nu)
                - q3[j] * (k.bt[2] * phi)
                - (q3[jp] - q3[jm]) * (0.5 * k.b[2] * nu)
        })
        .collect();

    grid.node_values = new;
    grid.midpoint_values = q2;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepping {
    /// `dt = ν Δx / |a|`
    Courant(f64),
    FixedDt(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub dts: Vec<f64>,
    /// Errors against [`exact_solution`], including `t = 0`.
    pub linf: Vec<f64>,
    pub l2: Vec<f64>,
    /// `(t, node values)`; always holds the initial and the final field.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    pub final_grid: Grid1D<f64>,
}

impl TimeSeries {
    pub fn final_linf(&self) -> f64 {
        *self.linf.last().unwrap_or(&f64::NAN)
    }

    pub fn final_l2(&self) -> f64 {
        *self.l2.last().unwrap_or(&f64::NAN)
    }

    pub fn steps(&self) -> usize {
        self.dts.len()
    }
}

pub fn error_norms(grid: &Grid1D<f64>, prob: &LinearProblem, t: f64) -> (f64, f64) {
    let mut linf: f64 = 0.0;
    let mut l2 = 0.0;
    for (j, q) in grid.node_values.iter().enumerate() {
        let e = (q - exact_solution(prob, grid.x(j), t)).abs();
        linf = linf.max(e);
        l2 += e * e * grid.dx;
    }
    (linf, l2.sqrt())
}

/// Advances to `t_final`; the last step is shortened to land on it exactly.
///
/// `snapshot_every = 0` keeps only the initial and final fields.
pub fn run(
    prob: &LinearProblem,
    grid: &Grid1D<f64>,
    pair: &ButcherPair,
    stepping: Stepping,
    t_final: f64,
    snapshot_every: usize,
) -> Result<TimeSeries> {
    let dt_nominal = match stepping {
        Stepping::Courant(nu) => {
            if prob.advection_speed == 0.0 {
                return Err(Error::Config(
                    "courant-based stepping needs a nonzero advection speed".into(),
                ));
            }
            if !(nu > 0.0) {
                return Err(Error::Config(format!("courant number must be positive, got {nu}")));
            }
            nu * grid.dx / prob.advection_speed.abs()
        }
        Stepping::FixedDt(dt) => {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("time step must be positive, got {dt}")));
            }
            dt
        }
    };
    if !(t_final >= 0.0) {
        return Err(Error::Config(format!("final time must be non-negative, got {t_final}")));
    }

    let mut g = grid.clone();
    let mut t = 0.0;
    let (e_inf, e_2) = error_norms(&g, prob, t);
    let mut ts = TimeSeries {
        times: vec![0.0],
        dts: Vec::new(),
        linf: vec![e_inf],
        l2: vec![e_2],
        snapshots: vec![(0.0, g.node_values.clone())],
        final_grid: g.clone(),
    };
    let tol = 1e-12 * t_final.max(1.0);
    let mut n = 0usize;
    while t < t_final - tol {
        let dt = dt_nominal.min(t_final - t);
        step_in_place(&mut g, prob, pair, dt);
        n += 1;
        t = if t + dt >= t_final - tol { t_final } else { t + dt };
        let (e_inf, e_2) = error_norms(&g, prob, t);
        ts.times.push(t);
        ts.dts.push(dt);
        ts.linf.push(e_inf);
        ts.l2.push(e_2);
        if snapshot_every > 0 && n.is_multiple_of(snapshot_every) && t < t_final {
            ts.snapshots.push((t, g.node_values.clone()));
        }
    }
    if n > 0 {
        ts.snapshots.push((t, g.node_values.clone()));
    }
    ts.final_grid = g;
    Ok(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::butcher::{canonical_pair, PairId};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn constant(c: f64) -> LinearProblem {
        LinearProblem::new(0.0, 0.0, Profile::Constant(c))
    }

    #[test]
    fn grid_rejects_tiny() {
        assert!(Grid1D::<f64>::new(3, 1.0).is_err());
        assert!(Grid1D::<f64>::new(4, 0.0).is_err());
        assert!(Grid1D::<f64>::new(4, 1.0).is_ok());
    }

    #[test]
    fn identity_dynamics() {
        let g = Grid1D::sample(16, 1.0, |x| (3.0 * x).sin() + x * x).unwrap();
        let prob = LinearProblem::new(0.0, 0.0, Profile::Constant(0.0));
        for id in PairId::ALL {
            let s = step(&g, &prob, &canonical_pair(id), 0.3);
            assert_eq!(s.node_values, g.node_values);
        }
    }

    #[test]
    fn midpoints_hold_stage_two() {
        let g = Grid1D::from_nodes(1.0, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let s = step(&g, &constant(0.0), &canonical_pair(PairId::MaxNu), 0.1);
        assert_eq!(s.midpoint_values, vec![1.0, 3.0, 5.0, 3.0]);
    }

    #[test]
    fn reaction_second_order_in_time() {
        let p = canonical_pair(PairId::MaxNu);
        let err = |dt: f64| {
            let prob = LinearProblem::new(0.0, 3.0, Profile::Constant(1.0));
            let g = Grid1D::sample(8, 1.0, |_| 1.0).unwrap();
            let ts = run(&prob, &g, &p, Stepping::FixedDt(dt), 1.0, 0).unwrap();
            ts.final_linf()
        };
        let ratio = err(0.02) / err(0.01);
        assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn single_mode_matches_factor() {
        use crate::vn_lab::{full_factor, AmplificationInput};
        let n = 64;
        let dx = 0.5;
        for id in PairId::ALL {
            let pair = canonical_pair(id);
            for (m, nu, phi) in [(1usize, 0.7, 0.0), (5, 1.22, 3.0), (31, -0.4, 50.0), (32, 1.0, 0.5)] {
                let theta = 2.0 * PI * m as f64 / n as f64;
                let nodes: Vec<Complex64> =
                    (0..n).map(|j| Complex64::from_polar(1.0, theta * j as f64)).collect();
                let g = Grid1D::from_nodes(dx, nodes.clone()).unwrap();
                let dt = 0.1;
                let prob = LinearProblem::new(nu * dx / dt, phi / dt, Profile::Constant(0.0));
                let s = step(&g, &prob, &pair, dt);
                let want = full_factor(&pair, &AmplificationInput::new(nu, phi, theta)).unwrap();
                for j in 0..n {
                    let got = s.node_values[j] / nodes[j];
                    assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0), "{id} m={m}");
                }
            }
        }
    }

    #[test]
    fn courant_needs_speed() {
        let g = Grid1D::sample(8, 1.0, |_| 1.0).unwrap();
        let err = run(&constant(1.0), &g, &canonical_pair(PairId::MaxNu), Stepping::Courant(1.0), 1.0, 0);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn last_step_is_clipped() {
        let prob = LinearProblem::new(1.0, 0.0, Profile::GaussianBell { length: 10.0 });
        let g = Grid1D::sample(10, 10.0, |x| prob.initial_profile.eval(x)).unwrap();
        let ts = run(&prob, &g, &canonical_pair(PairId::MaxNu), Stepping::Courant(0.9), 2.0, 0).unwrap();
        assert_eq!(*ts.times.last().unwrap(), 2.0);
        assert_eq!(ts.steps(), 3);
        assert!((ts.dts[2] - 0.2).abs() < 1e-14);
        assert_eq!(ts.linf.len(), 4);
        assert_eq!(ts.snapshots.len(), 2);
    }

    #[test]
    fn exact_solution_cases() {
        let bell = LinearProblem::new(1.0, 0.0, Profile::GaussianBell { length: 500.0 });
        assert_eq!(exact_solution(&bell, 123.0, 0.0), bell.initial_profile.eval(123.0));
        assert!((exact_solution(&bell, 123.0, 500.0) - bell.initial_profile.eval(123.0)).abs() < 1e-13);
        let r = LinearProblem::new(0.0, 1000.0, Profile::Constant(1.0));
        assert!((exact_solution(&r, 3.0, 0.01) - (-10f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn alternating_profile_signs() {
        let p = Profile::Alternating { length: 300.0, dx: 1.0 };
        assert!(p.eval(150.0) > 0.99);
        assert!(p.eval(151.0) < -0.99);
        assert!(p.eval(150.0) > 0.0 && p.eval(152.0) > 0.0);
    }
}
