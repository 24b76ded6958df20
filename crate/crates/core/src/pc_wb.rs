//! Path-conservative topography term and the edge-mean cell integrals that
//! keep the lake at rest discrete-exact.
//!
//! Corner arrays follow the [`crate::mesh2d`] slot order `LL, LR, UL, UR`.

use crate::error::{Error, Result};
use crate::mesh2d::{LL, LR, UL, UR};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeState {
    pub h_minus: f64,
    pub z_minus: f64,
    pub h_plus: f64,
    pub z_plus: f64,
    /// Unit normal pointing from the minus side to the plus side.
    pub normal: [f64; 2],
    pub edge_length: f64,
}

impl EdgeState {
    pub fn new(minus: (f64, f64), plus: (f64, f64), normal: [f64; 2], edge_length: f64) -> Result<Self> {
        let norm = normal[0].hypot(normal[1]);
        if (norm - 1.0).abs() > 1e-14 {
            return Err(Error::Domain(format!("edge normal has length {norm}")));
        }
        Ok(Self {
            h_minus: minus.0,
            z_minus: minus.1,
            h_plus: plus.0,
            z_plus: plus.1,
            normal,
            edge_length,
        })
    }

    pub fn flipped(&self) -> Self {
        Self {
            h_minus: self.h_plus,
            z_minus: self.z_plus,
            h_plus: self.h_minus,
            z_plus: self.z_minus,
            normal: [-self.normal[0], -self.normal[1]],
            edge_length: self.edge_length,
        }
    }
}

/// Segment-path fluctuation `½ g (h⁻ + h⁺)/2 (Z⁺ - Z⁻) n` on the momentum rows,
/// per unit edge length.
pub fn pc_fluctuation(e: &EdgeState, g: f64) -> [f64; 2] {
    let s = 0.5 * g * 0.5 * (e.h_minus + e.h_plus) * (e.z_plus - e.z_minus);
    [s * e.normal[0], s * e.normal[1]]
}

/// As [`pc_fluctuation`], zero when either side is below `h_min`.
pub fn pc_fluctuation_wet(e: &EdgeState, g: f64, h_min: f64) -> [f64; 2] {
    if e.h_minus < h_min || e.h_plus < h_min {
        [0.0, 0.0]
    } else {
        pc_fluctuation(e, g)
    }
}

/// Pressure jump plus both one-sided fluctuations across an edge,
/// `½ g (h⁻ + h⁺)(ζ⁺ - ζ⁻) n` with `ζ = h + Z`, per unit edge length.
///
/// When either side is below `h_min` only the pressure jump
/// `½ g (h⁺² - h⁻²) n` of the wet depths remains.
pub fn hydrostatic_jump_wet(e: &EdgeState, g: f64, h_min: f64) -> [f64; 2] {
    hydrostatic_jump_surface(
        (e.h_minus, e.h_minus + e.z_minus),
        (e.h_plus, e.h_plus + e.z_plus),
        e.normal,
        g,
        h_min,
    )
}

/// [`hydrostatic_jump_wet`] from `(h, ζ)` pairs, for callers that carry the
/// free surface separately from the depth.
pub fn hydrostatic_jump_surface(minus: (f64, f64), plus: (f64, f64), normal: [f64; 2], g: f64, h_min: f64) -> [f64; 2] {
    let wet = |h: f64| if h < h_min { 0.0 } else { h };
    let (hm, hp) = (wet(minus.0), wet(plus.0));
    let s = if hm == 0.0 || hp == 0.0 {
        0.5 * g * (hp * hp - hm * hm)
    } else {
        0.5 * g * (hm + hp) * (plus.1 - minus.1)
    };
    [s * normal[0], s * normal[1]]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    X,
    Y,
}

/// The two corner pairs `(lo, hi)` along `dir`, one per parallel edge.
fn edge_pairs(dir: Direction) -> [(usize, usize); 2] {
    match dir {
        Direction::X => [(LL, LR), (UL, UR)],
        Direction::Y => [(LL, UL), (LR, UR)],
    }
}

/// `∫_K g h ∂Z` as the mean over the two cell edges parallel to `dir`.
pub fn wb_node_gradient_integral(h: [f64; 4], z: [f64; 4], dir: Direction, g: f64, dx: f64, dy: f64) -> f64 {
    let len = if dir == Direction::X { dx } else { dy };
    let s: f64 = edge_pairs(dir)
        .iter()
        .map(|&(a, b)| g * 0.5 * (h[a] + h[b]) * (z[b] - z[a]) / len)
        .sum();
    0.5 * s * dx * dy
}

/// `∫_K ½ g ∂h²` in the same edge-mean form.
pub fn wb_pressure_integral(h: [f64; 4], dir: Direction, g: f64, dx: f64, dy: f64) -> f64 {
    let len = if dir == Direction::X { dx } else { dy };
    let s: f64 = edge_pairs(dir)
        .iter()
        .map(|&(a, b)| 0.5 * g * (h[b] * h[b] - h[a] * h[a]) / len)
        .sum();
    0.5 * s * dx * dy
}

/// Sum of [`wb_pressure_integral`] and [`wb_node_gradient_integral`],
/// formed per edge from free-surface differences so a flat `h + Z`
/// gives exactly zero.
pub fn wb_hydrostatic_integral(h: [f64; 4], z: [f64; 4], dir: Direction, g: f64, dx: f64, dy: f64) -> f64 {
    let len = if dir == Direction::X { dx } else { dy };
    let s: f64 = edge_pairs(dir)
        .iter()
        .map(|&(a, b)| 0.5 * g * (h[a] + h[b]) * ((h[b] + z[b]) - (h[a] + z[a])) / len)
        .sum();
    0.5 * s * dx * dy
}
