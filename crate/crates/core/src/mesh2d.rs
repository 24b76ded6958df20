//! Uniform quadrilateral mesh with cell (Q0) and node (Q1) layouts.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Wall,
    Periodic,
}

impl BoundaryKind {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryKind::Wall => "wall",
            BoundaryKind::Periodic => "periodic",
        }
    }
}

impl std::str::FromStr for BoundaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wall" => Ok(BoundaryKind::Wall),
            "periodic" => Ok(BoundaryKind::Periodic),
            other => Err(Error::Config(format!("unknown boundary kind '{other}'"))),
        }
    }
}

/// Corner slots returned by [`Mesh2D::nodes_of_cell`].
pub const LL: usize = 0;
pub const LR: usize = 1;
pub const UL: usize = 2;
pub const UR: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub origin: [f64; 2],
    /// Boundary kind of the x-sides (left/right) and of the y-sides (bottom/top).
    pub bc: [BoundaryKind; 2],
    lumped: Vec<f64>,
    incidence: Vec<Vec<(usize, usize)>>,
}

impl Mesh2D {
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, origin: [f64; 2], bc: [BoundaryKind; 2]) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::Config(format!("mesh needs at least 2x2 cells, got {nx}x{ny}")));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(Error::Config(format!("cell sizes must be positive, got {dx} x {dy}")));
        }
        let mut m = Self {
            nx,
            ny,
            dx,
            dy,
            origin,
            bc,
            lumped: Vec::new(),
            incidence: Vec::new(),
        };
        let nn = m.n_nodes();
        let mut incidence = vec![Vec::with_capacity(4); nn];
        for c in 0..m.n_cells() {
            for (corner, n) in m.corner_nodes(c).into_iter().enumerate() {
                incidence[n].push((c, corner));
            }
        }
        let quarter = 0.25 * m.cell_area();
        m.lumped = incidence.iter().map(|v| quarter * v.len() as f64).collect();
        m.incidence = incidence;
        Ok(m)
    }

    /// Mesh of `[x0, x0 + lx] x [y0, y0 + ly]`.
    pub fn rectangle(nx: usize, ny: usize, lx: f64, ly: f64, origin: [f64; 2], bc: [BoundaryKind; 2]) -> Result<Self> {
        Self::new(nx, ny, lx / nx as f64, ly / ny as f64, origin, bc)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Nodes per direction; periodic axes identify the last node line with the first.
    pub fn node_dims(&self) -> [usize; 2] {
        let d = |n: usize, k: BoundaryKind| if k == BoundaryKind::Periodic { n } else { n + 1 };
        [d(self.nx, self.bc[0]), d(self.ny, self.bc[1])]
    }

    pub fn n_nodes(&self) -> usize {
        let [a, b] = self.node_dims();
        a * b
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn cell_ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Node `(i, j)` with `0 ≤ i ≤ nx`, `0 ≤ j ≤ ny`, wrapped on periodic axes.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        let [nnx, nny] = self.node_dims();
        (j % nny) * nnx + (i % nnx)
    }

    pub fn node_ij(&self, n: usize) -> (usize, usize) {
        let nnx = self.node_dims()[0];
        (n % nnx, n / nnx)
    }

    pub fn node_xy(&self, n: usize) -> [f64; 2] {
        let (i, j) = self.node_ij(n);
        [self.origin[0] + i as f64 * self.dx, self.origin[1] + j as f64 * self.dy]
    }

    pub fn cell_center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.cell_ij(c);
        [
            self.origin[0] + (i as f64 + 0.5) * self.dx,
            self.origin[1] + (j as f64 + 0.5) * self.dy,
        ]
    }

    /// `[x_lo, x_hi, y_lo, y_hi]`
    pub fn cell_bounds(&self, c: usize) -> [f64; 4] {
        let (i, j) = self.cell_ij(c);
        let x0 = self.origin[0] + i as f64 * self.dx;
        let y0 = self.origin[1] + j as f64 * self.dy;
        [x0, x0 + self.dx, y0, y0 + self.dy]
    }

    fn corner_nodes(&self, c: usize) -> [usize; 4] {
        let (i, j) = self.cell_ij(c);
        [
            self.node_index(i, j),
            self.node_index(i + 1, j),
            self.node_index(i, j + 1),
            self.node_index(i + 1, j + 1),
        ]
    }

    /// Corners in the order `(i,j), (i+1,j), (i,j+1), (i+1,j+1)`.
    pub fn nodes_of_cell(&self, c: usize) -> Result<[usize; 4]> {
        if c >= self.n_cells() {
            return Err(Error::OutOfRange {
                index: c,
                len: self.n_cells(),
            });
        }
        Ok(self.corner_nodes(c))
    }

    /// `(cell, corner slot)` pairs touching node `n`.
    pub fn cells_of_node(&self, n: usize) -> &[(usize, usize)] {
        &self.incidence[n]
    }

    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn domain_area(&self) -> f64 {
        self.n_cells() as f64 * self.cell_area()
    }

    /// Wall sides touched by node `n`, as outward normals.
    pub fn wall_normals(&self, n: usize) -> Vec<[f64; 2]> {
        let (i, j) = self.node_ij(n);
        let mut out = Vec::new();
        if self.bc[0] == BoundaryKind::Wall {
            if i == 0 {
                out.push([-1.0, 0.0]);
            }
            if i == self.nx {
                out.push([1.0, 0.0]);
            }
        }
        if self.bc[1] == BoundaryKind::Wall {
            if j == 0 {
                out.push([0.0, -1.0]);
            }
            if j == self.ny {
                out.push([0.0, 1.0]);
            }
        }
        out
    }

    /// Per cell, the mean of its four corner values.
    pub fn node_to_cell_average<const N: usize>(&self, nodes: &[[f64; N]]) -> Vec<[f64; N]> {
        (0..self.n_cells())
            .map(|c| {
                let k = self.corner_nodes(c);
                let mut out = [0.0; N];
                for (m, o) in out.iter_mut().enumerate() {
                    *o = 0.25 * (nodes[k[0]][m] + nodes[k[1]][m] + nodes[k[2]][m] + nodes[k[3]][m]);
                }
                out
            })
            .collect()
    }

    /// `Σ_K r_K |K|/4 / m_i` over the cells adjacent to each node, gathered in a
    /// fixed order.
    pub fn lumped_mass_scatter<const N: usize>(&self, cells: &[[f64; N]]) -> Vec<[f64; N]> {
        let quarter = 0.25 * self.cell_area();
        (0..self.n_nodes())
            .map(|n| {
                let mut acc = [0.0; N];
                for &(c, _) in &self.incidence[n] {
                    for m in 0..N {
                        acc[m] += cells[c][m] * quarter;
                    }
                }
                acc.map(|a| a / self.lumped[n])
            })
            .collect()
    }
}

/// Conserved vector `(h, h u_x, h u_y, h T)` plus the topography `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State {
    pub h: f64,
    pub hu: f64,
    pub hv: f64,
    pub ht: f64,
    pub z: f64,
}

impl State {
    pub fn new(h: f64, hu: f64, hv: f64, ht: f64, z: f64) -> Self {
        Self { h, hu, hv, ht, z }
    }

    pub fn conserved(&self) -> [f64; 4] {
        [self.h, self.hu, self.hv, self.ht]
    }

    pub fn with_conserved(&self, q: [f64; 4]) -> Self {
        Self::new(q[0], q[1], q[2], q[3], self.z)
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.h, self.hu, self.hv, self.ht, self.z]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Cell,
    Node,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Cell => "cell",
            Layout::Node => "node",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub layout: Layout,
    pub values: Vec<State>,
}

impl Field {
    pub fn zeros(mesh: &Mesh2D, layout: Layout) -> Self {
        let n = match layout {
            Layout::Cell => mesh.n_cells(),
            Layout::Node => mesh.n_nodes(),
        };
        Self {
            layout,
            values: vec![State::default(); n],
        }
    }

    pub fn from_fn(mesh: &Mesh2D, layout: Layout, f: impl Fn(f64, f64) -> State) -> Self {
        let values = match layout {
            Layout::Cell => (0..mesh.n_cells())
                .map(|c| {
                    let [x, y] = mesh.cell_center(c);
                    f(x, y)
                })
                .collect(),
            Layout::Node => (0..mesh.n_nodes())
                .map(|n| {
                    let [x, y] = mesh.node_xy(n);
                    f(x, y)
                })
                .collect(),
        };
        Self { layout, values }
    }

    pub fn check_layout(&self, mesh: &Mesh2D, layout: Layout) -> Result<()> {
        let want = match layout {
            Layout::Cell => mesh.n_cells(),
            Layout::Node => mesh.n_nodes(),
        };
        if self.layout != layout || self.values.len() != want {
            return Err(Error::Config(format!(
                "field has {} {} values, mesh expects {want} {} values",
                self.values.len(),
                self.layout.name(),
                layout.name()
            )));
        }
        Ok(())
    }

    pub fn coords(&self, mesh: &Mesh2D, k: usize) -> [f64; 2] {
        match self.layout {
            Layout::Cell => mesh.cell_center(k),
            Layout::Node => mesh.node_xy(k),
        }
    }

    /// Mean of the four corner states (including `Z`).
    pub fn node_to_cell_average(&self, mesh: &Mesh2D) -> Result<Field> {
        self.check_layout(mesh, Layout::Node)?;
        let arr: Vec<[f64; 5]> = self.values.iter().map(State::as_array).collect();
        Ok(Field {
            layout: Layout::Cell,
            values: mesh.node_to_cell_average(&arr).into_iter().map(State::from_array).collect(),
        })
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|s| !s.is_finite())
    }
}

pub const DUMP_COLUMNS: &str = "x y h hu_x hu_y hT Z";

/// Text dump: a header line with the mesh, a column line, then one row per DOF.
pub fn write_field(mesh: &Mesh2D, field: &Field, out: &mut String) {
    let _ = writeln!(
        out,
        "field nx={} ny={} dx={:.16e} dy={:.16e} x0={:.16e} y0={:.16e} layout={} bc_x={} bc_y={}",
        mesh.nx,
        mesh.ny,
        mesh.dx,
        mesh.dy,
        mesh.origin[0],
        mesh.origin[1],
        field.layout.name(),
        mesh.bc[0].name(),
        mesh.bc[1].name()
    );
    let _ = writeln!(out, "{DUMP_COLUMNS}");
    for (k, s) in field.values.iter().enumerate() {
        let [x, y] = field.coords(mesh, k);
        let _ = writeln!(
            out,
            "{:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
            x, y, s.h, s.hu, s.hv, s.ht, s.z
        );
    }
}

pub fn field_to_string(mesh: &Mesh2D, field: &Field) -> String {
    let mut s = String::new();
    write_field(mesh, field, &mut s);
    s
}

pub fn read_field(text: &str) -> Result<(Mesh2D, Field)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty field dump".into(),
    })?;
    let mut words = header.split_whitespace();
    if words.next() != Some("field") {
        return Err(Error::Parse {
            line: 1,
            msg: "missing 'field' header".into(),
        });
    }
    let mut kv = std::collections::HashMap::new();
    for w in words {
        let (k, v) = w.split_once('=').ok_or(Error::Parse {
            line: 1,
            msg: format!("malformed header entry '{w}'"),
        })?;
        kv.insert(k, v);
    }
    let get = |k: &str| {
        kv.get(k).copied().ok_or(Error::Parse {
            line: 1,
            msg: format!("header lacks '{k}'"),
        })
    };
    let pf = |k: &str| -> Result<f64> {
        get(k)?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad number for '{k}'"),
        })
    };
    let pu = |k: &str| -> Result<usize> {
        get(k)?.parse().map_err(|_| Error::Parse {
            line: 1,
            msg: format!("bad integer for '{k}'"),
        })
    };
    let layout = match get("layout")? {
        "cell" => Layout::Cell,
        "node" => Layout::Node,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown layout '{other}'"),
            })
        }
    };
    let mesh = Mesh2D::new(
        pu("nx")?,
        pu("ny")?,
        pf("dx")?,
        pf("dy")?,
        [pf("x0")?, pf("y0")?],
        [get("bc_x")?.parse()?, get("bc_y")?.parse()?],
    )?;
    match lines.next() {
        Some((_, l)) if l.split_whitespace().eq(DUMP_COLUMNS.split_whitespace()) => {}
        Some((i, _)) => {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected column line '{DUMP_COLUMNS}'"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 2,
                msg: "missing column line".into(),
            })
        }
    }
    let mut values = Vec::new();
    for (i, l) in lines {
        let nums: Vec<f64> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                msg: "non-numeric entry".into(),
            })?;
        if nums.len() != 7 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 7 columns, got {}", nums.len()),
            });
        }
        values.push(State::new(nums[2], nums[3], nums[4], nums[5], nums[6]));
    }
    let field = Field { layout, values };
    field.check_layout(&mesh, layout)?;
    Ok((mesh, field))
}
