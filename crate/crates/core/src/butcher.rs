//! Three-stage IMEX Runge-Kutta tableau pairs and their algebraic checks.
//!
//! A pair couples an explicit tableau (non-stiff transport) with an ESDIRK
//! tableau (stiff sources). The two canonical pairs share the ARS-type
//! implicit part with `γ = 1 - √2/2` and differ only in the explicit stage
//! coefficients `a21`, `a32`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const STAGES: usize = 3;

const TOL_WEIGHTS: f64 = 1e-14;
const TOL_ORDER2: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tableau {
    pub a: [[f64; STAGES]; STAGES],
    pub b: [f64; STAGES],
    pub c: [f64; STAGES],
}

impl Tableau {
    pub const fn new(a: [[f64; STAGES]; STAGES], b: [f64; STAGES], c: [f64; STAGES]) -> Self {
        Self { a, b, c }
    }

    pub fn zero() -> Self {
        Self::new([[0.0; STAGES]; STAGES], [0.0; STAGES], [0.0; STAGES])
    }

    pub fn row_sum(&self, l: usize) -> f64 {
        self.a[l].iter().sum()
    }

    /// Diagonal of the second stage; equals γ for an ESDIRK tableau.
    pub fn gamma(&self) -> f64 {
        self.a[1][1]
    }

    pub fn is_strictly_lower(&self) -> bool {
        (0..STAGES).all(|l| (l..STAGES).all(|m| self.a[l][m] == 0.0))
    }

    /// `ã11 = 0`, constant positive diagonal afterwards, zero above it.
    pub fn is_esdirk(&self) -> bool {
        let g = self.a[1][1];
        self.a[0][0] == 0.0
            && g > 0.0
            && self.a[2][2] == g
            && (0..STAGES).all(|l| (l + 1..STAGES).all(|m| self.a[l][m] == 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ButcherPair {
    pub explicit: Tableau,
    pub implicit: Tableau,
}

impl ButcherPair {
    pub const fn new(explicit: Tableau, implicit: Tableau) -> Self {
        Self { explicit, implicit }
    }

    /// `b == b̃` componentwise, required for preserving linear invariants.
    pub fn weights_match(&self) -> bool {
        self.explicit.b == self.implicit.b
    }

    pub fn gamma(&self) -> f64 {
        self.implicit.gamma()
    }

    /// Flattened named coefficients, the form consumed by the stage kernels.
    pub fn coefficients(&self) -> ImexCoefficients {
        let e = &self.explicit;
        let i = &self.implicit;
        ImexCoefficients {
            a21: e.a[1][0],
            a31: e.a[2][0],
            a32: e.a[2][1],
            at21: i.a[1][0],
            at22: i.a[1][1],
            at31: i.a[2][0],
            at32: i.a[2][1],
            at33: i.a[2][2],
            b: e.b,
            bt: i.b,
            c: e.c,
            ct: i.c,
        }
    }
}

/// Named entries of a three-stage pair (`at*` are implicit-tableau entries).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImexCoefficients {
    pub a21: f64,
    pub a31: f64,
    pub a32: f64,
    pub at21: f64,
    pub at22: f64,
    pub at31: f64,
    pub at32: f64,
    pub at33: f64,
    pub b: [f64; STAGES],
    pub bt: [f64; STAGES],
    pub c: [f64; STAGES],
    pub ct: [f64; STAGES],
}

/// The two published coefficient sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairId {
    /// Explicit abscissae equal to the implicit ones (`c = c̃`).
    CEqCTilde,
    /// Explicit `a32` chosen to maximise the admissible Courant number.
    MaxNu,
}

impl PairId {
    pub const ALL: [PairId; 2] = [PairId::CEqCTilde, PairId::MaxNu];

    pub fn name(self) -> &'static str {
        match self {
            PairId::CEqCTilde => "C_EQ_CTILDE",
            PairId::MaxNu => "MAX_NU",
        }
    }

    pub fn pair(self) -> ButcherPair {
        canonical_pair(self)
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PairId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "C_EQ_CTILDE" => Ok(PairId::CEqCTilde),
            "MAX_NU" => Ok(PairId::MaxNu),
            other => Err(Error::Config(format!(
                "unknown pair '{other}' (expected C_EQ_CTILDE or MAX_NU)"
            ))),
        }
    }
}

fn sqrt2() -> f64 {
    std::f64::consts::SQRT_2
}

/// `γ = 1 - √2/2`.
pub fn canonical_gamma() -> f64 {
    1.0 - sqrt2() / 2.0
}

/// `a32 = (√2 - 1) / (2(3√2 - 4))`, the Courant-optimal explicit coupling.
pub fn max_nu_a32() -> f64 {
    let s = sqrt2();
    (s - 1.0) / (2.0 * (3.0 * s - 4.0))
}

pub fn canonical_pair(which: PairId) -> ButcherPair {
    let s = sqrt2();
    let g = canonical_gamma();
    let weights = [0.0, s / 2.0, g];
    let implicit = Tableau::new(
        [[0.0, 0.0, 0.0], [0.0, g, 0.0], [0.0, s / 2.0, g]],
        weights,
        [0.0, g, 1.0],
    );
    let (a21, a32) = match which {
        PairId::CEqCTilde => (g, 1.0),
        PairId::MaxNu => (s / 4.0, max_nu_a32()),
    };
    let explicit = Tableau::new(
        [[0.0, 0.0, 0.0], [a21, 0.0, 0.0], [0.0, a32, 0.0]],
        weights,
        [0.0, a21, a32],
    );
    ButcherPair::new(explicit, implicit)
}

pub fn check_first_order(pair: &ButcherPair) -> bool {
    let sb: f64 = pair.explicit.b.iter().sum();
    let sbt: f64 = pair.implicit.b.iter().sum();
    (sb - 1.0).abs() < TOL_WEIGHTS && (sbt - 1.0).abs() < TOL_WEIGHTS
}

pub fn check_compatibility(t: &Tableau) -> bool {
    (0..STAGES).all(|l| (t.row_sum(l) - t.c[l]).abs() < TOL_WEIGHTS)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// `Σb c - ½`, `Σb̃ c̃ - ½`, `Σb̃ c - ½`, `Σb c̃ - ½`.
    pub residuals: [f64; 4],
    pub satisfied: bool,
}

fn dot(x: &[f64; STAGES], y: &[f64; STAGES]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn check_second_order_coupling(pair: &ButcherPair) -> ConditionReport {
    let (e, i) = (&pair.explicit, &pair.implicit);
    let residuals = [
        dot(&e.b, &e.c) - 0.5,
        dot(&i.b, &i.c) - 0.5,
        dot(&i.b, &e.c) - 0.5,
        dot(&e.b, &i.c) - 0.5,
    ];
    ConditionReport {
        residuals,
        satisfied: residuals.iter().all(|r| r.abs() < TOL_ORDER2),
    }
}

/// Coefficient of `y⁴` in the E-polynomial of the ESDIRK family.
/// I-stability (and therefore A-stability) holds iff this is non-negative.
pub fn e_polynomial_coefficient(gamma: f64) -> f64 {
    4.0 * gamma.powi(3) - 5.0 * gamma.powi(2) + 2.0 * gamma - 0.25
}

/// `R(z) = 1 + z bᵀ(I - zA)⁻¹ 1`, solved by forward substitution.
pub fn stability_function(t: &Tableau, z: Complex64) -> Result<Complex64> {
    let mut k = [Complex64::new(0.0, 0.0); STAGES];
    for l in 0..STAGES {
        let diag = Complex64::new(1.0, 0.0) - z * t.a[l][l];
        if diag.norm() <= f64::EPSILON * (1.0 + (z * t.a[l][l]).norm()) {
            return Err(Error::SingularStage { stage: l + 1 });
        }
        let mut rhs = Complex64::new(1.0, 0.0);
        for m in 0..l {
            rhs += z * t.a[l][m] * k[m];
        }
        for m in (l + 1)..STAGES {
            if t.a[l][m] != 0.0 {
                return Err(Error::Domain(
                    "stability_function requires a lower-triangular tableau".into(),
                ));
            }
        }
        k[l] = rhs / diag;
    }
    let sum: Complex64 = (0..STAGES).map(|l| k[l] * t.b[l]).sum();
    Ok(Complex64::new(1.0, 0.0) + z * sum)
}

pub fn check_stiff_accuracy(t: &Tableau) -> bool {
    (0..STAGES).all(|m| (t.a[STAGES - 1][m] - t.b[m]).abs() < TOL_WEIGHTS)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DaeCheck {
    Satisfied { value: f64 },
    Violated { value: f64 },
    /// The trailing 2×2 block of `Ã` cannot be inverted.
    Singular,
}

impl DaeCheck {
    pub fn passed(self) -> bool {
        matches!(self, DaeCheck::Satisfied { .. })
    }
}

/// `b̂ᵀ Â⁻¹ ĉ = 1` on the trailing 2×2 block of the implicit tableau.
pub fn check_dae_condition(t: &Tableau) -> DaeCheck {
    let (p, q, r, s) = (t.a[1][1], t.a[1][2], t.a[2][1], t.a[2][2]);
    let det = p * s - q * r;
    let scale = p.abs().max(q.abs()).max(r.abs()).max(s.abs());
    if scale == 0.0 || det.abs() <= 1e-14 * scale * scale {
        return DaeCheck::Singular;
    }
    let (c2, c3) = (t.c[1], t.c[2]);
    let x2 = (s * c2 - q * c3) / det;
    let x3 = (p * c3 - r * c2) / det;
    let value = t.b[1] * x2 + t.b[2] * x3;
    if (value - 1.0).abs() < TOL_ORDER2 {
        DaeCheck::Satisfied { value }
    } else {
        DaeCheck::Violated { value }
    }
}

/// Residual of `-a21 √2 - a32 (2 - √2) + 1`, the relation tying the explicit
/// coefficients once the space-time L-stability conditions are imposed.
pub fn l_stability_closure_residual(explicit: &Tableau) -> f64 {
    let s = sqrt2();
    -explicit.a[1][0] * s - explicit.a[2][1] * (2.0 - s) + 1.0
}

/// Every algebraic check on a pair, as printed by `tableau check`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub first_order: bool,
    pub compatibility_explicit: bool,
    pub compatibility_implicit: bool,
    pub coupling: ConditionReport,
    pub stiffly_accurate: bool,
    pub dae: DaeCheck,
    pub e_polynomial: f64,
    pub closure_residual: f64,
    pub weights_match: bool,
}

impl PairReport {
    pub fn for_pair(pair: &ButcherPair) -> Self {
        Self {
            first_order: check_first_order(pair),
            compatibility_explicit: check_compatibility(&pair.explicit),
            compatibility_implicit: check_compatibility(&pair.implicit),
            coupling: check_second_order_coupling(pair),
            stiffly_accurate: check_stiff_accuracy(&pair.implicit),
            dae: check_dae_condition(&pair.implicit),
            e_polynomial: e_polynomial_coefficient(pair.gamma()),
            closure_residual: l_stability_closure_residual(&pair.explicit),
            weights_match: pair.weights_match(),
        }
    }

    pub fn passed(&self) -> bool {
        self.first_order
            && self.compatibility_explicit
            && self.compatibility_implicit
            && self.coupling.satisfied
            && self.stiffly_accurate
            && self.dae.passed()
            && self.e_polynomial >= 0.0
            && self.weights_match
    }

    pub fn write_kv(&self, out: &mut impl fmt::Write) -> fmt::Result {
        writeln!(out, "first_order = {}", self.first_order)?;
        writeln!(out, "compatibility_explicit = {}", self.compatibility_explicit)?;
        writeln!(out, "compatibility_implicit = {}", self.compatibility_implicit)?;
        for (k, r) in self.coupling.residuals.iter().enumerate() {
            writeln!(out, "coupling_residual_{} = {:.16e}", k + 1, r)?;
        }
        writeln!(out, "coupling_satisfied = {}", self.coupling.satisfied)?;
        writeln!(out, "stiffly_accurate = {}", self.stiffly_accurate)?;
        match self.dae {
            DaeCheck::Satisfied { value } | DaeCheck::Violated { value } => {
                writeln!(out, "dae_value = {value:.16e}")?
            }
            DaeCheck::Singular => writeln!(out, "dae_value = singular")?,
        }
        writeln!(out, "dae_satisfied = {}", self.dae.passed())?;
        writeln!(out, "e_polynomial_y4 = {:.16e}", self.e_polynomial)?;
        writeln!(out, "closure_residual = {:.16e}", self.closure_residual)?;
        writeln!(out, "weights_match = {}", self.weights_match)?;
        writeln!(out, "passed = {}", self.passed())
    }
}

/// Parse the plain-text pair format: explicit block then implicit block,
/// each as three `a` rows, a `b` row and a `c` row. `#` starts a comment.
pub fn parse_pair(text: &str) -> Result<ButcherPair> {
    let mut rows: Vec<(usize, [f64; STAGES])> = Vec::with_capacity(10);
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| Error::Parse {
                    line: n + 1,
                    msg: format!("not a number: '{s}'"),
                })
            })
            .collect::<Result<_>>()?;
        if vals.len() != STAGES {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("expected {STAGES} values, found {}", vals.len()),
            });
        }
        rows.push((n + 1, [vals[0], vals[1], vals[2]]));
    }
    if rows.len() != 10 {
        return Err(Error::Parse {
            line: rows.last().map_or(0, |r| r.0),
            msg: format!("expected 10 data rows (two tableaux), found {}", rows.len()),
        });
    }
    let block = |off: usize| {
        Tableau::new(
            [rows[off].1, rows[off + 1].1, rows[off + 2].1],
            rows[off + 3].1,
            rows[off + 4].1,
        )
    };
    Ok(ButcherPair::new(block(0), block(5)))
}

pub fn format_pair(pair: &ButcherPair) -> String {
    let mut s = String::new();
    for (label, t) in [("explicit", &pair.explicit), ("implicit", &pair.implicit)] {
        s.push_str(&format!("# {label}: a rows, b, c\n"));
        for row in t.a.iter().chain([&t.b, &t.c]) {
            s.push_str(&format!("{:.16e} {:.16e} {:.16e}\n", row[0], row[1], row[2]));
        }
    }
    s
}
