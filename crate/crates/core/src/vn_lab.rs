//! Fully-discrete von Neumann analysis of the staggered scheme on the 1D
//! advection-reaction model `q_t + a q_x + χ q = 0`.
//!
//! A Fourier mode `exp(i k x_j)` is an eigenvector of every stage, so each
//! stage multiplies it by a complex factor depending only on the Courant
//! number `ν = aΔt/Δx`, the reaction number `Φ = χΔt` and the phase `θ = kΔx`.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;

use crate::butcher::{ButcherPair, ImexCoefficients};
use crate::error::{Error, Result};

/// Default resolution of phase sweeps.
pub const THETA_POINTS: usize = 720;
/// Φ sweeps are log-uniform on `[10^PHI_DECADE_LO, 10^PHI_DECADE_HI]`.
pub const PHI_DECADE_LO: i32 = -3;
pub const PHI_DECADE_HI: i32 = 6;
pub const PHI_POINTS_PER_DECADE: usize = 10;
/// Courant number at which certificates sample the amplification factor.
pub const CERTIFY_NU: f64 = 1.22;

const L_STABLE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplificationInput {
    pub nu: f64,
    pub phi: f64,
    pub theta: f64,
}

impl AmplificationInput {
    pub fn new(nu: f64, phi: f64, theta: f64) -> Self {
        Self { nu, phi, theta }
    }

    /// Phase reduced to `[0, 2π)`.
    pub fn reduced_theta(&self) -> f64 {
        let r = self.theta.rem_euclid(2.0 * PI);
        if r >= 2.0 * PI {
            0.0
        } else {
            r
        }
    }
}

struct Phases {
    e: Complex64,
    em: Complex64,
    /// `(e^{iθ} - e^{-iθ}) / 2 = i sin θ`
    isin: Complex64,
}

impl Phases {
    fn new(theta: f64) -> Self {
        let e = Complex64::from_polar(1.0, theta);
        let em = e.conj();
        Self {
            e,
            em,
            isin: Complex64::new(0.0, theta.sin()),
        }
    }
}

fn guard(den: f64) -> Result<f64> {
    if den == 0.0 {
        Err(Error::Domain("1 + γΦ vanishes".into()))
    } else {
        Ok(den)
    }
}

fn g2(k: &ImexCoefficients, inp: &AmplificationInput, ph: &Phases) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let den = guard(1.0 + k.at22 * inp.phi)?;
    Ok(((one + ph.e) * 0.5 * (1.0 - k.at21 * inp.phi) - (ph.e - one) * (k.a21 * inp.nu)) / den)
}

fn g3(k: &ImexCoefficients, inp: &AmplificationInput, ph: &Phases, g2: Complex64) -> Result<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let den = guard(1.0 + k.at33 * inp.phi)?;
    let num = one * (1.0 - k.at31 * inp.phi) - ph.isin * (k.a31 * inp.nu)
        - g2 * (ph.em + one) * (0.5 * k.at32 * inp.phi)
        + g2 * (ph.em - one) * (k.a32 * inp.nu);
    Ok(num / den)
}

/// Factor of the cell-centred second stage, `q_{j+1/2} = G2 q_j`.
pub fn stage2_factor(pair: &ButcherPair, inp: &AmplificationInput) -> Result<Complex64> {
    g2(&pair.coefficients(), inp, &Phases::new(inp.theta))
}

/// Factor of the nodal third stage, `q_j^{(3)} = G3 q_j`.
pub fn stage3_factor(pair: &ButcherPair, inp: &AmplificationInput) -> Result<Complex64> {
    let k = pair.coefficients();
    let ph = Phases::new(inp.theta);
    let s2 = g2(&k, inp, &ph)?;
    g3(&k, inp, &ph, s2)
}

/// One-step amplification factor of the complete scheme.
///
/// Advective terms of the update carry the explicit weights `b`, reaction
/// terms the implicit weights `b̃` (identical for the canonical pairs).
pub fn full_factor(pair: &ButcherPair, inp: &AmplificationInput) -> Result<Complex64> {
    let k = pair.coefficients();
    let ph = Phases::new(inp.theta);
    let one = Complex64::new(1.0, 0.0);
    let s2 = g2(&k, inp, &ph)?;
    let s3 = g3(&k, inp, &ph, s2)?;
    let (nu, phi) = (inp.nu, inp.phi);
    Ok(one * (1.0 - k.bt[0] * phi) - ph.isin * (k.b[0] * nu)
        - s2 * (ph.em + one) * (0.5 * k.bt[1] * phi)
        + s2 * (ph.em - one) * (k.b[1] * nu)
        - s3 * (k.bt[2] * phi)
        - s3 * ph.isin * (k.b[2] * nu))
}

/// Limit of the amplification factor as `Φ → ∞`.
///
/// Valid for stiffly accurate pairs with `b = b̃` equal to the last implicit row.
pub fn g_lim(pair: &ButcherPair, nu: f64, theta: f64) -> Complex64 {
    let k = pair.coefficients();
    let g = k.at22;
    let (s, c) = theta.sin_cos();
    let imag = g * nu * s * (k.at21 * (k.at32 - 2.0 * k.a32) - k.at21 * k.at32 * c + 2.0 * k.a31 * g);
    let real = k.at21 * k.at32 * c + k.at21 * k.at32 - 2.0 * k.at31 * g;
    Complex64::new(real, imag) / (2.0 * g * g)
}

/// The three quantities that must vanish for `G → 0` as `Φ → ∞`
/// independently of the phase.
pub fn l_stability_residuals(pair: &ButcherPair) -> [f64; 3] {
    let k = pair.coefficients();
    [
        k.at21 * k.at32,
        k.at21 * (k.at32 - 2.0 * k.a32) + 2.0 * k.a31 * k.at22,
        k.at31 * k.at22,
    ]
}

pub fn theta_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| 2.0 * PI * i as f64 / n as f64)
}

pub fn phi_grid() -> impl Iterator<Item = f64> {
    let decades = (PHI_DECADE_HI - PHI_DECADE_LO) as usize;
    let n = decades * PHI_POINTS_PER_DECADE + 1;
    (0..n).map(|i| {
        10f64.powf(PHI_DECADE_LO as f64 + i as f64 / PHI_POINTS_PER_DECADE as f64)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub pair_id: String,
    /// max |G| over the Φ sweep (including Φ = 0) and the θ grid at `CERTIFY_NU`.
    pub max_abs_g: f64,
    pub max_abs_g_lim: f64,
    pub conditions: [f64; 3],
    pub courant_bound: f64,
    pub space_time_l_stable: bool,
}

impl StabilityCertificate {
    pub fn write_kv(&self, out: &mut impl std::fmt::Write) -> std::fmt::Result {
        writeln!(out, "pair = {}", self.pair_id)?;
        for (i, r) in self.conditions.iter().enumerate() {
            writeln!(out, "l_stability_residual_{} = {:.16e}", i + 1, r)?;
        }
        writeln!(out, "max_abs_g_lim = {:.16e}", self.max_abs_g_lim)?;
        writeln!(out, "max_abs_g = {:.16e}", self.max_abs_g)?;
        writeln!(out, "courant_bound = {:.16e}", self.courant_bound)?;
        writeln!(out, "space_time_l_stable = {}", self.space_time_l_stable)
    }
}

pub fn check_space_time_l_stability(pair: &ButcherPair, pair_id: &str) -> StabilityCertificate {
    let conditions = l_stability_residuals(pair);
    let max_abs_g_lim = theta_grid(THETA_POINTS)
        .map(|t| g_lim(pair, CERTIFY_NU, t).norm())
        .fold(0.0, f64::max);
    let max_abs_g = std::iter::once(0.0)
        .chain(phi_grid())
        .flat_map(|phi| {
            theta_grid(THETA_POINTS).map(move |t| AmplificationInput::new(CERTIFY_NU, phi, t))
        })
        .filter_map(|inp| full_factor(pair, &inp).ok())
        .map(|g| g.norm())
        .fold(0.0, f64::max);
    let courant_bound = courant_bound(pair.explicit.a[2][1]).unwrap_or(f64::NAN);
    StabilityCertificate {
        pair_id: pair_id.to_string(),
        max_abs_g,
        max_abs_g_lim,
        conditions,
        courant_bound,
        space_time_l_stable: conditions.iter().all(|r| r.abs() < L_STABLE_TOL),
    }
}

/// Bracket multiplying `a² Δt² χ ∂²q/∂x²` in the modified equation of the
/// canonical implicit part; numerical diffusion is non-negative iff this is.
pub fn diffusion_coefficient(a32: f64, nu: f64) -> f64 {
    let s = SQRT_2;
    (2.0 - 3.0 / s) * a32 * a32 - (0.5 - s / 2.0) * a32
        + (0.5 - s / 2.0 + 1.0 / (4.0 * s * nu * nu))
}

/// Largest |ν| keeping [`diffusion_coefficient`] non-negative.
pub fn courant_bound(a32: f64) -> Result<f64> {
    let s = SQRT_2;
    let radicand = (3.0 * s - 4.0) * a32 * a32 + (1.0 - s) * a32 + (s - 1.0);
    if radicand <= 0.0 || !radicand.is_finite() {
        return Err(Error::Domain(format!(
            "courant bound radicand {radicand} is not positive for a32 = {a32}"
        )));
    }
    Ok(2f64.powf(-0.75) / radicand.sqrt())
}

/// Minimiser of the radicand in [`courant_bound`].
pub fn optimal_a32() -> f64 {
    let s = SQRT_2;
    (s - 1.0) / (2.0 * (3.0 * s - 4.0))
}

/// `√(2(17√2 - 24) / (215√2 - 304))`, the bound attained at [`optimal_a32`].
pub fn optimal_courant_bound() -> f64 {
    let s = SQRT_2;
    (2.0 * (17.0 * s - 24.0) / (215.0 * s - 304.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub phi: f64,
    pub theta: f64,
    pub g: Complex64,
}

/// `|G|(Φ, θ)` on the default grids at fixed ν, Φ outer and θ inner.
pub fn sweep(pair: &ButcherPair, nu: f64) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(91 * THETA_POINTS);
    for phi in phi_grid() {
        for theta in theta_grid(THETA_POINTS) {
            let g = full_factor(pair, &AmplificationInput::new(nu, phi, theta))?;
            rows.push(SweepRow { phi, theta, g });
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv(rows: &[SweepRow], out: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(out, "phi,theta,abs_G,re_G,im_G")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.phi,
            r.theta,
            r.g.norm(),
            r.g.re,
            r.g.im
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::butcher::{canonical_pair, PairId, Tableau};

    fn pair_with(at31: f64, g: f64) -> ButcherPair {
        let mut imp = Tableau::zero();
        imp.a[1][1] = g;
        imp.a[2][2] = g;
        imp.a[2][0] = at31;
        ButcherPair::new(Tableau::zero(), imp)
    }

    #[test]
    fn stage2_trivial_modes() {
        let p = canonical_pair(PairId::MaxNu);
        let g = stage2_factor(&p, &AmplificationInput::new(0.0, 0.0, 0.0)).unwrap();
        assert!((g - 1.0).norm() < 1e-15);
        let g = stage2_factor(&p, &AmplificationInput::new(0.0, 0.0, PI)).unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn identity_without_dynamics() {
        for id in PairId::ALL {
            let p = canonical_pair(id);
            for t in theta_grid(37) {
                let inp = AmplificationInput::new(0.0, 0.0, t);
                assert!((stage3_factor(&p, &inp).unwrap() - 1.0).norm() < 1e-15);
                assert!((full_factor(&p, &inp).unwrap() - 1.0).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn stage3_decays_like_inverse_phi() {
        let p = canonical_pair(PairId::MaxNu);
        let g = stage3_factor(&p, &AmplificationInput::new(1.0, 1e8, PI / 3.0)).unwrap();
        assert!(g.norm() < 1e-6);
    }

    #[test]
    fn g_lim_vanishes_for_canonical_pairs() {
        for id in PairId::ALL {
            let p = canonical_pair(id);
            for t in theta_grid(90) {
                for nu in [-1.22, 0.3, 1.0, 1.22] {
                    assert_eq!(g_lim(&p, nu, t).norm(), 0.0);
                }
            }
            let far = full_factor(&p, &AmplificationInput::new(1.22, 1e9, 1.3)).unwrap();
            assert!(far.norm() < 1e-7);
        }
    }

    #[test]
    fn g_lim_direct_value() {
        let p = pair_with(0.1, 0.5);
        let v = g_lim(&p, 0.7, 1.1);
        assert!((v - Complex64::new(-0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn full_factor_tends_to_g_lim() {
        // a pair that is not space-time L-stable still converges to its own limit
        let mut p = canonical_pair(PairId::MaxNu);
        p.implicit.a[1][0] = 0.2;
        p.implicit.a[1][1] = 0.5;
        p.implicit.a[2][2] = 0.5;
        p.implicit.a[2][0] = 0.05;
        p.implicit.b = p.implicit.a[2];
        p.explicit.b = p.implicit.b;
        let (nu, th) = (0.8, 2.1);
        let lim = g_lim(&p, nu, th);
        let errs: Vec<f64> = [1e3, 1e4, 1e5]
            .iter()
            .map(|&phi| (full_factor(&p, &AmplificationInput::new(nu, phi, th)).unwrap() - lim).norm())
            .collect();
        let slope = (errs[0].ln() - errs[2].ln()) / (1e5f64.ln() - 1e3f64.ln());
        assert!(slope >= 0.9, "{errs:?}");
    }

    #[test]
    fn certificate_flags_tg2_like_companion() {
        let mut p = canonical_pair(PairId::MaxNu);
        p.implicit.a[1][0] = p.gamma();
        let cert = check_space_time_l_stability(&p, "tg2-like");
        assert!(cert.conditions[0].abs() > 0.1);
        assert!(!cert.space_time_l_stable);

        let cert = check_space_time_l_stability(&canonical_pair(PairId::MaxNu), "MAX_NU");
        assert!(cert.space_time_l_stable);
        assert_eq!(cert.conditions, [0.0; 3]);
        assert_eq!(cert.max_abs_g_lim, 0.0);
        assert!(cert.max_abs_g <= 1.0 + 1e-12);
    }

    #[test]
    fn diffusion_bracket_vanishes_at_bound() {
        for a32 in [0.0, 0.3, optimal_a32(), 1.0, 1.7] {
            let nu = courant_bound(a32).unwrap();
            assert!(diffusion_coefficient(a32, nu).abs() < 1e-12, "a32 = {a32}");
            assert!(diffusion_coefficient(a32, 0.9 * nu) > 0.0);
            assert!(diffusion_coefficient(a32, 1.1 * nu) < 0.0);
        }
        let s = SQRT_2;
        let direct = (2.0 - 3.0 / s) - (0.5 - s / 2.0) + (0.5 - s / 2.0 + 1.0 / (4.0 * s * 0.25));
        assert_eq!(diffusion_coefficient(1.0, 0.5), direct);
        assert!((diffusion_coefficient(0.0, 1e12) - (0.5 - s / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn courant_bound_values() {
        let opt = courant_bound(optimal_a32()).unwrap();
        assert!((opt - optimal_courant_bound()).abs() < 1e-12);
        assert!((opt - 1.2202).abs() < 1e-4);
        assert!(courant_bound(1.0).unwrap() < opt);
        let zero = courant_bound(0.0).unwrap();
        assert!((zero - 2f64.powf(-0.75) / (SQRT_2 - 1.0).sqrt()).abs() < 1e-15);
        assert!((zero - 0.92388).abs() < 1e-5);
    }

    #[test]
    fn courant_bound_domain_error() {
        // radicand (3√2-4)a² + (1-√2)a + (√2-1) has negative discriminant, so
        // it only fails for non-finite input
        assert!(courant_bound(f64::NAN).is_err());
        assert!(courant_bound(f64::INFINITY).is_err());
    }

    #[test]
    fn optimum_beats_grid() {
        let best = courant_bound(optimal_a32()).unwrap();
        for i in 0..=2000 {
            let x = 2.0 * i as f64 / 2000.0;
            assert!(best >= courant_bound(x).unwrap());
        }
        assert!((optimal_a32() - 0.853_553_390_593_273_7).abs() < 1e-14);
    }

    #[test]
    fn sweep_shape() {
        let rows = sweep(&canonical_pair(PairId::MaxNu), CERTIFY_NU).unwrap();
        assert_eq!(rows.len(), 91 * THETA_POINTS);
        assert!((rows[0].phi - 1e-3).abs() < 1e-18);
        assert!((rows.last().unwrap().phi - 1e6).abs() < 1e-6);
        let mut buf = Vec::new();
        write_sweep_csv(&rows[..2], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("phi,theta,abs_G,re_G,im_G\n"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn theta_reduction() {
        let inp = AmplificationInput::new(1.0, 0.0, -0.5);
        assert!((inp.reduced_theta() - (2.0 * PI - 0.5)).abs() < 1e-15);
        assert_eq!(AmplificationInput::new(1.0, 0.0, 2.0 * PI).reduced_theta(), 0.0);
    }
}
