//! Coupling at a jump of the pipe section: the stationary ODE, the Σ map,
//! the transfer map T and the Riemann solver at a junction.
//!
//! The coupling condition between traces `u⁻` (section `a⁻`) and `u⁺`
//! (section `a⁺`) reads
//! `(a⁺q⁺ − a⁻q⁻, a⁺P(u⁺) − a⁻P(u⁻)) = Σ(a⁻, a⁺; u⁻)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas_core::{GasState, PressureLaw, RHO_FLOOR};
use crate::ode::{integrate, OdeOptions};
use crate::riemann::{self, make_wave, Wave, WaveFamily, ZERO_WAVE};

/// Largest `|v|/c` accepted at a junction.
pub const MAX_MACH: f64 = 0.99;

pub type SigmaFn = Arc<dyn Fn(f64, f64, GasState) -> [f64; 2] + Send + Sync>;

/// Choice of the junction defect Σ.
#[derive(Clone)]
pub enum CouplingLaw {
    /// Σ induced by smooth stationary flow through a monotone section change.
    SmoothSection,
    /// Externally supplied Σ, assumed to satisfy the coupling axioms.
    Custom { name: String, sigma: SigmaFn },
}

impl fmt::Debug for CouplingLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CouplingLaw::SmoothSection => write!(f, "SmoothSection"),
            CouplingLaw::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// A stationary path `x ↦ u(x)` together with the accumulated `∫ p(ρ) a′ dx`.
#[derive(Clone, Debug)]
pub struct StationaryPath {
    pub points: Vec<(f64, GasState)>,
    pub sigma2: f64,
}

impl StationaryPath {
    pub fn end(&self) -> GasState {
        self.points.last().expect("path has a start point").1
    }
}

fn check_mach(law: &PressureLaw, u: GasState, what: &str) -> Result<()> {
    u.check()?;
    let m = law.mach(u);
    if m > MAX_MACH {
        return Err(Error::Neighborhood(format!("{what}: |v|/c = {m} exceeds {MAX_MACH}")));
    }
    Ok(())
}

/// `dρ/ds` for stationary flow with mass flux `m` through section `a`, times `a′`.
fn stationary_rhs(law: &PressureLaw, m: f64, a: f64, da: f64, rho: f64) -> Result<f64> {
    if !(rho > RHO_FLOOR) {
        return Err(Error::Vacuum { rho });
    }
    let v = m / (a * rho);
    let c2 = law.dp(rho);
    let gap = c2 - v * v;
    if gap <= 1e-10 * c2 {
        return Err(Error::Sonic { ratio: v.abs() / c2.sqrt(), context: format!("a = {a}") });
    }
    Ok(da * rho * v * v / (a * gap))
}

/// Integrates the stationary equations `(a q)′ = 0`, `(a P(u))′ = p(ρ) a′`
/// along `x ∈ [x0, x1]` for a section profile given by `a` and its derivative.
pub fn stationary_integrate(
    law: &PressureLaw,
    a: impl Fn(f64) -> f64,
    da: impl Fn(f64) -> f64,
    x0: f64,
    x1: f64,
    u0: GasState,
) -> Result<StationaryPath> {
    u0.check()?;
    if !law.is_subsonic(u0)? {
        return Err(Error::Sonic { ratio: law.mach(u0), context: "initial state".into() });
    }
    let m = a(x0) * u0.q;
    let rhs = |x: f64, y: &[f64; 2]| -> Result<[f64; 2]> {
        let d = da(x);
        Ok([stationary_rhs(law, m, a(x), d, y[0])?, law.p(y[0]) * d])
    };
    let opts = OdeOptions { record: true, ..OdeOptions::default() };
    let out = integrate(rhs, x0, x1, [u0.rho, 0.0], &opts)?;
    let points = out
        .path
        .iter()
        .map(|(x, y)| (*x, GasState::new(y[0], m / a(*x))))
        .collect();
    Ok(StationaryPath { points, sigma2: out.y[1] })
}

/// Stationary flow in the section variable α from `a⁻` to `a⁺`:
/// returns the endpoint state and `∫ p(R(α)) dα`.
fn stationary_alpha(law: &PressureLaw, am: f64, ap: f64, um: GasState) -> Result<(GasState, f64)> {
    let m = am * um.q;
    let rhs = |alpha: f64, y: &[f64; 2]| -> Result<[f64; 2]> {
        Ok([stationary_rhs(law, m, alpha, 1.0, y[0])?, law.p(y[0])])
    };
    let out = integrate(rhs, am, ap, [um.rho, 0.0], &OdeOptions::default())?;
    Ok((GasState::new(out.y[0], m / ap), out.y[1]))
}

fn check_sections(am: f64, ap: f64) -> Result<()> {
    if !(am > 0.0 && ap > 0.0 && am.is_finite() && ap.is_finite()) {
        return Err(Error::Domain(format!("sections must be positive, got {am}, {ap}")));
    }
    Ok(())
}

/// The junction defect `Σ(a⁻, a⁺; u⁻)`.
pub fn sigma_map(claw: &CouplingLaw, law: &PressureLaw, am: f64, ap: f64, um: GasState) -> Result<[f64; 2]> {
    check_sections(am, ap)?;
    um.check()?;
    if am == ap {
        return Ok([0.0, 0.0]);
    }
    match claw {
        CouplingLaw::SmoothSection => {
            check_mach(law, um, "Σ input")?;
            Ok([0.0, stationary_alpha(law, am, ap, um)?.1])
        }
        CouplingLaw::Custom { sigma, .. } => Ok(sigma(am, ap, um)),
    }
}

/// `∂_{a⁺}Σ₂(a, a⁺; u)` at `a⁺ = a`.
pub fn dsigma_da(claw: &CouplingLaw, law: &PressureLaw, a: f64, u: GasState) -> Result<f64> {
    match claw {
        CouplingLaw::SmoothSection => Ok(law.p(u.rho)),
        CouplingLaw::Custom { sigma, .. } => {
            let h = 1e-5 * a;
            Ok((sigma(a, a + h, u)[1] - sigma(a, a - h, u)[1]) / (2.0 * h))
        }
    }
}

/// `Ψ(a⁻, u⁻; a⁺, u⁺)`; zero exactly when the traces are coupled.
pub fn psi_residual(
    claw: &CouplingLaw,
    law: &PressureLaw,
    am: f64,
    um: GasState,
    ap: f64,
    up: GasState,
) -> Result<[f64; 2]> {
    up.check()?;
    let s = sigma_map(claw, law, am, ap, um)?;
    Ok([
        ap * up.q - am * um.q - s[0],
        ap * law.flux_q(up) - am * law.flux_q(um) - s[1],
    ])
}

/// The transfer map: the subsonic `u⁺` coupled to `u⁻`.
pub fn t_map(claw: &CouplingLaw, law: &PressureLaw, am: f64, ap: f64, um: GasState) -> Result<GasState> {
    check_sections(am, ap)?;
    um.check()?;
    if am == ap {
        return Ok(um);
    }
    check_mach(law, um, "T input")?;
    let up = match claw {
        CouplingLaw::SmoothSection => stationary_alpha(law, am, ap, um)?.0,
        CouplingLaw::Custom { .. } => t_map_newton(claw, law, am, ap, um)?,
    };
    check_mach(law, up, "T output")?;
    Ok(up)
}

/// Solves `Ψ = 0` for `u⁺` by Newton on the subsonic branch; `q⁺` follows
/// from the mass balance, leaving a scalar equation in `ρ⁺`.
pub fn t_map_newton(claw: &CouplingLaw, law: &PressureLaw, am: f64, ap: f64, um: GasState) -> Result<GasState> {
    let s = sigma_map(claw, law, am, ap, um)?;
    let qp = (am * um.q + s[0]) / ap;
    let target = am * law.flux_q(um) + s[1];
    let f = |rho: f64| ap * (qp * qp / rho + law.p(rho)) - target;
    let df = |rho: f64| {
        let v = qp / rho;
        ap * (law.dp(rho) - v * v)
    };
    let fo = first_order_coeffs(law, am, um, dsigma_da(claw, law, am, um)?)?;
    let theta = (ap - am) / am;
    let mut rho = (1.0 + fo.h * theta) * um.rho;
    let scale = target.abs().max(1e-300);
    for _ in 0..100 {
        let d = df(rho);
        if !(d > 0.0) {
            // Left the subsonic branch; step back towards denser states.
            rho = 2.0 * rho.max(qp.abs() / law.c(rho));
            continue;
        }
        let step = f(rho) / d;
        let mut next = rho - step;
        if next <= 0.5 * rho {
            next = 0.5 * rho;
        }
        if (next - rho).abs() <= 1e-15 * rho && f(next).abs() <= 1e-12 * scale {
            return Ok(GasState::new(next, qp));
        }
        rho = next;
    }
    if f(rho).abs() <= 1e-12 * scale && df(rho) > 0.0 {
        return Ok(GasState::new(rho, qp));
    }
    Err(Error::Solver(format!("T by Newton: residual {:e} at ρ = {rho}", f(rho))))
}

/// Closed-form first-order junction coefficients at `(a, u)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrder {
    pub h: f64,
    pub g: f64,
    pub k1: f64,
    pub k2: f64,
}

pub fn first_order_coeffs(law: &PressureLaw, a: f64, u: GasState, dsigma: f64) -> Result<FirstOrder> {
    u.check()?;
    let rho = u.rho;
    let v = u.v();
    let c = law.c(rho);
    let xi2 = (v / c) * (v / c);
    if xi2 >= 1.0 - 1e-14 {
        return Err(Error::Sonic { ratio: xi2.sqrt(), context: "first-order coefficients".into() });
    }
    let d = (dsigma - law.p(rho)) / rho;
    let cr = law.dc(rho) * rho;
    let h = (v * v + d) / (c * c - v * v);
    let g = ((cr - v) * h - v) / (v + c);
    let k1 = (1.0 + cr / c * xi2 + (cr / c + 1.0) * d / (c * c)) / (1.0 - xi2);
    let k2 = (1.0 - 2.0 * xi2 + cr / c * xi2 + (cr / c - 1.0) * d / (c * c)) / (1.0 - xi2);
    Ok(FirstOrder { h, g, k1: k1.abs() / (2.0 * a), k2: k2.abs() / (2.0 * a) })
}

/// Closed-form first-order outgoing sizes for an incoming 2-wave σ⁻ hitting a
/// junction `a → a + Δa`: returns `(c1, c2)` with `σ1⁺ ≈ c1 (Δa/a) σ⁻` and
/// `σ2⁺ ≈ (1 + c2 Δa/a) σ⁻`.
pub fn first_order_transmission(law: &PressureLaw, a: f64, u: GasState, dsigma: f64) -> Result<(f64, f64)> {
    let fo = first_order_coeffs(law, a, u, dsigma)?;
    let c = law.c(u.rho);
    let (l1, l2) = law.lambda(u);
    Ok((-l2 / (2.0 * c) * (1.0 + fo.g + fo.h), -(l1 * fo.h + l2 * (1.0 + fo.g)) / (2.0 * c)))
}

/// Waves issuing from a junction Riemann problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JunctionFan {
    pub a_left: f64,
    pub a_right: f64,
    pub u_left_in: GasState,
    pub u_right_in: GasState,
    pub sigma1: f64,
    pub sigma2: f64,
    pub left_waves: Vec<Wave>,
    pub right_waves: Vec<Wave>,
    pub trace_minus: GasState,
    pub trace_plus: GasState,
}

/// Solves `L2(T(L1(u_l; σ1)); σ2) = u_r` at a junction `a⁻ | a⁺`.
pub fn solve_junction_riemann(
    claw: &CouplingLaw,
    law: &PressureLaw,
    am: f64,
    ul: GasState,
    ap: f64,
    ur: GasState,
) -> Result<JunctionFan> {
    check_sections(am, ap)?;
    if !law.is_subsonic(ul)? || !law.is_subsonic(ur)? {
        return Err(Error::Regime(format!("junction data not subsonic: {ul:?}, {ur:?}")));
    }
    let transfer = |u: GasState| t_map(claw, law, am, ap, u);
    let (mut s1, mut um, mut up, mut s2) =
        riemann::solve_coupled(law, ul, ur, transfer).map_err(|e| e.context("junction Riemann problem"))?;
    let mut left_waves = Vec::new();
    let mut right_waves = Vec::new();
    if s1.abs() <= ZERO_WAVE * ul.rho {
        s1 = 0.0;
        um = ul;
        up = transfer(ul)?;
        s2 = ur.rho - up.rho;
    } else {
        left_waves.push(make_wave(law, WaveFamily::Family1, ul, um, s1));
    }
    if s2.abs() <= ZERO_WAVE * ur.rho {
        s2 = 0.0;
    } else {
        right_waves.push(make_wave(law, WaveFamily::Family2, up, ur, s2));
    }
    for w in &left_waves {
        if !(w.speed_hi < 0.0) {
            return Err(Error::Regime(format!("1-wave with speed {} at junction", w.speed_hi)));
        }
    }
    for w in &right_waves {
        if !(w.speed_lo > 0.0) {
            return Err(Error::Regime(format!("2-wave with speed {} at junction", w.speed_lo)));
        }
    }
    Ok(JunctionFan {
        a_left: am,
        a_right: ap,
        u_left_in: ul,
        u_right_in: ur,
        sigma1: s1,
        sigma2: s2,
        left_waves,
        right_waves,
        trace_minus: um,
        trace_plus: up,
    })
}

/// Coupling-law selector for configuration files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    #[default]
    SmoothSection,
}

impl From<CouplingKind> for CouplingLaw {
    fn from(_: CouplingKind) -> Self {
        CouplingLaw::SmoothSection
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riemann::{lax_curve, solve_riemann};

    const SMOOTH: CouplingLaw = CouplingLaw::SmoothSection;

    fn iso() -> PressureLaw {
        PressureLaw::isothermal(1.0)
    }

    #[test]
    fn constant_section_keeps_state() {
        let u0 = GasState::new(1.2, 0.4);
        let p = stationary_integrate(&iso(), |_| 2.0, |_| 0.0, 0.0, 3.0, u0).unwrap();
        for (_, u) in &p.points {
            assert_eq!(*u, u0);
        }
        assert_eq!(p.sigma2, 0.0);
    }

    #[test]
    fn fluid_at_rest_keeps_density() {
        let u0 = GasState::new(1.7, 0.0);
        let p = stationary_integrate(&iso(), |x| 1.0 + 0.1 * x, |_| 0.1, 0.0, 1.0, u0).unwrap();
        for (_, u) in &p.points {
            assert_eq!(u.rho, 1.7);
            assert_eq!(u.q, 0.0);
        }
        let s = sigma_map(&SMOOTH, &iso(), 1.0, 1.3, u0).unwrap();
        assert!((s[1] - iso().p(1.7) * 0.3).abs() < 1e-14);
        assert_eq!(s[0], 0.0);
    }

    #[test]
    fn sigma_vanishes_on_equal_sections() {
        assert_eq!(sigma_map(&SMOOTH, &iso(), 1.3, 1.3, GasState::new(1.0, 0.5)).unwrap(), [0.0, 0.0]);
        let u = GasState::new(1.0, 0.5);
        assert_eq!(t_map(&SMOOTH, &iso(), 1.3, 1.3, u).unwrap(), u);
        assert_eq!(psi_residual(&SMOOTH, &iso(), 1.0, u, 1.0, u).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn psi_residual_direct_evaluation() {
        let r = psi_residual(&SMOOTH, &iso(), 1.0, GasState::new(1.0, 0.0), 1.0, GasState::new(1.0, 1.0)).unwrap();
        assert_eq!(r, [1.0, 1.0]);
    }

    #[test]
    fn dsigma_matches_pressure() {
        let law = PressureLaw::gamma_law(1.0, 1.4);
        let u = GasState::new(1.3, 0.5);
        let h = 1e-5;
        let fd = (sigma_map(&SMOOTH, &law, 1.0, 1.0 + h, u).unwrap()[1]
            - sigma_map(&SMOOTH, &law, 1.0, 1.0 - h, u).unwrap()[1])
            / (2.0 * h);
        assert!((fd - law.p(u.rho)).abs() / law.p(u.rho) < 1e-4);
    }

    #[test]
    fn t_map_satisfies_coupling() {
        for law in [iso(), PressureLaw::gamma_law(1.0, 1.4)] {
            let u = GasState::new(1.1, 0.6 * law.c(1.1) * 1.1);
            for ap in [0.88, 0.95, 1.07, 1.2] {
                let up = t_map(&SMOOTH, &law, 1.0, ap, u).unwrap();
                let r = psi_residual(&SMOOTH, &law, 1.0, u, ap, up).unwrap();
                assert!(r[0].abs() < 1e-14 && r[1].abs() < 1e-12, "{r:?}");
            }
        }
    }

    #[test]
    fn bernoulli_oracle_for_t() {
        // Independent closed form: v²/2 + w(ρ) is constant and a q is constant.
        for law in [iso(), PressureLaw::gamma_law(0.7, 1.4)] {
            let u = GasState::new(1.0, 0.7 * law.c(1.0));
            for ap in [0.93, 1.15] {
                let up = t_map(&SMOOTH, &law, 1.0, ap, u).unwrap();
                let qp = u.q / ap;
                let b0 = 0.5 * u.v() * u.v() + law.enthalpy(u.rho);
                let g = |r: f64| 0.5 * (qp / r) * (qp / r) + law.enthalpy(r) - b0;
                // g increases on the subsonic branch ρ > ρ_sonic.
                let (mut lo, mut hi) = (0.05, 10.0);
                while law.c(lo) * lo < qp.abs() {
                    lo *= 1.5;
                }
                for _ in 0..200 {
                    let m = 0.5 * (lo + hi);
                    if g(m) < 0.0 {
                        lo = m
                    } else {
                        hi = m
                    }
                }
                assert!((up.rho - 0.5 * (lo + hi)).abs() < 1e-11, "{law:?} {ap}: {} vs {}", up.rho, lo);
                assert!((up.q - qp).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn bernoulli_along_path() {
        let law = iso();
        let u0 = GasState::new(1.0, 0.6);
        let p = stationary_integrate(&law, |x| 1.0 + 0.2 * x * x, |x| 0.4 * x, 0.0, 1.0, u0).unwrap();
        let b0 = 0.5 * u0.v() * u0.v() + u0.rho.ln();
        assert!(p.points.len() > 2);
        for (x, u) in &p.points {
            let b = 0.5 * u.v() * u.v() + u.rho.ln();
            assert!((b - b0).abs() < 1e-8);
            assert!(((1.0 + 0.2 * x * x) * u.q - 0.6).abs() < 1e-10 * 0.6);
        }
    }

    #[test]
    fn sonic_transition_is_reported() {
        let law = iso();
        let u0 = GasState::new(1.0, 0.9);
        let r = t_map(&SMOOTH, &law, 1.0, 0.8, u0);
        assert!(matches!(r, Err(Error::Sonic { .. }) | Err(Error::Neighborhood(_))), "{r:?}");
        let r = stationary_integrate(&law, |x| 1.0 - 0.2 * x, |_| -0.2, 0.0, 1.0, u0);
        assert!(matches!(r, Err(Error::Sonic { .. })), "{r:?}");
    }

    #[test]
    fn custom_sigma_newton_matches_smooth() {
        let law = PressureLaw::gamma_law(1.0, 1.4);
        let claw = CouplingLaw::Custom {
            name: "smooth-by-closure".into(),
            sigma: Arc::new(move |am, ap, u| sigma_map(&CouplingLaw::SmoothSection, &law, am, ap, u).unwrap()),
        };
        let u = GasState::new(1.2, 0.5);
        for ap in [0.9, 1.1] {
            let a = t_map(&SMOOTH, &law, 1.0, ap, u).unwrap();
            let b = t_map(&claw, &law, 1.0, ap, u).unwrap();
            assert!(a.dist(&b) < 1e-10, "{a:?} {b:?}");
        }
        assert!((dsigma_da(&claw, &law, 1.0, u).unwrap() - law.p(1.2)).abs() < 1e-6);
    }

    #[test]
    fn coefficient_examples() {
        let fo = first_order_coeffs(&iso(), 1.0, GasState::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!(fo.h, 0.0);
        assert!((fo.k1 - 0.5).abs() < 1e-15 && (fo.k2 - 0.5).abs() < 1e-15);
        let fo = first_order_coeffs(&iso(), 2.0, GasState::new(1.0, 0.0), 1.0).unwrap();
        assert!((fo.k1 - 0.25).abs() < 1e-15);
        // Isothermal with ∂Σ = p: K1 = 1/(2a(1−ξ²)), K2 = |1−2ξ²|/(2a(1−ξ²)).
        for xi in [0.1, 0.5, 0.8, 0.95] {
            let u = GasState::new(1.0, xi);
            let fo = first_order_coeffs(&iso(), 1.0, u, 1.0).unwrap();
            assert!((fo.k1 - 0.5 / (1.0 - xi * xi)).abs() < 1e-13);
            assert!((fo.k2 - 0.5 * (1.0 - 2.0 * xi * xi).abs() / (1.0 - xi * xi)).abs() < 1e-13);
            assert!((fo.h - xi * xi / (1.0 - xi * xi)).abs() < 1e-13);
        }
        let near = first_order_coeffs(&iso(), 1.0, GasState::new(1.0, 0.99999), 1.0).unwrap();
        assert!(near.k1 > 1e4 && near.k2 > 1e4);
        assert!(first_order_coeffs(&iso(), 1.0, GasState::new(1.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn junction_solver_reduces_to_riemann() {
        let law = iso();
        let ul = GasState::new(1.0, 0.2);
        let ur = GasState::new(1.1, 0.15);
        let j = solve_junction_riemann(&SMOOTH, &law, 1.0, ul, 1.0, ur).unwrap();
        let r = solve_riemann(&law, ul, ur).unwrap();
        assert_eq!(j.sigma1, r.sigma1);
        assert_eq!(j.sigma2, r.sigma2);
        assert_eq!(j.trace_minus, r.middle);
    }

    #[test]
    fn junction_traces_are_coupled() {
        let law = PressureLaw::gamma_law(1.0, 1.4);
        let ul = GasState::new(1.0, 0.3);
        let ur = lax_curve(&law, WaveFamily::Family2, t_map(&SMOOTH, &law, 1.0, 1.1, ul).unwrap(), -0.02).unwrap();
        let j = solve_junction_riemann(&SMOOTH, &law, 1.0, ul, 1.1, ur).unwrap();
        let r = psi_residual(&SMOOTH, &law, 1.0, j.trace_minus, 1.1, j.trace_plus).unwrap();
        assert!(r[0].abs() < 1e-10 && r[1].abs() < 1e-10);
        assert!(j.left_waves.is_empty());
        assert!((j.sigma2 + 0.02).abs() < 1e-10);
    }
}
