//! Pressure laws, gas states, eigenstructure and the energy entropy pair of
//! the isentropic p-system `ρ_t + q_x = 0`, `q_t + (q²/ρ + p(ρ))_x = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Densities at or below this value are rejected as vacuum.
pub const RHO_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PressureKind {
    /// `p = c² ρ`
    Isothermal { c: f64 },
    /// `p = k ρ^γ`, γ ≥ 1
    GammaLaw { k: f64, gamma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureLaw {
    #[serde(flatten)]
    pub kind: PressureKind,
    /// Reference density ρ_* of the energy integral.
    #[serde(default = "default_rho_ref")]
    pub rho_ref: f64,
}

fn default_rho_ref() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GasState {
    pub rho: f64,
    pub q: f64,
}

impl GasState {
    pub const fn new(rho: f64, q: f64) -> Self {
        GasState { rho, q }
    }

    pub fn v(&self) -> f64 {
        self.q / self.rho
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.q.is_finite()) {
            return Err(Error::Domain(format!("non-finite state {self:?}")));
        }
        if self.rho <= RHO_FLOOR {
            return Err(Error::Domain(format!("density {} not positive", self.rho)));
        }
        Ok(())
    }

    /// Euclidean distance in the (ρ, q) plane.
    pub fn dist(&self, other: &GasState) -> f64 {
        (self.rho - other.rho).hypot(self.q - other.q)
    }

    /// `|Δρ| + |Δq|`, the pointwise integrand of the L¹ distance.
    pub fn l1_dist(&self, other: &GasState) -> f64 {
        (self.rho - other.rho).abs() + (self.q - other.q).abs()
    }
}

impl PressureLaw {
    pub fn isothermal(c: f64) -> Self {
        PressureLaw { kind: PressureKind::Isothermal { c }, rho_ref: 1.0 }
    }

    pub fn gamma_law(k: f64, gamma: f64) -> Self {
        PressureLaw { kind: PressureKind::GammaLaw { k, gamma }, rho_ref: 1.0 }
    }

    pub fn with_rho_ref(mut self, rho_ref: f64) -> Self {
        self.rho_ref = rho_ref;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            PressureKind::Isothermal { c } => c.is_finite() && c > 0.0,
            PressureKind::GammaLaw { k, gamma } => {
                k.is_finite() && k > 0.0 && gamma.is_finite() && gamma >= 1.0
            }
        };
        if !ok {
            return Err(Error::Domain(format!("invalid pressure law {:?}", self.kind)));
        }
        if !(self.rho_ref.is_finite() && self.rho_ref > 0.0) {
            return Err(Error::Domain(format!("rho_ref must be positive, got {}", self.rho_ref)));
        }
        Ok(())
    }

    pub fn is_isothermal(&self) -> bool {
        matches!(self.kind, PressureKind::Isothermal { .. })
    }

    fn check_rho(rho: f64) -> Result<()> {
        if rho.is_finite() && rho > RHO_FLOOR {
            Ok(())
        } else {
            Err(Error::Domain(format!("density {rho} not positive")))
        }
    }

    pub fn p(&self, rho: f64) -> f64 {
        match self.kind {
            PressureKind::Isothermal { c } => c * c * rho,
            PressureKind::GammaLaw { k, gamma } => k * rho.powf(gamma),
        }
    }

    pub fn dp(&self, rho: f64) -> f64 {
        match self.kind {
            PressureKind::Isothermal { c } => c * c,
            PressureKind::GammaLaw { k, gamma } => k * gamma * rho.powf(gamma - 1.0),
        }
    }

    pub fn d2p(&self, rho: f64) -> f64 {
        match self.kind {
            PressureKind::Isothermal { .. } => 0.0,
            PressureKind::GammaLaw { k, gamma } => {
                k * gamma * (gamma - 1.0) * rho.powf(gamma - 2.0)
            }
        }
    }

    /// `c(ρ) = √p′(ρ)` without the domain check.
    pub fn c(&self, rho: f64) -> f64 {
        self.dp(rho).sqrt()
    }

    /// `c′(ρ) = p″ / (2c)`.
    pub fn dc(&self, rho: f64) -> f64 {
        self.d2p(rho) / (2.0 * self.c(rho))
    }

    pub fn sound_speed(&self, rho: f64) -> Result<f64> {
        Self::check_rho(rho)?;
        Ok(self.c(rho))
    }

    pub fn eigenvalues(&self, u: GasState) -> Result<(f64, f64)> {
        u.check()?;
        let c = self.c(u.rho);
        let v = u.v();
        Ok((v - c, v + c))
    }

    /// Unchecked eigenvalues for hot paths where the state is known valid.
    pub fn lambda(&self, u: GasState) -> (f64, f64) {
        let c = self.c(u.rho);
        let v = u.q / u.rho;
        (v - c, v + c)
    }

    pub fn is_subsonic(&self, u: GasState) -> Result<bool> {
        let (l1, l2) = self.eigenvalues(u)?;
        Ok(l1 < 0.0 && 0.0 < l2)
    }

    /// `|v| / c`
    pub fn mach(&self, u: GasState) -> f64 {
        u.v().abs() / self.c(u.rho)
    }

    /// `P(u) = q²/ρ + p(ρ)`
    pub fn momentum_flux(&self, u: GasState) -> Result<f64> {
        u.check()?;
        Ok(self.flux_q(u))
    }

    pub(crate) fn flux_q(&self, u: GasState) -> f64 {
        u.q * u.q / u.rho + self.p(u.rho)
    }

    /// `∫_{ρ_*}^{ρ} p(r)/r² dr`
    pub fn energy_potential(&self, rho: f64) -> f64 {
        let r0 = self.rho_ref;
        match self.kind {
            PressureKind::Isothermal { c } => c * c * (rho / r0).ln(),
            PressureKind::GammaLaw { k, gamma } if gamma == 1.0 => k * (rho / r0).ln(),
            PressureKind::GammaLaw { k, gamma } => {
                k * (rho.powf(gamma - 1.0) - r0.powf(gamma - 1.0)) / (gamma - 1.0)
            }
        }
    }

    /// Energy density `E` and energy flux `F = v (E + p)`.
    pub fn entropy_pair(&self, u: GasState) -> Result<(f64, f64)> {
        u.check()?;
        Ok(self.entropy_pair_unchecked(u))
    }

    pub(crate) fn entropy_pair_unchecked(&self, u: GasState) -> (f64, f64) {
        let e = 0.5 * u.q * u.q / u.rho + u.rho * self.energy_potential(u.rho);
        let f = u.q / u.rho * (e + self.p(u.rho));
        (e, f)
    }

    /// Specific enthalpy `w` with `w′ = p′/ρ`; `v²/2 + w` is the Bernoulli
    /// invariant of smooth stationary flow.
    pub fn enthalpy(&self, rho: f64) -> f64 {
        match self.kind {
            PressureKind::Isothermal { c } => c * c * rho.ln(),
            PressureKind::GammaLaw { k, gamma } if gamma == 1.0 => k * rho.ln(),
            PressureKind::GammaLaw { k, gamma } => k * gamma / (gamma - 1.0) * rho.powf(gamma - 1.0),
        }
    }

    /// Divided difference `(h(ρ) − h(ρ0)) / (ρ − ρ0)` of the Riemann
    /// invariant integral `h′ = c/ρ`; exact limit `c(ρ0)/ρ0` at ρ = ρ0.
    pub fn riemann_slope(&self, rho0: f64, rho: f64) -> f64 {
        let x = (rho - rho0) / rho0;
        match self.kind {
            PressureKind::Isothermal { c } => c / rho0 * ln1p_ratio(x),
            PressureKind::GammaLaw { k, gamma } if gamma == 1.0 => k.sqrt() / rho0 * ln1p_ratio(x),
            PressureKind::GammaLaw { k, gamma } => {
                let m = 0.5 * (gamma - 1.0);
                2.0 * (k * gamma).sqrt() / (gamma - 1.0) * rho0.powf(m - 1.0) * pow1p_ratio(x, m)
            }
        }
    }

    /// `(p(ρ) − p(ρ0)) / (ρ − ρ0)`; exact limit `p′(ρ0)` at ρ = ρ0.
    pub fn pressure_slope(&self, rho0: f64, rho: f64) -> f64 {
        match self.kind {
            PressureKind::Isothermal { c } => c * c,
            PressureKind::GammaLaw { k, gamma } => {
                let x = (rho - rho0) / rho0;
                k * rho0.powf(gamma - 1.0) * pow1p_ratio(x, gamma)
            }
        }
    }
}

/// `ln(1+x)/x`, smooth through x = 0.
fn ln1p_ratio(x: f64) -> f64 {
    if x.abs() < 1e-5 {
        1.0 - x / 2.0 + x * x / 3.0 - x * x * x / 4.0
    } else {
        x.ln_1p() / x
    }
}

/// `((1+x)^m − 1)/x`, smooth through x = 0.
fn pow1p_ratio(x: f64, m: f64) -> f64 {
    if x.abs() < 1e-5 {
        m * (1.0 + (m - 1.0) * x / 2.0 + (m - 1.0) * (m - 2.0) * x * x / 6.0)
    } else {
        (m * x.ln_1p()).exp_m1() / x
    }
}
