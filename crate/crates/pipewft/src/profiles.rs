//! Pipe sections, closed-form stability bounds, staircase approximation of
//! smooth sections and multi-junction stationary solutions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas_core::{GasState, PressureLaw};
use crate::junction::{dsigma_da, first_order_coeffs, t_map, CouplingLaw};

/// Piecewise-constant section: `a_0` on `(−∞, x_1)`, `a_j` on `(x_j, x_{j+1})`,
/// `a_n` on `(x_n, ∞)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipeProfile {
    pub junctions: Vec<f64>,
    pub sections: Vec<f64>,
    pub a_bar: f64,
    pub delta: f64,
}

impl PipeProfile {
    pub fn new(junctions: Vec<f64>, sections: Vec<f64>, a_bar: f64, delta: f64) -> Result<Self> {
        let p = PipeProfile { junctions, sections, a_bar, delta };
        p.validate()?;
        Ok(p)
    }

    /// A single uniform pipe of section `a`.
    pub fn uniform(a: f64) -> Self {
        PipeProfile { junctions: Vec::new(), sections: vec![a], a_bar: a, delta: 0.25 * a }
    }

    /// Default neighborhood `Δ = ā/4` around the mean of the sections.
    pub fn from_steps(junctions: Vec<f64>, sections: Vec<f64>) -> Result<Self> {
        let lo = sections.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sections.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let a_bar = 0.5 * (lo + hi);
        Self::new(junctions, sections, a_bar, 0.25 * a_bar)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sections.len() != self.junctions.len() + 1 {
            return Err(Error::Profile(format!(
                "{} junctions need {} sections, got {}",
                self.junctions.len(),
                self.junctions.len() + 1,
                self.sections.len()
            )));
        }
        if self.junctions.windows(2).any(|w| !(w[0] < w[1])) || self.junctions.iter().any(|x| !x.is_finite()) {
            return Err(Error::Profile("junction positions must be finite and strictly increasing".into()));
        }
        if !(self.a_bar > 0.0 && self.delta > 0.0 && self.delta < self.a_bar) {
            return Err(Error::Profile(format!("need 0 < Δ < ā, got ā = {}, Δ = {}", self.a_bar, self.delta)));
        }
        for (j, &a) in self.sections.iter().enumerate() {
            if !(a > self.a_bar - self.delta && a < self.a_bar + self.delta) {
                return Err(Error::Profile(format!(
                    "section a_{j} = {a} outside ({}, {})",
                    self.a_bar - self.delta,
                    self.a_bar + self.delta
                )));
            }
        }
        Ok(())
    }

    pub fn n_junctions(&self) -> usize {
        self.junctions.len()
    }

    pub fn tv(&self) -> f64 {
        self.sections.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// Index of the pipe containing `x`; a junction point belongs to the pipe on its right.
    pub fn pipe_of(&self, x: f64) -> usize {
        self.junctions.partition_point(|&xj| xj <= x)
    }

    pub fn section_at(&self, x: f64) -> f64 {
        self.sections[self.pipe_of(x)]
    }

    /// `(x, a)` breakpoints of the staircase for plotting, over `[x_lo, x_hi]`.
    pub fn breakpoints(&self, x_lo: f64, x_hi: f64) -> Vec<(f64, f64)> {
        let mut out = vec![(x_lo, self.section_at(x_lo))];
        for (j, &x) in self.junctions.iter().enumerate() {
            if x > x_lo && x < x_hi {
                out.push((x, self.sections[j]));
                out.push((x, self.sections[j + 1]));
            }
        }
        out.push((x_hi, self.section_at(x_hi)));
        out
    }
}

/// Continuous piecewise-linear section, constant outside its knot range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothProfile {
    pub knots: Vec<(f64, f64)>,
    pub a_bar: f64,
    pub delta: f64,
}

impl SmoothProfile {
    pub fn new(knots: Vec<(f64, f64)>, a_bar: f64, delta: f64) -> Result<Self> {
        let s = SmoothProfile { knots, a_bar, delta };
        s.validate()?;
        Ok(s)
    }

    /// Linear ramp from `a0` at `−x_half` to `a1` at `+x_half`.
    pub fn ramp(x_half: f64, a0: f64, a1: f64) -> Result<Self> {
        let a_bar = 0.5 * (a0 + a1);
        Self::new(vec![(-x_half, a0), (x_half, a1)], a_bar, 0.25 * a_bar)
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::Profile("smooth profile needs at least one knot".into()));
        }
        if self.knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Profile("knot abscissae must be strictly increasing".into()));
        }
        if !(self.a_bar > 0.0 && self.delta > 0.0 && self.delta < self.a_bar) {
            return Err(Error::Profile(format!("need 0 < Δ < ā, got ā = {}, Δ = {}", self.a_bar, self.delta)));
        }
        for &(x, a) in &self.knots {
            if !(a > self.a_bar - self.delta && a < self.a_bar + self.delta) || !x.is_finite() {
                return Err(Error::Profile(format!("knot ({x}, {a}) outside the admissible range")));
            }
        }
        Ok(())
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn a(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0].0 {
            return k[0].1;
        }
        if x >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        let i = k.partition_point(|p| p.0 <= x) - 1;
        let (x0, a0) = k[i];
        let (x1, a1) = k[i + 1];
        a0 + (a1 - a0) * (x - x0) / (x1 - x0)
    }

    /// Right derivative `a′(x)`; zero outside the knot range.
    pub fn da(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x < k[0].0 || x >= k[k.len() - 1].0 {
            return 0.0;
        }
        let i = k.partition_point(|p| p.0 <= x) - 1;
        (k[i + 1].1 - k[i].1) / (k[i + 1].0 - k[i].0)
    }

    pub fn tv(&self) -> f64 {
        self.knots.windows(2).map(|w| (w[1].1 - w[0].1).abs()).sum()
    }

    pub fn is_constant(&self) -> bool {
        self.knots.windows(2).all(|w| w[0].1 == w[1].1)
    }
}

/// `M(ā, v̄/c)`, the admissible section total variation for isothermal flow.
pub fn bound_m(law: &PressureLaw, a_bar: f64, xi: f64) -> Result<f64> {
    if !law.is_isothermal() {
        return Err(Error::Usage("closed-form M is available for the isothermal law only; use bound_m_general".into()));
    }
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::Domain(format!("v̄/c = {xi} outside [0, 1)")));
    }
    let base = a_bar / (4.0 * std::f64::consts::E);
    if xi <= std::f64::consts::FRAC_1_SQRT_2 {
        Ok(base)
    } else {
        Ok(base * (1.0 - xi * xi) / (xi * xi))
    }
}

/// `1 / (4 (K1 + K2) e)` evaluated at `(ā, u)` for any law and coupling.
pub fn bound_m_general(claw: &CouplingLaw, law: &PressureLaw, a_bar: f64, u: GasState) -> Result<f64> {
    let fo = first_order_coeffs(law, a_bar, u, dsigma_da(claw, law, a_bar, u)?)?;
    Ok(1.0 / (4.0 * (fo.k1 + fo.k2) * std::f64::consts::E))
}

/// Leading-order amplification coefficient of a 2-wave crossing an up-down
/// section pair, as a function of `ξ = v̄/c`.
pub fn kgrande(xi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&xi) {
        return Err(Error::Domain(format!("ξ = {xi} outside [0, 1)")));
    }
    let x2 = xi * xi;
    let num = -1.0 + 8.0 * x2 - 7.0 * x2 * x2 + 2.0 * x2 * x2 * x2;
    let den = 2.0 * (1.0 - xi).powi(3) * (1.0 + xi).powi(3);
    Ok(num / den)
}

/// Staircase approximation of a smooth section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcApprox {
    pub profile: PipeProfile,
    /// Uniform mesh `y_0 < … < y_N` covering the support of `a′`.
    pub mesh: Vec<f64>,
    /// Cell averages of `a′`, one per mesh cell.
    pub beta: Vec<f64>,
}

impl PcApprox {
    /// `α_n(x) = a(y_0) + ∫_{y_0}^{x} β_n`.
    pub fn alpha(&self, x: f64) -> f64 {
        let y = &self.mesh;
        let mut acc = self.profile.sections[0];
        for (j, b) in self.beta.iter().enumerate() {
            if x <= y[j] {
                break;
            }
            acc += b * (x.min(y[j + 1]) - y[j]);
        }
        acc
    }
}

/// Piecewise-constant approximation with mesh `≤ 1/n`, junctions at cell
/// midpoints and values `α_n(y_{j+1})` on the pipe right of the j-th junction.
pub fn pc_approximate(smooth: &SmoothProfile, n: usize) -> Result<PcApprox> {
    smooth.validate()?;
    if n == 0 {
        return Err(Error::Usage("resolution n must be positive".into()));
    }
    let (x0, x1) = smooth.x_range();
    let a_left = smooth.a(x0);
    if smooth.is_constant() || x1 == x0 {
        return Ok(PcApprox {
            profile: PipeProfile::new(Vec::new(), vec![a_left], smooth.a_bar, smooth.delta)?,
            mesh: vec![x0, x1],
            beta: vec![0.0],
        });
    }
    let cells = ((x1 - x0) * n as f64 - 1e-9).ceil().max(1.0) as usize;
    let h = (x1 - x0) / cells as f64;
    let mesh: Vec<f64> = (0..=cells).map(|j| if j == cells { x1 } else { x0 + j as f64 * h }).collect();
    let nodes: Vec<f64> = mesh.iter().map(|&y| smooth.a(y)).collect();
    let beta: Vec<f64> = (0..cells).map(|j| (nodes[j + 1] - nodes[j]) / (mesh[j + 1] - mesh[j])).collect();
    let mut junctions = Vec::new();
    let mut sections = vec![nodes[0]];
    for j in 0..cells {
        if nodes[j + 1] != *sections.last().expect("non-empty") {
            junctions.push(0.5 * (mesh[j] + mesh[j + 1]));
            sections.push(nodes[j + 1]);
        }
    }
    let profile = PipeProfile::new(junctions, sections, smooth.a_bar, smooth.delta)?;
    Ok(PcApprox { profile, mesh, beta })
}

/// `∫ |a_n − a| dx` between a staircase and a smooth section, computed on
/// the merged breakpoint set (exact for linear-vs-constant pieces).
pub fn section_l1_distance(smooth: &SmoothProfile, pc: &PipeProfile) -> f64 {
    let (x0, x1) = smooth.x_range();
    let lo = x0.min(pc.junctions.first().copied().unwrap_or(x0)) - 1.0;
    let hi = x1.max(pc.junctions.last().copied().unwrap_or(x1)) + 1.0;
    let mut pts: Vec<f64> = smooth.knots.iter().map(|k| k.0).chain(pc.junctions.iter().copied()).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let c = pc.section_at(0.5 * (a + b));
        let (fa, fb) = (smooth.a(a) - c, smooth.a(b) - c);
        total += if fa * fb >= 0.0 {
            0.5 * (fa.abs() + fb.abs()) * (b - a)
        } else {
            let t = fa.abs() / (fa.abs() + fb.abs());
            0.5 * (b - a) * (t * fa.abs() + (1.0 - t) * fb.abs())
        };
    }
    total
}

/// Piecewise-constant stationary datum across a staircase profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatStationary {
    /// One state per pipe.
    pub states: Vec<GasState>,
    pub tv_u: f64,
    pub tv_a: f64,
    /// `TV(û)/TV(a)`, zero for a constant profile.
    pub ratio: f64,
}

pub fn hat_stationary(law: &PressureLaw, claw: &CouplingLaw, profile: &PipeProfile, u_left: GasState) -> Result<HatStationary> {
    if !law.is_subsonic(u_left)? {
        return Err(Error::Domain(format!("left state {u_left:?} is not subsonic")));
    }
    let mut states = vec![u_left];
    for j in 1..profile.sections.len() {
        let prev = states[j - 1];
        let next = t_map(claw, law, profile.sections[j - 1], profile.sections[j], prev)
            .map_err(|e| e.context(&format!("junction {j} at x = {}", profile.junctions[j - 1])))?;
        states.push(next);
    }
    let tv_u: f64 = states.windows(2).map(|w| w[0].l1_dist(&w[1])).sum();
    let tv_a = profile.tv();
    Ok(HatStationary { states, tv_u, tv_a, ratio: if tv_a > 0.0 { tv_u / tv_a } else { 0.0 } })
}

/// Largest observed `‖T(a, a′; u) − u‖₁ / |a′ − a|` over a sample box.
pub fn t_lipschitz_estimate(
    law: &PressureLaw,
    claw: &CouplingLaw,
    sections: &[f64],
    states: &[GasState],
) -> Result<f64> {
    let mut best: f64 = 0.0;
    for &a in sections {
        for &b in sections {
            if a == b {
                continue;
            }
            for &u in states {
                let up = t_map(claw, law, a, b, u)?;
                best = best.max(up.l1_dist(&u) / (b - a).abs());
            }
        }
    }
    Ok(best)
}
