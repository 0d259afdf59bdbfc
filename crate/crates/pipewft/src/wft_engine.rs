//! Event-driven ε-approximate wave-front tracking on a piecewise-constant
//! pipe, with simplified interactions below the threshold ε̌ and
//! non-physical fronts moving at λ̂.
//!
//! Each pipe `(x_j, x_{j+1})` carries its own ordered fronts and the constant
//! states between them, so the junction traces are the end states of two
//! neighbouring pipes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{glimm_functionals, regime_verdict, RegimeVerdict};
use crate::gas_core::{GasState, PressureLaw};
use crate::junction::{solve_junction_riemann, t_map, CouplingLaw};
use crate::profiles::PipeProfile;
use crate::riemann::{jump_speed, lax_curve, rarefaction_fan, solve_riemann, Wave, WaveFamily, ZERO_WAVE};

/// Relative window inside which two event times count as simultaneous.
const TIE: f64 = 1e-13;

/// Law, coupling and section profile of one evolution.
#[derive(Clone, Debug)]
pub struct Problem {
    pub law: PressureLaw,
    pub claw: CouplingLaw,
    pub profile: PipeProfile,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Interaction,
    Crossing,
    Junction,
    Transmitted,
    Refracted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Front {
    pub id: u64,
    pub family: WaveFamily,
    /// Lax-curve parameter; Euclidean jump size for non-physical fronts.
    pub sigma: f64,
    /// Position `x0` at the birth time `t0`.
    pub x0: f64,
    pub t0: f64,
    pub speed: f64,
    pub u_left: GasState,
    pub u_right: GasState,
    pub pipe: usize,
    pub origin: Origin,
    /// Rarefaction kept whole after interacting with one of its own family.
    pub unsplit: bool,
}

impl Front {
    pub fn x(&self, t: f64) -> f64 {
        self.x0 + self.speed * (t - self.t0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipeState {
    pub fronts: Vec<Front>,
    /// `states[k]` lies left of `fronts[k]`; one more state than fronts.
    pub states: Vec<GasState>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub events: usize,
    pub interactions: usize,
    pub crossings: usize,
    pub nonphysical_interactions: usize,
    pub junction_hits: usize,
    pub refractions: usize,
    pub nonphysical_created: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WftState {
    pub time: f64,
    pub pipes: Vec<PipeState>,
    pub counters: Counters,
    pub next_id: u64,
}

impl WftState {
    /// All fronts, left to right.
    pub fn fronts(&self) -> impl Iterator<Item = &Front> + '_ {
        self.pipes.iter().flat_map(|p| p.fronts.iter())
    }

    pub fn n_fronts(&self) -> usize {
        self.pipes.iter().map(|p| p.fronts.len()).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = &GasState> + '_ {
        self.pipes.iter().flat_map(|p| p.states.iter())
    }

    pub fn nonphysical_total(&self) -> f64 {
        self.fronts().filter(|f| !f.family.is_physical()).map(|f| f.sigma).sum()
    }

    /// Checks front ordering, state chaining, Lax-curve membership and subsonicity.
    pub fn check_consistency(&self, law: &PressureLaw, profile: &PipeProfile) -> Result<()> {
        if self.pipes.len() != profile.sections.len() {
            return Err(Error::Invariant("pipe count differs from the profile".into()));
        }
        for (j, pipe) in self.pipes.iter().enumerate() {
            if pipe.states.len() != pipe.fronts.len() + 1 {
                return Err(Error::Invariant(format!("pipe {j}: state/front count mismatch")));
            }
            let (lo, hi) = pipe_bounds(profile, j);
            for (k, f) in pipe.fronts.iter().enumerate() {
                if f.u_left != pipe.states[k] || f.u_right != pipe.states[k + 1] {
                    return Err(Error::Invariant(format!("pipe {j}: front {} not glued to its states", f.id)));
                }
                let x = f.x(self.time);
                let slack = 1e-9 * (1.0 + x.abs());
                if x < lo - slack || x > hi + slack {
                    return Err(Error::Invariant(format!("front {} at x = {x} left pipe {j}", f.id)));
                }
                if k > 0 && pipe.fronts[k - 1].x(self.time) > x + slack {
                    return Err(Error::Invariant(format!("pipe {j}: fronts out of order at x = {x}")));
                }
                if f.family.is_physical() {
                    let r = lax_curve(law, f.family, f.u_left, f.sigma)?;
                    if r.dist(&f.u_right) > 1e-10 * (1.0 + f.u_right.rho.abs() + f.u_right.q.abs()) {
                        return Err(Error::Invariant(format!("front {} off its Lax curve", f.id)));
                    }
                }
            }
            for &u in &pipe.states {
                if !law.is_subsonic(u)? {
                    return Err(Error::Regime(format!("pipe {j}: state {u:?} is not subsonic")));
                }
            }
        }
        Ok(())
    }

    /// Piecewise-constant profile of the solution at the state's own time.
    pub fn to_piecewise(&self, profile: &PipeProfile) -> PiecewiseState {
        let mut breaks = Vec::new();
        let mut values = vec![self.pipes[0].states[0]];
        for (j, pipe) in self.pipes.iter().enumerate() {
            if j > 0 {
                breaks.push(profile.junctions[j - 1]);
                values.push(pipe.states[0]);
            }
            for f in &pipe.fronts {
                breaks.push(f.x(self.time));
                values.push(f.u_right);
            }
        }
        PiecewiseState { breaks, values }
    }
}

fn pipe_bounds(profile: &PipeProfile, j: usize) -> (f64, f64) {
    let lo = if j == 0 { f64::NEG_INFINITY } else { profile.junctions[j - 1] };
    let hi = profile.junctions.get(j).copied().unwrap_or(f64::INFINITY);
    (lo, hi)
}

/// A piecewise-constant function of `x`: `values[k]` on `(breaks[k−1], breaks[k])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseState {
    pub breaks: Vec<f64>,
    pub values: Vec<GasState>,
}

impl PiecewiseState {
    pub fn constant(u: GasState) -> Self {
        PiecewiseState { breaks: Vec::new(), values: vec![u] }
    }

    /// Value at `x`, taken from the right at a break.
    pub fn eval(&self, x: f64) -> GasState {
        self.values[self.breaks.partition_point(|&b| b <= x)]
    }

    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| w[0].l1_dist(&w[1])).sum()
    }

    /// `∫ |ρ1 − ρ2| + |q1 − q2| dx` over `[lo, hi]`.
    pub fn l1_distance(&self, other: &PiecewiseState, lo: f64, hi: f64) -> f64 {
        let mut xs: Vec<f64> = self.breaks.iter().chain(other.breaks.iter()).copied().filter(|&x| x > lo && x < hi).collect();
        xs.push(lo);
        xs.push(hi);
        xs.sort_by(f64::total_cmp);
        xs.windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let m = 0.5 * (w[0] + w[1]);
                (w[1] - w[0]) * self.eval(m).l1_dist(&other.eval(m))
            })
            .sum()
    }
}

/// Piecewise-constant initial datum: `states[k]` on `(breaks[k−1], breaks[k])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDatum {
    pub breaks: Vec<f64>,
    pub states: Vec<GasState>,
}

impl InitialDatum {
    pub fn constant(u: GasState) -> Self {
        InitialDatum { breaks: Vec::new(), states: vec![u] }
    }

    /// Cell-midpoint sampling of `f` on a uniform mesh of `[x0, x1]` with `n` cells.
    pub fn sample(f: impl Fn(f64) -> GasState, x0: f64, x1: f64, n: usize) -> Self {
        let h = (x1 - x0) / n as f64;
        let mut breaks = Vec::with_capacity(n + 1);
        let mut states = vec![f(x0)];
        for k in 0..n {
            breaks.push(x0 + k as f64 * h);
            states.push(f(x0 + (k as f64 + 0.5) * h));
        }
        breaks.push(x1);
        states.push(f(x1));
        InitialDatum { breaks, states }
    }

    /// The stationary datum with one state per pipe.
    pub fn per_pipe(profile: &PipeProfile, states: Vec<GasState>) -> Self {
        InitialDatum { breaks: profile.junctions.clone(), states }
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.breaks.len() + 1 {
            return Err(Error::Config(format!(
                "initial datum: {} breaks need {} states, got {}",
                self.breaks.len(),
                self.breaks.len() + 1,
                self.states.len()
            )));
        }
        if self.breaks.iter().any(|x| !x.is_finite()) || self.breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("initial datum breaks must be finite and strictly increasing".into()));
        }
        Ok(())
    }

    fn left_of(&self, x: f64) -> GasState {
        self.states[self.breaks.partition_point(|&b| b < x)]
    }

    fn right_of(&self, x: f64) -> GasState {
        self.states[self.breaks.partition_point(|&b| b <= x)]
    }

    pub fn to_piecewise(&self) -> PiecewiseState {
        PiecewiseState { breaks: self.breaks.clone(), values: self.states.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SnapshotCadence {
    /// Only the initial and final states.
    None,
    EveryEvent,
    Interval { dt: f64 },
}

/// When an increase of Υ aborts the evolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsilonPolicy {
    /// Only in the admissible regime (weights and initial Υ checked at start).
    Auto,
    Always,
    Never,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WftParams {
    /// Rarefaction fan step ε.
    pub eps: f64,
    /// Interaction threshold ε̌, default ε².
    pub eps_check: Option<f64>,
    /// Non-physical speed λ̂, default 1.1 × the largest λ2 of the initial states.
    pub lambda_hat: Option<f64>,
    pub t_end: f64,
    pub max_events: usize,
    pub snapshots: SnapshotCadence,
    /// Weight constant C of the Glimm functional, default 1/TV(a).
    pub weight_c: Option<f64>,
    pub upsilon_policy: UpsilonPolicy,
    pub upsilon_tol: f64,
}

impl Default for WftParams {
    fn default() -> Self {
        WftParams {
            eps: 1e-2,
            eps_check: None,
            lambda_hat: None,
            t_end: 1.0,
            max_events: 1_000_000,
            snapshots: SnapshotCadence::None,
            weight_c: None,
            upsilon_policy: UpsilonPolicy::Auto,
            upsilon_tol: 1e-9,
        }
    }
}

impl WftParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps = {} must be positive", self.eps));
        }
        if let Some(e) = self.eps_check {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("eps_check = {e} must be positive"));
            }
        }
        if let Some(l) = self.lambda_hat {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda_hat = {l} must be positive"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end = {} must be finite and nonnegative", self.t_end));
        }
        if self.max_events == 0 {
            return bad("max_events must be positive".into());
        }
        if let SnapshotCadence::Interval { dt } = self.snapshots {
            if !(dt > 0.0) {
                return bad(format!("snapshot interval {dt} must be positive"));
            }
        }
        if let Some(c) = self.weight_c {
            if !(c >= 0.0 && c.is_finite()) {
                return bad(format!("weight_c = {c} must be nonnegative"));
            }
        }
        if !(self.upsilon_tol >= 0.0) {
            return bad("upsilon_tol must be nonnegative".into());
        }
        Ok(())
    }
}

/// Parameters with every default filled in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub eps: f64,
    pub eps_check: f64,
    pub lambda_hat: f64,
    pub t_end: f64,
    pub weight_c: f64,
}

/// Largest `λ2` over the states of `state`.
pub fn sup_lambda2(law: &PressureLaw, state: &WftState) -> f64 {
    state.states().map(|&u| law.lambda(u).1).fold(f64::NEG_INFINITY, f64::max)
}

pub fn resolve_params(problem: &Problem, state: &WftState, params: &WftParams) -> Result<Resolved> {
    params.validate()?;
    let sup = sup_lambda2(&problem.law, state);
    let lambda_hat = params.lambda_hat.unwrap_or(1.1 * sup);
    if !(lambda_hat > sup) {
        return Err(Error::Config(format!("λ̂ = {lambda_hat} must exceed sup λ2 = {sup}")));
    }
    let tv = problem.profile.tv();
    Ok(Resolved {
        eps: params.eps,
        eps_check: params.eps_check.unwrap_or(params.eps * params.eps),
        lambda_hat,
        t_end: params.t_end,
        weight_c: params.weight_c.unwrap_or(if tv > 0.0 { 1.0 / tv } else { 0.0 }),
    })
}

/// One outgoing front before it is placed.
#[derive(Clone, Copy, Debug)]
struct Piece {
    family: WaveFamily,
    sigma: f64,
    left: GasState,
    right: GasState,
    unsplit: bool,
}

fn nonphysical(left: GasState, right: GasState) -> Piece {
    Piece { family: WaveFamily::NonPhysical, sigma: left.dist(&right), left, right, unsplit: false }
}

/// Fronts for a chain of exact waves; rarefactions are fanned unless `keep_whole`.
fn pieces_from_waves(
    law: &PressureLaw,
    waves: &[Wave],
    eps: f64,
    keep_whole: impl Fn(WaveFamily) -> bool,
) -> Result<Vec<Piece>> {
    let mut out = Vec::new();
    for w in waves {
        if w.sigma > 0.0 && !keep_whole(w.family) {
            let fan = rarefaction_fan(law, w.family, w.left, w.sigma, eps)?;
            let n = fan.len();
            for (k, f) in fan.into_iter().enumerate() {
                let right = if k + 1 == n { w.right } else { f.right };
                out.push(Piece { family: w.family, sigma: f.sigma, left: f.left, right, unsplit: false });
            }
        } else {
            out.push(Piece { family: w.family, sigma: w.sigma, left: w.left, right: w.right, unsplit: w.sigma > 0.0 });
        }
    }
    Ok(out)
}

/// Applies the given waves (merged per family, lower family first) from `ul`
/// and closes the gap to `ur` with a non-physical front.
fn simplified(law: &PressureLaw, ul: GasState, ur: GasState, waves: &[(WaveFamily, f64, bool)]) -> Result<Vec<Piece>> {
    let mut merged: Vec<(WaveFamily, f64, bool)> = Vec::new();
    for &(f, s, keep) in waves {
        match merged.iter_mut().find(|m| m.0 == f) {
            Some(m) => {
                m.1 += s;
                m.2 = true;
            }
            None => merged.push((f, s, keep)),
        }
    }
    merged.sort_by_key(|m| m.0.index());
    let mut out = Vec::new();
    let mut u = ul;
    for (family, sigma, keep) in merged {
        if sigma.abs() <= ZERO_WAVE * u.rho {
            continue;
        }
        let r = lax_curve(law, family, u, sigma)?;
        out.push(Piece { family, sigma, left: u, right: r, unsplit: keep && sigma > 0.0 });
        u = r;
    }
    close_with_nonphysical(&mut out, u, ur);
    Ok(out)
}

fn close_with_nonphysical(out: &mut Vec<Piece>, u: GasState, ur: GasState) {
    if u.dist(&ur) > ZERO_WAVE * ur.rho {
        out.push(nonphysical(u, ur));
    } else if let Some(last) = out.last_mut() {
        last.right = ur;
    }
}

/// The next thing that happens.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NextEvent {
    /// Fronts `index` and `index + 1` of `pipe` meet.
    Collision { time: f64, x: f64, pipe: usize, index: usize },
    /// A front reaches junction `junction`, from the left pipe or the right one.
    JunctionHit { time: f64, x: f64, junction: usize, from_left: bool },
    EndOfHorizon,
}

impl NextEvent {
    pub fn time(&self) -> Option<f64> {
        match *self {
            NextEvent::Collision { time, .. } | NextEvent::JunctionHit { time, .. } => Some(time),
            NextEvent::EndOfHorizon => None,
        }
    }
}

fn collision_time(a: &Front, b: &Front, now: f64) -> Option<f64> {
    if !(a.speed > b.speed) {
        return None;
    }
    let gap = b.x(now) - a.x(now);
    Some(now + gap.max(0.0) / (a.speed - b.speed))
}

/// Earliest collision or junction hit up to `t_end`. Near-simultaneous
/// events are ordered deterministically: junction hits first, then from left
/// to right.
pub fn next_event(state: &WftState, profile: &PipeProfile, t_end: f64) -> NextEvent {
    let now = state.time;
    let mut best = NextEvent::EndOfHorizon;
    let mut best_t = f64::INFINITY;
    let consider = |ev: NextEvent, t: f64, best: &mut NextEvent, best_t: &mut f64| {
        let tol = TIE * (1.0 + t.abs());
        let better = t < *best_t - tol
            || (t <= *best_t + tol
                && matches!(ev, NextEvent::JunctionHit { .. })
                && !matches!(*best, NextEvent::JunctionHit { .. }));
        if better {
            *best = ev;
            *best_t = t;
        }
    };
    for (j, pipe) in state.pipes.iter().enumerate() {
        if j > 0 {
            if let Some(f) = pipe.fronts.first() {
                if f.speed < 0.0 {
                    let xj = profile.junctions[j - 1];
                    let t = now + (f.x(now) - xj).max(0.0) / -f.speed;
                    consider(NextEvent::JunctionHit { time: t, x: xj, junction: j - 1, from_left: false }, t, &mut best, &mut best_t);
                }
            }
        }
        for k in 0..pipe.fronts.len().saturating_sub(1) {
            let (a, b) = (&pipe.fronts[k], &pipe.fronts[k + 1]);
            if let Some(t) = collision_time(a, b, now) {
                let x = 0.5 * (a.x(t) + b.x(t));
                consider(NextEvent::Collision { time: t, x, pipe: j, index: k }, t, &mut best, &mut best_t);
            }
        }
        if j < profile.n_junctions() {
            if let Some(f) = pipe.fronts.last() {
                if f.speed > 0.0 {
                    let xj = profile.junctions[j];
                    let t = now + (xj - f.x(now)).max(0.0) / f.speed;
                    consider(NextEvent::JunctionHit { time: t, x: xj, junction: j, from_left: true }, t, &mut best, &mut best_t);
                }
            }
        }
    }
    if best_t > t_end {
        NextEvent::EndOfHorizon
    } else {
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// Accurate Riemann solve inside a pipe.
    Interaction,
    /// Small interaction: waves cross unaltered, plus a non-physical front.
    Crossing,
    /// A non-physical front overtakes a physical one.
    NonPhysical,
    /// Accurate junction Riemann solve.
    JunctionAccurate,
    /// Small physical wave carried through the junction, plus a non-physical front.
    JunctionTransmit,
    /// Non-physical front refracted by a junction.
    Refraction,
}

/// Result of one event, as needed for bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct EventOutcome {
    pub kind: EventKind,
    pub time: f64,
    pub x: f64,
    pub pipe: usize,
    pub junction: Option<usize>,
    pub killed: Vec<Front>,
    pub born: Vec<Front>,
}

fn check_states(law: &PressureLaw, pieces: &[Piece], ctx: &str) -> Result<()> {
    for p in pieces {
        for u in [p.left, p.right] {
            if !law.is_subsonic(u)? {
                return Err(Error::Regime(format!("{ctx}: state {u:?} is not subsonic")));
            }
        }
    }
    Ok(())
}

fn materialize(
    state: &mut WftState,
    law: &PressureLaw,
    rp: &Resolved,
    pieces: &[Piece],
    x: f64,
    pipe: usize,
    origin: Origin,
) -> Result<Vec<Front>> {
    let mut out = Vec::with_capacity(pieces.len());
    for p in pieces {
        let speed = if p.family.is_physical() {
            let s = jump_speed(law, p.family, p.left, p.right, p.sigma);
            if !(s < rp.lambda_hat) {
                return Err(Error::Invariant(format!("front speed {s} reaches λ̂ = {}", rp.lambda_hat)));
            }
            s
        } else {
            state.counters.nonphysical_created += 1;
            rp.lambda_hat
        };
        out.push(Front {
            id: state.next_id,
            family: p.family,
            sigma: p.sigma,
            x0: x,
            t0: state.time,
            speed,
            u_left: p.left,
            u_right: p.right,
            pipe,
            origin,
            unsplit: p.unsplit,
        });
        state.next_id += 1;
    }
    Ok(out)
}

/// Replaces `fronts[k..k+m]` by `new`, with outer states `left` and `right`.
fn splice(pipe: &mut PipeState, k: usize, m: usize, left: GasState, mut new: Vec<Front>, right: GasState) -> Vec<Front> {
    let mut mid = Vec::with_capacity(new.len() + 1);
    if let Some(first) = new.first_mut() {
        first.u_left = left;
        mid.push(left);
    }
    let n = new.len();
    if let Some(last) = new.last_mut() {
        last.u_right = right;
    }
    for f in new.iter().take(n.saturating_sub(1)) {
        mid.push(f.u_right);
    }
    mid.push(right);
    pipe.states.splice(k..=k + m, mid);
    pipe.fronts.splice(k..k + m, new).collect()
}

/// Applies one event in place and reports the fronts removed and created.
pub fn handle_interaction(problem: &Problem, state: &mut WftState, event: &NextEvent, rp: &Resolved) -> Result<EventOutcome> {
    let law = &problem.law;
    match *event {
        NextEvent::EndOfHorizon => Err(Error::Usage("no event to handle".into())),
        NextEvent::Collision { time, x, pipe: j, index: k } => {
            state.time = time;
            let p = &state.pipes[j];
            if k + 1 >= p.fronts.len() {
                return Err(Error::Usage(format!("pipe {j} has no fronts {k}, {}", k + 1)));
            }
            let (a, b) = (p.fronts[k], p.fronts[k + 1]);
            let (ul, ur) = (p.states[k], p.states[k + 2]);
            let ctx = format!("interaction of fronts {} and {} at t = {time}, x = {x}", a.id, b.id);
            let (kind, pieces) = if !b.family.is_physical() {
                return Err(Error::Invariant(format!("{ctx}: a front overtook a non-physical front")));
            } else if !a.family.is_physical() {
                (EventKind::NonPhysical, simplified(law, ul, ur, &[(b.family, b.sigma, b.unsplit)])?)
            } else if (a.sigma * b.sigma).abs() < rp.eps_check {
                (EventKind::Crossing, simplified(law, ul, ur, &[(a.family, a.sigma, a.unsplit), (b.family, b.sigma, b.unsplit)])?)
            } else {
                let fan = solve_riemann(law, ul, ur).map_err(|e| e.context(&ctx))?;
                let keep = |f: WaveFamily| (a.family == f && a.sigma > 0.0) || (b.family == f && b.sigma > 0.0);
                (EventKind::Interaction, pieces_from_waves(law, &fan.waves, rp.eps, keep)?)
            };
            check_states(law, &pieces, &ctx)?;
            match kind {
                EventKind::Interaction => state.counters.interactions += 1,
                EventKind::Crossing => state.counters.crossings += 1,
                _ => state.counters.nonphysical_interactions += 1,
            }
            let origin = if kind == EventKind::Interaction { Origin::Interaction } else { Origin::Crossing };
            let born = materialize(state, law, rp, &pieces, x, j, origin)?;
            let killed = splice(&mut state.pipes[j], k, 2, ul, born.clone(), ur);
            state.counters.events += 1;
            let born = state.pipes[j].fronts[k..k + born.len()].to_vec();
            Ok(EventOutcome { kind, time, x, pipe: j, junction: None, killed, born })
        }
        NextEvent::JunctionHit { time, x, junction: jn, from_left } => {
            state.time = time;
            let (jl, jr) = (jn, jn + 1);
            let (am, ap) = (problem.profile.sections[jl], problem.profile.sections[jr]);
            let transfer = |u: GasState| t_map(&problem.claw, law, am, ap, u);
            let f = if from_left {
                *state.pipes[jl].fronts.last().ok_or_else(|| Error::Usage("no front left of the junction".into()))?
            } else {
                *state.pipes[jr].fronts.first().ok_or_else(|| Error::Usage("no front right of the junction".into()))?
            };
            let nl = state.pipes[jl].fronts.len();
            let ul = if from_left { state.pipes[jl].states[nl - 1] } else { state.pipes[jl].states[nl] };
            let ur = if from_left { state.pipes[jr].states[0] } else { state.pipes[jr].states[1] };
            let ctx = format!("front {} at junction {jn} (x = {x}, t = {time})", f.id);
            let (kind, left_pieces, right_pieces) = if !f.family.is_physical() {
                if !from_left {
                    return Err(Error::Invariant(format!("{ctx}: non-physical front moving left")));
                }
                let us = transfer(ul).map_err(|e| e.context(&ctx))?;
                let mut right = Vec::new();
                close_with_nonphysical(&mut right, us, ur);
                (EventKind::Refraction, Vec::new(), right)
            } else if f.sigma.abs() <= rp.eps_check {
                let piece = |l: GasState| -> Result<Piece> {
                    let r = lax_curve(law, f.family, l, f.sigma)?;
                    Ok(Piece { family: f.family, sigma: f.sigma, left: l, right: r, unsplit: f.unsplit })
                };
                if from_left {
                    let us = transfer(ul).map_err(|e| e.context(&ctx))?;
                    let p = piece(us)?;
                    let mut right = vec![p];
                    close_with_nonphysical(&mut right, p.right, ur);
                    (EventKind::JunctionTransmit, Vec::new(), right)
                } else {
                    let p = piece(ul)?;
                    let us = transfer(p.right).map_err(|e| e.context(&ctx))?;
                    let mut right = Vec::new();
                    close_with_nonphysical(&mut right, us, ur);
                    (EventKind::JunctionTransmit, vec![p], right)
                }
            } else {
                let fan = solve_junction_riemann(&problem.claw, law, am, ul, ap, ur).map_err(|e| e.context(&ctx))?;
                let keep = |fam: WaveFamily| fam == f.family && f.sigma > 0.0;
                let left = pieces_from_waves(law, &fan.left_waves, rp.eps, keep)?;
                let right = pieces_from_waves(law, &fan.right_waves, rp.eps, keep)?;
                (EventKind::JunctionAccurate, left, right)
            };
            check_states(law, &left_pieces, &ctx)?;
            check_states(law, &right_pieces, &ctx)?;
            match kind {
                EventKind::Refraction => state.counters.refractions += 1,
                _ => state.counters.junction_hits += 1,
            }
            let origin = match kind {
                EventKind::Refraction => Origin::Refracted,
                EventKind::JunctionTransmit => Origin::Transmitted,
                _ => Origin::Junction,
            };
            let born_l = materialize(state, law, rp, &left_pieces, x, jl, origin)?;
            let born_r = materialize(state, law, rp, &right_pieces, x, jr, origin)?;
            let trace_minus = left_pieces.last().map(|p| p.right).unwrap_or(ul);
            let trace_plus = right_pieces.first().map(|p| p.left).unwrap_or(ur);
            let (nbl, nbr) = (born_l.len(), born_r.len());
            let mut killed = if from_left {
                splice(&mut state.pipes[jl], nl - 1, 1, ul, born_l, trace_minus)
            } else {
                splice(&mut state.pipes[jl], nl, 0, ul, born_l, trace_minus)
            };
            killed.extend(if from_left {
                splice(&mut state.pipes[jr], 0, 0, trace_plus, born_r, ur)
            } else {
                splice(&mut state.pipes[jr], 0, 1, trace_plus, born_r, ur)
            });
            state.counters.events += 1;
            let start_l = state.pipes[jl].fronts.len() - nbl;
            let mut born = state.pipes[jl].fronts[start_l..].to_vec();
            born.extend_from_slice(&state.pipes[jr].fronts[..nbr]);
            Ok(EventOutcome { kind, time, x, pipe: if from_left { jl } else { jr }, junction: Some(jn), killed, born })
        }
    }
}

/// Builds the front-tracking approximation of `datum` at `t = 0`: every jump
/// inside a pipe and every junction is solved accurately, rarefactions fanned
/// with step ε.
pub fn init_approximation(problem: &Problem, datum: &InitialDatum, params: &WftParams) -> Result<WftState> {
    params.validate()?;
    datum.validate()?;
    problem.profile.validate()?;
    let law = &problem.law;
    for (k, &u) in datum.states.iter().enumerate() {
        if !law.is_subsonic(u)? {
            return Err(Error::Domain(format!("initial state {k} {u:?} is not subsonic")));
        }
    }
    let prof = &problem.profile;
    let n = prof.n_junctions();
    let mut state = WftState {
        time: 0.0,
        pipes: vec![PipeState::default(); n + 1],
        counters: Counters::default(),
        next_id: 0,
    };
    // Placeholder λ̂ during construction; no non-physical fronts are created here.
    let rp = Resolved { eps: params.eps, eps_check: 0.0, lambda_hat: f64::INFINITY, t_end: params.t_end, weight_c: 0.0 };
    let mut junction_right: Vec<Vec<Piece>> = vec![Vec::new(); n + 1];
    let mut junction_left: Vec<Vec<Piece>> = vec![Vec::new(); n + 1];
    let mut start_state: Vec<GasState> = vec![datum.states[0]; n + 1];
    for jn in 0..n {
        let xj = prof.junctions[jn];
        let (ul, ur) = (datum.left_of(xj), datum.right_of(xj));
        let fan = solve_junction_riemann(&problem.claw, law, prof.sections[jn], ul, prof.sections[jn + 1], ur)
            .map_err(|e| e.context(&format!("initial junction {jn} at x = {xj}")))?;
        junction_left[jn] = pieces_from_waves(law, &fan.left_waves, params.eps, |_| false)?;
        junction_right[jn + 1] = pieces_from_waves(law, &fan.right_waves, params.eps, |_| false)?;
        start_state[jn + 1] = junction_right[jn + 1].first().map(|p| p.left).unwrap_or(ur);
    }
    for j in 0..=n {
        let (lo, hi) = pipe_bounds(prof, j);
        let mut states = vec![start_state[j]];
        let mut fronts = Vec::new();
        let push = |state: &mut WftState, pieces: &[Piece], x: f64, fronts: &mut Vec<Front>, states: &mut Vec<GasState>| -> Result<()> {
            let born = materialize(state, law, &rp, pieces, x, j, Origin::Initial)?;
            for f in born {
                states.push(f.u_right);
                fronts.push(f);
            }
            Ok(())
        };
        if j > 0 {
            let pieces = junction_right[j].clone();
            push(&mut state, &pieces, lo, &mut fronts, &mut states)?;
        }
        for &xb in datum.breaks.iter().filter(|&&b| b > lo && b < hi) {
            let (ul, ur) = (datum.left_of(xb), datum.right_of(xb));
            let fan = solve_riemann(law, ul, ur).map_err(|e| e.context(&format!("initial jump at x = {xb}")))?;
            let pieces = pieces_from_waves(law, &fan.waves, params.eps, |_| false)?;
            push(&mut state, &pieces, xb, &mut fronts, &mut states)?;
            if let Some(last) = states.last_mut() {
                *last = ur;
            }
            if let Some(f) = fronts.last_mut() {
                f.u_right = ur;
            }
        }
        if j < n {
            let pieces = junction_left[j].clone();
            push(&mut state, &pieces, hi, &mut fronts, &mut states)?;
        }
        state.pipes[j] = PipeState { fronts, states };
    }
    state.check_consistency(law, prof)?;
    Ok(state)
}

/// Lifetime of a front: alive on `[front.t0, t_death)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontRecord {
    pub front: Front,
    pub t_death: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: f64,
    pub minus: GasState,
    pub plus: GasState,
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub index: usize,
    pub time: f64,
    pub kind: EventKind,
    pub x: f64,
    pub pipe: usize,
    pub junction: Option<usize>,
    /// `(family index, σ)` of the fronts removed and created.
    pub incoming: Vec<(u8, f64)>,
    pub outgoing: Vec<(u8, f64)>,
    pub upsilon_before: f64,
    pub upsilon_after: f64,
    pub fronts_after: usize,
}

/// Everything produced by one evolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timeline {
    pub law: PressureLaw,
    pub profile: PipeProfile,
    pub resolved: Resolved,
    pub regime: RegimeVerdict,
    pub upsilon_enforced: bool,
    pub initial: WftState,
    pub final_state: WftState,
    pub history: Vec<FrontRecord>,
    /// Per junction, the traces after every change.
    pub traces: Vec<Vec<TraceRecord>>,
    pub events: Vec<EventRecord>,
    pub snapshots: Vec<WftState>,
}

impl Timeline {
    /// The event log as line-delimited JSON.
    pub fn event_log(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).expect("event records serialize"));
            s.push('\n');
        }
        s
    }

    pub fn t_end(&self) -> f64 {
        self.resolved.t_end
    }
}

fn traces_of(state: &WftState) -> Vec<TraceRecord> {
    state
        .pipes
        .windows(2)
        .map(|w| TraceRecord { time: state.time, minus: *w[0].states.last().expect("nonempty"), plus: w[1].states[0] })
        .collect()
}

/// Runs the front-tracking scheme from `datum` up to `t_end`.
pub fn evolve(problem: &Problem, datum: &InitialDatum, params: &WftParams) -> Result<Timeline> {
    let law = &problem.law;
    let profile = &problem.profile;
    let mut state = init_approximation(problem, datum, params)?;
    let rp = resolve_params(problem, &state, params)?;
    let regime = regime_verdict(problem, &state, params.weight_c)?;
    let rp = Resolved { weight_c: regime.c, ..rp };
    let enforce = match params.upsilon_policy {
        UpsilonPolicy::Always => true,
        UpsilonPolicy::Never => false,
        UpsilonPolicy::Auto => regime.admissible,
    };
    let initial = state.clone();
    let mut history: Vec<FrontRecord> = state.fronts().map(|&front| FrontRecord { front, t_death: f64::INFINITY }).collect();
    let mut traces: Vec<Vec<TraceRecord>> = traces_of(&state).into_iter().map(|t| vec![t]).collect();
    let mut events = Vec::new();
    let mut snapshots = Vec::new();
    let mut next_snap = match params.snapshots {
        SnapshotCadence::Interval { dt } => dt,
        _ => f64::INFINITY,
    };
    let mut upsilon = glimm_functionals(&state, profile, rp.weight_c).upsilon;
    loop {
        let ev = next_event(&state, profile, rp.t_end);
        let t_next = ev.time().unwrap_or(rp.t_end);
        while next_snap <= t_next && next_snap <= rp.t_end {
            let mut s = state.clone();
            s.time = next_snap;
            snapshots.push(s);
            if let SnapshotCadence::Interval { dt } = params.snapshots {
                next_snap += dt;
            }
        }
        if ev == NextEvent::EndOfHorizon {
            break;
        }
        if state.counters.events >= params.max_events {
            return Err(Error::Aborted {
                reason: format!("event cap {} reached at t = {} with {} fronts", params.max_events, state.time, state.n_fronts()),
                dump: serde_json::to_string(&state).expect("state serializes"),
            });
        }
        let out = handle_interaction(problem, &mut state, &ev, &rp)?;
        for f in &out.killed {
            history[f.id as usize].t_death = out.time;
        }
        for f in &out.born {
            debug_assert_eq!(f.id as usize, history.len());
            history.push(FrontRecord { front: *f, t_death: f64::INFINITY });
        }
        if let Some(jn) = out.junction {
            let minus = *state.pipes[jn].states.last().expect("nonempty");
            let plus = state.pipes[jn + 1].states[0];
            traces[jn].push(TraceRecord { time: out.time, minus, plus });
        }
        let after = glimm_functionals(&state, profile, rp.weight_c).upsilon;
        let record = EventRecord {
            index: events.len(),
            time: out.time,
            kind: out.kind,
            x: out.x,
            pipe: out.pipe,
            junction: out.junction,
            incoming: out.killed.iter().map(|f| (f.family.index(), f.sigma)).collect(),
            outgoing: out.born.iter().map(|f| (f.family.index(), f.sigma)).collect(),
            upsilon_before: upsilon,
            upsilon_after: after,
            fronts_after: state.n_fronts(),
        };
        if enforce && after > upsilon + params.upsilon_tol {
            return Err(Error::Invariant(format!(
                "Υ increased by {:e}: {}",
                after - upsilon,
                serde_json::to_string(&record).expect("event records serialize")
            )));
        }
        upsilon = after;
        events.push(record);
        if params.snapshots == SnapshotCadence::EveryEvent {
            snapshots.push(state.clone());
        }
    }
    state.time = rp.t_end;
    state.check_consistency(law, profile)?;
    Ok(Timeline {
        law: law.clone(),
        profile: profile.clone(),
        resolved: rp,
        regime,
        upsilon_enforced: enforce,
        initial,
        final_state: state,
        history,
        traces,
        events,
        snapshots,
    })
}

/// The front-tracking state at time `t`, rebuilt from the front history.
/// At an event time the post-event state is returned.
pub fn state_at(timeline: &Timeline, t: f64) -> Result<WftState> {
    if !(t >= 0.0 && t <= timeline.t_end()) {
        return Err(Error::Usage(format!("t = {t} outside [0, {}]", timeline.t_end())));
    }
    let n = timeline.profile.n_junctions();
    let mut pipes = vec![PipeState::default(); n + 1];
    let mut alive: Vec<Vec<Front>> = vec![Vec::new(); n + 1];
    for r in &timeline.history {
        if r.front.t0 <= t && t < r.t_death {
            alive[r.front.pipe].push(r.front);
        }
    }
    for (j, mut fronts) in alive.into_iter().enumerate() {
        fronts.sort_by(|a, b| a.x(t).total_cmp(&b.x(t)).then(a.speed.total_cmp(&b.speed)).then(a.id.cmp(&b.id)));
        let first = match fronts.first() {
            Some(f) => f.u_left,
            None if j > 0 => trace_at(&timeline.traces[j - 1], t).plus,
            None if n > 0 => trace_at(&timeline.traces[0], t).minus,
            None => timeline.initial.pipes[0].states[0],
        };
        let mut states = vec![first];
        states.extend(fronts.iter().map(|f| f.u_right));
        pipes[j] = PipeState { fronts, states };
    }
    Ok(WftState { time: t, pipes, counters: Counters::default(), next_id: timeline.history.len() as u64 })
}

fn trace_at(records: &[TraceRecord], t: f64) -> TraceRecord {
    let k = records.partition_point(|r| r.time <= t);
    records[k.saturating_sub(1)]
}

/// The piecewise-constant solution at time `t`.
pub fn sample_solution(timeline: &Timeline, t: f64) -> Result<PiecewiseState> {
    Ok(state_at(timeline, t)?.to_piecewise(&timeline.profile))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::hat_stationary;

    fn iso() -> PressureLaw {
        PressureLaw::isothermal(1.0)
    }

    fn uniform() -> Problem {
        Problem { law: iso(), claw: CouplingLaw::SmoothSection, profile: PipeProfile::uniform(1.0) }
    }

    fn front(id: u64, family: WaveFamily, x: f64, speed: f64, pipe: usize) -> Front {
        let u = GasState::new(1.0, 0.0);
        Front { id, family, sigma: 0.0, x0: x, t0: 0.0, speed, u_left: u, u_right: u, pipe, origin: Origin::Initial, unsplit: false }
    }

    fn bare(pipes: Vec<Vec<Front>>) -> WftState {
        let u = GasState::new(1.0, 0.0);
        let pipes = pipes.into_iter().map(|f| PipeState { states: vec![u; f.len() + 1], fronts: f }).collect();
        WftState { time: 0.0, pipes, counters: Counters::default(), next_id: 0 }
    }

    #[test]
    fn constant_datum_has_no_fronts() {
        let s = init_approximation(&uniform(), &InitialDatum::constant(GasState::new(1.0, 0.3)), &WftParams::default()).unwrap();
        assert_eq!(s.n_fronts(), 0);
    }

    #[test]
    fn single_shock_datum_gives_one_front() {
        let law = iso();
        let ul = GasState::new(1.0, 0.2);
        let ur = lax_curve(&law, WaveFamily::Family2, ul, -0.1).unwrap();
        let d = InitialDatum { breaks: vec![0.0], states: vec![ul, ur] };
        let s = init_approximation(&uniform(), &d, &WftParams::default()).unwrap();
        assert_eq!(s.n_fronts(), 1);
        let f = s.fronts().next().unwrap();
        assert_eq!(f.family, WaveFamily::Family2);
        assert!((f.sigma + 0.1).abs() < 1e-10);
    }

    #[test]
    fn stationary_datum_gives_no_fronts() {
        let law = iso();
        let profile = PipeProfile::from_steps(vec![0.0, 1.0], vec![1.0, 1.05, 0.98]).unwrap();
        let claw = CouplingLaw::SmoothSection;
        let hat = hat_stationary(&law, &claw, &profile, GasState::new(1.0, 0.4)).unwrap();
        let problem = Problem { law, claw, profile: profile.clone() };
        let s = init_approximation(&problem, &InitialDatum::per_pipe(&profile, hat.states.clone()), &WftParams::default()).unwrap();
        assert_eq!(s.n_fronts(), 0);
        for (j, p) in s.pipes.iter().enumerate() {
            assert_eq!(p.states, vec![hat.states[j]]);
        }
    }

    #[test]
    fn kinematic_examples() {
        let prof = PipeProfile::uniform(1.0);
        let s = bare(vec![vec![front(0, WaveFamily::Family2, 0.0, 1.0, 0), front(1, WaveFamily::Family1, 1.0, -1.0, 0)]]);
        match next_event(&s, &prof, 10.0) {
            NextEvent::Collision { time, x, .. } => {
                assert!((time - 0.5).abs() < 1e-15 && (x - 0.5).abs() < 1e-15);
            }
            e => panic!("{e:?}"),
        }
        let prof = PipeProfile::from_steps(vec![0.0], vec![1.0, 1.1]).unwrap();
        let s = bare(vec![vec![front(0, WaveFamily::Family2, -1.0, 2.0, 0)], vec![]]);
        assert_eq!(
            next_event(&s, &prof, 10.0),
            NextEvent::JunctionHit { time: 0.5, x: 0.0, junction: 0, from_left: true }
        );
        assert_eq!(next_event(&bare(vec![vec![]]), &PipeProfile::uniform(1.0), 10.0), NextEvent::EndOfHorizon);
        assert_eq!(next_event(&s, &prof, 0.4), NextEvent::EndOfHorizon);
    }

    #[test]
    fn junction_hit_wins_a_tie() {
        let prof = PipeProfile::from_steps(vec![1.0], vec![1.0, 1.1]).unwrap();
        let s = bare(vec![
            vec![front(0, WaveFamily::Family2, 0.0, 1.0, 0), front(1, WaveFamily::Family1, 1.0, 0.5, 0)],
            vec![],
        ]);
        // Front 1 moves right; front 0 cannot overtake it, so only the junction hit remains.
        assert!(matches!(next_event(&s, &prof, 10.0), NextEvent::JunctionHit { .. }));
        let s = bare(vec![
            vec![front(0, WaveFamily::Family2, 0.0, 2.0, 0), front(1, WaveFamily::Family2, 1.0, 1.0, 0)],
            vec![],
        ]);
        // Collision at t = 1, x = 2 is after the hit at t = 0 of the second front at x = 1.
        assert!(matches!(next_event(&s, &prof, 10.0), NextEvent::JunctionHit { time, .. } if time == 0.0));
    }

    #[test]
    fn small_crossing_keeps_sizes() {
        let law = iso();
        let u0 = GasState::new(10.0, 2.0);
        let u1 = lax_curve(&law, WaveFamily::Family2, u0, -1e-4).unwrap();
        let u2 = lax_curve(&law, WaveFamily::Family1, u1, -1e-4).unwrap();
        let d = InitialDatum { breaks: vec![0.0, 0.01], states: vec![u0, u1, u2] };
        let problem = Problem { law, claw: CouplingLaw::SmoothSection, profile: PipeProfile::uniform(1.0) };
        let params = WftParams { eps: 1e-2, t_end: 1.0, ..WftParams::default() };
        let tl = evolve(&problem, &d, &params).unwrap();
        assert_eq!(tl.events.len(), 1);
        let e = &tl.events[0];
        assert_eq!(e.kind, EventKind::Crossing);
        assert_eq!(e.outgoing.len(), 3);
        assert_eq!(e.outgoing[0], e.incoming[1]);
        assert_eq!(e.outgoing[1], e.incoming[0]);
        assert!((e.outgoing[0].1 + 1e-4).abs() < 1e-12);
        assert_eq!(e.outgoing[2].0, 3);
        assert!(tl.final_state.fronts().last().unwrap().speed == tl.resolved.lambda_hat);
    }

    #[test]
    fn splice_keeps_states_glued() {
        let law = iso();
        let u0 = GasState::new(1.0, 0.0);
        let u1 = lax_curve(&law, WaveFamily::Family1, u0, -0.1).unwrap();
        let mut p = PipeState { fronts: vec![], states: vec![u0] };
        let mut f = front(0, WaveFamily::Family1, 0.0, -1.0, 0);
        f.u_right = u1;
        let killed = splice(&mut p, 0, 0, u0, vec![f], u1);
        assert!(killed.is_empty());
        assert_eq!(p.states, vec![u0, u1]);
        assert_eq!(p.fronts[0].u_left, u0);
        let killed = splice(&mut p, 0, 1, u0, vec![], u1);
        assert_eq!(killed.len(), 1);
        assert_eq!(p.states, vec![u1]);
    }

    #[test]
    fn state_at_matches_snapshots() {
        let law = iso();
        let ul = GasState::new(1.2, 0.3);
        let ur = GasState::new(0.9, 0.1);
        let profile = PipeProfile::from_steps(vec![0.5, 1.0], vec![1.0, 1.04, 1.0]).unwrap();
        let problem = Problem { law, claw: CouplingLaw::SmoothSection, profile };
        let d = InitialDatum { breaks: vec![0.0], states: vec![ul, ur] };
        let params = WftParams {
            eps: 0.05,
            t_end: 1.0,
            snapshots: SnapshotCadence::EveryEvent,
            upsilon_policy: UpsilonPolicy::Never,
            ..WftParams::default()
        };
        let tl = evolve(&problem, &d, &params).unwrap();
        assert!(tl.events.len() > 3);
        for s in tl.snapshots.iter().step_by(3) {
            let r = state_at(&tl, s.time).unwrap();
            assert_eq!(r.pipes, s.pipes, "t = {}", s.time);
        }
        assert_eq!(state_at(&tl, 1.0).unwrap().pipes, tl.final_state.pipes);
        assert_eq!(state_at(&tl, 0.0).unwrap().pipes, tl.initial.pipes);
    }
}
