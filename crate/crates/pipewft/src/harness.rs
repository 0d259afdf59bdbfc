//! Scenario configuration, run orchestration with CSV/JSON emission, and the
//! amplification, convergence and stability experiments.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{entropy_residual, phi_distance, weak_residual, Bump, EntropyCheck, PhiWeights, RegimeVerdict};
use crate::gas_core::{GasState, PressureLaw};
use crate::junction::{solve_junction_riemann, t_map, CouplingKind, CouplingLaw};
use crate::profiles::{hat_stationary, kgrande, pc_approximate, section_l1_distance, PipeProfile, SmoothProfile};
use crate::riemann::{lax_curve, solve_riemann, WaveFamily};
use crate::wft_engine::{
    evolve, sample_solution, state_at, Counters, InitialDatum, PiecewiseState, Problem, Resolved, Timeline, UpsilonPolicy, WftParams,
    WftState,
};

fn cfg_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

/// Section description of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    Uniform { a: f64 },
    Steps { junctions: Vec<f64>, sections: Vec<f64> },
    /// Piecewise-linear section, replaced by its staircase of mesh `1/resolution`.
    Smooth {
        knots: Vec<(f64, f64)>,
        resolution: usize,
        #[serde(default)]
        a_bar: Option<f64>,
        #[serde(default)]
        delta: Option<f64>,
    },
    Ramp { x_half: f64, a0: f64, a1: f64, resolution: usize },
}

impl ProfileConfig {
    pub fn smooth(&self) -> Result<Option<SmoothProfile>> {
        match self {
            ProfileConfig::Smooth { knots, a_bar, delta, .. } => {
                let lo = knots.iter().map(|k| k.1).fold(f64::INFINITY, f64::min);
                let hi = knots.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max);
                let a_bar = a_bar.unwrap_or(0.5 * (lo + hi));
                let delta = delta.unwrap_or(0.25 * a_bar);
                SmoothProfile::new(knots.clone(), a_bar, delta).map(Some)
            }
            ProfileConfig::Ramp { x_half, a0, a1, .. } => SmoothProfile::ramp(*x_half, *a0, *a1).map(Some),
            _ => Ok(None),
        }
    }

    pub fn resolution(&self) -> Option<usize> {
        match self {
            ProfileConfig::Smooth { resolution, .. } | ProfileConfig::Ramp { resolution, .. } => Some(*resolution),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<PipeProfile> {
        match self {
            ProfileConfig::Uniform { a } => {
                let p = PipeProfile::uniform(*a);
                p.validate()?;
                Ok(p)
            }
            ProfileConfig::Steps { junctions, sections } => PipeProfile::from_steps(junctions.clone(), sections.clone()),
            _ => {
                let smooth = self.smooth()?.expect("smooth variants");
                Ok(pc_approximate(&smooth, self.resolution().expect("smooth variants"))?.profile)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(cfg_err(field, format!("must be positive, got {v}"))) };
        match self {
            ProfileConfig::Uniform { a } => positive("profile.a", *a)?,
            ProfileConfig::Steps { junctions, sections } => {
                if sections.len() != junctions.len() + 1 {
                    return Err(cfg_err("profile.sections", format!("{} junctions need {} sections", junctions.len(), junctions.len() + 1)));
                }
                for (i, &a) in sections.iter().enumerate() {
                    positive(&format!("profile.sections[{i}]"), a)?;
                }
                if junctions.windows(2).any(|w| !(w[0] < w[1])) || junctions.iter().any(|x| !x.is_finite()) {
                    return Err(cfg_err("profile.junctions", "must be finite and strictly increasing"));
                }
            }
            ProfileConfig::Smooth { knots, resolution, .. } => {
                if knots.is_empty() {
                    return Err(cfg_err("profile.knots", "need at least one knot"));
                }
                for (i, k) in knots.iter().enumerate() {
                    positive(&format!("profile.knots[{i}].1"), k.1)?;
                }
                if *resolution == 0 {
                    return Err(cfg_err("profile.resolution", "must be positive"));
                }
            }
            ProfileConfig::Ramp { x_half, a0, a1, resolution } => {
                positive("profile.x_half", *x_half)?;
                positive("profile.a0", *a0)?;
                positive("profile.a1", *a1)?;
                if *resolution == 0 {
                    return Err(cfg_err("profile.resolution", "must be positive"));
                }
            }
        }
        self.build().map_err(|e| cfg_err("profile", e)).map(|_| ())
    }
}

/// Additive density/momentum bump on `[x_lo, x_hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub x_lo: f64,
    pub x_hi: f64,
    #[serde(default)]
    pub drho: f64,
    #[serde(default)]
    pub dq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Constant { state: GasState },
    /// One wave at `x`, left of every junction, entering the stationary flow
    /// that continues its right state.
    SingleWave { left: GasState, family: u8, sigma: f64, x: f64 },
    Steps { breaks: Vec<f64>, states: Vec<GasState> },
    Stationary {
        u_left: GasState,
        #[serde(default)]
        perturbation: Option<Perturbation>,
    },
    /// Random steps around `base`, drawn from the scenario seed.
    Random { base: GasState, n_breaks: usize, x_lo: f64, x_hi: f64, amplitude: f64 },
}

fn family_of(f: u8) -> Result<WaveFamily> {
    match f {
        1 => Ok(WaveFamily::Family1),
        2 => Ok(WaveFamily::Family2),
        _ => Err(cfg_err("initial.family", format!("must be 1 or 2, got {f}"))),
    }
}

/// Overlays `(x_lo, x_hi, add)` on a piecewise-constant datum.
fn overlay(datum: &InitialDatum, p: &Perturbation) -> InitialDatum {
    let mut breaks: Vec<f64> = datum.breaks.iter().copied().chain([p.x_lo, p.x_hi]).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let pw = datum.to_piecewise();
    let mut states = Vec::with_capacity(breaks.len() + 1);
    for k in 0..=breaks.len() {
        let mid = match (k.checked_sub(1).map(|i| breaks[i]), breaks.get(k)) {
            (Some(a), Some(&b)) => 0.5 * (a + b),
            (None, Some(&b)) => b - 1.0,
            (Some(a), None) => a + 1.0,
            (None, None) => 0.0,
        };
        let mut u = pw.eval(mid);
        if mid > p.x_lo && mid < p.x_hi {
            u = GasState::new(u.rho + p.drho, u.q + p.dq);
        }
        states.push(u);
    }
    InitialDatum { breaks, states }
}

impl InitialConfig {
    pub fn build(&self, law: &PressureLaw, claw: &CouplingLaw, profile: &PipeProfile, seed: u64) -> Result<InitialDatum> {
        let d = match self {
            InitialConfig::Constant { state } => InitialDatum::constant(*state),
            InitialConfig::Steps { breaks, states } => InitialDatum { breaks: breaks.clone(), states: states.clone() },
            InitialConfig::SingleWave { left, family, sigma, x } => {
                if profile.junctions.first().is_some_and(|&j| *x >= j) {
                    return Err(cfg_err("initial.x", format!("wave at {x} must lie left of the first junction")));
                }
                let right = lax_curve(law, family_of(*family)?, *left, *sigma)?;
                let hat = hat_stationary(law, claw, profile, right)?;
                let mut breaks = vec![*x];
                breaks.extend(profile.junctions.iter().copied());
                let mut states = vec![*left];
                states.extend(hat.states);
                InitialDatum { breaks, states }
            }
            InitialConfig::Stationary { u_left, perturbation } => {
                let base = InitialDatum::per_pipe(profile, hat_stationary(law, claw, profile, *u_left)?.states);
                match perturbation {
                    Some(p) => overlay(&base, p),
                    None => base,
                }
            }
            InitialConfig::Random { base, n_breaks, x_lo, x_hi, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut breaks: Vec<f64> = (0..*n_breaks).map(|_| rng.gen_range(*x_lo..*x_hi)).collect();
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                let states = (0..=breaks.len())
                    .map(|_| {
                        let r = base.rho * (1.0 + amplitude * rng.gen_range(-1.0..1.0));
                        GasState::new(r, r * (base.v() + amplitude * rng.gen_range(-1.0..1.0)))
                    })
                    .collect();
                InitialDatum { breaks, states }
            }
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        match self {
            InitialConfig::SingleWave { family, sigma, .. } => {
                family_of(*family)?;
                if !sigma.is_finite() {
                    return Err(cfg_err("initial.sigma", "must be finite"));
                }
            }
            InitialConfig::Stationary { perturbation: Some(p), .. } if !(p.x_lo < p.x_hi) => {
                return Err(cfg_err("initial.perturbation", "need x_lo < x_hi"));
            }
            InitialConfig::Random { n_breaks, x_lo, x_hi, amplitude, .. } => {
                if !(x_lo < x_hi) || *n_breaks == 0 {
                    return Err(cfg_err("initial", "random datum needs n_breaks > 0 and x_lo < x_hi"));
                }
                if !(0.0..0.5).contains(amplitude) {
                    return Err(cfg_err("initial.amplitude", format!("must lie in [0, 0.5), got {amplitude}")));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// What `run` executes for a config.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    #[default]
    Run,
    Amplify(AmplifyParams),
    Converge(ConvergeParams),
    Stability(StabilityParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub events: bool,
    pub snapshots: bool,
    pub traces: bool,
    pub functionals: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, events: true, snapshots: true, traces: true, functionals: true }
    }
}

/// Residual probes evaluated after a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub bumps: Vec<Bump>,
    pub entropy_tol: f64,
    pub entropy_c: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { bumps: Vec::new(), entropy_tol: 1e-10, entropy_c: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Free text copied into every summary.
    #[serde(default)]
    pub note: Option<String>,
    pub law: PressureLaw,
    #[serde(default)]
    pub coupling: CouplingKind,
    #[serde(default = "default_profile")]
    pub profile: ProfileConfig,
    #[serde(default = "default_initial")]
    pub initial: InitialConfig,
    #[serde(default)]
    pub params: WftParams,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_profile() -> ProfileConfig {
    ProfileConfig::Uniform { a: 1.0 }
}

fn default_initial() -> InitialConfig {
    InitialConfig::Constant { state: GasState::new(1.0, 0.0) }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.law.validate().map_err(|e| cfg_err("law", e))?;
        self.profile.validate()?;
        self.initial.validate()?;
        self.params.validate().map_err(|e| cfg_err("params", e))?;
        for (i, b) in self.diagnostics.bumps.iter().enumerate() {
            if !(b.r_t > 0.0 && b.r_x > 0.0) {
                return Err(cfg_err(&format!("diagnostics.bumps[{i}]"), "radii must be positive"));
            }
        }
        match &self.experiment {
            ExperimentConfig::Amplify(p) => p.validate()?,
            ExperimentConfig::Converge(p) => p.validate()?,
            ExperimentConfig::Stability(p) => p.validate()?,
            ExperimentConfig::Run => {}
        }
        let profile = self.profile.build()?;
        self.initial.build(&self.law, &self.coupling.into(), &profile, self.seed).map_err(|e| cfg_err("initial", e))?;
        Ok(())
    }

    pub fn problem(&self) -> Result<Problem> {
        Ok(Problem { law: self.law, claw: self.coupling.into(), profile: self.profile.build()? })
    }

    pub fn datum(&self, problem: &Problem) -> Result<InitialDatum> {
        self.initial.build(&problem.law, &problem.claw, &problem.profile, self.seed)
    }
}

/// One front in one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub snapshot: usize,
    pub time: f64,
    pub pipe: usize,
    pub front_id: u64,
    pub family: u8,
    pub x: f64,
    pub sigma: f64,
    pub speed: f64,
    pub rho_left: f64,
    pub q_left: f64,
    pub rho_right: f64,
    pub q_right: f64,
}

/// One constant cell `(x_left, x_right)` of the solution in one snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    pub snapshot: usize,
    pub time: f64,
    pub x_left: f64,
    pub x_right: f64,
    pub rho: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub junction: usize,
    pub time: f64,
    pub rho_minus: f64,
    pub q_minus: f64,
    pub rho_plus: f64,
    pub q_plus: f64,
}

/// Υ across one event; the first row (no event index) is the initial value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRow {
    pub event: Option<usize>,
    pub time: f64,
    pub kind: String,
    pub upsilon_before: f64,
    pub upsilon_after: f64,
    pub fronts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub bump: Bump,
    pub weak: Option<f64>,
    pub entropy: Option<EntropyCheck>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub note: Option<String>,
    pub seed: u64,
    pub resolved: Resolved,
    pub regime: RegimeVerdict,
    pub upsilon_enforced: bool,
    pub counters: Counters,
    pub events: usize,
    pub fronts_final: usize,
    pub upsilon_initial: f64,
    pub upsilon_final: f64,
    /// Largest single-event increase of Υ; negative when Υ only decreased.
    pub upsilon_max_increase: Option<f64>,
    pub residuals: Vec<ResidualRow>,
    pub files: Vec<String>,
}

pub fn snapshot_rows(k: usize, s: &WftState) -> Vec<SnapshotRow> {
    s.fronts()
        .map(|f| SnapshotRow {
            snapshot: k,
            time: s.time,
            pipe: f.pipe,
            front_id: f.id,
            family: f.family.index(),
            x: f.x(s.time),
            sigma: f.sigma,
            speed: f.speed,
            rho_left: f.u_left.rho,
            q_left: f.u_left.q,
            rho_right: f.u_right.rho,
            q_right: f.u_right.q,
        })
        .collect()
}

pub fn solution_rows(k: usize, time: f64, pw: &PiecewiseState) -> Vec<SolutionRow> {
    (0..pw.values.len())
        .map(|i| SolutionRow {
            snapshot: k,
            time,
            x_left: if i == 0 { f64::NEG_INFINITY } else { pw.breaks[i - 1] },
            x_right: pw.breaks.get(i).copied().unwrap_or(f64::INFINITY),
            rho: pw.values[i].rho,
            q: pw.values[i].q,
        })
        .collect()
}

pub fn trace_rows(tl: &Timeline) -> Vec<TraceRow> {
    tl.traces
        .iter()
        .enumerate()
        .flat_map(|(j, rs)| {
            rs.iter().map(move |r| TraceRow {
                junction: j,
                time: r.time,
                rho_minus: r.minus.rho,
                q_minus: r.minus.q,
                rho_plus: r.plus.rho,
                q_plus: r.plus.q,
            })
        })
        .collect()
}

pub fn functional_rows(tl: &Timeline) -> Vec<FunctionalRow> {
    let u0 = crate::functionals::glimm_functionals(&tl.initial, &tl.profile, tl.resolved.weight_c).upsilon;
    let mut rows = vec![FunctionalRow { event: None, time: 0.0, kind: "initial".into(), upsilon_before: u0, upsilon_after: u0, fronts: tl.initial.n_fronts() }];
    rows.extend(tl.events.iter().map(|e| FunctionalRow {
        event: Some(e.index),
        time: e.time,
        kind: serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        upsilon_before: e.upsilon_before,
        upsilon_after: e.upsilon_after,
        fronts: e.fronts_after,
    }));
    rows
}

/// The snapshots of a run: the initial state, the recorded ones and the final state.
pub fn all_snapshots(tl: &Timeline) -> Vec<&WftState> {
    let mut v = vec![&tl.initial];
    v.extend(tl.snapshots.iter());
    v.push(&tl.final_state);
    v
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value).expect("report types serialize"))?;
    Ok(())
}

/// Writes the offending record or state of a failed run next to the other outputs.
fn dump_failure(dir: &Path, err: &Error) {
    let _ = fs::create_dir_all(dir);
    match err {
        Error::Aborted { dump, .. } => {
            let _ = fs::write(dir.join("abort_state.json"), dump);
        }
        Error::Invariant(m) => {
            let record = m.find('{').map(|i| &m[i..]).unwrap_or(m);
            let _ = fs::write(dir.join("violation.json"), record);
        }
        _ => {}
    }
}

/// Evolves a scenario, evaluates its residual probes and, with `out_dir`,
/// writes `events.jsonl`, `snapshots.csv`, `solution.csv`, `traces.csv`,
/// `functionals.csv` and `summary.json`.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<(Timeline, RunSummary)> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let datum = cfg.datum(&problem)?;
    let dir = out_dir.map(Path::to_path_buf).or_else(|| cfg.outputs.dir.clone());
    let tl = match evolve(&problem, &datum, &cfg.params) {
        Ok(tl) => tl,
        Err(e) => {
            if let Some(d) = &dir {
                dump_failure(d, &e);
            }
            return Err(e.context(&format!("scenario {}", cfg.name)));
        }
    };
    let residuals = cfg
        .diagnostics
        .bumps
        .iter()
        .map(|b| {
            let weak = weak_residual(&tl, &problem, b);
            let ent = entropy_residual(&tl, b, cfg.diagnostics.entropy_tol, cfg.diagnostics.entropy_c);
            let error = weak.as_ref().err().or(ent.as_ref().err()).map(|e| e.to_string());
            ResidualRow { bump: *b, weak: weak.ok(), entropy: ent.ok(), error }
        })
        .collect();
    let u0 = tl.regime.upsilon0;
    let mut summary = RunSummary {
        name: cfg.name.clone(),
        note: cfg.note.clone(),
        seed: cfg.seed,
        resolved: tl.resolved,
        regime: tl.regime.clone(),
        upsilon_enforced: tl.upsilon_enforced,
        counters: tl.final_state.counters.clone(),
        events: tl.events.len(),
        fronts_final: tl.final_state.n_fronts(),
        upsilon_initial: u0,
        upsilon_final: tl.events.last().map(|e| e.upsilon_after).unwrap_or(u0),
        upsilon_max_increase: tl.events.iter().map(|e| e.upsilon_after - e.upsilon_before).reduce(f64::max),
        residuals,
        files: Vec::new(),
    };
    if let Some(d) = dir {
        fs::create_dir_all(&d)?;
        let o = &cfg.outputs;
        if o.events {
            fs::write(d.join("events.jsonl"), tl.event_log())?;
            summary.files.push("events.jsonl".into());
        }
        if o.snapshots {
            let snaps = all_snapshots(&tl);
            let fronts: Vec<SnapshotRow> = snaps.iter().enumerate().flat_map(|(k, s)| snapshot_rows(k, s)).collect();
            let cells: Vec<SolutionRow> =
                snaps.iter().enumerate().flat_map(|(k, s)| solution_rows(k, s.time, &s.to_piecewise(&tl.profile))).collect();
            write_csv(&d.join("snapshots.csv"), &fronts)?;
            write_csv(&d.join("solution.csv"), &cells)?;
            summary.files.extend(["snapshots.csv".into(), "solution.csv".into()]);
        }
        if o.traces {
            write_csv(&d.join("traces.csv"), &trace_rows(&tl))?;
            summary.files.push("traces.csv".into());
        }
        if o.functionals {
            write_csv(&d.join("functionals.csv"), &functional_rows(&tl))?;
            summary.files.push("functionals.csv".into());
        }
        summary.files.push("summary.json".into());
        write_json(&d.join("summary.json"), &summary)?;
    }
    Ok((tl, summary))
}

// ---------------------------------------------------------------- amplification

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmplifyParams {
    pub law: PressureLaw,
    /// `v̄/c` of the flow ahead of the incoming wave.
    pub vbar_over_c: f64,
    pub da_over_a: f64,
    pub repeats: usize,
    /// Lax parameter of the incoming 2-wave; negative for a shock.
    pub sigma: f64,
    pub a: f64,
    pub rho: f64,
}

impl Default for AmplifyParams {
    fn default() -> Self {
        AmplifyParams { law: PressureLaw::isothermal(1.0), vbar_over_c: 0.5, da_over_a: 0.05, repeats: 10, sigma: -1e-3, a: 1.0, rho: 1.0 }
    }
}

impl AmplifyParams {
    fn validate(&self) -> Result<()> {
        self.law.validate().map_err(|e| cfg_err("amplify.law", e))?;
        if !(0.0..1.0).contains(&self.vbar_over_c) {
            return Err(cfg_err("amplify.vbar_over_c", format!("must lie in [0, 1), got {}", self.vbar_over_c)));
        }
        if !(self.da_over_a > 0.0 && self.da_over_a < 1.0) {
            return Err(cfg_err("amplify.da_over_a", format!("must lie in (0, 1), got {}", self.da_over_a)));
        }
        if self.repeats == 0 {
            return Err(cfg_err("amplify.repeats", "must be positive"));
        }
        if !(self.sigma != 0.0 && self.sigma.abs() < 0.5 * self.rho) {
            return Err(cfg_err("amplify.sigma", "must be nonzero and below ρ/2 in size"));
        }
        if !(self.a > 0.0 && self.rho > 0.0) {
            return Err(cfg_err("amplify", "a and rho must be positive"));
        }
        Ok(())
    }
}

/// The state behind a 2-wave of size `sigma` whose right state is `ahead`.
fn behind_two_wave(law: &PressureLaw, ahead: GasState, sigma: f64) -> Result<GasState> {
    let rho_b = ahead.rho - sigma;
    let dv = lax_curve(law, WaveFamily::Family2, GasState::new(rho_b, 0.0), sigma)?.v();
    Ok(GasState::new(rho_b, rho_b * (ahead.v() - dv)))
}

/// One crossing of the pair `(a, a(1+θ), a)` by a 2-wave whose left state is
/// `behind` entering the stationary flow `ahead`. Returns the sizes after the
/// first and the second junction and the new state behind the wave.
pub fn up_down_pair(law: &PressureLaw, claw: &CouplingLaw, a: f64, theta: f64, behind: GasState, ahead: GasState) -> Result<(f64, f64, GasState)> {
    let a_up = a * (1.0 + theta);
    let mid_ahead = t_map(claw, law, a, a_up, ahead)?;
    let up = solve_junction_riemann(claw, law, a, behind, a_up, mid_ahead)?;
    let down = solve_junction_riemann(claw, law, a_up, up.trace_plus, a, ahead)?;
    Ok((up.sigma2, down.sigma2, down.trace_plus))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair: usize,
    pub sigma_in: f64,
    pub sigma_mid: f64,
    pub sigma_out: f64,
    pub ratio: f64,
    pub mach_behind: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplifyReport {
    pub params: AmplifyParams,
    pub kgrande: f64,
    /// `(ratio − 1)/θ²` of the first pair.
    pub k_hat: f64,
    pub rows: Vec<PairRow>,
    /// `|σ_m| / |σ_0|` after the last completed pair.
    pub growth: f64,
    pub predicted_growth: f64,
    pub doubling_pair: Option<usize>,
    /// `ln 2 / ln(1 + 𝒦θ²)` when the closed form predicts growth.
    pub predicted_doubling: Option<f64>,
    /// Pair index and message when the state left the subsonic regime.
    pub breakdown: Option<(usize, String)>,
}

/// Repeated up-down pairs solved exactly at each junction. Reflected waves
/// travel away and are not followed.
pub fn amplification_experiment(p: &AmplifyParams) -> Result<AmplifyReport> {
    p.validate()?;
    let law = &p.law;
    let claw = CouplingLaw::SmoothSection;
    let c = law.c(p.rho);
    let ahead = GasState::new(p.rho, p.rho * p.vbar_over_c * c);
    let mut behind = behind_two_wave(law, ahead, p.sigma)?;
    let theta = p.da_over_a;
    let kg = kgrande(p.vbar_over_c)?;
    let sigma0 = p.sigma.abs();
    let mut sigma = p.sigma;
    let mut rows = Vec::new();
    let mut breakdown = None;
    let mut doubling = None;
    for k in 0..p.repeats {
        match up_down_pair(law, &claw, p.a, theta, behind, ahead) {
            Ok((mid, out, next)) => {
                rows.push(PairRow { pair: k, sigma_in: sigma, sigma_mid: mid, sigma_out: out, ratio: (out / sigma).abs(), mach_behind: law.mach(next) });
                sigma = out;
                behind = next;
                if doubling.is_none() && sigma.abs() >= 2.0 * sigma0 {
                    doubling = Some(k + 1);
                }
            }
            Err(e) => {
                breakdown = Some((k, e.to_string()));
                break;
            }
        }
    }
    let per_pair = 1.0 + kg * theta * theta;
    let k_hat = rows.first().map(|r| (r.ratio - 1.0) / (theta * theta)).unwrap_or(f64::NAN);
    Ok(AmplifyReport {
        params: p.clone(),
        kgrande: kg,
        k_hat,
        growth: sigma.abs() / sigma0,
        predicted_growth: per_pair.powi(rows.len() as i32),
        doubling_pair: doubling,
        predicted_doubling: (per_pair > 1.0).then(|| std::f64::consts::LN_2 / per_pair.ln()),
        rows,
        breakdown,
    })
}

/// `𝒦̂` at one `ξ` from a single small wave over a sequence of halving `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KFit {
    pub xi: f64,
    pub kgrande: f64,
    pub thetas: Vec<f64>,
    pub k_hats: Vec<f64>,
    /// Richardson extrapolation `2𝒦̂(θ/2) − 𝒦̂(θ)` on the last two entries.
    pub extrapolated: f64,
}

pub fn fit_amplification(law: &PressureLaw, xi: f64, thetas: &[f64], sigma: f64) -> Result<KFit> {
    if thetas.len() < 2 {
        return Err(Error::Usage("need at least two section ratios".into()));
    }
    let mut k_hats = Vec::new();
    for &theta in thetas {
        let p = AmplifyParams { law: *law, vbar_over_c: xi, da_over_a: theta, repeats: 1, sigma, ..AmplifyParams::default() };
        let r = amplification_experiment(&p)?;
        if let Some((_, m)) = r.breakdown {
            return Err(Error::Solver(format!("ξ = {xi}, θ = {theta}: {m}")));
        }
        k_hats.push(r.k_hat);
    }
    let n = k_hats.len();
    Ok(KFit { xi, kgrande: kgrande(xi)?, thetas: thetas.to_vec(), extrapolated: 2.0 * k_hats[n - 1] - k_hats[n - 2], k_hats })
}

/// Positive root of `−1 + 8ξ² − 7ξ⁴ + 2ξ⁶`, where the closed form changes sign.
pub fn kgrande_root() -> f64 {
    let f = |x: f64| {
        let y = x * x;
        -1.0 + 8.0 * y - 7.0 * y * y + 2.0 * y * y * y
    };
    let (mut lo, mut hi) = (0.0, 0.9);
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        if f(m) < 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignScan {
    pub fits: Vec<KFit>,
    pub closed_form_root: f64,
    /// Consecutive `ξ` between which the measured coefficient changes sign.
    pub bracket: Option<(f64, f64)>,
}

pub fn amplification_sign_scan(law: &PressureLaw, xis: &[f64], thetas: &[f64], sigma: f64) -> Result<SignScan> {
    let fits: Vec<KFit> = xis.par_iter().map(|&xi| fit_amplification(law, xi, thetas, sigma)).collect::<Result<_>>()?;
    let bracket = fits.windows(2).find(|w| w[0].extrapolated.signum() != w[1].extrapolated.signum()).map(|w| (w[0].xi, w[1].xi));
    Ok(SignScan { fits, closed_form_root: kgrande_root(), bracket })
}

// ---------------------------------------------------------------- convergence

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeParams {
    pub n_list: Vec<usize>,
    pub t_samples: Vec<f64>,
}

impl Default for ConvergeParams {
    fn default() -> Self {
        ConvergeParams { n_list: vec![4, 8, 16, 32], t_samples: vec![0.5, 1.0] }
    }
}

impl ConvergeParams {
    fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(cfg_err("converge.n_list", "need positive resolutions"));
        }
        if self.t_samples.iter().any(|t| !(*t >= 0.0)) {
            return Err(cfg_err("converge.t_samples", "times must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub t: f64,
    pub l1: f64,
    pub section_l1: f64,
    pub events: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub reference_n: usize,
    pub rows: Vec<ConvergenceRow>,
    /// Distances decrease with `n` at every sampled time.
    pub monotone: bool,
    pub failures: Vec<(usize, String)>,
}

fn l1_window(a: &PiecewiseState, b: &PiecewiseState) -> f64 {
    let xs = a.breaks.iter().chain(b.breaks.iter());
    let lo = xs.clone().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > hi {
        return 0.0;
    }
    a.l1_distance(b, lo - 1.0, hi + 1.0)
}

/// Runs the scenario on the staircases `a_n` and measures the L¹ distance to
/// the run on `a_{2 n_max}`.
pub fn convergence_experiment(cfg: &ScenarioConfig, cp: &ConvergeParams) -> Result<ConvergenceReport> {
    cp.validate()?;
    let smooth = cfg.profile.smooth()?.ok_or_else(|| cfg_err("profile", "convergence needs a smooth or ramp profile"))?;
    let claw: CouplingLaw = cfg.coupling.into();
    let reference_n = 2 * cp.n_list.iter().copied().max().expect("non-empty");
    let mut ns = cp.n_list.clone();
    ns.push(reference_n);
    let runs: Vec<(usize, Result<(Timeline, f64)>)> = ns
        .par_iter()
        .map(|&n| {
            let run = || -> Result<(Timeline, f64)> {
                let profile = pc_approximate(&smooth, n)?.profile;
                let sec = section_l1_distance(&smooth, &profile);
                let problem = Problem { law: cfg.law, claw: claw.clone(), profile };
                let datum = cfg.initial.build(&cfg.law, &claw, &problem.profile, cfg.seed)?;
                Ok((evolve(&problem, &datum, &cfg.params)?, sec))
            };
            (n, run())
        })
        .collect();
    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (n, r) in runs {
        match r {
            Ok(v) => ok.push((n, v)),
            Err(e) => failures.push((n, e.to_string())),
        }
    }
    let (_, (reference, _)) = ok.iter().find(|(n, _)| *n == reference_n).ok_or_else(|| {
        Error::Solver(format!("reference run n = {reference_n} failed: {}", failures.last().map(|f| f.1.as_str()).unwrap_or("")))
    })?;
    let mut rows = Vec::new();
    for &t in &cp.t_samples {
        let t = t.min(cfg.params.t_end);
        let r = sample_solution(reference, t)?;
        for (n, (tl, sec)) in ok.iter().filter(|(n, _)| *n != reference_n) {
            rows.push(ConvergenceRow { n: *n, t, l1: l1_window(&sample_solution(tl, t)?, &r), section_l1: *sec, events: tl.events.len() });
        }
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.n.cmp(&b.n)));
    let monotone = failures.is_empty()
        && rows.windows(2).all(|w| w[0].t != w[1].t || w[1].l1 <= w[0].l1 + 1e-12);
    Ok(ConvergenceReport { reference_n, rows, monotone, failures })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryConvergence {
    /// `(n, ∫ |û_n − u| dx)` against the smooth stationary flow.
    pub rows: Vec<(usize, f64)>,
    /// Least-squares slope of `log L¹` against `log(1/n)`.
    pub slope: f64,
}

/// Distance of `hat_stationary ∘ pc_approximate` from the smooth stationary
/// flow `x ↦ T(a(x_0), a(x); u_left)`.
pub fn stationary_convergence(law: &PressureLaw, claw: &CouplingLaw, smooth: &SmoothProfile, u_left: GasState, n_list: &[usize]) -> Result<StationaryConvergence> {
    let (x0, x1) = smooth.x_range();
    let a0 = smooth.a(x0);
    let exact = |x: f64| t_map(claw, law, a0, smooth.a(x), u_left);
    let rows: Vec<(usize, f64)> = n_list
        .par_iter()
        .map(|&n| {
            let profile = pc_approximate(smooth, n)?.profile;
            let hat = hat_stationary(law, claw, &profile, u_left)?;
            let mut pts: Vec<f64> = profile.junctions.iter().copied().chain(smooth.knots.iter().map(|k| k.0)).collect();
            pts.push(x0 - 1.0);
            pts.push(x1 + 1.0);
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let mut total = 0.0;
            for w in pts.windows(2) {
                let u = hat.states[profile.pipe_of(0.5 * (w[0] + w[1]))];
                total += gauss_result(w[0], w[1], |x| Ok(exact(x)?.l1_dist(&u)))?;
            }
            Ok((n, total))
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).map(|&(n, d)| ((1.0 / n as f64).ln(), d.ln())).collect();
    Ok(StationaryConvergence { slope: ls_slope(&pts), rows })
}

fn gauss_result(a: f64, b: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    // 5-point Gauss–Legendre.
    const N: [(f64, f64); 5] = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (x, w) in N {
        s += w * f(m + h * x)?;
    }
    Ok(s * h)
}

/// Least-squares slope through `(x, y)` points; NaN for fewer than two.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------- stability

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbKind {
    /// Adds the perturbation size to the density on `[x_lo, x_hi]`.
    Density { x_lo: f64, x_hi: f64 },
    /// Translates every break of the datum.
    Shift,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityParams {
    pub perturb: f64,
    pub perturbation: PerturbKind,
    pub t_samples: Vec<f64>,
    pub phi: Option<PhiWeights>,
}

impl Default for StabilityParams {
    fn default() -> Self {
        StabilityParams { perturb: 1e-3, perturbation: PerturbKind::Density { x_lo: -0.5, x_hi: 0.5 }, t_samples: vec![0.0, 0.25, 0.5, 0.75, 1.0], phi: None }
    }
}

impl StabilityParams {
    fn validate(&self) -> Result<()> {
        if !self.perturb.is_finite() {
            return Err(cfg_err("stability.perturb", "must be finite"));
        }
        if let PerturbKind::Density { x_lo, x_hi } = self.perturbation {
            if !(x_lo < x_hi) {
                return Err(cfg_err("stability.perturbation", "need x_lo < x_hi"));
            }
        }
        if self.t_samples.iter().any(|t| !(*t >= 0.0)) {
            return Err(cfg_err("stability.t_samples", "times must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub t: f64,
    pub l1: f64,
    /// `‖u1(t) − u2(t)‖ / ‖u1(0) − u2(0)‖`; 1 when both vanish.
    pub ratio: f64,
    pub phi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub l1_initial: f64,
    pub rows: Vec<StabilityRow>,
    /// Empirical Lipschitz constant, the largest ratio.
    pub lipschitz: f64,
    pub phi_nonincreasing: Option<bool>,
}

pub fn perturb_datum(d: &InitialDatum, kind: &PerturbKind, size: f64) -> InitialDatum {
    match kind {
        PerturbKind::Shift => InitialDatum { breaks: d.breaks.iter().map(|x| x + size).collect(), states: d.states.clone() },
        PerturbKind::Density { x_lo, x_hi } => overlay(d, &Perturbation { x_lo: *x_lo, x_hi: *x_hi, drho: size, dq: 0.0 }),
    }
}

/// Evolves the configured datum and its perturbation and compares them in L¹
/// (and in Φ when weights are given).
pub fn stability_experiment(cfg: &ScenarioConfig, sp: &StabilityParams) -> Result<StabilityReport> {
    sp.validate()?;
    let problem = cfg.problem()?;
    let d1 = cfg.datum(&problem)?;
    let d2 = perturb_datum(&d1, &sp.perturbation, sp.perturb);
    let (a, b) = rayon::join(|| evolve(&problem, &d1, &cfg.params), || evolve(&problem, &d2, &cfg.params));
    let (a, b) = (a?, b?);
    let l1_initial = l1_window(&d1.to_piecewise(), &d2.to_piecewise());
    let mut rows = Vec::new();
    for &t in &sp.t_samples {
        let t = t.min(cfg.params.t_end);
        let l1 = l1_window(&sample_solution(&a, t)?, &sample_solution(&b, t)?);
        let ratio = if l1_initial > 0.0 {
            l1 / l1_initial
        } else if l1 == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        let phi = match sp.phi {
            Some(w) => Some(phi_distance(&problem.law, &problem.profile, &state_at(&a, t)?, &state_at(&b, t)?, w)?),
            None => None,
        };
        rows.push(StabilityRow { t, l1, ratio, phi });
    }
    let lipschitz = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let phi_nonincreasing = sp.phi.map(|_| {
        let v: Vec<f64> = rows.iter().filter_map(|r| r.phi).collect();
        v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-14)
    });
    Ok(StabilityReport { l1_initial, rows, lipschitz, phi_nonincreasing })
}

// ---------------------------------------------------------------- invariant suite

/// A random scenario in the high-density regime where the Glimm estimates
/// hold: isothermal `c = 1`, `ρ ∈ [8, 12]`, 1–4 junctions with jumps below
/// 0.005 and step data within 0.4% of a common state.
pub fn random_glimm_scenario(seed: u64) -> (Problem, InitialDatum, WftParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nj = rng.gen_range(1..=4);
    let mut xs: Vec<f64> = (0..nj).map(|k| k as f64 * 0.5 + rng.gen_range(0.0..0.2)).collect();
    xs.sort_by(f64::total_cmp);
    let mut a = vec![1.0];
    for _ in 0..nj {
        let l = *a.last().expect("non-empty");
        a.push(l + rng.gen_range(-0.005..0.005));
    }
    let profile = PipeProfile::from_steps(xs, a).expect("valid random profile");
    let rho0 = rng.gen_range(8.0..12.0);
    let v0 = rng.gen_range(-0.3..0.3);
    let nb = rng.gen_range(2..6);
    let mut breaks: Vec<f64> = (0..nb).map(|_| rng.gen_range(-1.0..2.0)).collect();
    breaks.sort_by(f64::total_cmp);
    let states = (0..=nb)
        .map(|_| {
            let r = rho0 * (1.0 + rng.gen_range(-0.004..0.004));
            GasState::new(r, r * (v0 + rng.gen_range(-0.004..0.004)))
        })
        .collect();
    let problem = Problem { law: PressureLaw::isothermal(1.0), claw: CouplingLaw::SmoothSection, profile };
    let params = WftParams { eps: 0.02, t_end: 3.0, upsilon_policy: UpsilonPolicy::Auto, ..WftParams::default() };
    (problem, InitialDatum { breaks, states }, params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub seed: u64,
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

/// A state from the box `ρ ∈ [0.8, 1.25]`, `|v|/c ≤ 0.3`, where every Riemann
/// fan between two samples keeps λ1 < 0 < λ2.
pub fn random_subsonic(rng: &mut impl Rng, law: &PressureLaw) -> GasState {
    let rho = rng.gen_range(0.8..1.25);
    GasState::new(rho, rho * law.c(rho) * rng.gen_range(-0.3..0.3))
}

/// Quick invariant suite: coupling axioms, the junction/Riemann reduction,
/// Υ monotonicity on random admissible runs, and run determinism.
pub fn check(seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let law = PressureLaw::isothermal(1.0);
    let claw = CouplingLaw::SmoothSection;
    let mut items = Vec::new();
    let mut push = |name: &str, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        items.push(CheckItem { name: name.into(), passed, detail });
    };

    let samples: Vec<(f64, f64, f64, GasState)> =
        (0..20).map(|_| (rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2), random_subsonic(&mut rng, &law))).collect();
    push("coupling additivity and reversibility", (|| {
        let mut worst: f64 = 0.0;
        for &(am, a0, ap, u) in &samples {
            let direct = t_map(&claw, &law, am, ap, u)?;
            let two = t_map(&claw, &law, a0, ap, t_map(&claw, &law, am, a0, u)?)?;
            let back = t_map(&claw, &law, ap, am, direct)?;
            worst = worst.max(direct.dist(&two)).max(back.dist(&u));
        }
        Ok((worst < 1e-9, format!("largest residual {worst:e}")))
    })());

    let pairs: Vec<(f64, GasState, GasState)> = (0..100).map(|_| (rng.gen_range(0.8..1.2), random_subsonic(&mut rng, &law), random_subsonic(&mut rng, &law))).collect();
    push("junction solver without a section jump", (|| {
        let mut worst: f64 = 0.0;
        for &(a, ul, ur) in &pairs {
            let j = solve_junction_riemann(&claw, &law, a, ul, a, ur)?;
            let r = solve_riemann(&law, ul, ur)?;
            worst = worst.max((j.sigma1 - r.sigma1).abs()).max((j.sigma2 - r.sigma2).abs());
        }
        Ok((worst < 1e-10, format!("largest size difference {worst:e}")))
    })());

    let base = rng.gen::<u64>();
    push("Υ nonincreasing on random admissible runs", (|| {
        let mut events = 0;
        let mut worst = f64::NEG_INFINITY;
        for s in 0..4 {
            let (problem, datum, params) = random_glimm_scenario(base.wrapping_add(s));
            let tl = evolve(&problem, &datum, &params)?;
            if !tl.regime.admissible {
                return Ok((false, format!("scenario {s} is not admissible: {:?}", tl.regime.notes)));
            }
            events += tl.events.len();
            worst = tl.events.iter().map(|e| e.upsilon_after - e.upsilon_before).fold(worst, f64::max);
        }
        Ok((worst <= 1e-9, format!("{events} events, largest increase {worst:e}")))
    })());

    push("identical runs give identical event logs", (|| {
        let (problem, datum, params) = random_glimm_scenario(base);
        let a = evolve(&problem, &datum, &params)?.event_log();
        let b = evolve(&problem, &datum, &params)?.event_log();
        Ok((a == b, format!("{} bytes", a.len())))
    })());

    CheckReport { seed, items }
}

/// Result of [`execute`], tagged by experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Outcome {
    Run(Box<RunSummary>),
    Amplify(AmplifyReport),
    Converge(ConvergenceReport),
    Stability(StabilityReport),
}

/// Summary file content for the non-run experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emitted<T> {
    pub name: String,
    pub note: Option<String>,
    pub seed: u64,
    pub report: T,
}

fn emit<T: Serialize + Clone, R: Serialize>(cfg: &ScenarioConfig, dir: Option<&Path>, stem: &str, report: &T, rows: &[R]) -> Result<()> {
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
        write_csv(&d.join(format!("{stem}.csv")), rows)?;
        let e = Emitted { name: cfg.name.clone(), note: cfg.note.clone(), seed: cfg.seed, report: report.clone() };
        write_json(&d.join("summary.json"), &e)?;
    }
    Ok(())
}

/// Runs whatever experiment the config selects and writes its outputs.
pub fn execute(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<Outcome> {
    cfg.validate()?;
    let dir = out_dir.map(Path::to_path_buf).or_else(|| cfg.outputs.dir.clone());
    let dir = dir.as_deref();
    match &cfg.experiment {
        ExperimentConfig::Run => Ok(Outcome::Run(Box::new(run_scenario(cfg, dir)?.1))),
        ExperimentConfig::Amplify(p) => {
            let r = amplification_experiment(p)?;
            emit(cfg, dir, "amplify", &r, &r.rows)?;
            Ok(Outcome::Amplify(r))
        }
        ExperimentConfig::Converge(p) => {
            let r = convergence_experiment(cfg, p)?;
            emit(cfg, dir, "convergence", &r, &r.rows)?;
            Ok(Outcome::Converge(r))
        }
        ExperimentConfig::Stability(p) => {
            let r = stability_experiment(cfg, p)?;
            emit(cfg, dir, "stability", &r, &r.rows)?;
            Ok(Outcome::Stability(r))
        }
    }
}

/// Exit status for an error: 2 configuration, 4 invariant violation, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::Invariant(_) => 4,
        _ => 3,
    }
}
