use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pipewft::harness::{
    check, execute, exit_code, AmplifyParams, ConvergeParams, ExperimentConfig, PerturbKind, ScenarioConfig, StabilityParams,
};
use pipewft::{Error, PressureLaw, Result};

#[derive(Parser)]
#[command(name = "pipewft", version, about = "Front tracking for gas flow in pipes with varying section")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// RNG seed for randomized data and suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving tables and the JSON summary.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment selected in a scenario file.
    Run {
        config: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        max_events: Option<usize>,
    },
    /// Repeated up-down section pairs crossed by a 2-wave.
    Amplify {
        #[arg(long)]
        vbar_over_c: f64,
        #[arg(long)]
        da_over_a: f64,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, default_value_t = -1e-3, allow_hyphen_values = true)]
        sigma: f64,
        /// Isothermal sound speed.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
    },
    /// Staircase convergence for a scenario with a smooth or ramp profile.
    Converge {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        t_samples: Option<Vec<f64>>,
    },
    /// L¹ stability against a perturbed datum.
    Stability {
        config: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        perturb: f64,
        /// Translate the datum instead of adding density.
        #[arg(long)]
        shift: bool,
    },
    /// Invariant suite.
    Check,
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print<T: serde::Serialize>(v: &T) {
    // A closed pipe downstream is not an error of the run.
    let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(v).expect("reports serialize"));
}

fn main_inner(cli: Cli) -> Result<ExitCode> {
    let out = cli.out_dir.as_deref();
    match cli.cmd {
        Cmd::Run { config, eps, t_end, max_events } => {
            let mut cfg = load(&config, cli.seed)?;
            if let Some(e) = eps {
                cfg.params.eps = e;
            }
            if let Some(t) = t_end {
                cfg.params.t_end = t;
            }
            if let Some(m) = max_events {
                cfg.params.max_events = m;
            }
            print(&execute(&cfg, out)?);
        }
        Cmd::Amplify { vbar_over_c, da_over_a, repeats, sigma, c } => {
            let p = AmplifyParams { law: PressureLaw::isothermal(c), vbar_over_c, da_over_a, repeats, sigma, ..AmplifyParams::default() };
            let cfg = ScenarioConfig {
                name: "amplify".into(),
                seed: cli.seed.unwrap_or(0),
                experiment: ExperimentConfig::Amplify(p),
                ..ScenarioConfig::from_json(r#"{"law": {"kind": "isothermal", "c": 1.0}}"#)?
            };
            print(&execute(&cfg, out)?);
        }
        Cmd::Converge { profile, n_list, t_samples } => {
            let mut cfg = load(&profile, cli.seed)?;
            let mut p = match cfg.experiment {
                ExperimentConfig::Converge(ref p) => p.clone(),
                _ => ConvergeParams::default(),
            };
            if let Some(n) = n_list {
                p.n_list = n;
            }
            if let Some(t) = t_samples {
                p.t_samples = t;
            }
            cfg.experiment = ExperimentConfig::Converge(p);
            print(&execute(&cfg, out)?);
        }
        Cmd::Stability { config, perturb, shift } => {
            let mut cfg = load(&config, cli.seed)?;
            let mut p = match cfg.experiment {
                ExperimentConfig::Stability(ref p) => p.clone(),
                _ => StabilityParams::default(),
            };
            p.perturb = perturb;
            if shift {
                p.perturbation = PerturbKind::Shift;
            }
            cfg.experiment = ExperimentConfig::Stability(p);
            print(&execute(&cfg, out)?);
        }
        Cmd::Check => {
            let r = check(cli.seed.unwrap_or(0));
            if let Some(d) = out {
                std::fs::create_dir_all(d).map_err(Error::from)?;
                std::fs::write(d.join("check.json"), serde_json::to_string_pretty(&r).expect("serializes")).map_err(Error::from)?;
            }
            for i in &r.items {
                println!("{} {}: {}", if i.passed { "PASS" } else { "FAIL" }, i.name, i.detail);
            }
            if !r.passed() {
                return Ok(ExitCode::from(4));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
