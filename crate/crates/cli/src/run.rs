//! Command execution and the output directory layout.
//!
//! Every run writes `manifest.json` and `config.toml` (the resolved
//! configuration) next to its command-specific outputs. The manifest is
//! written even when the command fails, with the failing status and any
//! incomplete outputs flagged.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;
use serde_json::json;
use stwave::constants::{gn_constant, hartree_gn_constant};
use stwave::energy::classify;
use stwave::exec::{map_jobs, parallel_available, ExecMode};
use stwave::ground_state::{check_admissible, init_guess, run_flow, GroundStateResult, InitKind};
use stwave::potential::BOUND_TAU;
use stwave::propagator::{evolve, Termination};
use stwave::stability::stability_experiment;
use stwave::thresholds::{check_theorem_conditions, critical_mass_margin, ReferenceKind, ThresholdTable};
use stwave::{ComplexField, Error, ProblemSpec, RieszKernel, RieszSpec};

use crate::config::{Command, EvolveInit, ExperimentConfig};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub kind: &'static str,
    pub partial: bool,
}

/// Numerical conventions in force for the run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Conventions {
    pub riesz_kernel: String,
    /// Multiplier value at `k = 0` on the problem grid.
    pub zero_mode_value: Option<f64>,
    /// Potential regularization length on the problem grid.
    pub reg_eps: Option<f64>,
    pub bound_tau: f64,
    pub exec: ExecMode,
    pub parallel_available: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
    pub seeds: Vec<u64>,
    pub workers: Option<usize>,
    pub conventions: Conventions,
    pub outputs: Vec<OutputRecord>,
    pub partial: bool,
    pub config: ExperimentConfig,
}

struct Outputs {
    dir: PathBuf,
    records: Vec<OutputRecord>,
}

impl Outputs {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, kind: &'static str, body: &str, partial: bool) -> Result<(), CliError> {
        let path = self.path(name);
        fs::write(&path, body).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
        self.records.push(OutputRecord { path: name.into(), kind, partial });
        Ok(())
    }

    fn field(&mut self, name: &str, u: &ComplexField, partial: bool) -> Result<(), CliError> {
        let path = self.path(name);
        let file = fs::File::create(&path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))?;
        u.write_binary(BufWriter::new(file))?;
        self.records.push(OutputRecord { path: name.into(), kind: "field", partial });
        Ok(())
    }

    fn csv<F>(&mut self, name: &str, partial: bool, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> stwave::Result<()>,
    {
        let mut buf = Vec::new();
        write(&mut buf)?;
        let body = String::from_utf8(buf).expect("CSV writers emit UTF-8");
        self.text(name, "csv", &body, partial)
    }
}

fn conventions(cfg: &ExperimentConfig) -> Conventions {
    let prob = cfg.problem.build().ok();
    let zero_mode_value = prob.as_ref().and_then(|p| {
        let beta = classify(&p.nonlinearity, p.grid.dim()).iter().find_map(|c| match c.term {
            stwave::energy::Term::Hartree { beta, .. } => Some(beta),
            _ => None,
        })?;
        match p.kernel {
            RieszKernel::Spectral { .. } => Some(RieszSpec { beta, kernel: p.kernel }.zero_mode_value(&p.grid)),
            RieszKernel::Truncated => None,
        }
    });
    Conventions {
        riesz_kernel: cfg.problem.kernel().to_string(),
        zero_mode_value,
        reg_eps: prob.as_ref().map(|p| p.potential.effective_reg_eps(&p.grid)),
        bound_tau: BOUND_TAU,
        exec: cfg.stability.exec,
        parallel_available: parallel_available(),
    }
}

/// Runs `cfg` into `out`, always leaving a manifest behind.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Manifest, CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let mut outputs = Outputs { dir: out.to_path_buf(), records: Vec::new() };
    outputs.text(CONFIG_ECHO_FILE, "config", &cfg.to_toml()?, false)?;
    info!("running {} into {}", cfg.command, out.display());
    let result = match cfg.command {
        Command::GroundState => ground_state_command(cfg, &mut outputs),
        Command::Evolve => evolve_command(cfg, &mut outputs),
        Command::Stability => stability_command(cfg, &mut outputs),
        Command::Constants => constants_command(cfg, &mut outputs),
        Command::Check => check_command(cfg, &mut outputs),
    };
    let (status, exit_code, error) = match &result {
        Ok(()) => ("ok".to_string(), 0, None),
        Err(e) => (e.status().to_string(), e.exit_code(), Some(e.to_string())),
    };
    let partial = result.is_err() || outputs.records.iter().any(|r| r.partial);
    let manifest = Manifest {
        tool: "stwave",
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.to_string(),
        status,
        exit_code,
        error,
        seeds: cfg.seeds_or_default(),
        workers: cfg.workers,
        conventions: conventions(cfg),
        outputs: outputs.records,
        partial,
        config: cfg.clone(),
    };
    let body = serde_json::to_string_pretty(&manifest).map_err(stwave::Error::from)?;
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, body + "\n").map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    result.map(|()| manifest)
}

/// Refusal checks, then the flow. A non-converged iterate is still written,
/// flagged partial.
fn solve_ground_state(cfg: &ExperimentConfig, prob: &ProblemSpec, outputs: &mut Outputs) -> Result<GroundStateResult, CliError> {
    let mut table = ThresholdTable::new();
    check_admissible(prob, &mut table)?;
    if !table.entries().is_empty() {
        outputs.csv("thresholds.csv", false, |w| table.write_csv(w))?;
    }
    let u0 = init_guess(prob, cfg.solver.init, cfg.solver.init_seed)?;
    let gs = run_flow(prob, &u0, &cfg.solver.flow_params())?;
    let partial = !gs.converged;
    outputs.field("ground_state.bin", &gs.field, partial)?;
    outputs.text("ground_state.json", "json", &(gs.to_json()? + "\n"), partial)?;
    let mut history = String::from("iteration,energy\n");
    for (i, e) in gs.energy_history.iter().enumerate() {
        history.push_str(&format!("{i},{e:e}\n"));
    }
    outputs.text("energy_history.csv", "csv", &history, partial)?;
    if partial {
        return Err(Error::NonConvergence { iterations: gs.iterations, residual: gs.residual }.into());
    }
    Ok(gs)
}

fn ground_state_command(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Result<(), CliError> {
    let prob = cfg.problem.build()?;
    solve_ground_state(cfg, &prob, outputs).map(|_| ())
}

fn evolve_command(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Result<(), CliError> {
    let prob = cfg.problem.build()?;
    let e = &cfg.evolve;
    let seed = cfg.seeds_or_default()[0];
    let (u0, reference) = match e.init {
        EvolveInit::GroundState => {
            let gs = solve_ground_state(cfg, &prob, outputs)?;
            (gs.field.clone(), Some(gs.field))
        }
        EvolveInit::Gaussian => (init_guess(&prob, InitKind::Gaussian, seed)?, None),
        EvolveInit::Sech => (init_guess(&prob, InitKind::Sech, seed)?, None),
        EvolveInit::SeededRandom => (init_guess(&prob, InitKind::SeededRandom, seed)?, None),
    };
    let rec = evolve(&u0, &prob, e.t_final, e.dt, e.monitor_every, reference.as_ref())?;
    let stopped = rec.terminated == Termination::BlowupFlagged;
    outputs.csv("trajectory.csv", stopped, |w| rec.write_csv(w))?;
    outputs.field("final_field.bin", &rec.final_field, stopped)?;
    let summary = json!({
        "terminated": rec.terminated,
        "steps": rec.steps,
        "dt": rec.dt,
        "t_reached": rec.times.last(),
        "max_mass_drift": rec.max_mass_drift(),
        "max_energy_drift": rec.max_energy_drift(),
        "sup_orbit_distance": rec.orbital_dist_series.as_ref().map(|d| d.iter().cloned().fold(0.0, f64::max)),
    });
    let body = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    outputs.text("trajectory.json", "json", &(body + "\n"), stopped)
}

fn stability_command(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Result<(), CliError> {
    let prob = cfg.problem.build()?;
    let gs = solve_ground_state(cfg, &prob, outputs)?;
    let s = &cfg.stability;
    let report = stability_experiment(&prob, &gs, &s.deltas, s.horizon, s.dt, &cfg.seeds_or_default(), &s.options())?;
    outputs.text("stability.json", "json", &(report.to_json()? + "\n"), false)?;
    outputs.csv("stability.csv", false, |w| report.write_csv(w))
}

fn constants_command(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Result<(), CliError> {
    let c = &cfg.constants;
    let kind = if c.beta.is_some() { ReferenceKind::W } else { ReferenceKind::Q };
    let solved = map_jobs(cfg.stability.exec, &c.exponents, |&e| {
        let mut table = ThresholdTable::new();
        let est = table.ensure(kind, c.dim, e, c.beta)?;
        Ok::<_, stwave::Error>((table, est))
    });
    let mut table = ThresholdTable::new();
    let mut rows = String::from("kind,N,exponent,beta,mass_sq,error_bar,sharp_constant\n");
    for (&e, res) in c.exponents.iter().zip(solved) {
        let (part, est) = res?;
        for entry in part.entries() {
            table.insert(entry.clone());
        }
        let norm = est.mass_sq.sqrt();
        let sharp = match c.beta {
            Some(beta) => hartree_gn_constant(c.dim, beta, e, norm)?,
            None => gn_constant(c.dim, e - 1.0, norm)?,
        };
        let beta = c.beta.map(|b| b.to_string()).unwrap_or_default();
        rows.push_str(&format!("{kind},{},{e},{beta},{:.12},{:e},{:.12}\n", c.dim, est.mass_sq, est.error_bar, sharp));
    }
    outputs.csv("thresholds.csv", false, |w| table.write_csv(w))?;
    outputs.text("constants.csv", "csv", &rows, false)
}

fn check_command(cfg: &ExperimentConfig, outputs: &mut Outputs) -> Result<(), CliError> {
    let prob = cfg.problem.build()?;
    let mut table = ThresholdTable::new();
    table.ensure_for(&prob)?;
    let verdicts = check_theorem_conditions(&prob, &table)?;
    let margin = critical_mass_margin(&prob, &table)?;
    let verdict = json!({
        "nonlinearity": prob.nonlinearity.to_string(),
        "dim": prob.grid.dim(),
        "rho": prob.rho,
        "gamma": prob.potential.gamma,
        "alpha": prob.potential.alpha,
        "classification": classify(&prob.nonlinearity, prob.grid.dim()),
        "critical_mass_margin": margin,
        "in_hypothesis": verdicts.iter().any(|v| v.applies),
        "verdicts": verdicts,
    });
    if !table.entries().is_empty() {
        outputs.csv("thresholds.csv", false, |w| table.write_csv(w))?;
    }
    let body = serde_json::to_string_pretty(&verdict).map_err(Error::from)?;
    outputs.text("verdict.json", "json", &(body + "\n"), false)
}
