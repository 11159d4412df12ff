//! Experiment configuration: strict TOML with every default filled in.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use stwave::exec::ExecMode;
use stwave::ground_state::{FlowParams, InitKind};
use stwave::stability::{PerturbMode, StabilityOptions};
use stwave::{make_grid, NonlinearitySpec, PotentialSpec, ProblemSpec, RieszKernel, ZeroMode};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    #[default]
    GroundState,
    Evolve,
    Stability,
    Constants,
    Check,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::GroundState => "ground-state",
            Command::Evolve => "evolve",
            Command::Stability => "stability",
            Command::Constants => "constants",
            Command::Check => "check",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelChoice {
    #[default]
    Spectral,
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
    pub gamma: f64,
    pub alpha: f64,
    /// Omitted means half the grid spacing.
    pub reg_eps: Option<f64>,
    /// `power(p=3)`, `hartree(q=2,beta=1)`, `double_power(p1=2,p2=3)`,
    /// `double_hartree(q1=..,q2=..,beta=..)` or `mixed(q=..,beta=..,p=..)`.
    pub nonlinearity: String,
    pub rho: f64,
    pub kernel: KernelChoice,
    /// Spectral kernel only: value at `k = 0`. Omitted means the truncated
    /// kernel mean.
    pub zero_mode: Option<f64>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            extent: 40.0,
            points: 256,
            gamma: 1.0,
            alpha: 0.5,
            reg_eps: None,
            nonlinearity: "power(p=3)".into(),
            rho: 1.0,
            kernel: KernelChoice::default(),
            zero_mode: None,
        }
    }
}

impl ProblemConfig {
    pub fn kernel(&self) -> RieszKernel {
        match self.kernel {
            KernelChoice::Truncated => RieszKernel::Truncated,
            KernelChoice::Spectral => RieszKernel::Spectral {
                zero_mode: self.zero_mode.map(ZeroMode::Value).unwrap_or(ZeroMode::TruncationMatched),
            },
        }
    }

    pub fn build(&self) -> Result<ProblemSpec, CliError> {
        let nl = NonlinearitySpec::from_str(&self.nonlinearity)?;
        let grid = make_grid(self.dim, self.extent, self.points)?;
        let mut pot = PotentialSpec::new(self.gamma, self.alpha, self.dim)?;
        if let Some(eps) = self.reg_eps {
            pot = pot.with_reg_eps(eps)?;
        }
        let prob = ProblemSpec::new(grid, pot, nl, self.rho)?.with_kernel(self.kernel());
        prob.validate()?;
        Ok(prob)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub init: InitKind,
    pub init_seed: u64,
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let f = FlowParams::default();
        Self { init: InitKind::Gaussian, init_seed: 0, dt: f.dt, tol: f.tol, max_iters: f.max_iters }
    }
}

impl SolverConfig {
    pub fn flow_params(&self) -> FlowParams {
        FlowParams { dt: self.dt, tol: self.tol, max_iters: self.max_iters }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolveInit {
    /// The computed minimizer, which also serves as the orbit reference.
    #[default]
    GroundState,
    Gaussian,
    Sech,
    SeededRandom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    pub init: EvolveInit,
    pub t_final: f64,
    pub dt: f64,
    pub monitor_every: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self { init: EvolveInit::GroundState, t_final: 10.0, dt: 1e-3, monitor_every: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub deltas: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub mode: PerturbMode,
    pub renormalize: bool,
    pub monitor_every: usize,
    pub translation_search: bool,
    pub exec: ExecMode,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        let o = StabilityOptions::default();
        Self {
            deltas: vec![1e-3, 1e-2],
            horizon: 50.0,
            dt: 1e-3,
            mode: o.mode,
            renormalize: o.renormalize,
            monitor_every: o.monitor_every,
            translation_search: o.translation_search,
            exec: o.exec,
        }
    }
}

impl StabilityConfig {
    pub fn options(&self) -> StabilityOptions {
        StabilityOptions {
            mode: self.mode,
            renormalize: self.renormalize,
            monitor_every: self.monitor_every,
            translation_search: self.translation_search,
            exec: self.exec,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub dim: usize,
    /// Power exponents `p`, or Choquard exponents `q` when `beta` is set.
    pub exponents: Vec<f64>,
    pub beta: Option<f64>,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self { dim: 1, exponents: vec![3.0, 5.0], beta: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub output: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub workers: Option<usize>,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub evolve: EvolveConfig,
    pub stability: StabilityConfig,
    pub constants: ConstantsConfig,
}

impl ExperimentConfig {
    /// Every exponent is checked before anything is computed.
    pub fn validate(&self) -> Result<(), CliError> {
        match self.command {
            Command::Constants => {
                let c = &self.constants;
                if c.exponents.is_empty() {
                    return Err(CliError::Config("constants.exponents is empty".into()));
                }
                for &e in &c.exponents {
                    let nl = match c.beta {
                        Some(beta) => NonlinearitySpec::Hartree { q: e, beta },
                        None => NonlinearitySpec::Power { p: e },
                    };
                    nl.validate(c.dim)?;
                }
            }
            _ => {
                self.problem.build()?;
            }
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be at least 1".into()));
        }
        let s = &self.stability;
        if s.deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(CliError::Config(format!("stability.deltas must be finite and >= 0, got {:?}", s.deltas)));
        }
        for (name, v) in [("evolve.dt", self.evolve.dt), ("evolve.t_final", self.evolve.t_final), ("stability.dt", s.dt), ("stability.horizon", s.horizon)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.evolve.monitor_every == 0 || s.monitor_every == 0 {
            return Err(CliError::Config("monitor_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Seeds in force: the configured list, or `[0]`.
    pub fn seeds_or_default(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![0]
        } else {
            self.seeds.clone()
        }
    }
}

/// Parses and validates a configuration; unknown keys are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// `"1,2, 3"` to `[1, 2, 3]`.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Config(format!("seed '{s}' is not a non-negative integer"))))
        .collect()
}
