//! Constrained minimizers of the energy on the mass sphere
//! `{‖u‖₂² = ρ}` by normalized gradient flow, and the dilation scan.

use log::{debug, warn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::{evaluate, evaluate_full, Evaluation, FullEvaluation, ProblemSpec};
use crate::error::{Error, Result};
use crate::field::{ComplexField, DILATION_LOSS_WARN};
use crate::grid::GridInfo;
use crate::sampling::{random_bump_field_with, rng_from_seed, with_mass, BumpFieldOptions};
use crate::thresholds::{critical_mass_margin, ThresholdTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Gaussian,
    Sech,
    SeededRandom,
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(InitKind::Gaussian),
            "sech" => Ok(InitKind::Sech),
            "seeded_random" => Ok(InitKind::SeededRandom),
            _ => Err(Error::Parse(format!("unknown initial guess '{s}'"))),
        }
    }
}

/// Initial field with mass exactly `prob.rho`. `seed` only matters for
/// `SeededRandom`.
pub fn init_guess(prob: &ProblemSpec, kind: InitKind, seed: u64) -> Result<ComplexField> {
    let grid = &prob.grid;
    let dim = grid.dim();
    let u = match kind {
        InitKind::Gaussian => ComplexField::from_real_fn(grid, |x| (-x[..dim].iter().map(|v| v * v).sum::<f64>()).exp()),
        InitKind::Sech => ComplexField::from_real_fn(grid, |x| x[..dim].iter().map(|v| 1.0 / v.cosh()).product()),
        InitKind::SeededRandom => {
            let opts = BumpFieldOptions { center_fraction: 0.05, ..Default::default() };
            random_bump_field_with(grid, &mut rng_from_seed(seed), &opts)
        }
    };
    Ok(with_mass(&u, prob.rho))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub dt: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self { dt: 0.1, tol: 1e-8, max_iters: 50_000 }
    }
}

/// Step-size halvings allowed on an energy increase.
pub const MAX_HALVINGS: u32 = 20;

/// Number of trailing iterations over which the frequency drift is measured.
pub const OMEGA_WINDOW: usize = 10;

#[derive(Clone, Debug, Serialize)]
pub struct GroundStateResult {
    #[serde(skip)]
    pub field: ComplexField,
    pub a_rho: f64,
    pub omega: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Spread of the frequency over the last iterations.
    pub omega_drift: f64,
    /// Time step in force at exit.
    pub final_dt: f64,
    pub grid: GridInfo,
    #[serde(skip)]
    pub energy_history: Vec<f64>,
}

impl GroundStateResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Normalized gradient flow with refusal checks.
///
/// Refuses supercritical nonlinearities, and critical ones whose mass
/// condition fails. Thresholds missing from `thresholds` are computed.
/// Returns [`Error::NonConvergence`] when `max_iters` is exhausted; use
/// [`run_flow`] to keep the last iterate in that case.
pub fn normalized_gradient_flow(prob: &ProblemSpec, u0: &ComplexField, params: &FlowParams) -> Result<GroundStateResult> {
    normalized_gradient_flow_with(prob, u0, params, &mut ThresholdTable::new())
}

pub fn normalized_gradient_flow_with(
    prob: &ProblemSpec,
    u0: &ComplexField,
    params: &FlowParams,
    thresholds: &mut ThresholdTable,
) -> Result<GroundStateResult> {
    check_admissible(prob, thresholds)?;
    let result = run_flow(prob, u0, params)?;
    if !result.converged {
        return Err(Error::NonConvergence { iterations: result.iterations, residual: result.residual });
    }
    Ok(result)
}

/// Refusal gate shared by the solver and the command line.
pub fn check_admissible(prob: &ProblemSpec, thresholds: &mut ThresholdTable) -> Result<()> {
    prob.validate()?;
    // raises RefusedSupercritical before any threshold work
    critical_mass_margin(prob, &ThresholdTable::new()).or_else(|e| match e {
        Error::MissingThreshold(_) => Ok(None),
        other => Err(other),
    })?;
    thresholds.ensure_for(prob)?;
    if let Some(margin) = critical_mass_margin(prob, thresholds)? {
        if !(margin > 0.0) {
            return Err(Error::RefusedAboveThreshold { rho: prob.rho, margin });
        }
    }
    Ok(())
}

/// The flow itself, without refusal checks; the result carries
/// `converged = false` when `max_iters` is reached.
///
/// Each step solves `(1 − dt Δ) u* = u + dt((V + g)u − ω u)` spectrally,
/// with `f(u) = g u` and `ω` the current Rayleigh frequency, then rescales
/// `u*` to mass `ρ`. The `ω u` term makes the fixed points exactly the
/// solutions of the stationary equation. A step that raises the energy is
/// retried with half the time step.
pub fn run_flow(prob: &ProblemSpec, u0: &ComplexField, params: &FlowParams) -> Result<GroundStateResult> {
    prob.validate()?;
    u0.ensure_grid(&prob.grid)?;
    if !(params.dt > 0.0 && params.tol > 0.0) {
        return Err(Error::InvalidParameter(format!("flow needs dt > 0 and tol > 0, got {params:?}")));
    }
    if !u0.is_finite() {
        return Err(Error::NonFinite("initial field".into()));
    }
    let grid = &prob.grid;
    let rho = prob.rho;
    let mut u = with_mass(u0, rho);
    let mut current = evaluate_full(&u, prob)?;
    let mut dt = params.dt;
    let mut halvings = 0;
    let mut energies = vec![current.eval.energy];
    let mut omegas = vec![current.eval.omega];
    let mut iterations = 0;
    while current.eval.residual > params.tol && iterations < params.max_iters {
        let (next, next_eval) = loop {
            let trial = flow_step(grid, &u, &current, dt, rho)?;
            let trial_eval = evaluate_full(&trial, prob)?;
            let e0 = current.eval.energy;
            let rise = trial_eval.eval.energy - e0;
            if rise > 1e-13 * e0.abs().max(1.0) && halvings < MAX_HALVINGS {
                dt *= 0.5;
                halvings += 1;
                debug!("energy rose by {rise:e}; dt -> {dt:e}");
                continue;
            }
            break (trial, trial_eval);
        };
        u = next;
        current = next_eval;
        iterations += 1;
        energies.push(current.eval.energy);
        omegas.push(current.eval.omega);
    }
    let converged = current.eval.residual <= params.tol;
    if u.max_abs() < 1e-8 {
        warn!("minimizer amplitude {:e} is below 1e-8 (degenerate mass {rho})", u.max_abs());
    }
    let window = &omegas[omegas.len().saturating_sub(OMEGA_WINDOW)..];
    let omega_drift = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - window.iter().cloned().fold(f64::INFINITY, f64::min);
    debug!(
        "flow: {iterations} iterations, residual {:e}, E {}, omega {}",
        current.eval.residual, current.eval.energy, current.eval.omega
    );
    Ok(GroundStateResult {
        a_rho: current.eval.energy,
        omega: current.eval.omega,
        residual: current.eval.residual,
        iterations,
        converged,
        omega_drift,
        final_dt: dt,
        grid: grid.info(),
        energy_history: energies,
        field: u,
    })
}

fn flow_step(grid: &crate::grid::Grid, u: &ComplexField, cur: &FullEvaluation, dt: f64, rho: f64) -> Result<ComplexField> {
    let omega = cur.eval.omega;
    let mut w: Vec<Complex64> = u
        .values()
        .iter()
        .zip(cur.potential.iter())
        .zip(&cur.coefficient)
        .map(|((z, v), g)| z * (1.0 + dt * (v + g - omega)))
        .collect();
    grid.forward(&mut w);
    for (z, k2) in w.iter_mut().zip(grid.k_squared()) {
        *z /= 1.0 + dt * k2;
    }
    grid.inverse(&mut w);
    let next = ComplexField::new(grid.clone(), w)?;
    if !next.is_finite() {
        return Err(Error::NonFinite("gradient-flow iterate".into()));
    }
    Ok(with_mass(&next, rho))
}

/// One row of a dilation scan: measured terms of `E(λ^{N/2}u(λ·))` next to
/// the values predicted from the `λ = 1` row by the scaling exponents.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DilationRow {
    pub lambda: f64,
    pub energy: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub nonlinear: f64,
    pub nonlinear_terms: Vec<f64>,
    pub predicted_energy: f64,
    pub predicted_kinetic: f64,
    pub predicted_potential: f64,
    pub predicted_nonlinear_terms: Vec<f64>,
    /// Weight lost to the grid by the dilation.
    pub dilation_loss: f64,
    pub aliased: bool,
}

/// Evaluates the energy terms along `λ ↦ λ^{N/2}u(λx)`. Kinetic energy
/// scales as `λ²`, the potential term as `λ^α`, a power term as
/// `λ^{(p−1)N/2}` and a Choquard term as `λ^{Nq−N−β}`. The potential law is
/// exact only away from the regularized origin.
pub fn dilation_energy_scan(u: &ComplexField, prob: &ProblemSpec, lambdas: &[f64]) -> Result<Vec<DilationRow>> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::InvalidParameter(format!("dilation factor {l} must be positive")));
    }
    let dim = prob.grid.dim();
    let base = evaluate(u, prob)?;
    let terms = prob.nonlinearity.terms();
    lambdas
        .iter()
        .map(|&lambda| {
            let v = u.dilate(lambda);
            let loss = u.dilation_loss(lambda);
            let e: Evaluation = evaluate(&v, prob)?;
            let predicted_kinetic = lambda.powi(2) * base.kinetic;
            let predicted_potential = lambda.powf(prob.potential.alpha) * base.potential;
            let predicted_nonlinear_terms: Vec<f64> = terms
                .iter()
                .zip(&base.nonlinear_terms)
                .map(|(t, b)| lambda.powf(t.scaling_exponent(dim)) * b)
                .collect();
            let predicted_energy =
                0.5 * predicted_kinetic - 0.5 * predicted_potential - predicted_nonlinear_terms.iter().sum::<f64>();
            Ok(DilationRow {
                lambda,
                energy: e.energy,
                kinetic: e.kinetic,
                potential: e.potential,
                nonlinear: e.nonlinear,
                nonlinear_terms: e.nonlinear_terms,
                predicted_energy,
                predicted_kinetic,
                predicted_potential,
                predicted_nonlinear_terms,
                dilation_loss: loss,
                aliased: loss > DILATION_LOSS_WARN,
            })
        })
        .collect()
}
