//! Orbit distances, perturbations of ground states, and the orbital
//! stability experiment.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::{energy_gradient, ProblemSpec};
use crate::error::{Error, Result};
use crate::exec::{map_jobs, ExecMode};
use crate::field::{h1_norm_sq_from_spectrum, ComplexField};
use crate::ground_state::GroundStateResult;
use crate::propagator::{Stepper, Termination, BLOWUP_FACTOR};
use crate::sampling::{random_bump_field_with, rng_from_seed, BumpFieldOptions};
use crate::thresholds::{check_theorem_conditions, ThresholdTable};

/// `min_θ ‖u − e^{iθ}v‖_{H¹}`.
///
/// The optimal phase is `arg⟨u, v⟩_{H¹}`; the norm of the difference is then
/// evaluated directly, which avoids the cancellation in
/// `‖u‖² + ‖v‖² − 2|⟨u,v⟩|`.
pub fn orbit_distance(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    u.ensure_same_grid(v)?;
    let su = u.spectrum();
    let sv = v.spectrum();
    Ok(phase_distance(u, &su, &sv))
}

fn phase_distance(u: &ComplexField, su: &[Complex64], sv: &[Complex64]) -> f64 {
    let grid = u.grid();
    let k2 = grid.k_squared();
    let c: Complex64 = su.iter().zip(sv).zip(k2).map(|((a, b), k2)| a * b.conj() * (1.0 + k2)).sum();
    let rot = if c.norm() > 0.0 { c / c.norm() } else { Complex64::new(1.0, 0.0) };
    let diff: Vec<Complex64> = su.iter().zip(sv).map(|(a, b)| a - rot * b).collect();
    h1_norm_sq_from_spectrum(grid, &diff).max(0.0).sqrt()
}

/// `min_{θ,s} ‖u − e^{iθ}v(· − s)‖_{H¹}` over phases and translations, and
/// the optimal shift. Coarse search over grid shifts by one FFT, then
/// coordinate-wise golden-section refinement within one cell.
pub fn orbit_distance_with_translation(u: &ComplexField, v: &ComplexField) -> Result<(f64, [f64; 3])> {
    u.ensure_same_grid(v)?;
    let grid = u.grid();
    let dim = grid.dim();
    let su = u.spectrum();
    let sv = v.spectrum();
    let weights: Vec<Complex64> =
        su.iter().zip(&sv).zip(grid.k_squared()).map(|((a, b), k2)| a * b.conj() * (1.0 + k2)).collect();
    let mut corr = weights.clone();
    grid.inverse(&mut corr);
    let best = corr
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let idx = grid.unravel(best);
    let mut shift = [0.0; 3];
    for a in 0..dim {
        let m = grid.points(a);
        let j = if idx[a] < m / 2 { idx[a] as f64 } else { idx[a] as f64 - m as f64 };
        shift[a] = j * grid.spacing(a);
    }
    let wavevectors: Vec<[f64; 3]> = (0..grid.len()).map(|i| grid.wavevector(i)).collect();
    let score = |s: &[f64; 3]| -> f64 {
        weights
            .iter()
            .zip(&wavevectors)
            .map(|(w, k)| w * Complex64::from_polar(1.0, k[0] * s[0] + k[1] * s[1] + k[2] * s[2]))
            .sum::<Complex64>()
            .norm()
    };
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    for _sweep in 0..2 {
        for a in 0..dim {
            let h = grid.spacing(a);
            let (mut lo, mut hi) = (shift[a] - h, shift[a] + h);
            let at = |x: f64, shift: &[f64; 3]| {
                let mut s = *shift;
                s[a] = x;
                score(&s)
            };
            let mut x1 = hi - golden * (hi - lo);
            let mut x2 = lo + golden * (hi - lo);
            let mut f1 = at(x1, &shift);
            let mut f2 = at(x2, &shift);
            while hi - lo > 1e-10 * h {
                if f1 > f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - golden * (hi - lo);
                    f1 = at(x1, &shift);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + golden * (hi - lo);
                    f2 = at(x2, &shift);
                }
            }
            shift[a] = 0.5 * (lo + hi);
        }
    }
    // spectrum of v(· − s)
    let shifted: Vec<Complex64> = sv
        .iter()
        .zip(&wavevectors)
        .map(|(b, k)| b * Complex64::from_polar(1.0, -(k[0] * shift[0] + k[1] * shift[1] + k[2] * shift[2])))
        .collect();
    let d = phase_distance(u, &su, &shifted);
    // never worse than the unshifted answer
    let d0 = phase_distance(u, &su, &sv);
    if d0 <= d {
        return Ok((d0, [0.0; 3]));
    }
    Ok((d, shift))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    /// Seeded localized random field.
    Random,
    /// The `L²` gradient of the energy at the ground state.
    GradientDirection,
    /// `∂_{x₁}` of the ground state (infinitesimal translation).
    Translate,
}

impl std::str::FromStr for PerturbMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(PerturbMode::Random),
            "gradient_direction" => Ok(PerturbMode::GradientDirection),
            "translate" => Ok(PerturbMode::Translate),
            _ => Err(Error::Parse(format!("unknown perturbation mode '{s}'"))),
        }
    }
}

/// `gs + δ·w` with `‖w‖_{H¹} = 1`, optionally rescaled back to the mass
/// of `gs`.
pub fn perturb(
    gs: &ComplexField,
    prob: &ProblemSpec,
    delta: f64,
    mode: PerturbMode,
    seed: u64,
    renormalize: bool,
) -> Result<ComplexField> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("perturbation size {delta} must be >= 0")));
    }
    gs.ensure_grid(&prob.grid)?;
    if delta == 0.0 {
        return Ok(gs.clone());
    }
    let w = match mode {
        PerturbMode::Random => {
            let opts = BumpFieldOptions { center_fraction: 0.05, ..Default::default() };
            random_bump_field_with(gs.grid(), &mut rng_from_seed(seed), &opts)
        }
        PerturbMode::GradientDirection => energy_gradient(gs, prob)?,
        PerturbMode::Translate => gs.partial_derivative(0),
    };
    let norm = w.h1_norm_sq().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroField);
    }
    let out = gs.add_scaled(Complex64::new(delta / norm, 0.0), &w)?;
    if renormalize {
        let m = out.l2_norm_sq();
        return Ok(out.scaled((gs.l2_norm_sq() / m).sqrt()));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityOptions {
    pub mode: PerturbMode,
    pub renormalize: bool,
    pub monitor_every: usize,
    /// Also minimize over translations (meaningful without a potential).
    pub translation_search: bool,
    pub exec: ExecMode,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        Self {
            mode: PerturbMode::Random,
            renormalize: true,
            monitor_every: 10,
            translation_search: false,
            exec: ExecMode::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityCell {
    pub delta: f64,
    pub seed: u64,
    pub sup_dist: f64,
    pub initial_dist: f64,
    pub terminated: Termination,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub deltas: Vec<f64>,
    /// Per `δ`, the maximum over seeds of the supremum over recorded times.
    pub sup_dist: Vec<f64>,
    pub initial_dist: Vec<f64>,
    pub horizon_t: f64,
    pub dt: f64,
    pub seeds: Vec<u64>,
    pub in_hypothesis: bool,
    pub cells: Vec<StabilityCell>,
    pub verdict_notes: String,
}

impl StabilityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "delta,seed,sup_dist,initial_dist,terminated")?;
        for c in &self.cells {
            let term = match c.terminated {
                Termination::Completed => "completed",
                Termination::BlowupFlagged => "blowup_flagged",
            };
            writeln!(w, "{:e},{},{:e},{:e},{}", c.delta, c.seed, c.sup_dist, c.initial_dist, term)?;
        }
        Ok(())
    }
}

/// Perturbs the ground state by each `δ` and seed, evolves to `horizon`, and
/// records the supremum of the orbit distance to the ground state over the
/// monitored times (including `t = 0`).
///
/// Runs even when no stability case applies, labeling the report as out of
/// hypothesis. Blow-up is recorded in the cells and notes, not raised.
pub fn stability_experiment(
    prob: &ProblemSpec,
    gs: &GroundStateResult,
    deltas: &[f64],
    horizon: f64,
    dt: f64,
    seeds: &[u64],
    opts: &StabilityOptions,
) -> Result<StabilityReport> {
    if !gs.converged {
        return Err(Error::InvalidParameter("stability experiment needs a converged ground state".into()));
    }
    if deltas.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidParameter("need at least one delta and one seed".into()));
    }
    if !(horizon > 0.0 && dt > 0.0) || opts.monitor_every == 0 {
        return Err(Error::InvalidParameter(format!("need T > 0, dt > 0, monitor_every >= 1 (T={horizon}, dt={dt})")));
    }
    let mut table = ThresholdTable::new();
    table.ensure_for(prob)?;
    let verdicts = check_theorem_conditions(prob, &table)?;
    let in_hypothesis = verdicts.iter().any(|v| v.applies);

    let jobs: Vec<(f64, u64)> = deltas.iter().flat_map(|&d| seeds.iter().map(move |&s| (d, s))).collect();
    let stepper = Stepper::new(prob, dt)?;
    let steps = (horizon / dt).round().max(1.0) as usize;
    let reference = &gs.field;
    let distance = |u: &ComplexField| -> Result<f64> {
        if opts.translation_search {
            Ok(orbit_distance_with_translation(u, reference)?.0)
        } else {
            orbit_distance(u, reference)
        }
    };
    let results = map_jobs(opts.exec, &jobs, |&(delta, seed)| -> Result<StabilityCell> {
        let mut u = perturb(reference, prob, delta, opts.mode, seed, opts.renormalize)?;
        let initial_dist = distance(&u)?;
        let grad0 = u.gradient_norm_sq().sqrt();
        let mut sup_dist = initial_dist;
        let mut terminated = Termination::Completed;
        for n in 1..=steps {
            stepper.step(&mut u)?;
            if n % opts.monitor_every == 0 || n == steps {
                if !u.is_finite() || u.gradient_norm_sq().sqrt() > BLOWUP_FACTOR * grad0 {
                    terminated = Termination::BlowupFlagged;
                    break;
                }
                sup_dist = sup_dist.max(distance(&u)?);
            }
        }
        Ok(StabilityCell { delta, seed, sup_dist, initial_dist, terminated })
    });
    let cells: Vec<StabilityCell> = results.into_iter().collect::<Result<_>>()?;

    let mut sup = Vec::with_capacity(deltas.len());
    let mut init = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let of_delta = cells.iter().filter(|c| c.delta == d);
        sup.push(of_delta.clone().map(|c| c.sup_dist).fold(0.0, f64::max));
        init.push(of_delta.map(|c| c.initial_dist).fold(0.0, f64::max));
    }
    let mut notes = vec![format!(
        "orbit: phase{} of the computed minimizer; perturbation {:?}, renormalize={}; monitor every {} steps",
        if opts.translation_search { " and translation" } else { "" },
        opts.mode,
        opts.renormalize,
        opts.monitor_every
    )];
    let applying: Vec<String> =
        verdicts.iter().filter(|v| v.applies).map(|v| format!("{} case {}", v.result, v.case_id)).collect();
    if in_hypothesis {
        notes.push(format!("in hypothesis: {}", applying.join(", ")));
    } else {
        notes.push("out of hypothesis: no stability case applies".into());
    }
    let blowups = cells.iter().filter(|c| c.terminated == Termination::BlowupFlagged).count();
    if blowups > 0 {
        notes.push(format!("{blowups} cell(s) flagged blow-up"));
    }
    let over_budget: Vec<String> =
        deltas.iter().zip(&sup).filter(|(d, s)| **s > 5.0 * **d).map(|(d, s)| format!("delta={d:e}: {s:e}")).collect();
    if over_budget.is_empty() {
        notes.push("sup distance within 5*delta for every delta".into());
    } else {
        notes.push(format!("sup distance above 5*delta: {}", over_budget.join("; ")));
    }
    Ok(StabilityReport {
        deltas: deltas.to_vec(),
        sup_dist: sup,
        initial_dist: init,
        horizon_t: horizon,
        dt,
        seeds: seeds.to_vec(),
        in_hypothesis,
        cells,
        verdict_notes: notes.join("; "),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::NonlinearitySpec;
    use crate::grid::make_grid;
    use crate::potential::PotentialSpec;
    use crate::sampling::random_bump_field;

    fn problem() -> ProblemSpec {
        let g = make_grid(1, 40.0, 256).unwrap();
        ProblemSpec::new(g, PotentialSpec::new(1.0, 0.5, 1).unwrap(), NonlinearitySpec::Power { p: 3.0 }, 1.0).unwrap()
    }

    #[test]
    fn distance_examples() {
        let g = make_grid(1, 40.0, 256).unwrap();
        let u = random_bump_field(&g, 3);
        assert_eq!(orbit_distance(&u, &u).unwrap(), 0.0);
        assert!(orbit_distance(&u.rotated(2.1), &u).unwrap() < 1e-12);
        // H¹-orthogonal plane waves
        let l = 40.0;
        let a = ComplexField::from_fn(&g, |x| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * x[0] / l));
        let b = ComplexField::from_fn(&g, |x| Complex64::from_polar(1.0, 6.0 * std::f64::consts::PI * x[0] / l));
        let d = orbit_distance(&a, &b).unwrap();
        assert!((d - (a.h1_norm_sq() + b.h1_norm_sq()).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn translation_search_recovers_shift() {
        let g = make_grid(1, 40.0, 256).unwrap();
        let v = ComplexField::from_real_fn(&g, |x| 1.0 / x[0].cosh());
        let u = v.translated(&[1.2345]).rotated(0.4);
        let (d, s) = orbit_distance_with_translation(&u, &v).unwrap();
        assert!(d < 1e-8, "{d}");
        assert!((s[0] - 1.2345).abs() < 1e-6, "{s:?}");
        assert!(orbit_distance(&u, &v).unwrap() > 0.1);
    }

    #[test]
    fn perturbation_sizes() {
        let prob = problem();
        let gs = ComplexField::from_real_fn(&prob.grid, |x| (-x[0] * x[0]).exp());
        assert_eq!(perturb(&gs, &prob, 0.0, PerturbMode::Random, 1, true).unwrap(), gs);
        for mode in [PerturbMode::Random, PerturbMode::GradientDirection, PerturbMode::Translate] {
            let p = perturb(&gs, &prob, 0.01, mode, 4, false).unwrap();
            assert!(orbit_distance(&p, &gs).unwrap() <= 0.01 + 1e-12);
            let r = perturb(&gs, &prob, 0.01, mode, 4, true).unwrap();
            assert!((r.l2_norm_sq() / gs.l2_norm_sq() - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            perturb(&gs, &prob, 0.01, PerturbMode::Random, 9, true).unwrap(),
            perturb(&gs, &prob, 0.01, PerturbMode::Random, 9, true).unwrap()
        );
    }

    #[test]
    fn report_csv_layout() {
        let report = StabilityReport {
            deltas: vec![0.1],
            sup_dist: vec![0.2],
            initial_dist: vec![0.1],
            horizon_t: 1.0,
            dt: 0.01,
            seeds: vec![1],
            in_hypothesis: true,
            cells: vec![StabilityCell {
                delta: 0.1,
                seed: 1,
                sup_dist: 0.2,
                initial_dist: 0.1,
                terminated: Termination::Completed,
            }],
            verdict_notes: String::new(),
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "delta,seed,sup_dist,initial_dist,terminated\n1e-1,1,2e-1,1e-1,completed\n");
        assert!(report.to_json().unwrap().contains("\"horizon_t\": 1.0"));
    }
}
