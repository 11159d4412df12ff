use std::f64::consts::PI;

use rand::Rng;
use stwave::petviashvili::{
    petviashvili_iterate, petviashvili_solve, petviashvili_solve_with, threshold_mass, InitialGuess,
    PetviashviliOptions, ReferenceKind,
};
use stwave::sampling::rng_from_seed;
use stwave::thresholds::{
    check_theorem_conditions, reference_grids, StabilityResult, ThresholdEntry, ThresholdTable,
};
use stwave::{make_grid, NonlinearitySpec, PotentialSpec, ProblemSpec, RieszKernel};

fn entry(kind: ReferenceKind, exponent: f64, beta: Option<f64>, mass_sq: f64) -> ThresholdEntry {
    ThresholdEntry { kind, dim: 1, exponent, beta, extent: 50.0, points: 1024, mass_sq, residual: 0.0 }
}

fn problem_1d(nl: NonlinearitySpec, gamma: f64, rho: f64) -> ProblemSpec {
    let g = make_grid(1, 40.0, 256).unwrap();
    ProblemSpec::new(g, PotentialSpec::new(gamma, 0.5, 1).unwrap(), nl, rho).unwrap()
}

#[test]
fn one_dimensional_thresholds_match_closed_forms() {
    let g = &reference_grids(1).unwrap()[0];
    let cubic = petviashvili_solve(ReferenceKind::Q, 3.0, None, g, 1e-10).unwrap();
    assert!((threshold_mass(&cubic) - 4.0).abs() < 1e-6);
    let quintic = petviashvili_solve(ReferenceKind::Q, 5.0, None, g, 1e-10).unwrap();
    assert!((threshold_mass(&quintic) - 3f64.sqrt() * PI / 2.0).abs() < 1e-4);
    assert!(threshold_mass(&quintic) > 0.0);
}

#[test]
fn newtonian_choquard_threshold_is_grid_converged() {
    let mut table = ThresholdTable::new();
    let est = table.ensure(ReferenceKind::W, 3, 2.0, Some(2.0)).unwrap();
    assert!(est.mass_sq > 0.0);
    assert!(est.error_bar <= 1e-3 * est.mass_sq, "{est:?}");
    assert_eq!(table.entries().len(), 2);
    for e in table.entries() {
        assert!(e.residual <= 1e-8, "{e:?}");
    }
}

#[test]
fn reference_mass_does_not_depend_on_initial_guess() {
    let g = reference_grids(2).unwrap().remove(0);
    let a = petviashvili_solve(ReferenceKind::W, 2.5, Some(1.0), &g, 1e-10).unwrap();
    let opts = PetviashviliOptions { init: InitialGuess::Sech, ..Default::default() };
    let b = petviashvili_solve_with(ReferenceKind::W, 2.5, Some(1.0), &g, &opts).unwrap();
    assert!((a.mass_sq / b.mass_sq - 1.0).abs() < 1e-6, "{} vs {}", a.mass_sq, b.mass_sq);
    let again = petviashvili_iterate(ReferenceKind::W, 2.5, Some(1.0), &a.field, RieszKernel::Truncated).unwrap();
    assert!(again.sub(&a.field).unwrap().lp_norm(2.0).unwrap() <= 1e-10);
    assert!(a.symmetry_error < 1e-8);
}

#[test]
fn checker_power_cases() {
    let mut table = ThresholdTable::new();
    table.insert(entry(ReferenceKind::Q, 5.0, None, 3f64.sqrt() * PI / 2.0));
    let sub = check_theorem_conditions(&problem_1d(NonlinearitySpec::Power { p: 3.0 }, 1.0, 7.0), &table).unwrap();
    assert!(sub[0].applies && sub[0].result == StabilityResult::Power && sub[0].case_id == 1);
    let crit = check_theorem_conditions(&problem_1d(NonlinearitySpec::Power { p: 5.0 }, 1.0, 3.0), &table).unwrap();
    let case2 = crit.iter().find(|v| v.case_id == 2).unwrap();
    assert!(!case2.applies && case2.margin < 0.0);
    assert!((case2.margin - (1.0 - 3.0 / (3f64.sqrt() * PI / 2.0))).abs() < 1e-15);
}

#[test]
fn combined_condition_margin_matches_arithmetic() {
    let beta = 0.5;
    let qc = 1.0 + (2.0 + beta);
    let nl = NonlinearitySpec::Mixed { q: qc, beta, p: 5.0 };
    let mut rng = rng_from_seed(2024);
    for _ in 0..100 {
        let tq = rng.random_range(0.5..6.0);
        let tw = rng.random_range(0.5..6.0);
        let rho = rng.random_range(0.01..4.0);
        let mut table = ThresholdTable::new();
        table.insert(entry(ReferenceKind::Q, 5.0, None, tq));
        table.insert(entry(ReferenceKind::W, qc, Some(beta), tw));
        let verdicts = check_theorem_conditions(&problem_1d(nl, 1.0, rho), &table).unwrap();
        let v = verdicts.iter().find(|v| v.case_id == 4).unwrap();
        let oracle = 1.0 - (rho / tq).powi(2) - (rho / tw).powf(0.5 * (2.0 * beta + 4.0));
        assert!((v.margin - oracle).abs() <= 1e-12, "{} vs {oracle}", v.margin);
        assert_eq!(v.applies, oracle > 0.0);
    }
}

#[test]
fn concurrent_stores_merge() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("thresholds.csv");
    std::thread::scope(|s| {
        for i in 0..8 {
            let path = path.clone();
            s.spawn(move || {
                let mut t = ThresholdTable::new();
                t.insert(entry(ReferenceKind::Q, 2.0 + 0.25 * i as f64, None, 1.0 + i as f64));
                t.store(&path).unwrap();
            });
        }
    });
    let merged = ThresholdTable::load(&path).unwrap();
    assert_eq!(merged.entries().len(), 8);
    for i in 0..8 {
        assert_eq!(merged.lookup(ReferenceKind::Q, 1, 2.0 + 0.25 * i as f64, None), Some(1.0 + i as f64));
    }
}
