use std::f64::consts::PI;

use stwave::constants::{gn_constant, hartree_gn_constant, hls_constant};
use stwave::petviashvili::{petviashvili_solve, ReferenceKind};
use stwave::potential::{bound_delta, verify_lower_bound};
use stwave::riesz::{hartree_energy, riesz_convolve};
use stwave::sampling::{sample_fields, with_mass, BumpFieldOptions};
use stwave::special::riesz_prefactor;
use stwave::{make_grid, ComplexField, PotentialSpec, RieszKernel, RieszSpec};

/// Newtonian potential of a radial density by the shell theorem,
/// `(1/r)∫_0^r ρ s² ds + ∫_r^∞ ρ s ds`, with composite Simpson panels.
fn shell_potential(density: impl Fn(f64) -> f64, r: f64, outer: f64) -> f64 {
    let simpson = |a: f64, b: f64, f: &dyn Fn(f64) -> f64| {
        let n = 4000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    };
    let inner = simpson(0.0, r, &|s| density(s) * s * s) / r;
    let tail = simpson(r, outer, &|s| density(s) * s);
    inner + tail
}

#[test]
fn newtonian_potential_of_a_gaussian() {
    let g = make_grid(3, 32.0, 128).unwrap();
    let sigma: f64 = 0.5;
    let norm = (2.0 * PI * sigma * sigma).powf(-1.5);
    let density = |r: f64| norm * (-r * r / (2.0 * sigma * sigma)).exp();
    let v: Vec<f64> = (0..g.len())
        .map(|i| {
            let x = g.position(i);
            density((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
        })
        .collect();
    let spec = RieszSpec::new(2.0, 3).unwrap().with_kernel(RieszKernel::Truncated);
    let out = riesz_convolve(&g, &v, &spec).unwrap();
    let h = g.spacing(0);
    let center = g.points(0) / 2;
    for r in [1.0, 2.0, 4.0] {
        let i = center + (r / h).round() as usize;
        let computed = out[g.ravel(&[i, center, center])];
        // I_2 in 3D is |x|^{-1}/(4π); the 4π of the shell integral cancels it
        let oracle = shell_potential(density, r, 12.0);
        assert!((computed / oracle - 1.0).abs() < 1e-3, "r={r}: {computed} vs {oracle}");
    }
}

#[test]
fn hartree_energy_scales_under_dilation() {
    let g = make_grid(2, 40.0, 256).unwrap();
    let (beta, q) = (1.0, 2.0);
    let spec = RieszSpec::new(beta, 2).unwrap().with_kernel(RieszKernel::Truncated);
    let u = ComplexField::from_real_fn(&g, |x| (-(x[0] * x[0] + 0.7 * x[1] * x[1])).exp());
    let base = hartree_energy(&u, q, &spec).unwrap();
    for lambda in [0.7, 1.5] {
        let scaled = hartree_energy(&u.dilate(lambda), q, &spec).unwrap();
        let predicted = lambda.powf(2.0 * q - 2.0 - beta) * base;
        assert!((scaled / predicted - 1.0).abs() < 1e-5, "λ={lambda}: {scaled} vs {predicted}");
    }
}

#[test]
fn potential_lower_bound_on_random_fields() {
    let g = make_grid(1, 40.0, 1024).unwrap();
    let spec = PotentialSpec::new(1.0, 0.5, 1).unwrap();
    let narrow = BumpFieldOptions { center_fraction: 0.02, min_width: 0.1, max_width: 1.0, ..Default::default() };
    let mut fields = sample_fields(&g, 200, 7, &BumpFieldOptions::default());
    fields.extend(sample_fields(&g, 100, 8, &narrow));
    for eps in [0.1, 0.25, 0.5] {
        let delta = bound_delta(eps, 1.0, &spec, 1).unwrap();
        assert!(delta.is_finite() && delta > 0.0);
        for (i, u) in fields.iter().enumerate() {
            let m = verify_lower_bound(&with_mass(u, 1.0), eps, &spec).unwrap();
            assert!(m >= 0.0, "ε={eps}, field {i}: margin {m}");
        }
    }
    let repulsive = PotentialSpec::new(-1.0, 0.5, 1).unwrap();
    assert_eq!(bound_delta(0.25, 1.0, &repulsive, 1).unwrap(), 0.0);
    assert!(verify_lower_bound(&fields[0], 0.25, &repulsive).unwrap() >= 0.0);
}

fn gn_ratio(u: &ComplexField, eta: f64, c: f64) -> f64 {
    let n = u.grid().dim() as f64;
    let lhs = u.lp_norm(eta + 2.0).unwrap().powf(eta + 2.0);
    let l2 = u.lp_norm(2.0).unwrap();
    let grad = u.gradient_norm_sq().sqrt();
    lhs / (c * l2.powf(2.0 + 0.5 * eta * (2.0 - n)) * grad.powf(0.5 * eta * n))
}

#[test]
fn gagliardo_nirenberg_sampling_and_sharpness() {
    let g = make_grid(1, 50.0, 1024).unwrap();
    for p in [3.0, 5.0] {
        let q = petviashvili_solve(ReferenceKind::Q, p, None, &g, 1e-10).unwrap();
        let c = gn_constant(1, p - 1.0, q.mass_sq.sqrt()).unwrap();
        if p == 3.0 {
            assert!((c - 1.0 / 3f64.sqrt()).abs() < 1e-4);
        }
        let at_q = gn_ratio(&q.field, p - 1.0, c);
        assert!(at_q >= 0.999 && at_q <= 1.0 + 1e-6, "p={p}: ratio at Q {at_q}");
        for (i, u) in sample_fields(&g, 300, 21, &BumpFieldOptions::default()).iter().enumerate() {
            let r = gn_ratio(u, p - 1.0, c);
            assert!(r <= 1.0, "p={p}, field {i}: ratio {r}");
        }
    }
}

fn choquard_ratio(u: &ComplexField, beta: f64, p: f64, c: f64, spec: &RieszSpec) -> f64 {
    let n = u.grid().dim() as f64;
    let lhs = hartree_energy(u, p, spec).unwrap();
    let l2 = u.lp_norm(2.0).unwrap();
    let grad = u.gradient_norm_sq().sqrt();
    lhs / (c * grad.powf(n * p - n - beta) * l2.powf(n + beta - (n - 2.0) * p))
}

#[test]
fn choquard_interpolation_sampling_and_sharpness() {
    let g = make_grid(1, 60.0, 1024).unwrap();
    let (beta, p) = (0.5, 2.0);
    let w = petviashvili_solve(ReferenceKind::W, p, Some(beta), &g, 1e-10).unwrap();
    let c = hartree_gn_constant(1, beta, p, w.mass_sq.sqrt()).unwrap();
    let spec = RieszSpec::new(beta, 1).unwrap().with_kernel(RieszKernel::Truncated);
    let at_w = choquard_ratio(&w.field, beta, p, c, &spec);
    assert!(at_w >= 0.99 && at_w <= 1.0 + 1e-6, "ratio at W {at_w}");
    for (i, u) in sample_fields(&g, 300, 33, &BumpFieldOptions::default()).iter().enumerate() {
        let r = choquard_ratio(u, beta, p, c, &spec);
        assert!(r <= 1.0, "field {i}: ratio {r}");
    }
}

#[test]
fn hardy_littlewood_sobolev_sampling() {
    let g = make_grid(3, 24.0, 48).unwrap();
    let beta = 2.0;
    let c = hls_constant(3, beta).unwrap();
    assert!((c - 2.2940).abs() < 1e-3);
    let spec = RieszSpec::new(beta, 3).unwrap().with_kernel(RieszKernel::Truncated);
    let opts = BumpFieldOptions { real_nonnegative: true, max_modulation: 0.0, ..Default::default() };
    let r = 2.0 * 3.0 / (3.0 + beta);
    for (i, u) in sample_fields(&g, 40, 5, &opts).iter().enumerate() {
        let v: Vec<f64> = u.values().iter().map(|z| z.re).collect();
        let conv = riesz_convolve(&g, &v, &spec).unwrap();
        let lhs = conv.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() * g.cell_volume() / riesz_prefactor(3, beta);
        let norm = u.lp_norm(r).unwrap();
        let ratio = lhs / (c * norm * norm);
        assert!(ratio <= 1.0 + 1e-3, "field {i}: ratio {ratio}");
    }
}
