//! Seeded random test fields: sums of localized Gaussian bumps with complex
//! amplitudes and optional plane-wave modulation.
//!
//! Bumps stay well inside the box so the sampled fields behave like
//! functions on the whole space, which the sharp inequalities require.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::ComplexField;
use crate::grid::Grid;

#[derive(Clone, Debug, PartialEq)]
pub struct BumpFieldOptions {
    pub max_bumps: usize,
    /// Centers are drawn from `[−f·L, f·L]` per axis.
    pub center_fraction: f64,
    pub min_width: f64,
    pub max_width: f64,
    /// Largest plane-wave modulation wavenumber; zero disables modulation.
    pub max_modulation: f64,
    /// Nonnegative real fields only.
    pub real_nonnegative: bool,
}

impl Default for BumpFieldOptions {
    fn default() -> Self {
        Self {
            max_bumps: 4,
            center_fraction: 1.0 / 6.0,
            min_width: 0.5,
            max_width: 2.5,
            max_modulation: 1.5,
            real_nonnegative: false,
        }
    }
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_bump_field_with<R: Rng>(grid: &Grid, rng: &mut R, opts: &BumpFieldOptions) -> ComplexField {
    let dim = grid.dim();
    let count = rng.random_range(1..=opts.max_bumps.max(1));
    struct Bump {
        center: [f64; 3],
        inv_two_w2: f64,
        amp: Complex64,
        wave: [f64; 3],
    }
    let bumps: Vec<Bump> = (0..count)
        .map(|_| {
            let mut center = [0.0; 3];
            let mut wave = [0.0; 3];
            for a in 0..dim {
                let half = opts.center_fraction * grid.extent(a);
                center[a] = rng.random_range(-half..=half);
                if opts.max_modulation > 0.0 && !opts.real_nonnegative {
                    wave[a] = rng.random_range(-opts.max_modulation..=opts.max_modulation);
                }
            }
            let w = rng.random_range(opts.min_width..=opts.max_width);
            let modulus = rng.random_range(0.2..=1.0);
            let amp = if opts.real_nonnegative {
                Complex64::new(modulus, 0.0)
            } else {
                Complex64::from_polar(modulus, rng.random_range(0.0..std::f64::consts::TAU))
            };
            Bump { center, inv_two_w2: 0.5 / (w * w), amp, wave }
        })
        .collect();
    ComplexField::from_fn(grid, |x| {
        bumps
            .iter()
            .map(|b| {
                let mut r2 = 0.0;
                let mut phase = 0.0;
                for a in 0..dim {
                    let d = x[a] - b.center[a];
                    r2 += d * d;
                    phase += b.wave[a] * x[a];
                }
                b.amp * Complex64::from_polar((-r2 * b.inv_two_w2).exp(), phase)
            })
            .sum()
    })
}

pub fn random_bump_field(grid: &Grid, seed: u64) -> ComplexField {
    random_bump_field_with(grid, &mut rng_from_seed(seed), &BumpFieldOptions::default())
}

/// `count` independent fields from one seeded stream.
pub fn sample_fields(grid: &Grid, count: usize, seed: u64, opts: &BumpFieldOptions) -> Vec<ComplexField> {
    let mut rng = rng_from_seed(seed);
    (0..count).map(|_| random_bump_field_with(grid, &mut rng, opts)).collect()
}

/// Rescales `u` to `‖u‖₂² = rho`.
pub fn with_mass(u: &ComplexField, rho: f64) -> ComplexField {
    let m = u.l2_norm_sq();
    if m == 0.0 {
        return u.clone();
    }
    u.scaled((rho / m).sqrt())
}
