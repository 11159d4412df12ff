//! Riesz-potential convolution `I_β ∗ v` and the Hartree energy.
//!
//! `I_β(x) = c_{N,β}|x|^{β−N}` has free-space symbol `|k|^{-β}`. On the torus
//! two multipliers are offered:
//!
//! * `Spectral`: `|k|^{-β}` for `k ≠ 0` and a configurable zero mode, by
//!   default the integral of `I_β` over the ball of radius `L_min/2`.
//! * `Truncated`: the exact symbol of `I_β χ_{|x|<R}` with `R = L_min/2`.
//!   Periodic convolution with it reproduces the free-space potential at
//!   every point of a support of diameter at most `R`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::sync::{Arc, LazyLock};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cache::{grid_key, KeyedCache};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid;
use crate::special::{bessel_j0, gl16, riesz_prefactor, sphere_area};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum ZeroMode {
    /// `c_{N,β} ω_N R^β / β`: the mean of the kernel truncated at `R = L_min/2`.
    TruncationMatched,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RieszKernel {
    Spectral { zero_mode: ZeroMode },
    Truncated,
}

impl Default for RieszKernel {
    fn default() -> Self {
        RieszKernel::Spectral { zero_mode: ZeroMode::TruncationMatched }
    }
}

impl fmt::Display for RieszKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RieszKernel::Spectral { zero_mode: ZeroMode::TruncationMatched } => {
                write!(f, "spectral(zero_mode=truncation_matched)")
            }
            RieszKernel::Spectral { zero_mode: ZeroMode::Value(v) } => {
                write!(f, "spectral(zero_mode={v})")
            }
            RieszKernel::Truncated => write!(f, "truncated(radius=L_min/2)"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszSpec {
    pub beta: f64,
    pub kernel: RieszKernel,
}

impl RieszSpec {
    pub fn new(beta: f64, dim: usize) -> Result<Self> {
        let spec = Self { beta, kernel: RieszKernel::default() };
        spec.validate(dim)?;
        Ok(spec)
    }

    pub fn with_kernel(mut self, kernel: RieszKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < dim as f64) {
            return Err(Error::InvalidExponent {
                kind: "riesz",
                detail: format!("beta={} must lie in (0, N) = (0, {dim})", self.beta),
            });
        }
        Ok(())
    }

    /// Multiplier value at `k = 0` on `grid`.
    pub fn zero_mode_value(&self, grid: &Grid) -> f64 {
        match self.kernel {
            RieszKernel::Spectral { zero_mode: ZeroMode::Value(v) } => v,
            _ => truncated_mean(grid.dim(), self.beta, 0.5 * grid.min_extent()),
        }
    }
}

fn truncated_mean(dim: usize, beta: f64, radius: f64) -> f64 {
    riesz_prefactor(dim, beta) * sphere_area(dim) * radius.powf(beta) / beta
}

/// Angular average of `e^{ik·x}` over the unit sphere at `|k||x| = t`.
fn sphere_average(dim: usize, t: f64) -> f64 {
    match dim {
        1 => t.cos(),
        2 => bessel_j0(t),
        _ => {
            if t.abs() < 1e-4 {
                1.0 - t * t / 6.0
            } else {
                t.sin() / t
            }
        }
    }
}

/// `∫_0^a t^{β−1} j_N(t) dt` for `a ≤ 1` by termwise integration of the
/// Taylor series of `j_N`.
fn series_integral(dim: usize, beta: f64, a: f64) -> f64 {
    let mut sum = 0.0;
    let mut coef = 1.0;
    for m in 0..30 {
        if m > 0 {
            let mf = m as f64;
            // ratio of consecutive Taylor coefficients of j_N
            coef *= -match dim {
                1 => 1.0 / ((2.0 * mf - 1.0) * 2.0 * mf),
                2 => 1.0 / (4.0 * mf * mf),
                _ => 1.0 / (2.0 * mf * (2.0 * mf + 1.0)),
            };
        }
        let e = beta + 2.0 * m as f64;
        let term = coef * a.powf(e) / e;
        sum += term;
        if term.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `F(T) = ∫_0^T t^{β−1} j_N(t) dt` at each requested `T ≥ 0`, by one
/// cumulative sweep over the sorted arguments.
fn cumulative_radial_integrals(dim: usize, beta: f64, targets: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| targets[a].total_cmp(&targets[b]));
    let integrand = |t: f64| t.powf(beta - 1.0) * sphere_average(dim, t);
    let mut out = vec![0.0; targets.len()];
    let head = series_integral(dim, beta, 1.0);
    let (mut pos, mut acc) = (1.0, head);
    for idx in order {
        let t = targets[idx];
        if t <= 1.0 {
            out[idx] = series_integral(dim, beta, t);
            continue;
        }
        while pos < t {
            let next = (pos + 1.0).min(t);
            acc += gl16(pos, next, integrand);
            pos = next;
        }
        out[idx] = acc;
    }
    out
}

static MULTIPLIER_CACHE: LazyLock<KeyedCache<Vec<f64>>> = LazyLock::new(KeyedCache::new);

fn spec_key(grid: &Grid, spec: &RieszSpec) -> Vec<u64> {
    let mut key = grid_key(grid);
    key.push(spec.beta.to_bits());
    match spec.kernel {
        RieszKernel::Spectral { zero_mode } => {
            key.push(0);
            key.push(match zero_mode {
                ZeroMode::TruncationMatched => u64::MAX,
                ZeroMode::Value(v) => v.to_bits(),
            });
        }
        RieszKernel::Truncated => key.push(1),
    }
    key
}

/// Fourier multiplier `m(k)` at every grid wavevector (cached).
pub fn multiplier(grid: &Grid, spec: &RieszSpec) -> Result<Arc<Vec<f64>>> {
    spec.validate(grid.dim())?;
    Ok(MULTIPLIER_CACHE.get_or_build(spec_key(grid, spec), || build_multiplier(grid, spec)))
}

fn build_multiplier(grid: &Grid, spec: &RieszSpec) -> Vec<f64> {
    let beta = spec.beta;
    let k2 = grid.k_squared();
    let zero = spec.zero_mode_value(grid);
    match spec.kernel {
        RieszKernel::Spectral { .. } => k2
            .iter()
            .map(|&k2| if k2 == 0.0 { zero } else { k2.powf(-0.5 * beta) })
            .collect(),
        RieszKernel::Truncated => {
            let dim = grid.dim();
            let radius = 0.5 * grid.min_extent();
            let mut distinct: HashMap<u64, usize> = HashMap::new();
            let mut args = Vec::new();
            for &k2 in k2 {
                distinct.entry(k2.to_bits()).or_insert_with(|| {
                    args.push(k2.sqrt() * radius);
                    args.len() - 1
                });
            }
            let integrals = cumulative_radial_integrals(dim, beta, &args);
            let scale = riesz_prefactor(dim, beta) * sphere_area(dim) * radius.powf(beta);
            let values: Vec<f64> = args
                .iter()
                .zip(&integrals)
                .map(|(&t, &f)| if t == 0.0 { zero } else { scale * f / t.powf(beta) })
                .collect();
            k2.iter().map(|k2| values[distinct[&k2.to_bits()]]).collect()
        }
    }
}

/// `I_β ∗ v` for real samples `v` on `grid`.
pub fn riesz_convolve(grid: &Grid, v: &[f64], spec: &RieszSpec) -> Result<Vec<f64>> {
    if v.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let m = multiplier(grid, spec)?;
    let mut data: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    grid.forward(&mut data);
    for (z, m) in data.iter_mut().zip(m.iter()) {
        *z *= m;
    }
    grid.inverse(&mut data);
    Ok(data.into_iter().map(|z| z.re).collect())
}

/// `|u|^q` sampled pointwise.
pub(crate) fn abs_pow(u: &ComplexField, q: f64) -> Vec<f64> {
    u.values().iter().map(|z| z.norm().powf(q)).collect()
}

/// `∫ (I_β ∗ |u|^q)|u|^q dx`.
pub fn hartree_energy(u: &ComplexField, q: f64, spec: &RieszSpec) -> Result<f64> {
    let dim = u.grid().dim();
    spec.validate(dim)?;
    if !(q > 1.0 + spec.beta / dim as f64) || (dim >= 3 && q >= (dim as f64 + spec.beta) / (dim as f64 - 2.0)) {
        return Err(Error::InvalidExponent {
            kind: "hartree",
            detail: format!("q={q} outside (1+β/N, (N+β)/(N−2)₊) for N={dim}, β={}", spec.beta),
        });
    }
    let density = abs_pow(u, q);
    let pot = riesz_convolve(u.grid(), &density, spec)?;
    Ok(u.grid().cell_volume() * pot.iter().zip(&density).map(|(a, b)| a * b).sum::<f64>())
}

/// Writes `k,m` rows for every distinct `|k|` on the grid, ascending.
pub fn write_multiplier_csv<W: Write>(grid: &Grid, spec: &RieszSpec, mut w: W) -> Result<()> {
    let m = multiplier(grid, spec)?;
    let mut rows: Vec<(f64, f64)> = grid.k_squared().iter().map(|k2| k2.sqrt()).zip(m.iter().copied()).collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows.dedup_by(|a, b| a.0 == b.0);
    writeln!(w, "k,m")?;
    for (k, m) in rows {
        writeln!(w, "{k:.17e},{m:.17e}")?;
    }
    Ok(())
}
