//! Critical exponents and sharp constants of the Gagliardo–Nirenberg,
//! Hardy–Littlewood–Sobolev and Choquard-type interpolation inequalities.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::special::{gamma, ln_gamma};
use crate::thresholds::{reference_mass_sq, ReferenceKind};

/// `(p_c, q_c) = (1 + 4/N, 1 + (2+β)/N)`.
pub fn critical_exponents(dim: usize, beta: Option<f64>) -> (f64, Option<f64>) {
    let n = dim as f64;
    (1.0 + 4.0 / n, beta.map(|b| 1.0 + (2.0 + b) / n))
}

fn sobolev_cap(dim: usize) -> f64 {
    if dim <= 2 {
        f64::INFINITY
    } else {
        4.0 / (dim as f64 - 2.0)
    }
}

/// Best constant in `‖u‖_{η+2}^{η+2} ≤ C ‖u‖₂^{2+η(2−N)/2} ‖∇u‖₂^{ηN/2}`,
/// given `q_mass = ‖Q_{η+1}‖₂`.
pub fn gn_constant(dim: usize, eta: f64, q_mass: f64) -> Result<f64> {
    let cap = sobolev_cap(dim);
    if !(eta > 0.0 && eta < cap) {
        return Err(Error::InvalidExponent {
            kind: "gagliardo_nirenberg",
            detail: format!("eta={eta} must lie in (0, {cap}) for N={dim}"),
        });
    }
    if !(q_mass > 0.0) {
        return Err(Error::InvalidParameter(format!("reference norm {q_mass} must be positive")));
    }
    let n = dim as f64;
    let d = 4.0 - (n - 2.0) * eta;
    Ok(2.0 * (eta + 2.0) / d * (d / (n * eta)).powf(n * eta / 4.0) * q_mass.powf(-eta))
}

/// Best constant in
/// `∫(I_β∗|u|^p)|u|^p ≤ C ‖∇u‖₂^{Np−N−β} ‖u‖₂^{N+β−(N−2)p}`,
/// given `w_mass = ‖W_p‖₂`.
pub fn hartree_gn_constant(dim: usize, beta: f64, p: f64, w_mass: f64) -> Result<f64> {
    let n = dim as f64;
    let lo = 1.0 + beta / n;
    let hi = if dim <= 2 { f64::INFINITY } else { (n + beta) / (n - 2.0) };
    if !(beta > 0.0 && beta < n) || !(p > lo && p < hi) {
        return Err(Error::InvalidExponent {
            kind: "choquard_interpolation",
            detail: format!("need 0 < beta < N and {lo} < p < {hi}; got beta={beta}, p={p}"),
        });
    }
    if !(w_mass > 0.0) {
        return Err(Error::InvalidParameter(format!("reference norm {w_mass} must be positive")));
    }
    let s = n * p - n - beta;
    let tail = w_mass.powf(2.0 - 2.0 * p);
    if (s - 2.0).abs() <= 1e-12 * 2.0 {
        return Ok(p * tail);
    }
    let d = 2.0 * p - n * p + n + beta;
    Ok(2.0 * p / d * (d / s).powf(0.5 * s) * tail)
}

/// Sharp diagonal Hardy–Littlewood–Sobolev constant for
/// `∫∫ v(x)v(y)|x−y|^{β−N} ≤ C ‖v‖²_{2N/(N+β)}`.
pub fn hls_constant(dim: usize, beta: f64) -> Result<f64> {
    let n = dim as f64;
    if !(beta > 0.0 && beta < n) {
        return Err(Error::InvalidExponent {
            kind: "hls",
            detail: format!("beta={beta} must lie in (0, {dim})"),
        });
    }
    Ok(PI.powf(0.5 * (n - beta)) * gamma(0.5 * beta) / gamma(0.5 * (n + beta))
        * (gamma(0.5 * n) / gamma(n)).powf(-beta / n))
}

/// `‖Q_p‖₂²` for the positive solution of `−ΔQ + Q = Q^p`.
///
/// In one dimension `Q_p(x) = ((p+1)/2)^{1/(p−1)} sech^{2/(p−1)}((p−1)x/2)`
/// and the mass is a Beta function; otherwise the value comes from a cached
/// reference solve.
pub fn ground_state_mass_sq(dim: usize, p: f64) -> Result<f64> {
    let cap = if dim <= 2 { f64::INFINITY } else { (dim as f64 + 2.0) / (dim as f64 - 2.0) };
    if !(p > 1.0 && p < cap) {
        return Err(Error::InvalidExponent {
            kind: "power",
            detail: format!("p={p} must satisfy 1 < p < {cap} for N={dim}"),
        });
    }
    if dim == 1 {
        return Ok(soliton_mass_sq_1d(p));
    }
    reference_mass_sq(ReferenceKind::Q, dim, p, None)
}

fn soliton_mass_sq_1d(p: f64) -> f64 {
    let s = 2.0 / (p - 1.0);
    let amp_sq = (0.5 * (p + 1.0)).powf(s);
    let beta_fn = (ln_gamma(s) + ln_gamma(0.5) - ln_gamma(s + 0.5)).exp();
    amp_sq * s * beta_fn
}

/// One-dimensional `Q_p` profile.
pub fn soliton_profile_1d(p: f64, x: f64) -> f64 {
    (0.5 * (p + 1.0)).powf(1.0 / (p - 1.0)) * (0.5 * (p - 1.0) * x).cosh().powf(-2.0 / (p - 1.0))
}
