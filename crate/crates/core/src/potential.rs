//! The slowly decaying potential `V(x) = γ|x|^{-α}`, its energy, and an
//! explicit constant `δ(ε, ‖u‖₂)` with
//! `ε‖∇u‖₂² − γ∫|u|²|x|^{-α} ≥ −δ`.

use std::sync::{Arc, LazyLock};

use serde::{Deserialize, Serialize};

use crate::cache::{grid_key, KeyedCache};
use crate::constants::{gn_constant, ground_state_mass_sq};
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid;
use crate::special::{gauss_legendre, sphere_area};

/// Offset of the conjugate Hölder exponents from `N/(N−α)` used when
/// building `δ`.
pub const BOUND_TAU: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub gamma: f64,
    pub alpha: f64,
    /// Regularization length at the origin. `None` means half the grid
    /// spacing; `Some(0.0)` switches to exact cell averaging of `|x|^{-α}`
    /// in the origin cell.
    pub reg_eps: Option<f64>,
}

impl PotentialSpec {
    pub fn new(gamma: f64, alpha: f64, dim: usize) -> Result<Self> {
        let upper = 2f64.min(dim as f64);
        if !(alpha > 0.0 && alpha < upper) {
            return Err(Error::InvalidParameter(format!(
                "decay exponent alpha={alpha} must lie in (0, min(2, N)) = (0, {upper})"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("coupling gamma={gamma} is not finite")));
        }
        Ok(Self { gamma, alpha, reg_eps: None })
    }

    pub fn with_reg_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("reg_eps={eps} must be >= 0")));
        }
        self.reg_eps = Some(eps);
        Ok(self)
    }

    /// Regularization length in force on `grid`.
    pub fn effective_reg_eps(&self, grid: &Grid) -> f64 {
        self.reg_eps.unwrap_or(0.5 * grid.min_spacing())
    }
}

static POTENTIAL_CACHE: LazyLock<KeyedCache<Vec<f64>>> = LazyLock::new(KeyedCache::new);

/// `γ(|x|² + ε²)^{-α/2}` at every grid point (cached per grid and spec).
pub fn sample_potential(grid: &Grid, spec: &PotentialSpec) -> Arc<Vec<f64>> {
    let eps = spec.effective_reg_eps(grid);
    let mut key = grid_key(grid);
    key.extend([spec.gamma.to_bits(), spec.alpha.to_bits(), eps.to_bits()]);
    POTENTIAL_CACHE.get_or_build(key, || {
        if spec.gamma == 0.0 {
            return vec![0.0; grid.len()];
        }
        let origin_value = if eps == 0.0 { origin_cell_average(grid, spec.alpha) } else { 0.0 };
        grid.radius_squared()
            .into_iter()
            .map(|r2| {
                if eps == 0.0 && r2 == 0.0 {
                    spec.gamma * origin_value
                } else {
                    spec.gamma * (r2 + eps * eps).powf(-0.5 * spec.alpha)
                }
            })
            .collect()
    })
}

/// Mean of `|x|^{-α}` over the origin cell `∏[-h_a/2, h_a/2]`.
///
/// The cell splits into `2N` pyramids with apex at the origin. On each the
/// radial integral is `a^{N−α}/(N−α)`, leaving a smooth integral over the
/// base face that Gauss–Legendre resolves to machine precision.
pub fn origin_cell_average(grid: &Grid, alpha: f64) -> f64 {
    let dim = grid.dim();
    let half: Vec<f64> = (0..dim).map(|a| 0.5 * grid.spacing(a)).collect();
    let n = dim as f64;
    let (x, w) = gauss_legendre(32);
    let mut total = 0.0;
    for face in 0..dim {
        let others: Vec<f64> =
            (0..dim).filter(|&b| b != face).map(|b| half[b] / half[face]).collect();
        let face_integral = match others.len() {
            0 => 1.0,
            1 => x
                .iter()
                .zip(&w)
                .map(|(y, wy)| wy * (1.0 + (others[0] * y).powi(2)).powf(-0.5 * alpha))
                .sum(),
            _ => {
                let mut s = 0.0;
                for (y1, w1) in x.iter().zip(&w) {
                    for (y2, w2) in x.iter().zip(&w) {
                        let r2 = 1.0 + (others[0] * y1).powi(2) + (others[1] * y2).powi(2);
                        s += w1 * w2 * r2.powf(-0.5 * alpha);
                    }
                }
                s
            }
        };
        let jac: f64 = others.iter().product();
        total += 2.0 * half[face].powf(n - alpha) / (n - alpha) * jac * face_integral;
    }
    total / grid.cell_volume()
}

/// `∫ V|u|²` with the sampled potential (the energy carries `−½` of this).
pub fn potential_energy(u: &ComplexField, spec: &PotentialSpec) -> f64 {
    let v = sample_potential(u.grid(), spec);
    u.grid().cell_volume() * u.values().iter().zip(v.iter()).map(|(z, v)| v * z.norm_sqr()).sum::<f64>()
}

/// Conjugate Hölder exponents `(r', s')` used for the inner and outer
/// regions of the unit-ball split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundExponents {
    pub r_conj: f64,
    pub s_conj: f64,
}

pub fn bound_exponents(dim: usize, alpha: f64) -> BoundExponents {
    let n = dim as f64;
    let center = n / (n - alpha);
    let mut r_conj = center * (1.0 + BOUND_TAU);
    if dim >= 3 {
        // keep the Gagliardo–Nirenberg exponent below 4/(N−2)
        let upper = n / (n - 2.0);
        r_conj = r_conj.min(0.5 * (center + upper));
    }
    let mut s_conj = center * (1.0 - BOUND_TAU);
    if s_conj <= 1.0 {
        s_conj = 0.5 * (1.0 + center);
    }
    BoundExponents { r_conj, s_conj }
}

/// Explicit `δ(ε, ‖u‖₂) ≥ 0` such that
/// `ε‖∇u‖₂² − γ∫|u|²|x|^{-α} ≥ −δ` for every `u` with `‖u‖₂ = mass_l2`.
///
/// Construction: split at `|x| = 1` and apply Hölder with exponents
/// `(r, r')` inside and `(s, s')` outside, bound each `‖u‖²_{2t'}` by the
/// sharp Gagliardo–Nirenberg inequality, and absorb each resulting
/// `A·‖∇u‖^b` (with `b < 2`) into `(ε/2)‖∇u‖²` through Young's inequality
/// at its optimal split.
pub fn bound_delta(eps: f64, mass_l2: f64, spec: &PotentialSpec, dim: usize) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {eps} must be positive")));
    }
    if spec.gamma <= 0.0 || mass_l2 == 0.0 {
        return Ok(0.0);
    }
    let n = dim as f64;
    let alpha = spec.alpha;
    let omega = sphere_area(dim);
    let exps = bound_exponents(dim, alpha);

    // ‖|x|^{-α} χ_{B1}‖_r and ‖|x|^{-α} χ_{B1^c}‖_s
    let r = exps.r_conj / (exps.r_conj - 1.0);
    let s = exps.s_conj / (exps.s_conj - 1.0);
    let c_inner = (omega / (n - alpha * r)).powf(1.0 / r);
    let c_outer = (omega / (alpha * s - n)).powf(1.0 / s);

    let mut delta = 0.0;
    for (coef, t) in [(c_inner, exps.r_conj), (c_outer, exps.s_conj)] {
        let eta = 2.0 * t - 2.0;
        let q_mass = ground_state_mass_sq(dim, eta + 1.0)?.sqrt();
        let c_gn = gn_constant(dim, eta, q_mass)?;
        let a = (2.0 + 0.5 * eta * (2.0 - n)) / t;
        let b = 0.5 * eta * n / t;
        let amp = spec.gamma * coef * c_gn.powf(1.0 / t) * mass_l2.powf(a);
        // sup_g (amp g^b − (ε/2) g²)
        let half_eps = 0.5 * eps;
        let g_star = (b * amp / (2.0 * half_eps)).powf(1.0 / (2.0 - b));
        delta += amp * g_star.powf(b) * (1.0 - 0.5 * b);
    }
    Ok(delta)
}

/// `ε‖∇u‖₂² − ∫V|u|² + δ(ε, ‖u‖₂)`; non-negative whenever the bound holds.
pub fn verify_lower_bound(u: &ComplexField, eps: f64, spec: &PotentialSpec) -> Result<f64> {
    let delta = bound_delta(eps, u.l2_norm_sq().sqrt(), spec, u.grid().dim())?;
    Ok(eps * u.gradient_norm_sq() - potential_energy(u, spec) + delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn validates_alpha_range() {
        assert!(PotentialSpec::new(1.0, 0.5, 1).is_ok());
        assert!(PotentialSpec::new(1.0, 1.0, 1).is_err());
        assert!(PotentialSpec::new(1.0, 1.5, 2).is_ok());
        assert!(PotentialSpec::new(1.0, 2.0, 3).is_err());
        assert!(PotentialSpec::new(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn samples_point_values() {
        let g = make_grid(1, 8.0, 16).unwrap();
        let zero = sample_potential(&g, &PotentialSpec::new(0.0, 0.5, 1).unwrap());
        assert!(zero.iter().all(|&v| v == 0.0));
        // α must be < 1 in 1D, so check x=2 with α=0.5 and the exact origin rule
        let spec = PotentialSpec::new(1.0, 0.5, 1).unwrap().with_reg_eps(0.0).unwrap();
        let v = sample_potential(&g, &spec);
        let i2 = g.coords(0).iter().position(|&x| x == 2.0).unwrap();
        assert!((v[i2] - 2f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn unit_coupling_coulomb_like_value() {
        // γ=1, α=1 is admissible in 2D; on the axis |x| = 2
        let g = make_grid(2, 8.0, 16).unwrap();
        let spec = PotentialSpec::new(1.0, 1.0, 2).unwrap().with_reg_eps(0.0).unwrap();
        let v = sample_potential(&g, &spec);
        let idx = g.ravel(&[12, 8]);
        assert_eq!(g.position(idx)[..2], [2.0, 0.0]);
        assert!((v[idx] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn origin_cell_average_1d_closed_form() {
        let g = make_grid(1, 40.0, 1024).unwrap();
        let h = g.spacing(0);
        // (1/h)∫_{-h/2}^{h/2} |x|^{-1/2} dx = 4√(h/2)/h
        let oracle = 4.0 * (0.5 * h).sqrt() / h;
        let got = origin_cell_average(&g, 0.5);
        assert!((got - oracle).abs() < 1e-12 * oracle, "{got} vs {oracle}");
    }

    #[test]
    fn origin_cell_average_3d_against_brute_force() {
        let g = make_grid(3, 8.0, 8).unwrap();
        let h = g.spacing(0);
        let alpha = 1.2;
        // midpoint rule on a fine subgrid avoiding the singular point
        let n = 60;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let p = |m: usize| -0.5 * h + (m as f64 + 0.5) * h / n as f64;
                    let r2 = p(i).powi(2) + p(j).powi(2) + p(k).powi(2);
                    s += r2.powf(-0.5 * alpha);
                }
            }
        }
        let brute = s / (n * n * n) as f64;
        let got = origin_cell_average(&g, alpha);
        assert!((got - brute).abs() < 2e-3 * got, "{got} vs {brute}");
    }

    #[test]
    fn potential_energy_matches_direct_quadrature() {
        let g = make_grid(1, 40.0, 1024).unwrap();
        let spec = PotentialSpec::new(1.0, 0.5, 1).unwrap();
        let u = ComplexField::from_real_fn(&g, |x| (-(x[0] - 6.0).powi(2)).exp());
        let h = g.spacing(0);
        let oracle: f64 = g
            .coords(0)
            .iter()
            .map(|&x| (-(x - 6.0f64).powi(2)).exp().powi(2) / (x * x + 0.25 * h * h).powf(0.25))
            .sum::<f64>()
            * h;
        assert!((potential_energy(&u, &spec) - oracle).abs() < 1e-10);
        assert_eq!(potential_energy(&u, &PotentialSpec::new(0.0, 0.5, 1).unwrap()), 0.0);
    }

    #[test]
    fn potential_energy_dilation_scaling() {
        let g = make_grid(1, 40.0, 1024).unwrap();
        // softening perturbs exact homogeneity by O(eps^2/|x|^2)
        let spec = PotentialSpec::new(1.0, 0.5, 1).unwrap().with_reg_eps(0.0).unwrap();
        let u = ComplexField::from_real_fn(&g, |x| (-(x[0] - 5.0).powi(2)).exp());
        for lambda in [0.5, 2.0] {
            let lhs = potential_energy(&u.dilate(lambda), &spec);
            let rhs = lambda.powf(0.5) * potential_energy(&u, &spec);
            assert!((lhs / rhs - 1.0).abs() < 1e-6, "λ={lambda}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn exponent_choices_are_admissible() {
        for (dim, alpha) in [(1, 0.5), (1, 0.05), (2, 1.0), (2, 1.9), (3, 0.5), (3, 1.9)] {
            let n = dim as f64;
            let e = bound_exponents(dim, alpha);
            let center = n / (n - alpha);
            assert!(e.r_conj > center && e.s_conj < center && e.s_conj > 1.0);
            let r = e.r_conj / (e.r_conj - 1.0);
            let s = e.s_conj / (e.s_conj - 1.0);
            assert!(r < n / alpha && s > n / alpha);
            let b = n - n / e.r_conj;
            assert!(b > 0.0 && b < 2.0);
        }
    }

    #[test]
    fn delta_trivial_cases() {
        let neg = PotentialSpec::new(-1.0, 0.5, 1).unwrap();
        assert_eq!(bound_delta(0.25, 1.0, &neg, 1).unwrap(), 0.0);
        let pos = PotentialSpec::new(1.0, 0.5, 1).unwrap();
        assert_eq!(bound_delta(0.25, 0.0, &pos, 1).unwrap(), 0.0);
        let d = bound_delta(0.25, 1.0, &pos, 1).unwrap();
        assert!(d.is_finite() && d > 0.0);
        // smaller ε needs a larger constant
        assert!(bound_delta(0.1, 1.0, &pos, 1).unwrap() > d);
        assert!(bound_delta(0.0, 1.0, &pos, 1).is_err());
    }

    #[test]
    fn lower_bound_on_dilated_gaussians() {
        let g = make_grid(1, 40.0, 2048).unwrap();
        let spec = PotentialSpec::new(1.0, 0.5, 1).unwrap();
        let u = ComplexField::from_real_fn(&g, |x| (-x[0] * x[0]).exp());
        let u = u.scaled(u.l2_norm_sq().sqrt().recip());
        for lambda in [0.5, 1.0, 2.0, 4.0] {
            let margin = verify_lower_bound(&u.dilate(lambda), 0.25, &spec).unwrap();
            assert!(margin >= 0.0, "λ={lambda}: margin {margin}");
        }
        let neg = PotentialSpec::new(-0.5, 0.5, 1).unwrap();
        assert!(verify_lower_bound(&u, 0.1, &neg).unwrap() >= 0.0);
    }
}
