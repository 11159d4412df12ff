//! Positive reference profiles by Petviashvili iteration:
//! `−ΔQ + Q = Q^p` and `−ΔW + W = (I_β∗|W|^q)|W|^{q−2}W`.

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::energy::Term;
use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::Grid;
use crate::riesz::{riesz_convolve, RieszKernel, RieszSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReferenceKind {
    Q,
    W,
}

impl std::fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReferenceKind::Q => "Q",
            ReferenceKind::W => "W",
        })
    }
}

#[derive(Clone, Debug)]
pub enum InitialGuess {
    /// `e^{−|x|²}`
    Gaussian,
    /// `∏ sech(x_a)`
    Sech,
    Field(ComplexField),
}

#[derive(Clone, Debug)]
pub struct PetviashviliOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Largest admissible ratio of the boundary maximum to the peak.
    pub decay_tol: f64,
    pub init: InitialGuess,
    pub kernel: RieszKernel,
}

impl Default for PetviashviliOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 5000,
            decay_tol: 1e-10,
            init: InitialGuess::Gaussian,
            kernel: RieszKernel::Truncated,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReferenceState {
    pub kind: ReferenceKind,
    pub exponent: f64,
    pub beta: Option<f64>,
    #[serde(skip)]
    pub field: ComplexField,
    pub mass_sq: f64,
    pub residual: f64,
    pub iterations: usize,
    pub boundary_ratio: f64,
    /// Largest deviation under coordinate reflections and axis swaps,
    /// relative to the peak.
    pub symmetry_error: f64,
}

/// Equation data for one reference profile.
#[derive(Clone, Copy, Debug)]
struct Equation {
    term: Term,
    kernel: RieszKernel,
}

impl Equation {
    fn new(kind: ReferenceKind, dim: usize, exponent: f64, beta: Option<f64>, kernel: RieszKernel) -> Result<Self> {
        let term = match (kind, beta) {
            (ReferenceKind::Q, _) => Term::Power { p: exponent },
            (ReferenceKind::W, Some(beta)) => Term::Hartree { q: exponent, beta },
            (ReferenceKind::W, None) => {
                return Err(Error::InvalidParameter("W reference needs beta".into()));
            }
        };
        term.validate(dim, if kind == ReferenceKind::Q { "power" } else { "hartree" })?;
        Ok(Self { term, kernel })
    }

    /// Homogeneity degree of the nonlinearity.
    fn degree(&self) -> f64 {
        match self.term {
            Term::Power { p } => p,
            Term::Hartree { q, .. } => 2.0 * q - 1.0,
        }
    }

    fn nonlinearity(&self, grid: &Grid, u: &[f64]) -> Result<Vec<f64>> {
        match self.term {
            Term::Power { p } => Ok(u.iter().map(|&x| x.abs().powf(p - 1.0) * x).collect()),
            Term::Hartree { q, beta } => {
                let density: Vec<f64> = u.iter().map(|x| x.abs().powf(q)).collect();
                let rs = RieszSpec { beta, kernel: self.kernel };
                let pot = riesz_convolve(grid, &density, &rs)?;
                Ok(u
                    .iter()
                    .zip(&pot)
                    .map(|(&x, &w)| if x == 0.0 { 0.0 } else { w * x.abs().powf(q - 2.0) * x })
                    .collect())
            }
        }
    }

    /// One stabilized update, returning the new profile and the relative
    /// residual `‖−Δu + u − N(u)‖₂/‖u‖₂` of the input.
    fn step(&self, grid: &Grid, u: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n_real = self.nonlinearity(grid, u)?;
        let mut u_hat: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut n_hat: Vec<Complex64> = n_real.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        grid.forward(&mut u_hat);
        grid.forward(&mut n_hat);
        let k2 = grid.k_squared();
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        let mut res = 0.0;
        let mut norm = 0.0;
        for ((uh, nh), k2) in u_hat.iter().zip(&n_hat).zip(k2) {
            let l = 1.0 + k2;
            lhs += l * uh.norm_sqr();
            rhs += (uh.conj() * nh).re;
            res += (uh * l - nh).norm_sqr();
            norm += uh.norm_sqr();
        }
        if !(rhs > 0.0) {
            return Err(Error::NonFinite("Petviashvili stabilizing factor is not positive".into()));
        }
        let stab = self.degree() / (self.degree() - 1.0);
        let factor = (lhs / rhs).powf(stab);
        for ((uh, nh), k2) in u_hat.iter_mut().zip(&n_hat).zip(k2) {
            *uh = nh * (factor / (1.0 + k2));
        }
        grid.inverse(&mut u_hat);
        Ok((u_hat.into_iter().map(|z| z.re).collect(), (res / norm).sqrt()))
    }
}

fn initial_profile(grid: &Grid, init: &InitialGuess) -> Result<Vec<f64>> {
    Ok(match init {
        InitialGuess::Gaussian => (0..grid.len())
            .map(|i| {
                let x = grid.position(i);
                (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp()
            })
            .collect(),
        InitialGuess::Sech => (0..grid.len())
            .map(|i| grid.position(i)[..grid.dim()].iter().map(|x| 1.0 / x.cosh()).product())
            .collect(),
        InitialGuess::Field(f) => {
            f.ensure_grid(grid)?;
            f.values().iter().map(|z| z.re).collect()
        }
    })
}

/// Solve for `Q_p` (`kind = Q`, `exponent = p`) or `W_q` (`kind = W`,
/// `exponent = q`, `beta` given) with the default options and tolerance `tol`.
pub fn petviashvili_solve(
    kind: ReferenceKind,
    exponent: f64,
    beta: Option<f64>,
    grid: &Grid,
    tol: f64,
) -> Result<ReferenceState> {
    petviashvili_solve_with(kind, exponent, beta, grid, &PetviashviliOptions { tol, ..Default::default() })
}

pub fn petviashvili_solve_with(
    kind: ReferenceKind,
    exponent: f64,
    beta: Option<f64>,
    grid: &Grid,
    opts: &PetviashviliOptions,
) -> Result<ReferenceState> {
    let eq = Equation::new(kind, grid.dim(), exponent, beta, opts.kernel)?;
    let mut u = initial_profile(grid, &opts.init)?;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let (next, res) = eq.step(grid, &u)?;
        residual = res;
        if !residual.is_finite() {
            return Err(Error::NonFinite(format!("{kind} iteration diverged at step {iterations}")));
        }
        if residual <= opts.tol {
            break;
        }
        u = next;
        iterations += 1;
    }
    debug!("{kind} reference: exponent {exponent}, {iterations} iterations, residual {residual:.3e}");
    if residual > opts.tol {
        return Err(Error::NonConvergence { iterations, residual });
    }
    // Petviashvili may converge to −Q; the profile is positive up to sign.
    if u.iter().sum::<f64>() < 0.0 {
        u.iter_mut().for_each(|x| *x = -*x);
    }
    let field = ComplexField::new(grid.clone(), u.iter().map(|&x| Complex64::new(x, 0.0)).collect())?;
    let boundary_ratio = boundary_ratio(grid, &u);
    if boundary_ratio > opts.decay_tol {
        return Err(Error::BoundaryDecay { ratio: boundary_ratio, tol: opts.decay_tol });
    }
    Ok(ReferenceState {
        kind,
        exponent,
        beta,
        mass_sq: field.l2_norm_sq(),
        symmetry_error: symmetry_error(grid, &u),
        field,
        residual,
        iterations,
        boundary_ratio,
    })
}

/// One more Petviashvili update applied to `field`.
pub fn petviashvili_iterate(
    kind: ReferenceKind,
    exponent: f64,
    beta: Option<f64>,
    field: &ComplexField,
    kernel: RieszKernel,
) -> Result<ComplexField> {
    let grid = field.grid();
    let eq = Equation::new(kind, grid.dim(), exponent, beta, kernel)?;
    let u: Vec<f64> = field.values().iter().map(|z| z.re).collect();
    let (next, _) = eq.step(grid, &u)?;
    ComplexField::new(grid.clone(), next.into_iter().map(|x| Complex64::new(x, 0.0)).collect())
}

/// `‖Q_p‖₂²` or `‖W_q‖₂²`.
pub fn threshold_mass(state: &ReferenceState) -> f64 {
    state.mass_sq
}

fn boundary_ratio(grid: &Grid, u: &[f64]) -> f64 {
    let peak = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut edge = 0.0f64;
    for (i, x) in u.iter().enumerate() {
        let idx = grid.unravel(i);
        if idx[..grid.dim()].contains(&0) {
            edge = edge.max(x.abs());
        }
    }
    edge / peak
}

fn symmetry_error(grid: &Grid, u: &[f64]) -> f64 {
    let dim = grid.dim();
    let peak = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut worst = 0.0f64;
    for (i, &x) in u.iter().enumerate() {
        let idx = grid.unravel(i);
        for axis in 0..dim {
            let mut r = idx;
            let m = grid.points(axis);
            r[axis] = (m - idx[axis]) % m;
            worst = worst.max((x - u[grid.ravel(&r[..dim])]).abs());
        }
        for a in 0..dim {
            for b in a + 1..dim {
                if grid.points(a) == grid.points(b) && grid.extent(a) == grid.extent(b) {
                    let mut s = idx;
                    s.swap(a, b);
                    worst = worst.max((x - u[grid.ravel(&s[..dim])]).abs());
                }
            }
        }
    }
    worst / peak
}
