//! Nonlinearities, the energy functional, the standing-wave frequency and
//! the stationary-equation residual.
//!
//! With `V = γ|x|^{-α}` and `f(u) = g(x)u`, the energy is
//! `E(u) = ½‖∇u‖² − ½∫V|u|² − ∫F(u)` and a standing wave solves
//! `−Δφ − Vφ + ωφ = f(φ)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::critical_exponents;
use crate::error::{Error, Result};
use crate::field::{gradient_norm_sq_from_spectrum, ComplexField};
use crate::grid::Grid;
use crate::potential::{sample_potential, PotentialSpec};
use crate::riesz::{abs_pow, riesz_convolve, RieszKernel, RieszSpec};

/// Relative tolerance for deciding that an exponent sits at the critical value.
pub const CRITICAL_REL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NonlinearitySpec {
    Power { p: f64 },
    Hartree { q: f64, beta: f64 },
    DoublePower { p1: f64, p2: f64 },
    DoubleHartree { q1: f64, q2: f64, beta: f64 },
    Mixed { q: f64, beta: f64, p: f64 },
}

/// One additive piece of a nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "term", rename_all = "snake_case")]
pub enum Term {
    Power { p: f64 },
    Hartree { q: f64, beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ComponentClass {
    pub term: Term,
    pub critical_exponent: f64,
    pub criticality: Criticality,
}

fn upper_power(dim: usize) -> f64 {
    if dim <= 2 {
        f64::INFINITY
    } else {
        (dim as f64 + 2.0) / (dim as f64 - 2.0)
    }
}

fn upper_hartree(dim: usize, beta: f64) -> f64 {
    if dim <= 2 {
        f64::INFINITY
    } else {
        (dim as f64 + beta) / (dim as f64 - 2.0)
    }
}

impl Term {
    pub fn validate(&self, dim: usize, kind: &'static str) -> Result<()> {
        match *self {
            Term::Power { p } => {
                let hi = upper_power(dim);
                if !(p > 1.0 && p < hi) {
                    return Err(Error::InvalidExponent {
                        kind,
                        detail: format!("power exponent p={p} must satisfy 1 < p < {hi} for N={dim}"),
                    });
                }
            }
            Term::Hartree { q, beta } => {
                let n = dim as f64;
                if !(beta > 0.0 && beta < n) {
                    return Err(Error::InvalidExponent {
                        kind,
                        detail: format!("beta={beta} must satisfy 0 < beta < {dim}"),
                    });
                }
                let lo = 1.0 + beta / n;
                let hi = upper_hartree(dim, beta);
                if !(q > lo && q < hi) {
                    return Err(Error::InvalidExponent {
                        kind,
                        detail: format!(
                            "Choquard exponent q={q} must satisfy {lo} < q < {hi} for N={dim}, beta={beta}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn critical_exponent(&self, dim: usize) -> f64 {
        match *self {
            Term::Power { .. } => critical_exponents(dim, None).0,
            Term::Hartree { beta, .. } => critical_exponents(dim, Some(beta)).1.unwrap_or(f64::NAN),
        }
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            Term::Power { p } => p,
            Term::Hartree { q, .. } => q,
        }
    }

    pub fn classify(&self, dim: usize) -> ComponentClass {
        let c = self.critical_exponent(dim);
        let e = self.exponent();
        let criticality = if (e - c).abs() <= CRITICAL_REL_TOL * c {
            Criticality::Critical
        } else if e < c {
            Criticality::Subcritical
        } else {
            Criticality::Supercritical
        };
        ComponentClass { term: *self, critical_exponent: c, criticality }
    }

    /// Exponent `s` with `term(λ^{N/2}u(λ·)) = λ^s term(u)`.
    pub fn scaling_exponent(&self, dim: usize) -> f64 {
        let n = dim as f64;
        match *self {
            Term::Power { p } => 0.5 * (p - 1.0) * n,
            Term::Hartree { q, beta } => n * q - n - beta,
        }
    }
}

impl NonlinearitySpec {
    pub fn kind(&self) -> &'static str {
        match self {
            NonlinearitySpec::Power { .. } => "power",
            NonlinearitySpec::Hartree { .. } => "hartree",
            NonlinearitySpec::DoublePower { .. } => "double_power",
            NonlinearitySpec::DoubleHartree { .. } => "double_hartree",
            NonlinearitySpec::Mixed { .. } => "mixed",
        }
    }

    pub fn terms(&self) -> Vec<Term> {
        match *self {
            NonlinearitySpec::Power { p } => vec![Term::Power { p }],
            NonlinearitySpec::Hartree { q, beta } => vec![Term::Hartree { q, beta }],
            NonlinearitySpec::DoublePower { p1, p2 } => vec![Term::Power { p: p1 }, Term::Power { p: p2 }],
            NonlinearitySpec::DoubleHartree { q1, q2, beta } => {
                vec![Term::Hartree { q: q1, beta }, Term::Hartree { q: q2, beta }]
            }
            NonlinearitySpec::Mixed { q, beta, p } => vec![Term::Hartree { q, beta }, Term::Power { p }],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        let kind = self.kind();
        for t in self.terms() {
            t.validate(dim, kind)?;
        }
        match *self {
            NonlinearitySpec::DoublePower { p1, p2 } if p1 >= p2 => Err(Error::InvalidExponent {
                kind,
                detail: format!("double power requires p1 < p2, got p1={p1}, p2={p2}"),
            }),
            NonlinearitySpec::DoubleHartree { q1, q2, .. } if q1 >= q2 => Err(Error::InvalidExponent {
                kind,
                detail: format!("double Choquard requires q1 < q2, got q1={q1}, q2={q2}"),
            }),
            _ => Ok(()),
        }
    }
}

/// Labels each component relative to `p_c = 1+4/N` or `q_c = 1+(2+β)/N`.
pub fn classify(spec: &NonlinearitySpec, dim: usize) -> Vec<ComponentClass> {
    spec.terms().iter().map(|t| t.classify(dim)).collect()
}

impl fmt::Display for NonlinearitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            NonlinearitySpec::Power { p } => write!(f, "power(p={p})"),
            NonlinearitySpec::Hartree { q, beta } => write!(f, "hartree(q={q},beta={beta})"),
            NonlinearitySpec::DoublePower { p1, p2 } => write!(f, "double_power(p1={p1},p2={p2})"),
            NonlinearitySpec::DoubleHartree { q1, q2, beta } => {
                write!(f, "double_hartree(q1={q1},q2={q2},beta={beta})")
            }
            NonlinearitySpec::Mixed { q, beta, p } => write!(f, "mixed(q={q},beta={beta},p={p})"),
        }
    }
}

impl FromStr for NonlinearitySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Parse(format!("nonlinearity '{s}': {msg}"));
        let s_trim = s.trim();
        let open = s_trim.find('(').ok_or_else(|| bad("expected name(key=value,...)"))?;
        if !s_trim.ends_with(')') {
            return Err(bad("missing closing parenthesis"));
        }
        let name = s_trim[..open].trim();
        let body = &s_trim[open + 1..s_trim.len() - 1];
        let mut pairs: Vec<(String, f64)> = Vec::new();
        for item in body.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let k = k.trim().to_string();
            let v: f64 = v.trim().parse().map_err(|_| bad(&format!("'{}' is not a number", v.trim())))?;
            if pairs.iter().any(|(seen, _)| *seen == k) {
                return Err(bad(&format!("duplicate key '{k}'")));
            }
            pairs.push((k, v));
        }
        let expected: &[&str] = match name {
            "power" => &["p"],
            "hartree" => &["q", "beta"],
            "double_power" => &["p1", "p2"],
            "double_hartree" => &["q1", "q2", "beta"],
            "mixed" => &["q", "beta", "p"],
            _ => return Err(bad(&format!("unknown kind '{name}'"))),
        };
        for (k, _) in &pairs {
            if !expected.contains(&k.as_str()) {
                return Err(bad(&format!("unknown key '{k}'")));
            }
        }
        let get = |key: &str| {
            pairs
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| bad(&format!("missing key '{key}'")))
        };
        Ok(match name {
            "power" => NonlinearitySpec::Power { p: get("p")? },
            "hartree" => NonlinearitySpec::Hartree { q: get("q")?, beta: get("beta")? },
            "double_power" => NonlinearitySpec::DoublePower { p1: get("p1")?, p2: get("p2")? },
            "double_hartree" => {
                NonlinearitySpec::DoubleHartree { q1: get("q1")?, q2: get("q2")?, beta: get("beta")? }
            }
            _ => NonlinearitySpec::Mixed { q: get("q")?, beta: get("beta")?, p: get("p")? },
        })
    }
}

impl From<NonlinearitySpec> for String {
    fn from(spec: NonlinearitySpec) -> String {
        spec.to_string()
    }
}

impl TryFrom<String> for NonlinearitySpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Grid, potential, nonlinearity, Riesz multiplier choice and target mass.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub potential: PotentialSpec,
    pub nonlinearity: NonlinearitySpec,
    pub rho: f64,
    pub kernel: RieszKernel,
}

impl ProblemSpec {
    pub fn new(grid: Grid, potential: PotentialSpec, nonlinearity: NonlinearitySpec, rho: f64) -> Result<Self> {
        let prob = Self { grid, potential, nonlinearity, rho, kernel: RieszKernel::default() };
        prob.validate()?;
        Ok(prob)
    }

    pub fn with_kernel(mut self, kernel: RieszKernel) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.grid.dim();
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("target mass rho={} must be positive", self.rho)));
        }
        PotentialSpec::new(self.potential.gamma, self.potential.alpha, dim)?;
        if let Some(eps) = self.potential.reg_eps {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(Error::InvalidParameter(format!("reg_eps={eps} must be >= 0")));
            }
        }
        if let RieszKernel::Spectral { zero_mode: crate::riesz::ZeroMode::Value(v) } = self.kernel {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("zero mode {v} is not finite")));
            }
        }
        self.nonlinearity.validate(dim)
    }

    pub fn riesz(&self, beta: f64) -> RieszSpec {
        RieszSpec { beta, kernel: self.kernel }
    }
}

/// `‖u‖₂²`.
pub fn mass(u: &ComplexField) -> f64 {
    u.l2_norm_sq()
}

/// Pointwise coefficient `g` with `f(u) = g u`, plus `∫F(u)` per term.
pub(crate) struct NonlinearParts {
    pub coefficient: Vec<f64>,
    pub term_energies: Vec<f64>,
}

impl NonlinearParts {
    pub fn energy(&self) -> f64 {
        self.term_energies.iter().sum()
    }
}

pub(crate) fn nonlinear_parts(u: &ComplexField, spec: &NonlinearitySpec, kernel: RieszKernel) -> Result<NonlinearParts> {
    let grid = u.grid();
    let dv = grid.cell_volume();
    let abs: Vec<f64> = u.values().iter().map(|z| z.norm()).collect();
    let mut coefficient = vec![0.0; u.len()];
    let mut term_energies = Vec::new();
    for term in spec.terms() {
        match term {
            Term::Power { p } => {
                let mut e = 0.0;
                for (c, &a) in coefficient.iter_mut().zip(&abs) {
                    let g = a.powf(p - 1.0);
                    *c += g;
                    e += g * a * a;
                }
                term_energies.push(dv * e / (p + 1.0));
            }
            Term::Hartree { q, beta } => {
                let rs = RieszSpec { beta, kernel };
                rs.validate(grid.dim())?;
                let density = abs_pow(u, q);
                let pot = riesz_convolve(grid, &density, &rs)?;
                let mut e = 0.0;
                for ((c, &a), (&w, &d)) in coefficient.iter_mut().zip(&abs).zip(pot.iter().zip(&density)) {
                    if a > 0.0 {
                        *c += w * a.powf(q - 2.0);
                    }
                    e += w * d;
                }
                term_energies.push(dv * e / (2.0 * q));
            }
        }
    }
    Ok(NonlinearParts { coefficient, term_energies })
}

/// `∫F(u)`: `∫|u|^{p+1}/(p+1)` per power term and
/// `∫(I_β∗|u|^q)|u|^q/(2q)` per Choquard term.
pub fn nonlinear_energy(u: &ComplexField, spec: &NonlinearitySpec, kernel: RieszKernel) -> Result<f64> {
    Ok(nonlinear_parts(u, spec, kernel)?.energy())
}

/// `f(u)` pointwise.
pub fn apply_nonlinearity(u: &ComplexField, spec: &NonlinearitySpec, kernel: RieszKernel) -> Result<ComplexField> {
    let parts = nonlinear_parts(u, spec, kernel)?;
    let values = u.values().iter().zip(&parts.coefficient).map(|(z, g)| z * g).collect();
    ComplexField::new(u.grid().clone(), values)
}

/// Every quantity of the energy and stationary equation at one field.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub mass: f64,
    /// `‖∇u‖₂²`
    pub kinetic: f64,
    /// `∫V|u|²`
    pub potential: f64,
    /// `∫F(u)`
    pub nonlinear: f64,
    /// `∫F(u)` per nonlinearity term, in `terms()` order.
    pub nonlinear_terms: Vec<f64>,
    /// `Re⟨f(u), u⟩`
    pub pairing: f64,
    pub energy: f64,
    pub omega: f64,
    pub residual: f64,
}

/// Evaluation plus the pointwise fields needed by time steppers.
pub(crate) struct FullEvaluation {
    pub eval: Evaluation,
    pub potential: Arc<Vec<f64>>,
    pub coefficient: Vec<f64>,
}

pub(crate) fn evaluate_full(u: &ComplexField, prob: &ProblemSpec) -> Result<FullEvaluation> {
    u.ensure_grid(&prob.grid)?;
    let grid = u.grid();
    let dv = grid.cell_volume();
    let m = mass(u);
    if m == 0.0 {
        return Err(Error::ZeroField);
    }
    let spectrum = u.spectrum();
    let kinetic = gradient_norm_sq_from_spectrum(grid, &spectrum);
    let v = sample_potential(grid, &prob.potential);
    let parts = nonlinear_parts(u, &prob.nonlinearity, prob.kernel)?;
    let mut potential = 0.0;
    let mut pairing = 0.0;
    for ((z, vv), g) in u.values().iter().zip(v.iter()).zip(&parts.coefficient) {
        let a2 = z.norm_sqr();
        potential += vv * a2;
        pairing += g * a2;
    }
    potential *= dv;
    pairing *= dv;
    let nonlinear = parts.energy();
    let energy = 0.5 * kinetic - 0.5 * potential - nonlinear;
    let omega = (pairing - kinetic + potential) / m;

    let lap = laplacian_from_spectrum(grid, spectrum);
    let mut res_sq = 0.0;
    for (((l, z), vv), g) in lap.iter().zip(u.values()).zip(v.iter()).zip(&parts.coefficient) {
        res_sq += (-l - z * (vv + g) + z * omega).norm_sqr();
    }
    let residual = (res_sq * dv / m).sqrt();
    Ok(FullEvaluation {
        eval: Evaluation {
            mass: m,
            kinetic,
            potential,
            nonlinear,
            nonlinear_terms: parts.term_energies,
            pairing,
            energy,
            omega,
            residual,
        },
        potential: v,
        coefficient: parts.coefficient,
    })
}

fn laplacian_from_spectrum(grid: &Grid, mut spectrum: Vec<Complex64>) -> Vec<Complex64> {
    for (s, k2) in spectrum.iter_mut().zip(grid.k_squared()) {
        *s *= -k2;
    }
    grid.inverse(&mut spectrum);
    spectrum
}

pub fn evaluate(u: &ComplexField, prob: &ProblemSpec) -> Result<Evaluation> {
    Ok(evaluate_full(u, prob)?.eval)
}

/// `E(u) = ½‖∇u‖² − ½∫V|u|² − ∫F(u)`; zero for the zero field.
pub fn total_energy(u: &ComplexField, prob: &ProblemSpec) -> Result<f64> {
    u.ensure_grid(&prob.grid)?;
    let kinetic = u.gradient_norm_sq();
    let potential = crate::potential::potential_energy(u, &prob.potential);
    let nonlinear = nonlinear_energy(u, &prob.nonlinearity, prob.kernel)?;
    Ok(0.5 * kinetic - 0.5 * potential - nonlinear)
}

/// `ω = (Re⟨f(u),u⟩ − ‖∇u‖² + ∫V|u|²)/‖u‖²`.
pub fn frequency_rayleigh(u: &ComplexField, prob: &ProblemSpec) -> Result<f64> {
    Ok(evaluate(u, prob)?.omega)
}

/// `‖−Δu − Vu + ωu − f(u)‖₂/‖u‖₂` at the Rayleigh frequency.
pub fn el_residual(u: &ComplexField, prob: &ProblemSpec) -> Result<f64> {
    Ok(evaluate(u, prob)?.residual)
}

/// `−Δu − Vu − f(u)`, the `L²` gradient of the energy.
pub fn energy_gradient(u: &ComplexField, prob: &ProblemSpec) -> Result<ComplexField> {
    u.ensure_grid(&prob.grid)?;
    let grid = u.grid();
    let v = sample_potential(grid, &prob.potential);
    let parts = nonlinear_parts(u, &prob.nonlinearity, prob.kernel)?;
    let mut lap = laplacian_from_spectrum(grid, u.spectrum());
    for (((r, z), vv), g) in lap.iter_mut().zip(u.values()).zip(v.iter()).zip(&parts.coefficient) {
        *r = -*r - z * (vv + g);
    }
    ComplexField::new(grid.clone(), lap)
}
