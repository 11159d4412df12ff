//! Small special-function and quadrature helpers.

use std::f64::consts::PI;
use std::sync::LazyLock;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Surface area of the unit sphere in `R^N` (2 for `N = 1`).
pub fn sphere_area(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * PI.powf(0.5 * n) / gamma(0.5 * n)
}

/// Prefactor of the Riesz kernel `I_β(x) = c / |x|^{N-β}` whose Fourier
/// symbol is `|k|^{-β}`.
pub fn riesz_prefactor(dim: usize, beta: f64) -> f64 {
    let n = dim as f64;
    gamma(0.5 * (n - beta)) / (gamma(0.5 * beta) * PI.powf(0.5 * n) * 2f64.powf(beta))
}

/// Bessel function of the first kind, order zero.
///
/// Small arguments use the trapezoid rule on `(1/π)∫_0^π cos(z cos θ) dθ`,
/// which converges geometrically for this periodic integrand; large ones
/// use the Hankel asymptotic expansion, truncated at its smallest term.
pub fn bessel_j0(z: f64) -> f64 {
    let z = z.abs();
    if z < 30.0 {
        let n = (z as usize) + 40;
        let dt = PI / n as f64;
        let mut s = 0.5 * (z.cos() + (-z).cos());
        for i in 1..n {
            s += (z * (i as f64 * dt).cos()).cos();
        }
        return s / n as f64;
    }
    // a_k = ∏_{j=1..k} (-(2j-1)²) / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= -odd * odd / (k as f64 * 8.0 * z);
        }
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-18 {
            break;
        }
    }
    let chi = z - 0.25 * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

pub(crate) static GL16: LazyLock<(Vec<f64>, Vec<f64>)> = LazyLock::new(|| gauss_legendre(16));

/// Integrate `f` over `[a, b]` with one 16-point Gauss–Legendre panel.
pub(crate) fn gl16<F: Fn(f64) -> f64>(a: f64, b: f64, f: F) -> f64 {
    let (x, w) = &*GL16;
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    x.iter().zip(w).map(|(x, w)| w * f(mid + half * x)).sum::<f64>() * half
}
