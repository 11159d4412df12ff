//! Complex fields sampled on a [`Grid`]: norms, Sobolev inner products,
//! spectral derivatives, the mass-preserving dilation and the flat binary
//! record format.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Fraction of spectral or spatial weight above which [`ComplexField::dilate`]
/// logs an aliasing warning.
pub const DILATION_LOSS_WARN: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl PartialEq for ComplexField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.values == other.values
    }
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self { grid: grid.clone(), values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    /// Sample `f` at every grid point. Positions are passed as a slice of
    /// length `dim`.
    pub fn from_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> Complex64,
    {
        let dim = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.position(i)[..dim])).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn from_real_fn<F>(grid: &Grid, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64,
    {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    /// Field whose normalized spectrum is `spectrum`.
    pub fn from_spectrum(grid: &Grid, mut spectrum: Vec<Complex64>) -> Self {
        grid.inverse(&mut spectrum);
        Self { grid: grid.clone(), values: spectrum }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Normalized forward spectrum.
    pub fn spectrum(&self) -> Vec<Complex64> {
        let mut s = self.values.clone();
        self.grid.forward(&mut s);
        s
    }

    pub fn ensure_same_grid(&self, other: &Self) -> Result<()> {
        self.ensure_grid(&other.grid)
    }

    pub fn ensure_grid(&self, grid: &Grid) -> Result<()> {
        if self.grid == *grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|z| z * factor)
    }

    pub fn rotated(&self, theta: f64) -> Self {
        let phase = Complex64::from_polar(1.0, theta);
        self.map(|z| z * phase)
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&z| f(z)).collect() }
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, c: Complex64, other: &Self) -> Result<Self> {
        self.ensure_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(Complex64::new(-1.0, 0.0), other)
    }

    /// `(Σ|u_j|^r h^N)^{1/r}`.
    pub fn lp_norm(&self, r: f64) -> Result<f64> {
        if !(r >= 1.0 && r.is_finite()) {
            return Err(Error::InvalidParameter(format!("Lebesgue exponent {r} must be >= 1")));
        }
        let h = self.grid.cell_volume();
        let sum: f64 = if r == 2.0 {
            self.values.iter().map(|z| z.norm_sqr()).sum()
        } else {
            self.values.iter().map(|z| z.norm().powf(r)).sum()
        };
        Ok((sum * h).powf(1.0 / r))
    }

    /// `∫|u|²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    /// `∫ u·conj(v)`.
    pub fn l2_inner(&self, other: &Self) -> Result<Complex64> {
        self.ensure_same_grid(other)?;
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        Ok(s * self.grid.cell_volume())
    }

    /// `∫|∇u|²` evaluated spectrally.
    pub fn gradient_norm_sq(&self) -> f64 {
        gradient_norm_sq_from_spectrum(&self.grid, &self.spectrum())
    }

    /// `⟨u,v⟩_{L²} + ⟨∇u,∇v⟩_{L²}`, linear in `self`, antilinear in `other`.
    pub fn h1_inner(&self, other: &Self) -> Result<Complex64> {
        self.ensure_same_grid(other)?;
        let su = self.spectrum();
        let sv = other.spectrum();
        let vol = self.grid.volume();
        let s: Complex64 = su
            .iter()
            .zip(&sv)
            .zip(self.grid.k_squared())
            .map(|((a, b), k2)| a * b.conj() * (1.0 + k2))
            .sum();
        Ok(s * vol)
    }

    pub fn h1_norm_sq(&self) -> f64 {
        h1_norm_sq_from_spectrum(&self.grid, &self.spectrum())
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self) -> Self {
        let mut s = self.spectrum();
        s.iter_mut().zip(self.grid.k_squared()).for_each(|(z, k2)| *z *= -k2);
        Self::from_spectrum(&self.grid, s)
    }

    /// Spectral derivative along `axis`; the Nyquist mode is dropped.
    pub fn partial_derivative(&self, axis: usize) -> Self {
        let mut s = self.spectrum();
        let m = self.grid.points(axis);
        let ks = self.grid.wavenumbers(axis);
        for (idx, z) in s.iter_mut().enumerate() {
            let j = self.grid.unravel(idx)[axis];
            *z *= if j == m / 2 { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, ks[j]) };
        }
        Self::from_spectrum(&self.grid, s)
    }

    /// Translate by `shift` (the result is `u(x - shift)`) using spectral
    /// phase ramps.
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut s = self.spectrum();
        for (idx, z) in s.iter_mut().enumerate() {
            let k = self.grid.wavevector(idx);
            let phase: f64 = k.iter().zip(shift).map(|(k, d)| -k * d).sum();
            *z *= Complex64::from_polar(1.0, phase);
        }
        Self::from_spectrum(&self.grid, s)
    }

    /// Mass-preserving dilation `λ^{N/2} u(λx)`, evaluated by band-limited
    /// (trigonometric) interpolation of the samples.
    ///
    /// The caller keeps `u(λ·)` inside the box and resolved by the grid;
    /// violations are reported through [`ComplexField::dilation_loss`] and a
    /// log warning.
    pub fn dilate(&self, lambda: f64) -> Self {
        assert!(lambda > 0.0 && lambda.is_finite(), "dilation factor must be positive");
        if lambda == 1.0 {
            return self.clone();
        }
        let loss = self.dilation_loss(lambda);
        if loss > DILATION_LOSS_WARN {
            log::warn!("dilation by {lambda} loses a {loss:.3e} fraction of the field (aliasing)");
        }
        let mut values = self.values.clone();
        for axis in 0..self.grid.dim() {
            let matrix = interpolation_matrix(&self.grid, axis, lambda);
            let m = self.grid.points(axis);
            let mut out = vec![Complex64::new(0.0, 0.0); m];
            self.grid.for_each_line(&mut values, axis, |line| {
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &matrix[j * m..(j + 1) * m];
                    *o = row.iter().zip(line.iter()).map(|(w, z)| z * *w).sum();
                }
                line.copy_from_slice(&out);
            });
        }
        let amp = lambda.powf(0.5 * self.grid.dim() as f64);
        values.iter_mut().for_each(|z| *z *= amp);
        Self { grid: self.grid.clone(), values }
    }

    /// Fraction of the field that `dilate(λ)` cannot represent: spectral
    /// weight pushed past Nyquist when `λ > 1`, or mass outside the sampled
    /// window `|x_a| < λL/2` when `λ < 1`.
    pub fn dilation_loss(&self, lambda: f64) -> f64 {
        let total = self.l2_norm_sq();
        if total == 0.0 || lambda == 1.0 {
            return 0.0;
        }
        if lambda > 1.0 {
            let cut = self.grid.nyquist() / lambda;
            let s = self.spectrum();
            let mut lost = 0.0;
            let mut all = 0.0;
            for (idx, z) in s.iter().enumerate() {
                let k = self.grid.wavevector(idx);
                let w = z.norm_sqr();
                all += w;
                if k.iter().any(|c| c.abs() > cut) {
                    lost += w;
                }
            }
            if all > 0.0 { lost / all } else { 0.0 }
        } else {
            let dim = self.grid.dim();
            let lost: f64 = self
                .values
                .iter()
                .enumerate()
                .filter(|(i, _)| {
                    let x = self.grid.position(*i);
                    (0..dim).any(|a| x[a].abs() >= 0.5 * lambda * self.grid.extent(a))
                })
                .map(|(_, z)| z.norm_sqr())
                .sum();
            lost * self.grid.cell_volume() / total
        }
    }

    /// Write the flat binary record: `dim`, extents, point counts (all
    /// little-endian 64-bit), then interleaved re/im `f64` samples in
    /// row-major order.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let dim = self.grid.dim();
        w.write_all(&(dim as u64).to_le_bytes())?;
        for a in 0..dim {
            w.write_all(&self.grid.extent(a).to_le_bytes())?;
        }
        for a in 0..dim {
            w.write_all(&(self.grid.points(a) as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(16 * self.values.len());
        for z in &self.values {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let dim = u64::from_le_bytes(word) as usize;
        if !(1..=3).contains(&dim) {
            return Err(Error::Parse(format!("field record has dimension {dim}")));
        }
        let mut extents = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut word)?;
            extents.push(f64::from_le_bytes(word));
        }
        let mut points = Vec::with_capacity(dim);
        for _ in 0..dim {
            r.read_exact(&mut word)?;
            points.push(u64::from_le_bytes(word) as usize);
        }
        let grid = Grid::with_axes(&extents, &points)?;
        let mut raw = vec![0u8; 16 * grid.len()];
        r.read_exact(&mut raw)?;
        let values = raw
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
        Ok(Self { grid, values })
    }
}

pub(crate) fn gradient_norm_sq_from_spectrum(grid: &Grid, spectrum: &[Complex64]) -> f64 {
    grid.volume()
        * spectrum.iter().zip(grid.k_squared()).map(|(z, k2)| k2 * z.norm_sqr()).sum::<f64>()
}

pub(crate) fn h1_norm_sq_from_spectrum(grid: &Grid, spectrum: &[Complex64]) -> f64 {
    grid.volume()
        * spectrum.iter().zip(grid.k_squared()).map(|(z, k2)| (1.0 + k2) * z.norm_sqr()).sum::<f64>()
}

/// Periodic band-limited interpolation kernel for an even number of points,
/// `sin(πs)·cot(πs/M)/M`, with `s` the offset in grid units.
fn periodic_sinc(s: f64, m: usize) -> f64 {
    let mf = m as f64;
    let s = s - mf * (s / mf).round();
    if s.abs() < 1e-13 {
        return 1.0;
    }
    let t = PI * s / mf;
    (PI * s).sin() * t.cos() / (t.sin() * mf)
}

/// Row-major `M×M` matrix that maps samples along `axis` to the
/// interpolant evaluated at `λ x_j`. Targets outside the box are zero
/// rather than periodic images.
fn interpolation_matrix(grid: &Grid, axis: usize, lambda: f64) -> Vec<f64> {
    let m = grid.points(axis);
    let h = grid.spacing(axis);
    let half = 0.5 * grid.extent(axis);
    let xs = grid.coords(axis);
    let mut out = vec![0.0; m * m];
    for (j, xj) in xs.iter().enumerate() {
        let y = lambda * xj;
        if y < -half || y >= half {
            continue;
        }
        for (col, xm) in xs.iter().enumerate() {
            out[j * m + col] = periodic_sinc((y - xm) / h, m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    fn soliton(grid: &Grid) -> ComplexField {
        ComplexField::from_real_fn(grid, |x| 2f64.sqrt() * sech(x[0]))
    }

    #[test]
    fn lp_norm_of_constant_and_zero() {
        let g = make_grid(1, 2.0, 16).unwrap();
        let one = ComplexField::from_real_fn(&g, |_| 1.0);
        assert!((one.lp_norm(2.0).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        let z = ComplexField::zeros(&g);
        for r in [1.0, 2.0, 3.5] {
            assert_eq!(z.lp_norm(r).unwrap(), 0.0);
        }
        assert!(one.lp_norm(0.5).is_err());
    }

    #[test]
    fn soliton_norms_match_closed_form() {
        let g = make_grid(1, 40.0, 1024).unwrap();
        let q = soliton(&g);
        // ∫2sech² = 4 and ∫Q'² = 4/3
        assert!((q.lp_norm(2.0).unwrap() - 2.0).abs() < 1e-8);
        assert!((q.gradient_norm_sq() - 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn plane_wave_gradient() {
        let l = 2.0 * PI;
        let g = make_grid(1, l, 64).unwrap();
        let k0 = 2.0 * PI / l;
        let u = ComplexField::from_fn(&g, |x| Complex64::from_polar(1.0, k0 * x[0]));
        assert!((u.gradient_norm_sq() - k0 * k0 * l).abs() < 1e-10);
        let c = ComplexField::from_real_fn(&g, |_| 3.0);
        assert!(c.gradient_norm_sq().abs() < 1e-20);
    }

    #[test]
    fn h1_inner_identities() {
        let l = 2.0 * PI;
        let g = make_grid(1, l, 64).unwrap();
        let a = ComplexField::from_fn(&g, |x| Complex64::from_polar(1.0, x[0]));
        let b = ComplexField::from_fn(&g, |x| Complex64::from_polar(1.0, 3.0 * x[0]));
        assert!(a.h1_inner(&b).unwrap().norm() < 1e-12);

        let u = ComplexField::from_fn(&g, |x| Complex64::new(x[0].sin().exp(), (2.0 * x[0]).cos()));
        let uu = u.h1_inner(&u).unwrap();
        assert!(uu.im.abs() < 1e-12 && uu.re > 0.0);
        assert!((uu.re - u.h1_norm_sq()).abs() < 1e-12 * uu.re);
        let iu = u.map(|z| z * Complex64::i());
        let w = u.h1_inner(&iu).unwrap();
        assert!((w - Complex64::new(0.0, -uu.re)).norm() < 1e-12 * uu.re);
        let g2 = make_grid(1, l, 32).unwrap();
        assert!(matches!(u.h1_inner(&ComplexField::zeros(&g2)), Err(Error::GridMismatch)));
    }

    #[test]
    fn gaussian_dilation_matches_substitution() {
        let g = make_grid(1, 20.0, 256).unwrap();
        let u = ComplexField::from_real_fn(&g, |x| (-x[0] * x[0]).exp());
        let d = u.dilate(2.0);
        let exact = ComplexField::from_real_fn(&g, |x| 2f64.sqrt() * (-4.0 * x[0] * x[0]).exp());
        let err = d.sub(&exact).unwrap().lp_norm(2.0).unwrap();
        assert!(err < 1e-10, "err {err}");
        assert!((d.l2_norm_sq() / u.l2_norm_sq() - 1.0).abs() < 1e-8);
        assert_eq!(u.dilate(1.0), u);
    }

    #[test]
    fn dilation_scales_kinetic_energy() {
        let g = make_grid(2, 24.0, 128).unwrap();
        let u = ComplexField::from_fn(&g, |x| {
            let r2 = x[0] * x[0] + 0.5 * x[1] * x[1];
            Complex64::from_polar((-r2).exp(), 0.3 * x[0])
        });
        for lambda in [0.5, 1.5, 2.0] {
            let d = u.dilate(lambda);
            let ratio = d.gradient_norm_sq() / (lambda * lambda * u.gradient_norm_sq());
            assert!((ratio - 1.0).abs() < 1e-8, "λ={lambda}: {ratio}");
            assert!((d.l2_norm_sq() / u.l2_norm_sq() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn dilation_round_trip() {
        let g = make_grid(1, 30.0, 256).unwrap();
        let u = ComplexField::from_fn(&g, |x| Complex64::new((-(x[0] - 1.0).powi(2)).exp(), 0.5 * (-x[0] * x[0] / 2.0).exp()));
        let back = u.dilate(1.7).dilate(1.0 / 1.7);
        let err = back.sub(&u).unwrap().lp_norm(2.0).unwrap() / u.lp_norm(2.0).unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn dilation_loss_flags_aliasing() {
        let g = make_grid(1, 20.0, 64).unwrap();
        let u = ComplexField::from_real_fn(&g, |x| (-x[0] * x[0]).exp());
        assert!(u.dilation_loss(1.5) < 1e-10);
        assert!(u.dilation_loss(20.0) > 1e-6);
        assert!(u.dilation_loss(0.05) > 1e-6);
    }

    #[test]
    fn translation_matches_shifted_gaussian() {
        let g = make_grid(1, 30.0, 256).unwrap();
        let u = ComplexField::from_real_fn(&g, |x| (-x[0] * x[0]).exp());
        let t = u.translated(&[1.3]);
        let exact = ComplexField::from_real_fn(&g, |x| (-(x[0] - 1.3).powi(2)).exp());
        assert!(t.sub(&exact).unwrap().lp_norm(2.0).unwrap() < 1e-10);
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let g = Grid::with_axes(&[4.0, 6.0], &[8, 10]).unwrap();
        let u = ComplexField::from_fn(&g, |x| Complex64::new(x[0], x[1]));
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 * (1 + 2 + 2) + 16 * 80);
        assert_eq!(u64::from_le_bytes(buf[..8].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(buf[16..24].try_into().unwrap()), 6.0);
        assert_eq!(u64::from_le_bytes(buf[24..32].try_into().unwrap()), 8);
        // second sample is (x0, x1 + h1)
        let re = f64::from_le_bytes(buf[56..64].try_into().unwrap());
        let im = f64::from_le_bytes(buf[64..72].try_into().unwrap());
        assert_eq!((re, im), (-2.0, -3.0 + 0.6));
        let back = ComplexField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, u);
    }
}
