//! Periodic uniform grids on the box `[-L/2, L/2)^N` and their spectral
//! transforms.
//!
//! Samples are stored row-major (last axis fastest). The forward transform
//! carries the `1/M^N` factor, so the coefficient of the mode `e^{ik·x}` is
//! read off directly and Parseval reads `h^N Σ|u_j|² = L^N Σ|û_k|²` for a
//! cubic box. Wavenumber tables are stored in FFT order: index `j` maps to
//! `n = j` for `j < M/2` and `n = j - M` otherwise, which gives the
//! symmetric set `n ∈ {-M/2, …, M/2-1}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlannerScalar};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 8;

/// Shape metadata of a grid, as written to JSON records and file headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub dim: usize,
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
}

struct Axis {
    extent: f64,
    points: usize,
    spacing: f64,
    coords: Vec<f64>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

struct GridInner {
    axes: Vec<Axis>,
    len: usize,
    k_squared: Vec<f64>,
}

/// A cheap-to-clone handle to an immutable periodic grid.
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

/// Cubic grid with the same extent and point count along every axis.
pub fn make_grid(dim: usize, extent: f64, points: usize) -> Result<Grid> {
    Grid::new(dim, extent, points)
}

impl Grid {
    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        Self::with_axes(&vec![extent; dim], &vec![points; dim])
    }

    pub fn with_axes(extents: &[f64], points: &[usize]) -> Result<Self> {
        let dim = extents.len();
        if !(1..=3).contains(&dim) || points.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "need 1 to 3 axes with matching extents and point counts, got {} and {}",
                extents.len(),
                points.len()
            )));
        }
        // the SIMD planners carry a larger systematic round-trip gain, which
        // shows up as linear mass drift over long propagations
        let mut planner = FftPlannerScalar::new();
        let mut axes = Vec::with_capacity(dim);
        for (&extent, &m) in extents.iter().zip(points) {
            if !(extent.is_finite() && extent > 0.0) {
                return Err(Error::InvalidGrid(format!("extent {extent} must be positive")));
            }
            if m < MIN_POINTS || m % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "point count {m} must be even and at least {MIN_POINTS}"
                )));
            }
            let spacing = extent / m as f64;
            let coords = (0..m).map(|j| -0.5 * extent + j as f64 * spacing).collect();
            let wavenumbers = (0..m)
                .map(|j| {
                    let n = if j < m / 2 { j as f64 } else { j as f64 - m as f64 };
                    2.0 * PI * n / extent
                })
                .collect();
            axes.push(Axis {
                extent,
                points: m,
                spacing,
                coords,
                wavenumbers,
                forward: planner.plan_fft_forward(m),
                inverse: planner.plan_fft_inverse(m),
            });
        }
        let len = points.iter().product();
        let mut k_squared = vec![0.0; len];
        for (idx, k2) in k_squared.iter_mut().enumerate() {
            let mut rem = idx;
            for axis in axes.iter().rev() {
                let j = rem % axis.points;
                rem /= axis.points;
                *k2 += axis.wavenumbers[j] * axis.wavenumbers[j];
            }
        }
        Ok(Grid(Arc::new(GridInner { axes, len, k_squared })))
    }

    pub fn dim(&self) -> usize {
        self.0.axes.len()
    }

    pub fn len(&self) -> usize {
        self.0.len
    }

    pub fn is_empty(&self) -> bool {
        self.0.len == 0
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.0.axes[axis].extent
    }

    pub fn points(&self, axis: usize) -> usize {
        self.0.axes[axis].points
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.0.axes[axis].spacing
    }

    /// Smallest spacing over all axes.
    pub fn min_spacing(&self) -> f64 {
        self.0.axes.iter().map(|a| a.spacing).fold(f64::INFINITY, f64::min)
    }

    /// Smallest box side over all axes.
    pub fn min_extent(&self) -> f64 {
        self.0.axes.iter().map(|a| a.extent).fold(f64::INFINITY, f64::min)
    }

    /// Quadrature weight `h_1 ⋯ h_N` of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.0.axes.iter().map(|a| a.spacing).product()
    }

    pub fn volume(&self) -> f64 {
        self.0.axes.iter().map(|a| a.extent).product()
    }

    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.0.axes[axis].coords
    }

    /// Angular wavenumbers of one axis, in FFT order.
    pub fn wavenumbers(&self, axis: usize) -> &[f64] {
        &self.0.axes[axis].wavenumbers
    }

    /// `|k|²` for every flat index, in FFT order.
    pub fn k_squared(&self) -> &[f64] {
        &self.0.k_squared
    }

    /// Largest wavenumber magnitude along the most coarsely resolved axis.
    pub fn nyquist(&self) -> f64 {
        PI / self.0.axes.iter().map(|a| a.spacing).fold(0.0, f64::max)
    }

    pub fn info(&self) -> GridInfo {
        GridInfo {
            dim: self.dim(),
            extent: self.0.axes.iter().map(|a| a.extent).collect(),
            points: self.0.axes.iter().map(|a| a.points).collect(),
        }
    }

    /// Split a flat index into per-axis indices.
    pub fn unravel(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for (a, axis) in self.0.axes.iter().enumerate().rev() {
            out[a] = idx % axis.points;
            idx /= axis.points;
        }
        out
    }

    pub fn ravel(&self, ijk: &[usize]) -> usize {
        self.0
            .axes
            .iter()
            .zip(ijk)
            .fold(0, |acc, (axis, &i)| acc * axis.points + i)
    }

    /// Physical position of a flat index (unused trailing entries are zero).
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unravel(idx);
        let mut x = [0.0; 3];
        for (a, axis) in self.0.axes.iter().enumerate() {
            x[a] = axis.coords[ijk[a]];
        }
        x
    }

    /// `|x|²` for every sample.
    pub fn radius_squared(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.position(i).iter().map(|c| c * c).sum())
            .collect()
    }

    /// Wavenumber vector of a flat (FFT-ordered) index.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let ijk = self.unravel(idx);
        let mut k = [0.0; 3];
        for (a, axis) in self.0.axes.iter().enumerate() {
            k[a] = axis.wavenumbers[ijk[a]];
        }
        k
    }

    /// Stride (in flat elements) between neighbours along `axis`.
    pub(crate) fn stride(&self, axis: usize) -> usize {
        self.0.axes[axis + 1..].iter().map(|a| a.points).product()
    }

    /// In-place normalized forward transform (`1/M^N` applied).
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid");
        for a in 0..self.dim() {
            let fft = self.0.axes[a].forward.clone();
            self.transform_axis(data, a, fft.as_ref());
        }
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// In-place inverse of [`Grid::forward`].
    pub fn inverse(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid");
        for a in 0..self.dim() {
            let fft = self.0.axes[a].inverse.clone();
            self.transform_axis(data, a, fft.as_ref());
        }
    }

    /// Apply a 1D operation to every line of samples along `axis`.
    pub(crate) fn for_each_line<F>(&self, data: &mut [Complex64], axis: usize, mut op: F)
    where
        F: FnMut(&mut [Complex64]),
    {
        let m = self.points(axis);
        let stride = self.stride(axis);
        if stride == 1 {
            data.chunks_exact_mut(m).for_each(op);
            return;
        }
        let block = m * stride;
        let mut line = vec![Complex64::new(0.0, 0.0); m];
        for outer in (0..data.len()).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + j * stride];
                }
                op(&mut line);
                for (j, v) in line.iter().enumerate() {
                    data[base + j * stride] = *v;
                }
            }
        }
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, fft: &dyn Fft<f64>) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        if self.stride(axis) == 1 {
            fft.process_with_scratch(data, &mut scratch);
        } else {
            self.for_each_line(data, axis, |line| fft.process_with_scratch(line, &mut scratch));
        }
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.dim() == other.dim()
                && self
                    .0
                    .axes
                    .iter()
                    .zip(&other.0.axes)
                    .all(|(a, b)| a.points == b.points && a.extent == b.extent))
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let info = self.info();
        f.debug_struct("Grid")
            .field("dim", &info.dim)
            .field("extent", &info.extent)
            .field("points", &info.points)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_construction() {
        let g = make_grid(1, 40.0, 1024).unwrap();
        assert_eq!(g.spacing(0), 0.0390625);
        let g2 = make_grid(2, 20.0, 128).unwrap();
        assert_eq!(g2.len(), 16384);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(make_grid(1, 40.0, 7).is_err());
        assert!(make_grid(1, 40.0, 6).is_err());
        assert!(make_grid(1, 0.0, 64).is_err());
        assert!(make_grid(1, -3.0, 64).is_err());
        assert!(make_grid(4, 10.0, 8).is_err());
    }

    #[test]
    fn wavenumbers_are_symmetric_set() {
        let g = make_grid(1, 2.0 * PI, 8).unwrap();
        let mut n: Vec<i64> = g.wavenumbers(0).iter().map(|k| k.round() as i64).collect();
        n.sort();
        assert_eq!(n, vec![-4, -3, -2, -1, 0, 1, 2, 3]);
    }

    #[test]
    fn round_trip_transform_3d() {
        let g = Grid::with_axes(&[3.0, 4.0, 5.0], &[8, 10, 12]).unwrap();
        let data: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut work = data.clone();
        g.forward(&mut work);
        g.inverse(&mut work);
        let err: f64 = work.iter().zip(&data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let nrm: f64 = data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        assert!(err / nrm < 1e-13);
    }

    #[test]
    fn plane_wave_lands_on_its_mode() {
        let g = Grid::with_axes(&[2.0 * PI, 2.0 * PI], &[8, 8]).unwrap();
        let mut data: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let x = g.position(i);
                Complex64::from_polar(1.0, 2.0 * x[0] - x[1])
            })
            .collect();
        g.forward(&mut data);
        let target = g.ravel(&[2, 7]);
        for (i, z) in data.iter().enumerate() {
            if i == target {
                assert!((z.norm() - 1.0).abs() < 1e-12);
            } else {
                assert!(z.norm() < 1e-12);
            }
        }
        let k = g.wavevector(target);
        assert!((k[0] - 2.0).abs() < 1e-12 && (k[1] + 1.0).abs() < 1e-12);
    }
}
