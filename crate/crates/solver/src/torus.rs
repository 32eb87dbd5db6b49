//! Flat-torus discretization: uniform grids, scalar fields, vortex data, and
//! FFT-based spectral calculus (Laplacian, Poisson/Helmholtz inverses, the
//! periodic Green's-function background with prescribed singular sources).
//!
//! Conventions. A field sample sits at (ix * L1/n1, iy * L2/n2), stored
//! row-major as `values[iy * n1 + ix]`. `forward` returns normalized Fourier
//! coefficients c_k with f(x) = sum_k c_k e^{i k.x}; wavenumbers are signed,
//! the Nyquist line is kept at +n/2, and real synthesis takes the real part,
//! which symmetrizes the Nyquist content. Integrals use the rectangle rule,
//! which is spectrally accurate for smooth periodic integrands.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::{Error, Result};

/// Uniform periodic grid on [0, L1) x [0, L2).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusGrid {
    n1: usize,
    n2: usize,
    l1: f64,
    l2: f64,
}

impl TorusGrid {
    /// Both sample counts must be even and at least 8 so the Nyquist
    /// bookkeeping and the band-limited resampling stay well defined.
    pub fn new(n1: usize, n2: usize, l1: f64, l2: f64) -> Result<Self> {
        if n1 < 8 || n2 < 8 || !n1.is_multiple_of(2) || !n2.is_multiple_of(2) {
            return Err(Error::Grid(format!(
                "sample counts must be even and >= 8, got {n1} x {n2}"
            )));
        }
        if !(l1 > 0.0) || !(l2 > 0.0) || !l1.is_finite() || !l2.is_finite() {
            return Err(Error::Grid(format!(
                "periods must be positive and finite, got {l1} x {l2}"
            )));
        }
        Ok(Self { n1, n2, l1, l2 })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    pub fn len(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn area(&self) -> f64 {
        self.l1 * self.l2
    }

    pub fn cell_area(&self) -> f64 {
        self.area() / self.len() as f64
    }

    /// Coordinates of the sample with indices (ix, iy).
    pub fn point(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            ix as f64 * self.l1 / self.n1 as f64,
            iy as f64 * self.l2 / self.n2 as f64,
        )
    }
}

/// Real scalar field sampled on a [`TorusGrid`].
#[derive(Clone, Debug)]
pub struct Field {
    n1: usize,
    n2: usize,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            n1: grid.n1,
            n2: grid.n2,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &TorusGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..grid.n2 {
            for ix in 0..grid.n1 {
                let (x, y) = grid.point(ix, iy);
                values.push(f(x, y));
            }
        }
        Self {
            n1: grid.n1,
            n2: grid.n2,
            values,
        }
    }

    pub fn from_values(grid: &TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field length {} does not match grid {} x {}",
                values.len(),
                grid.n1,
                grid.n2
            )));
        }
        Ok(Self {
            n1: grid.n1,
            n2: grid.n2,
            values,
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.n1 + ix]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Removes the mean and returns the value removed.
    pub fn subtract_mean(&mut self) -> f64 {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// One vortex: position in the fundamental domain plus its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VortexPoint {
    pub x: f64,
    pub y: f64,
    pub multiplicity: u32,
}

/// Vortex locations per component. Component i of the field vector carries
/// `points[i]`; the total counts N_i feed the source vector and the
/// lower bound on the coupling.
#[derive(Clone, Debug)]
pub struct VortexConfig {
    points: Vec<Vec<VortexPoint>>,
}

impl VortexConfig {
    pub fn new(points: Vec<Vec<VortexPoint>>, l1: f64, l2: f64) -> Result<Self> {
        for (ci, comp) in points.iter().enumerate() {
            for (pi, p) in comp.iter().enumerate() {
                let inside =
                    p.x.is_finite() && p.y.is_finite() && (0.0..l1).contains(&p.x) && (0.0..l2).contains(&p.y);
                if !inside {
                    return Err(Error::VortexOutsideDomain {
                        component: ci,
                        index: pi,
                        x: p.x,
                        y: p.y,
                    });
                }
                if p.multiplicity == 0 {
                    return Err(Error::Config(format!(
                        "vortex multiplicity must be >= 1 (component {ci}, point {pi})"
                    )));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn components(&self) -> usize {
        self.points.len()
    }

    pub fn component(&self, i: usize) -> &[VortexPoint] {
        &self.points[i]
    }

    /// Total vortex number per component, multiplicities included.
    pub fn totals(&self) -> Vec<u64> {
        self.points
            .iter()
            .map(|c| c.iter().map(|p| p.multiplicity as u64).sum())
            .collect()
    }
}

/// FFT plans and wavenumber tables for one grid shape.
pub struct Spectral {
    grid: TorusGrid,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    /// -|k|^2 per storage index, Nyquist included.
    neg_k2: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
}

/// Signed harmonic index for storage slot m on an n-point axis; the Nyquist
/// slot maps to +n/2.
fn signed_index(m: usize, n: usize) -> i64 {
    if m <= n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

impl Spectral {
    pub fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::new();
        let fft_x = planner.plan_fft(grid.n1, FftDirection::Forward);
        let ifft_x = planner.plan_fft(grid.n1, FftDirection::Inverse);
        let fft_y = planner.plan_fft(grid.n2, FftDirection::Forward);
        let ifft_y = planner.plan_fft(grid.n2, FftDirection::Inverse);

        let kx: Vec<f64> = (0..grid.n1)
            .map(|m| 2.0 * PI * signed_index(m, grid.n1) as f64 / grid.l1)
            .collect();
        let ky: Vec<f64> = (0..grid.n2)
            .map(|m| 2.0 * PI * signed_index(m, grid.n2) as f64 / grid.l2)
            .collect();
        let mut neg_k2 = vec![0.0; grid.len()];
        for iy in 0..grid.n2 {
            for ix in 0..grid.n1 {
                neg_k2[iy * grid.n1 + ix] = -(kx[ix] * kx[ix] + ky[iy] * ky[iy]);
            }
        }

        Self {
            grid,
            fft_x,
            ifft_x,
            fft_y,
            ifft_y,
            neg_k2,
            kx,
            ky,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn neg_k2(&self) -> &[f64] {
        &self.neg_k2
    }

    fn fft2(&self, buf: &mut [Complex<f64>], direction: FftDirection) {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let (row, col) = match direction {
            FftDirection::Forward => (&self.fft_x, &self.fft_y),
            FftDirection::Inverse => (&self.ifft_x, &self.ifft_y),
        };
        let mut scratch = vec![Complex::ZERO; row.get_inplace_scratch_len()];
        for r in buf.chunks_exact_mut(n1) {
            row.process_with_scratch(r, &mut scratch);
        }
        let mut tmp = vec![Complex::ZERO; buf.len()];
        transpose::transpose(buf, &mut tmp, n1, n2);
        scratch.resize(col.get_inplace_scratch_len(), Complex::ZERO);
        for r in tmp.chunks_exact_mut(n2) {
            col.process_with_scratch(r, &mut scratch);
        }
        transpose::transpose(&tmp, buf, n2, n1);
    }

    /// Normalized Fourier coefficients of a real field.
    pub fn forward(&self, f: &Field) -> Vec<Complex<f64>> {
        debug_assert_eq!(f.values.len(), self.grid.len());
        let mut buf: Vec<Complex<f64>> = f.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft2(&mut buf, FftDirection::Forward);
        let scale = 1.0 / self.grid.len() as f64;
        for c in &mut buf {
            *c *= scale;
        }
        buf
    }

    /// Synthesizes sum_k c_k e^{i k.x} and keeps the real part.
    pub fn inverse_real(&self, mut spec: Vec<Complex<f64>>) -> Field {
        debug_assert_eq!(spec.len(), self.grid.len());
        self.fft2(&mut spec, FftDirection::Inverse);
        Field {
            n1: self.grid.n1,
            n2: self.grid.n2,
            values: spec.iter().map(|c| c.re).collect(),
        }
    }

    pub fn laplacian(&self, f: &Field) -> Field {
        let mut spec = self.forward(f);
        for (c, nk2) in spec.iter_mut().zip(&self.neg_k2) {
            *c *= *nk2;
        }
        self.inverse_real(spec)
    }

    /// Solves `lap v = rhs` with zero-mean `rhs` and returns the zero-mean
    /// solution.
    pub fn poisson(&self, rhs: &Field) -> Result<Field> {
        let scale = rhs.max_abs().max(1.0);
        if rhs.mean().abs() > 1e-10 * scale {
            return Err(Error::Grid(format!(
                "poisson right-hand side must have zero mean, got {}",
                rhs.mean()
            )));
        }
        let mut spec = self.forward(rhs);
        for (c, nk2) in spec.iter_mut().zip(&self.neg_k2) {
            *c = if *nk2 == 0.0 { Complex::ZERO } else { *c / *nk2 };
        }
        let mut out = self.inverse_real(spec);
        out.subtract_mean();
        Ok(out)
    }

    /// Solves `lap v - kappa v = rhs` for `kappa > 0`.
    pub fn helmholtz(&self, rhs: &Field, kappa: f64) -> Field {
        debug_assert!(kappa > 0.0);
        let mut spec = self.forward(rhs);
        for (c, nk2) in spec.iter_mut().zip(&self.neg_k2) {
            *c /= *nk2 - kappa;
        }
        self.inverse_real(spec)
    }

    /// Zero-mean periodic solution of
    /// `lap u = 4 pi sum_s m_s delta_{p_s} - 4 pi N / area`,
    /// the singular background for one component: u behaves like
    /// `2 m_s ln |x - p_s|` near each vortex.
    pub fn background(&self, points: &[VortexPoint]) -> Field {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let area = self.grid.area();
        let mut spec = vec![Complex::ZERO; self.grid.len()];
        for iy in 0..n2 {
            for ix in 0..n1 {
                let nk2 = self.neg_k2[iy * n1 + ix];
                if nk2 == 0.0 {
                    continue;
                }
                let mut s = Complex::ZERO;
                for p in points {
                    let phase = -(self.kx[ix] * p.x + self.ky[iy] * p.y);
                    s += p.multiplicity as f64 * Complex::from_polar(1.0, phase);
                }
                // 4 pi * s / (area * (-|k|^2)) with nk2 = -|k|^2.
                spec[iy * n1 + ix] = s * (4.0 * PI / (area * nk2));
            }
        }
        let mut out = self.inverse_real(spec);
        out.subtract_mean();
        out
    }

    /// Zeroes every coefficient whose harmonic index exceeds `frac` of the
    /// axis Nyquist index. `frac = 2/3` is the usual anti-aliasing cut.
    pub fn truncate_band(&self, spec: &mut [Complex<f64>], frac: f64) {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let cut1 = frac * (n1 / 2) as f64;
        let cut2 = frac * (n2 / 2) as f64;
        for iy in 0..n2 {
            let sy = signed_index(iy, n2).unsigned_abs() as f64;
            for ix in 0..n1 {
                let sx = signed_index(ix, n1).unsigned_abs() as f64;
                if sx > cut1 || sy > cut2 {
                    spec[iy * n1 + ix] = Complex::ZERO;
                }
            }
        }
    }

    /// Band-limited interpolation onto another grid with the same periods.
    /// Upsampling splits Nyquist content between the +/- lines; downsampling
    /// folds onto the target Nyquist and drops everything above it.
    pub fn resample(&self, f: &Field, to: &TorusGrid) -> Result<Field> {
        if (to.l1 - self.grid.l1).abs() > 1e-12 * self.grid.l1
            || (to.l2 - self.grid.l2).abs() > 1e-12 * self.grid.l2
        {
            return Err(Error::Grid(
                "resample requires matching periods".to_string(),
            ));
        }
        let spec = self.forward(f);
        let mut target = vec![Complex::ZERO; to.len()];
        let wx: Vec<Vec<(usize, f64)>> = (0..self.grid.n1)
            .map(|m| axis_weights(signed_index(m, self.grid.n1), self.grid.n1, to.n1))
            .collect();
        let wy: Vec<Vec<(usize, f64)>> = (0..self.grid.n2)
            .map(|m| axis_weights(signed_index(m, self.grid.n2), self.grid.n2, to.n2))
            .collect();
        for iy in 0..self.grid.n2 {
            for ix in 0..self.grid.n1 {
                let c = spec[iy * self.grid.n1 + ix];
                if c == Complex::ZERO {
                    continue;
                }
                for &(ty, fy) in &wy[iy] {
                    for &(tx, fx) in &wx[ix] {
                        target[ty * to.n1 + tx] += c * (fx * fy);
                    }
                }
            }
        }
        Ok(Spectral::new(*to).inverse_real(target))
    }
}

/// Where the signed harmonic s of an n_src axis lands on an n_tgt axis.
fn axis_weights(s: i64, n_src: usize, n_tgt: usize) -> Vec<(usize, f64)> {
    let half_tgt = (n_tgt / 2) as i64;
    if s.abs() > half_tgt {
        return Vec::new();
    }
    let slot = |v: i64| -> usize {
        if v >= 0 {
            v as usize
        } else {
            (v + n_tgt as i64) as usize
        }
    };
    if s == (n_src / 2) as i64 && n_tgt > n_src {
        // Source Nyquist opens into distinct +/- lines on the finer axis.
        vec![(slot(s), 0.5), (slot(-s), 0.5)]
    } else if s.abs() == half_tgt {
        vec![(n_tgt / 2, 1.0)]
    } else {
        vec![(slot(s), 1.0)]
    }
}

/// Rectangle-rule integral over the torus.
pub fn integrate(grid: &TorusGrid, f: &Field) -> f64 {
    grid.cell_area() * f.values.iter().sum::<f64>()
}

/// L2 pairing over the torus.
pub fn inner(grid: &TorusGrid, f: &Field, g: &Field) -> f64 {
    grid.cell_area()
        * f.values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
}

pub fn l2_norm(grid: &TorusGrid, f: &Field) -> f64 {
    inner(grid, f, f).sqrt()
}
