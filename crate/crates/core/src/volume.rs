//! Dense 3D real and complex fields on a regular grid.
//!
//! Storage is x-fastest, then y, then z. All spatial quantities are in
//! nanometers and all frequencies in cycles per nanometer.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{signed_index, Fft3};

/// Voxel counts and pitch of a volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, dx: f64, dy: f64, dz: f64) -> Result<Self> {
        for (name, n) in [("nx", nx), ("ny", ny), ("nz", nz)] {
            if n < 2 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{name}={n} must be even and >= 2")));
            }
        }
        for (name, d) in [("dx", dx), ("dy", dy), ("dz", dz)] {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidGrid(format!("{name}={d} must be positive and finite")));
            }
        }
        Ok(Self { nx, ny, nz, dx, dy, dz })
    }

    /// Isotropic grid with `n` voxels of pitch `pitch_nm` along each axis.
    pub fn cubic(n: usize, pitch_nm: f64) -> Result<Self> {
        Self::new(n, n, n, pitch_nm, pitch_nm, pitch_nm)
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn pitch(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    /// Inverse of [`GridSpec::index`].
    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.nx;
        let y = (i / self.nx) % self.ny;
        (x, y, i / (self.nx * self.ny))
    }

    /// Physical extent of the grid in nanometers.
    pub fn extent(&self) -> [f64; 3] {
        [self.nx as f64 * self.dx, self.ny as f64 * self.dy, self.nz as f64 * self.dz]
    }

    /// Signed frequency (cycles/nm) of DFT bin `(u, v, w)`.
    pub fn frequency(&self, u: usize, v: usize, w: usize) -> [f64; 3] {
        [
            signed_index(u, self.nx) as f64 / (self.nx as f64 * self.dx),
            signed_index(v, self.ny) as f64 / (self.ny as f64 * self.dy),
            signed_index(w, self.nz) as f64 / (self.nz as f64 * self.dz),
        ]
    }

    /// Position (nm) of voxel `i` along an axis of length `n`, measured
    /// from the origin voxel with wraparound (FFT-origin-cornered).
    pub fn centered_offset(i: usize, n: usize, pitch: f64) -> f64 {
        signed_index(i, n) as f64 * pitch
    }

    /// Camera grid obtained by grouping `binning` voxels per axis.
    pub fn coarsen(&self, binning: usize) -> Result<GridSpec> {
        if binning == 0 {
            return Err(Error::InvalidParameter("binning must be >= 1".into()));
        }
        if self.nx % binning != 0 || self.ny % binning != 0 || self.nz % binning != 0 {
            return Err(Error::InvalidParameter(format!(
                "binning {binning} does not divide grid {:?}",
                self.dims()
            )));
        }
        let b = binning as f64;
        GridSpec::new(
            self.nx / binning,
            self.ny / binning,
            self.nz / binning,
            self.dx * b,
            self.dy * b,
            self.dz * b,
        )
    }

    /// Fine grid from which this grid is obtained by `binning`.
    pub fn refine(&self, binning: usize) -> Result<GridSpec> {
        if binning == 0 {
            return Err(Error::InvalidParameter("binning must be >= 1".into()));
        }
        let b = binning as f64;
        GridSpec::new(
            self.nx * binning,
            self.ny * binning,
            self.nz * binning,
            self.dx / b,
            self.dy / b,
            self.dz / b,
        )
    }

    /// Same dimensions and (to 1e-9 relative) the same pitch.
    pub fn matches(&self, other: &GridSpec) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        self.dims() == other.dims()
            && close(self.dx, other.dx)
            && close(self.dy, other.dy)
            && close(self.dz, other.dz)
    }

    pub fn ensure_matches(&self, other: &GridSpec) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{:?} @ {:?} nm vs {:?} @ {:?} nm",
                self.dims(),
                self.pitch(),
                other.dims(),
                other.pitch()
            )))
        }
    }
}

/// Real scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    grid: GridSpec,
    data: Vec<f64>,
}

impl Volume {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![0.0; grid.len()] }
    }

    pub fn filled(grid: GridSpec, value: f64) -> Self {
        Self { grid, data: vec![value; grid.len()] }
    }

    pub fn from_vec(grid: GridSpec, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, data })
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..grid.nz {
            for y in 0..grid.ny {
                for x in 0..grid.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.grid.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: f64) {
        let i = self.grid.index(x, y, z);
        self.data[i] = value;
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Voxel index and value of the maximum.
    pub fn argmax(&self) -> (usize, f64) {
        self.data
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
    }

    pub fn inner_product(&self, other: &Volume) -> Result<f64> {
        self.grid.ensure_matches(&other.grid)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.data, &self.data)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `v / ‖v‖`.
    pub fn l2_normalize(&self) -> Result<Volume> {
        let norm = self.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::DegenerateVolume);
        }
        Ok(self.map(|v| v / norm))
    }

    /// Elementwise `max(v, 0)`.
    pub fn clamp_nonnegative(&self) -> Volume {
        self.map(|v| v.max(0.0))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Volume {
        Volume { grid: self.grid, data: self.data.par_iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Volume, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Volume> {
        self.grid.ensure_matches(&other.grid)?;
        let data = self.data.par_iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Volume { grid: self.grid, data })
    }

    pub fn scale(&self, c: f64) -> Volume {
        self.map(|v| v * c)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Volume) -> Result<()> {
        self.grid.ensure_matches(&other.grid)?;
        self.data.par_iter_mut().zip(&other.data).for_each(|(a, &b)| *a += alpha * b);
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Block average over `binning³` voxels (camera model).
    pub fn bin(&self, binning: usize) -> Result<Volume> {
        let coarse = self.grid.coarsen(binning)?;
        if binning == 1 {
            return Ok(self.clone());
        }
        let mut out = vec![0.0; coarse.len()];
        let g = &self.grid;
        for z in 0..g.nz {
            for y in 0..g.ny {
                let row = &self.data[g.index(0, y, z)..g.index(0, y, z) + g.nx];
                let base = coarse.index(0, y / binning, z / binning);
                for (x, v) in row.iter().enumerate() {
                    out[base + x / binning] += v;
                }
            }
        }
        let scale = 1.0 / (binning * binning * binning) as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        Ok(Volume { grid: coarse, data: out })
    }

    /// Block replication onto the fine grid, scaled by `scale`.
    pub fn replicate(&self, binning: usize, scale: f64) -> Result<Volume> {
        let fine = self.grid.refine(binning)?;
        let g = &self.grid;
        let data = (0..fine.len())
            .map(|i| {
                let (x, y, z) = fine.coords(i);
                scale * self.data[g.index(x / binning, y / binning, z / binning)]
            })
            .collect();
        Ok(Volume { grid: fine, data })
    }

    /// Adjoint of [`Volume::bin`]: replicate into blocks scaled by `1/binning³`.
    pub fn bin_adjoint(&self, binning: usize) -> Result<Volume> {
        self.replicate(binning, 1.0 / (binning * binning * binning) as f64)
    }
}

/// Complex field on a frequency grid; sample `(0,0,0)` is DC.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, data: vec![Complex64::default(); grid.len()] }
    }

    pub fn from_vec(grid: GridSpec, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), actual: data.len() });
        }
        Ok(Self { grid, data })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize, w: usize) -> Complex64 {
        self.data[self.grid.index(u, v, w)]
    }

    pub fn dc(&self) -> Complex64 {
        self.data[0]
    }

    /// Largest `|S(u) - conj(S(-u))|` relative to the largest magnitude.
    pub fn hermitian_defect(&self) -> f64 {
        let g = &self.grid;
        let peak = self.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.data.len() {
            let (u, v, w) = g.coords(i);
            let j = g.index(
                crate::fft::negated_index(u, g.nx),
                crate::fft::negated_index(v, g.ny),
                crate::fft::negated_index(w, g.nz),
            );
            worst = worst.max((self.data[i] - self.data[j].conj()).norm());
        }
        worst / peak
    }

    pub fn multiply(&self, other: &Spectrum) -> Result<Spectrum> {
        self.grid.ensure_matches(&other.grid)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Ok(Spectrum { grid: self.grid, data })
    }
}

/// Unnormalized forward transform of a real volume.
pub fn fft_forward(v: &Volume) -> Spectrum {
    let mut data: Vec<Complex64> = v.data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let g = v.grid;
    Fft3::cached(g.nx, g.ny, g.nz).forward(&mut data);
    Spectrum { grid: g, data }
}

/// Inverse transform (scaled by `1/N`), keeping the real part.
pub fn fft_inverse(s: &Spectrum) -> Volume {
    let data = fft_inverse_complex(s);
    Volume { grid: s.grid, data: data.into_iter().map(|c| c.re).collect() }
}

/// Inverse transform (scaled by `1/N`) keeping the full complex result.
pub fn fft_inverse_complex(s: &Spectrum) -> Vec<Complex64> {
    let mut data = s.data.clone();
    let g = s.grid;
    Fft3::cached(g.nx, g.ny, g.nz).inverse(&mut data);
    data
}

pub fn inner_product(a: &Volume, b: &Volume) -> Result<f64> {
    a.inner_product(b)
}

pub fn l2_normalize(v: &Volume) -> Result<Volume> {
    v.l2_normalize()
}

pub fn clamp_nonnegative(v: &Volume) -> Volume {
    v.clamp_nonnegative()
}

/// Plain sequential dot product; the fixed summation order keeps results
/// independent of the thread count.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
