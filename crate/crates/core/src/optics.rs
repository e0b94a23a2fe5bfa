//! Widefield PSF/OTF generation and the cutoff frequencies of the objective.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{signed_index, Fft3};
use crate::volume::{fft_forward, GridSpec, Spectrum, Volume};

/// Objective and wavelength. A single wavelength is used for both the
/// illumination pattern and the detection PSF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsParams {
    pub na: f64,
    pub n_imm: f64,
    pub lambda_nm: f64,
}

impl OpticsParams {
    /// 63x/1.4 NA oil objective at 515 nm.
    pub fn paper() -> Self {
        Self { na: 1.4, n_imm: 1.515, lambda_nm: 515.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.na > 0.0 && self.na < self.n_imm && self.na.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "numerical aperture {} must lie in (0, n_imm = {})",
                self.na, self.n_imm
            )));
        }
        if !(self.lambda_nm > 0.0 && self.lambda_nm.is_finite()) {
            return Err(Error::InvalidParameter(format!("wavelength {} nm", self.lambda_nm)));
        }
        Ok(())
    }

    /// Lateral incoherent cutoff `2 NA / λ` (cycles/nm).
    pub fn lateral_cutoff(&self) -> f64 {
        2.0 * self.na / self.lambda_nm
    }

    /// Axial cutoff `NA² / (2 n λ)` (cycles/nm), i.e. `u_c · NA / (4 n)`.
    pub fn axial_cutoff(&self) -> f64 {
        self.lateral_cutoff() * self.axial_to_lateral_ratio()
    }

    /// `w_c / u_c = NA / (4 n)`.
    pub fn axial_to_lateral_ratio(&self) -> f64 {
        self.na / (4.0 * self.n_imm)
    }

    /// Widefield lateral resolution `0.61 λ / NA` (nm).
    pub fn widefield_resolution_nm(&self) -> f64 {
        0.61 * self.lambda_nm / self.na
    }

    /// Radius of the pupil in frequency space, `NA / λ`.
    pub fn pupil_radius(&self) -> f64 {
        self.na / self.lambda_nm
    }
}

/// `(u_c, w_c)` in cycles/nm.
pub fn cutoff_frequencies(p: &OpticsParams) -> (f64, f64) {
    (p.lateral_cutoff(), p.axial_cutoff())
}

/// Scalar widefield intensity PSF on `grid`, unit sum, centered at voxel
/// `(0,0,0)`.
///
/// Each z-plane is the squared modulus of the inverse 2D transform of a
/// circular pupil of radius `NA/λ` carrying the paraxial defocus phase
/// `exp(-iπλz|u|²/n)`. The defocus frequency `λ|u|²/(2n)` of each pupil
/// sample is split, with amplitudes `sqrt(1-t)` and `sqrt(t)`, between the
/// two bracketing frequencies of the axial lattice (never above `w_c`). The
/// amplitude PSF is then exactly periodic over the axial window and the 3D
/// OTF is confined to `|u| ≤ u_c`, `|w| ≤ w_c` with no truncation leakage.
pub fn generate_psf(p: &OpticsParams, grid: &GridSpec) -> Result<Volume> {
    p.validate()?;
    let d = p.widefield_resolution_nm();
    let lateral_extent = (grid.nx as f64 * grid.dx).min(grid.ny as f64 * grid.dy);
    if lateral_extent < 4.0 * d {
        return Err(Error::GridTooSmall(format!(
            "lateral field {lateral_extent:.1} nm cannot hold the PSF main lobe (needs {:.1} nm)",
            4.0 * d
        )));
    }
    let (u_c, w_c) = cutoff_frequencies(p);
    if grid.dx.max(grid.dy) > 1.0 / (2.0 * u_c) {
        log::warn!(
            "lateral pitch {:.1} nm undersamples the cutoff {:.3e} cycles/nm (Nyquist pitch {:.1} nm)",
            grid.dx.max(grid.dy),
            u_c,
            1.0 / (2.0 * u_c)
        );
    }
    if grid.dz > 1.0 / (2.0 * w_c) {
        log::warn!("axial pitch {:.1} nm undersamples the axial cutoff", grid.dz);
    }

    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let radius_sq = p.pupil_radius().powi(2);
    let axial_step = 1.0 / (nz as f64 * grid.dz);
    let top_level = (w_c / axial_step + 1e-9).floor() as usize;
    let mut amplitude = vec![Complex64::default(); grid.len()];
    for v in 0..ny {
        let fy = signed_index(v, ny) as f64 / (ny as f64 * grid.dy);
        for u in 0..nx {
            let fx = signed_index(u, nx) as f64 / (nx as f64 * grid.dx);
            let rho_sq = fx * fx + fy * fy;
            if rho_sq > radius_sq {
                continue;
            }
            let defocus = p.lambda_nm * rho_sq / (2.0 * p.n_imm) / axial_step;
            let level = (defocus + 1e-9).floor();
            let frac = (defocus - level).max(0.0);
            let level = level as usize;
            let at = |l: usize| grid.index(u, v, (nz - l % nz) % nz);
            if level + 1 > top_level || frac == 0.0 {
                amplitude[at(level)] = Complex64::new(1.0, 0.0);
            } else {
                amplitude[at(level)] = Complex64::new((1.0 - frac).sqrt(), 0.0);
                amplitude[at(level + 1)] = Complex64::new(frac.sqrt(), 0.0);
            }
        }
    }
    Fft3::cached(nx, ny, nz).inverse(&mut amplitude);

    let mut intensity: Vec<f64> = amplitude.iter().map(|a| a.norm_sqr()).collect();
    let total: f64 = intensity.iter().sum();
    if total <= 0.0 {
        return Err(Error::GridTooSmall("pupil contains no frequency samples".into()));
    }
    intensity.iter_mut().for_each(|v| *v /= total);
    Volume::from_vec(*grid, intensity)
}

/// OTF of an origin-cornered, unit-sum PSF (DC = 1).
pub fn compute_otf(h: &Volume) -> Spectrum {
    fft_forward(h)
}

/// Lateral full width at half maximum (nm) of the in-focus plane along x.
pub fn lateral_fwhm(h: &Volume) -> f64 {
    let g = h.grid();
    let half = g.nx / 2;
    // profile ordered from -half to half-1 voxels
    let profile: Vec<f64> = (0..g.nx).map(|i| h.get((i + half) % g.nx, 0, 0)).collect();
    let peak_idx = half;
    let peak = profile[peak_idx];
    let target = peak / 2.0;
    let crossing = |dir: isize| -> f64 {
        let mut i = peak_idx as isize;
        loop {
            let next = i + dir;
            if next < 0 || next as usize >= profile.len() {
                return (i - peak_idx as isize).unsigned_abs() as f64;
            }
            let (a, b) = (profile[i as usize], profile[next as usize]);
            if b <= target {
                let frac = (a - target) / (a - b);
                return (i - peak_idx as isize).unsigned_abs() as f64 + frac;
            }
            i = next;
        }
    };
    (crossing(-1) + crossing(1)) * g.dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_like_grid() -> GridSpec {
        GridSpec::new(96, 96, 64, 25.0, 25.0, 50.0).unwrap()
    }

    #[test]
    fn cutoffs_for_oil_objective() {
        let p = OpticsParams::paper();
        let (u_c, w_c) = cutoff_frequencies(&p);
        // 2 * 1.4 / 515
        assert!((u_c - 5.4369e-3).abs() < 1e-7);
        assert!((w_c / u_c - 0.231).abs() < 5e-4);
        assert!((w_c - 1.256e-3).abs() < 1e-6);
        assert!((w_c - p.na * p.na / (2.0 * p.n_imm * p.lambda_nm)).abs() < 1e-15);
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = OpticsParams::paper();
        p.na = 1.6;
        assert!(p.validate().is_err());
        p = OpticsParams::paper();
        p.lambda_nm = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn psf_is_normalized_nonnegative_and_symmetric() {
        let g = desk_like_grid();
        let h = generate_psf(&OpticsParams::paper(), &g).unwrap();
        assert!((h.sum() - 1.0).abs() < 1e-9);
        assert!(h.min() >= 0.0);
        let neg = |i: usize, n: usize| (n - i) % n;
        for &(x, y, z) in &[(3, 0, 1), (5, 7, 4), (1, 2, 9), (10, 3, 15)] {
            let v = h.get(x, y, z);
            assert!((v - h.get(x, y, neg(z, g.nz))).abs() < 1e-12, "axial symmetry");
            assert!((v - h.get(neg(x, g.nx), y, z)).abs() < 1e-12, "x mirror");
            assert!((v - h.get(y, x, z)).abs() < 1e-12, "x/y swap");
        }
        // peak at the origin
        assert_eq!(h.argmax().0, 0);
    }

    #[test]
    fn lateral_fwhm_matches_airy_width() {
        let p = OpticsParams::paper();
        let g = GridSpec::new(128, 128, 16, 12.5, 12.5, 100.0).unwrap();
        let fwhm = lateral_fwhm(&generate_psf(&p, &g).unwrap());
        let expected = 0.51 * p.lambda_nm / p.na;
        assert!((fwhm - expected).abs() / expected < 0.15, "fwhm {fwhm} vs {expected}");
    }

    #[test]
    fn otf_support_and_shape() {
        let p = OpticsParams::paper();
        let g = desk_like_grid();
        let otf = compute_otf(&generate_psf(&p, &g).unwrap());
        assert!((otf.dc().re - 1.0).abs() < 1e-9);
        let (u_c, w_c) = cutoff_frequencies(&p);
        let mut max_imag: f64 = 0.0;
        for i in 0..g.len() {
            let (u, v, w) = g.coords(i);
            let f = g.frequency(u, v, w);
            let value = otf.as_slice()[i];
            max_imag = max_imag.max(value.im.abs());
            if (f[0] * f[0] + f[1] * f[1]).sqrt() > u_c * (1.0 + 1e-12) || f[2].abs() > w_c {
                assert!(value.norm() < 1e-4, "OTF {value} outside support at {f:?}");
            }
        }
        assert!(max_imag < 1e-9);

        // ring-averaged magnitude in the w = 0 plane is nonincreasing
        let rings = (u_c * g.nx as f64 * g.dx).ceil() as usize;
        let mut sums = vec![(0.0, 0usize); rings + 1];
        for v in 0..g.ny {
            for u in 0..g.nx {
                let f = g.frequency(u, v, 0);
                let r = ((f[0] * f[0] + f[1] * f[1]).sqrt() * g.nx as f64 * g.dx).round() as usize;
                if r <= rings {
                    sums[r].0 += otf.get(u, v, 0).norm();
                    sums[r].1 += 1;
                }
            }
        }
        let profile: Vec<f64> = sums.iter().map(|(s, n)| s / *n as f64).collect();
        for r in 1..profile.len() {
            assert!(profile[r] <= profile[r - 1] + 1e-9, "OTF rises at radius {r}: {profile:?}");
        }
    }

    #[test]
    fn delta_psf_has_flat_otf() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let mut h = Volume::zeros(g);
        h.set(0, 0, 0, 1.0);
        let otf = compute_otf(&h);
        assert!(otf.as_slice().iter().all(|c| (c - Complex64::new(1.0, 0.0)).norm() < 1e-12));
    }

    #[test]
    fn small_field_is_rejected() {
        let g = GridSpec::cubic(8, 25.0).unwrap();
        assert!(matches!(generate_psf(&OpticsParams::paper(), &g), Err(Error::GridTooSmall(_))));
    }
}
