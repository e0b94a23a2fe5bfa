//! Generalized Wiener filter: per-orientation band separation, real-space
//! band shifts on the fine grid, and Wiener-weighted recombination.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionData, ImagingSetup};
use crate::error::{Error, Result};
use crate::fft::{signed_index, Fft3};
use crate::scheme::Scheme;
use crate::volume::{fft_forward, GridSpec, Spectrum, Volume};

pub const BANDS: usize = 5;

/// Harmonic orders in band order.
pub const ORDERS: [i32; BANDS] = [-2, -1, 0, 1, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GwfConfig {
    pub wiener_param: f64,
    /// Triangular lateral apodization reaching zero at `u_c + u_m`.
    pub apodization: bool,
}

impl Default for GwfConfig {
    fn default() -> Self {
        Self { wiener_param: 0.01, apodization: false }
    }
}

pub type Matrix5 = [[Complex64; BANDS]; BANDS];

/// `M[l][m] = exp(i m φ_l)` for `m = −2..2`.
pub fn separation_matrix(phases: &[f64]) -> Result<Matrix5> {
    if phases.len() != BANDS {
        return Err(Error::InvalidParameter(format!("{} phases, need {BANDS}", phases.len())));
    }
    let mut m = [[Complex64::default(); BANDS]; BANDS];
    for (l, &phi) in phases.iter().enumerate() {
        for (k, &order) in ORDERS.iter().enumerate() {
            m[l][k] = Complex64::from_polar(1.0, order as f64 * phi);
        }
    }
    Ok(m)
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn invert(matrix: &Matrix5) -> Result<Matrix5> {
    let mut a = *matrix;
    let mut inv = [[Complex64::default(); BANDS]; BANDS];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }
    for col in 0..BANDS {
        let pivot = (col..BANDS)
            .max_by(|&x, &y| a[x][col].norm().total_cmp(&a[y][col].norm()))
            .expect("non-empty range");
        if a[pivot][col].norm() < 1e-10 {
            return Err(Error::SingularMatrix);
        }
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col];
        for k in 0..BANDS {
            a[col][k] /= p;
            inv[col][k] /= p;
        }
        for r in 0..BANDS {
            if r != col {
                let f = a[r][col];
                for k in 0..BANDS {
                    let (ak, ik) = (a[col][k], inv[col][k]);
                    a[r][k] -= f * ak;
                    inv[r][k] -= f * ik;
                }
            }
        }
    }
    Ok(inv)
}

/// Solves `D_l = Σ_m M[l][m] B_m` at every frequency; bands ordered
/// `m = −2..2`.
pub fn separate_bands(images: &[Spectrum], matrix: &Matrix5) -> Result<Vec<Spectrum>> {
    if images.len() != BANDS {
        return Err(Error::MissingImages(format!("{} images, need {BANDS}", images.len())));
    }
    let grid = *images[0].grid();
    for s in images {
        s.grid().ensure_matches(&grid)?;
    }
    let inv = invert(matrix)?;
    let mut bands = vec![vec![Complex64::default(); grid.len()]; BANDS];
    for i in 0..grid.len() {
        for (m, band) in bands.iter_mut().enumerate() {
            band[i] = (0..BANDS).map(|l| inv[m][l] * images[l].as_slice()[i]).sum();
        }
    }
    bands.into_iter().map(|b| Spectrum::from_vec(grid, b)).collect()
}

/// Fine-grid indices whose signed frequency lies inside the coarse
/// lattice, with the matching coarse index.
fn embedding(fine: &GridSpec, coarse: &GridSpec) -> Vec<Option<usize>> {
    let inside = |i: usize, n: usize, m: usize| {
        let s = signed_index(i, n);
        (-(m as i64) / 2..(m as i64) / 2).contains(&s)
    };
    (0..fine.len())
        .map(|i| {
            let (u, v, w) = fine.coords(i);
            (inside(u, fine.nx, coarse.nx) && inside(v, fine.ny, coarse.ny) && inside(w, fine.nz, coarse.nz))
                .then(|| coarse.index(u % coarse.nx, v % coarse.ny, w % coarse.nz))
        })
        .collect()
}

/// `FFT(IFFT(s) · e^{−i m ψ})`: moves content at `+m·k` back to DC.
fn shift_band(fft: &Fft3, spectrum: &mut [Complex64], carrier: &[Complex64], order: i32) {
    if order == 0 {
        return;
    }
    fft.inverse(spectrum);
    let plane = carrier.len();
    for (i, v) in spectrum.iter_mut().enumerate() {
        *v *= carrier[i % plane].conj().powi(order);
    }
    fft.forward(spectrum);
}

/// GWF restoration on the fine grid from a full 15-image acquisition.
pub fn run_gwf(data: &AcquisitionData, setup: &ImagingSetup, config: &GwfConfig) -> Result<Volume> {
    if data.scheme != Scheme::Full15 || data.images.len() != Scheme::Full15.len() {
        return Err(Error::GwfRequiresFull);
    }
    if !(config.wiener_param > 0.0) {
        return Err(Error::InvalidParameter("Wiener parameter must be > 0".into()));
    }
    data.validate()?;
    let model = setup.model(&data.specs)?;
    let fine = setup.object_grid();
    let coarse = data.image_grid();
    coarse.ensure_matches(&setup.image_grid())?;
    let fine_fft = Fft3::cached(fine.nx, fine.ny, fine.nz);
    let b3 = (setup.binning.pow(3)) as f64;
    let embed = embedding(&fine, &coarse);

    let transfers: Vec<Vec<Complex64>> = (0..3).map(|m| model.harmonic_transfer(m)).collect();
    let norm = 1.0 / transfers[0][0].re;

    let mut numerator = vec![Complex64::default(); fine.len()];
    let mut denominator = vec![0.0; fine.len()];
    let orientation_of = model.image_orientation();
    for j in 0..model.orientations_deg().len() {
        let mut members: Vec<usize> = (0..data.specs.len()).filter(|&l| orientation_of[l] == j).collect();
        members.sort_by_key(|&l| data.specs[l].phase_index);
        let phases: Vec<f64> = members.iter().map(|&l| data.specs[l].phi_rad).collect();
        let spectra: Vec<Spectrum> = members.iter().map(|&l| fft_forward(&data.images[l])).collect();
        let bands = separate_bands(&spectra, &separation_matrix(&phases)?)?;
        let carrier = model.carrier(j);

        for (band, &order) in bands.iter().zip(&ORDERS) {
            let weight = if order == 0 { norm } else { 0.5 * norm };
            let transfer = &transfers[order.unsigned_abs() as usize];
            let mut otf = vec![Complex64::default(); fine.len()];
            let mut shifted = vec![Complex64::default(); fine.len()];
            for (i, slot) in embed.iter().enumerate() {
                if let Some(c) = slot {
                    otf[i] = transfer[i] * weight;
                    shifted[i] = band.as_slice()[*c] * (b3 * norm);
                }
            }
            shift_band(&fine_fft, &mut otf, carrier, order);
            shift_band(&fine_fft, &mut shifted, carrier, order);
            for i in 0..fine.len() {
                numerator[i] += otf[i].conj() * shifted[i];
                denominator[i] += otf[i].norm_sqr();
            }
        }
    }

    let w2 = config.wiener_param * config.wiener_param;
    let (u_m, _) = setup.illumination.modulation(&setup.optics);
    let support = setup.optics.lateral_cutoff() + u_m;
    for (i, (n, d)) in numerator.iter_mut().zip(&denominator).enumerate() {
        *n /= d + w2;
        if config.apodization {
            let (u, v, w) = fine.coords(i);
            let f = fine.frequency(u, v, w);
            *n *= (1.0 - f[0].hypot(f[1]) / support).max(0.0);
        }
    }
    fine_fft.inverse(&mut numerator);
    Volume::from_vec(fine, numerator.into_iter().map(|c| c.re).collect())
}
