//! Per-image acquisition operator, its adjoint, and photon noise.
//!
//! One raw image is
//!
//! ```text
//! g = Bin( Σ_k (o · j_k) ⊛ (h · i_k) )
//! ```
//!
//! with circular 3D convolution and block-averaging camera binning. The
//! functions here evaluate that definition directly, one image at a time;
//! [`crate::operator::SimModel`] evaluates the same operator for a whole
//! pattern set through shared harmonic spectra.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::illumination::PatternComponent;
use crate::volume::{dot, fft_forward, fft_inverse, GridSpec, Spectrum, Volume};

/// A linear map from an object on the fine grid to a stack of raw images on
/// the camera grid.
pub trait ForwardModel: Send + Sync {
    fn object_grid(&self) -> GridSpec;
    fn image_grid(&self) -> GridSpec;
    fn num_images(&self) -> usize;
    /// `[A_1 o, ..., A_L o]`.
    fn forward(&self, o: &Volume) -> Result<Vec<Volume>>;
    /// `Σ_l A_l† r_l`.
    fn adjoint(&self, residuals: &[Volume]) -> Result<Volume>;
}

fn check_components(components: &[PatternComponent], grid: &GridSpec) -> Result<()> {
    for c in components {
        if c.lateral.len() != grid.nx * grid.ny || c.axial.len() != grid.nz {
            return Err(Error::GridMismatch(format!(
                "pattern component sized {}x{} for grid {:?}",
                c.lateral.len(),
                c.axial.len(),
                grid.dims()
            )));
        }
    }
    Ok(())
}

/// `o(x, y, z) · j(x, y)`.
pub fn modulate_lateral(o: &Volume, lateral: &[f64]) -> Volume {
    let g = *o.grid();
    let plane = g.nx * g.ny;
    let data = o.as_slice().iter().enumerate().map(|(i, v)| v * lateral[i % plane]).collect();
    Volume::from_vec(g, data).expect("shape preserved")
}

/// `h(x, y, z) · i(z)`.
pub fn modulate_axial(h: &Volume, axial: &[f64]) -> Volume {
    let g = *h.grid();
    let plane = g.nx * g.ny;
    let data = h.as_slice().iter().enumerate().map(|(i, v)| v * axial[i / plane]).collect();
    Volume::from_vec(g, data).expect("shape preserved")
}

/// Spectra of the per-component kernels `h · i_k`.
pub fn kernel_spectra(components: &[PatternComponent], h: &Volume) -> Vec<Spectrum> {
    components.iter().map(|c| fft_forward(&modulate_axial(h, &c.axial))).collect()
}

fn forward_with_kernels(
    o: &Volume,
    laterals: &[&[f64]],
    kernels: &[Spectrum],
    binning: usize,
) -> Result<Volume> {
    let g = *o.grid();
    let mut acc = vec![Complex64::default(); g.len()];
    for (lateral, kernel) in laterals.iter().zip(kernels) {
        kernel.grid().ensure_matches(&g)?;
        let spectrum = fft_forward(&modulate_lateral(o, lateral));
        for ((a, s), k) in acc.iter_mut().zip(spectrum.as_slice()).zip(kernel.as_slice()) {
            *a += s * k;
        }
    }
    fft_inverse(&Spectrum::from_vec(g, acc)?).bin(binning)
}

fn adjoint_with_kernels(
    r: &Volume,
    laterals: &[&[f64]],
    kernels: &[Spectrum],
    binning: usize,
) -> Result<Volume> {
    let up = r.bin_adjoint(binning)?;
    let g = *up.grid();
    let spectrum = fft_forward(&up);
    let mut out = Volume::zeros(g);
    for (lateral, kernel) in laterals.iter().zip(kernels) {
        kernel.grid().ensure_matches(&g)?;
        let corr: Vec<Complex64> =
            spectrum.as_slice().iter().zip(kernel.as_slice()).map(|(s, k)| s * k.conj()).collect();
        let q = fft_inverse(&Spectrum::from_vec(g, corr)?);
        out.axpy(1.0, &modulate_lateral(&q, lateral))?;
    }
    Ok(out)
}

/// One raw image: `Bin(Σ_k (o·j_k) ⊛ (h·i_k))`.
pub fn apply_forward(
    o: &Volume,
    components: &[PatternComponent],
    h: &Volume,
    binning: usize,
) -> Result<Volume> {
    o.grid().ensure_matches(h.grid())?;
    check_components(components, o.grid())?;
    o.grid().coarsen(binning)?;
    let laterals: Vec<&[f64]> = components.iter().map(|c| c.lateral.as_slice()).collect();
    forward_with_kernels(o, &laterals, &kernel_spectra(components, h), binning)
}

/// Adjoint of [`apply_forward`]: `Σ_k j_k · corr(Bin†(r), h·i_k)`.
pub fn apply_adjoint(
    r: &Volume,
    components: &[PatternComponent],
    h: &Volume,
    binning: usize,
) -> Result<Volume> {
    let fine = r.grid().refine(binning)?;
    fine.ensure_matches(h.grid())?;
    check_components(components, &fine)?;
    let laterals: Vec<&[f64]> = components.iter().map(|c| c.lateral.as_slice()).collect();
    adjoint_with_kernels(r, &laterals, &kernel_spectra(components, h), binning)
}

/// Forward model over explicit per-image components, evaluated image by
/// image with cached kernel spectra. Suitable for arbitrary patterns.
pub struct ComponentModel {
    fine: GridSpec,
    coarse: GridSpec,
    binning: usize,
    images: Vec<(Vec<PatternComponent>, Vec<Spectrum>)>,
}

impl ComponentModel {
    pub fn new(h: &Volume, images: Vec<Vec<PatternComponent>>, binning: usize) -> Result<Self> {
        let fine = *h.grid();
        let coarse = fine.coarsen(binning)?;
        let images = images
            .into_iter()
            .map(|components| {
                check_components(&components, &fine)?;
                let kernels = kernel_spectra(&components, h);
                Ok((components, kernels))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { fine, coarse, binning, images })
    }

    /// Widefield imaging: one image, uniform illumination.
    pub fn widefield(h: &Volume, binning: usize) -> Result<Self> {
        Self::new(h, vec![vec![PatternComponent::uniform(h.grid())]], binning)
    }
}

impl ForwardModel for ComponentModel {
    fn object_grid(&self) -> GridSpec {
        self.fine
    }

    fn image_grid(&self) -> GridSpec {
        self.coarse
    }

    fn num_images(&self) -> usize {
        self.images.len()
    }

    fn forward(&self, o: &Volume) -> Result<Vec<Volume>> {
        o.grid().ensure_matches(&self.fine)?;
        self.images
            .iter()
            .map(|(components, kernels)| {
                let laterals: Vec<&[f64]> = components.iter().map(|c| c.lateral.as_slice()).collect();
                forward_with_kernels(o, &laterals, kernels, self.binning)
            })
            .collect()
    }

    fn adjoint(&self, residuals: &[Volume]) -> Result<Volume> {
        if residuals.len() != self.images.len() {
            return Err(Error::MissingImages(format!(
                "{} residuals for {} images",
                residuals.len(),
                self.images.len()
            )));
        }
        let mut out = Volume::zeros(self.fine);
        for (r, (components, kernels)) in residuals.iter().zip(&self.images) {
            r.grid().ensure_matches(&self.coarse)?;
            let laterals: Vec<&[f64]> = components.iter().map(|c| c.lateral.as_slice()).collect();
            out.axpy(1.0, &adjoint_with_kernels(r, &laterals, kernels, self.binning)?)?;
        }
        Ok(out)
    }
}

/// `10 log10(‖g‖² / ‖noisy − g‖²)` over a whole stack.
pub fn stack_snr_db(clean: &[Volume], noisy: &[Volume]) -> f64 {
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (c, n) in clean.iter().zip(noisy) {
        signal += c.norm_sq();
        noise += c
            .as_slice()
            .iter()
            .zip(n.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}

const SCALE_BOUNDS: (f64, f64) = (1e-6, 1e12);
const SNR_TOLERANCE_DB: f64 = 0.1;

fn sample_poisson(images: &[Volume], scale: f64, seed: u64) -> Vec<Volume> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    images
        .iter()
        .map(|g| {
            let data = g
                .as_slice()
                .iter()
                .map(|&v| {
                    let lambda = scale * v;
                    if lambda > 0.0 {
                        Poisson::new(lambda).expect("positive rate").sample(&mut rng) / scale
                    } else {
                        0.0
                    }
                })
                .collect();
            Volume::from_vec(*g.grid(), data).expect("shape preserved")
        })
        .collect()
}

/// Replace each stack value `g` by `Poisson(s·g)/s`, with one photon scale
/// `s` for the whole stack calibrated so that the stack SNR is within
/// 0.1 dB of `target_snr_db`. An infinite target returns the clean stack.
///
/// Returns the noisy stack and the achieved SNR.
pub fn add_poisson_noise_stack(
    images: &[Volume],
    target_snr_db: f64,
    seed: u64,
) -> Result<(Vec<Volume>, f64)> {
    if target_snr_db.is_nan() {
        return Err(Error::InvalidParameter("target SNR is NaN".into()));
    }
    // tiny negatives from FFT round-off
    let peak = images.iter().map(Volume::max).fold(1.0, f64::max);
    let floor = -1e-12 * peak;
    let clean: Vec<Volume> =
        images.iter().map(|g| g.map(|v| if v < 0.0 && v >= floor { 0.0 } else { v })).collect();
    if let Some(bad) = clean.iter().find(|g| g.min() < 0.0) {
        return Err(Error::InvalidParameter(format!("negative intensity {}", bad.min())));
    }
    let signal: f64 = clean.iter().map(Volume::norm_sq).sum();
    let total: f64 = clean.iter().map(Volume::sum).sum();
    if signal == 0.0 {
        return Err(Error::ZeroSignal);
    }
    if target_snr_db == f64::INFINITY {
        return Ok((clean, f64::INFINITY));
    }

    // E‖noise‖² = Σg / s
    let guess = total / (signal * 10f64.powf(-target_snr_db / 10.0));
    let (min_s, max_s) = SCALE_BOUNDS;
    if !(guess.is_finite() && guess >= min_s && guess <= max_s) {
        return Err(Error::SnrUnreachable(format!(
            "{target_snr_db} dB needs photon scale {guess:.3e} outside [{min_s:e}, {max_s:e}]"
        )));
    }
    let evaluate = |s: f64| {
        let noisy = sample_poisson(&clean, s, seed);
        let snr = stack_snr_db(&clean, &noisy);
        (noisy, snr)
    };

    let mut best = evaluate(guess);
    let mut best_err = (best.1 - target_snr_db).abs();
    let (mut lo, mut hi) = (guess, guess);
    if best.1 > target_snr_db {
        hi = guess;
        loop {
            lo /= 2.0;
            if lo < min_s {
                return Err(Error::SnrUnreachable(format!("{target_snr_db} dB below bracket")));
            }
            if evaluate(lo).1 <= target_snr_db {
                break;
            }
        }
    } else {
        lo = guess;
        loop {
            hi *= 2.0;
            if hi > max_s {
                return Err(Error::SnrUnreachable(format!("{target_snr_db} dB above bracket")));
            }
            if evaluate(hi).1 >= target_snr_db {
                break;
            }
        }
    }
    for _ in 0..60 {
        if best_err <= 0.02 {
            break;
        }
        let mid = (lo * hi).sqrt();
        let candidate = evaluate(mid);
        let err = (candidate.1 - target_snr_db).abs();
        if candidate.1 < target_snr_db {
            lo = mid;
        } else {
            hi = mid;
        }
        if err < best_err {
            best_err = err;
            best = candidate;
        }
    }
    if best_err > SNR_TOLERANCE_DB {
        return Err(Error::SnrUnreachable(format!(
            "closest achieved SNR {:.3} dB for target {target_snr_db} dB",
            best.1
        )));
    }
    Ok(best)
}

/// Single-volume form of [`add_poisson_noise_stack`].
pub fn add_poisson_noise(g: &Volume, target_snr_db: f64, seed: u64) -> Result<(Volume, f64)> {
    let (mut noisy, snr) = add_poisson_noise_stack(std::slice::from_ref(g), target_snr_db, seed)?;
    Ok((noisy.remove(0), snr))
}

/// `Σ_l ‖g_l − p_l‖²`.
pub fn residual_energy(data: &[Volume], prediction: &[Volume]) -> f64 {
    data.iter()
        .zip(prediction)
        .map(|(d, p)| {
            d.as_slice().iter().zip(p.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

/// `Σ_l ⟨a_l, b_l⟩`.
pub fn stack_dot(a: &[Volume], b: &[Volume]) -> f64 {
    a.iter().zip(b).map(|(x, y)| dot(x.as_slice(), y.as_slice())).sum()
}
