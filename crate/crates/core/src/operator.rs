//! Stacked SIM operator evaluated through shared harmonic spectra.
//!
//! Writing `cos(ψ+φ) = Re(e^{iφ} e^{iψ})`, every raw image of one
//! orientation is the real part of
//!
//! ```text
//! IFFT_c( C0 + e^{iφ} C1 + e^{2iφ} C2 )
//! ```
//!
//! where `C0`, `C1`, `C2` are coarse spectra that depend on the object and
//! the orientation but not on the phase. Binning is applied in the Fourier
//! domain: multiply by the box transfer and fold onto the coarse lattice.
//! A forward pass over 15 images costs 7 fine FFTs, the adjoint 7 more.

use std::f64::consts::TAU;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::Fft3;
use crate::forward::{modulate_axial, ForwardModel};
use crate::illumination::PatternSpec;
use crate::optics::OpticsParams;
use crate::volume::{fft_forward, GridSpec, Volume};

struct Orientation {
    theta_deg: f64,
    /// `e^{iψ}` over the lateral plane.
    carrier: Vec<Complex64>,
}

/// Harmonic spectra of one object on the coarse grid.
pub struct Harmonics {
    pub c0: Vec<Complex64>,
    /// `[C1, C2]` per orientation.
    pub bands: Vec<[Vec<Complex64>; 2]>,
}

/// Forward model for a set of three-beam patterns sharing `u_m`, `w_m` and
/// weights.
pub struct SimModel {
    fine: GridSpec,
    coarse: GridSpec,
    binning: usize,
    specs: Vec<PatternSpec>,
    orientations: Vec<Orientation>,
    image_orientation: Vec<usize>,
    weights: [f64; 3],
    /// `Bf · FFT(h)`.
    base: Vec<Complex64>,
    /// `Bf · FFT(h · cos(2π w_m z))`.
    modulated: Vec<Complex64>,
}

/// Per-axis box transfer `(1/b) Σ_t e^{+2πi u t / N}`.
fn box_transfer(n: usize, b: usize) -> Vec<Complex64> {
    (0..n)
        .map(|u| {
            (0..b)
                .map(|t| Complex64::from_polar(1.0, TAU * (u * t) as f64 / n as f64))
                .sum::<Complex64>()
                / b as f64
        })
        .collect()
}

impl SimModel {
    pub fn new(
        h: &Volume,
        specs: &[PatternSpec],
        optics: &OpticsParams,
        binning: usize,
    ) -> Result<Self> {
        let fine = *h.grid();
        let coarse = fine.coarsen(binning)?;
        let first = specs
            .first()
            .ok_or_else(|| Error::MissingImages("no illumination patterns".into()))?;
        for s in specs {
            s.validate(optics)?;
            if s.u_m != first.u_m || s.w_m != first.w_m || s.peak_normalized != first.peak_normalized {
                return Err(Error::InvalidParameter(
                    "patterns must share modulation frequencies and normalization".into(),
                ));
            }
        }

        let mut orientations: Vec<Orientation> = Vec::new();
        let mut image_orientation = Vec::with_capacity(specs.len());
        for s in specs {
            let idx = match orientations.iter().position(|o| o.theta_deg == s.theta_deg) {
                Some(i) => i,
                None => {
                    let mut carrier = Vec::with_capacity(fine.nx * fine.ny);
                    for y in 0..fine.ny {
                        for x in 0..fine.nx {
                            carrier.push(Complex64::from_polar(1.0, s.psi(&fine, x, y)));
                        }
                    }
                    orientations.push(Orientation { theta_deg: s.theta_deg, carrier });
                    orientations.len() - 1
                }
            };
            image_orientation.push(idx);
        }

        let bx = box_transfer(fine.nx, binning);
        let by = box_transfer(fine.ny, binning);
        let bz = box_transfer(fine.nz, binning);
        let with_box = |mut s: Vec<Complex64>| {
            for (i, v) in s.iter_mut().enumerate() {
                let (u, w, k) = fine.coords(i);
                *v *= bx[u] * by[w] * bz[k];
            }
            s
        };
        let axial: Vec<f64> = (0..fine.nz)
            .map(|k| (TAU * first.w_m * GridSpec::centered_offset(k, fine.nz, fine.dz)).cos())
            .collect();
        let base = with_box(fft_forward(h).into_vec());
        let modulated = with_box(fft_forward(&modulate_axial(h, &axial)).into_vec());

        Ok(Self {
            fine,
            coarse,
            binning,
            specs: specs.to_vec(),
            orientations,
            image_orientation,
            weights: first.weights(),
            base,
            modulated,
        })
    }

    pub fn specs(&self) -> &[PatternSpec] {
        &self.specs
    }

    pub fn binning(&self) -> usize {
        self.binning
    }

    pub fn orientations_deg(&self) -> Vec<f64> {
        self.orientations.iter().map(|o| o.theta_deg).collect()
    }

    /// Orientation index of each image.
    pub fn image_orientation(&self) -> &[usize] {
        &self.image_orientation
    }

    /// `e^{iψ}` of orientation `j` over the fine lateral plane.
    pub fn carrier(&self, j: usize) -> &[Complex64] {
        &self.orientations[j].carrier
    }

    /// Fine-grid transfer of harmonic `|m|`, box transfer and weight
    /// included: `T_0 = w0 Bf H`, `T_1 = w1 Bf H_cos`, `T_2 = w2 Bf H`.
    pub fn harmonic_transfer(&self, m: usize) -> Vec<Complex64> {
        let (src, w) = match m {
            0 => (&self.base, self.weights[0]),
            1 => (&self.modulated, self.weights[1]),
            2 => (&self.base, self.weights[2]),
            _ => panic!("harmonic order {m} out of range"),
        };
        src.iter().map(|v| v * w).collect()
    }

    /// `(1/b³) Σ_a (src · kernel)[q + aM]`, scaled by `weight`.
    fn fold(&self, src: &[Complex64], kernel: &[Complex64], weight: f64) -> Vec<Complex64> {
        let (f, c) = (&self.fine, &self.coarse);
        let mut out = vec![Complex64::default(); c.len()];
        for w in 0..f.nz {
            for v in 0..f.ny {
                let fi = f.index(0, v, w);
                let ci = c.index(0, v % c.ny, w % c.nz);
                for u in 0..f.nx {
                    out[ci + u % c.nx] += src[fi + u] * kernel[fi + u];
                }
            }
        }
        let scale = weight / (self.binning.pow(3)) as f64;
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    /// `conj(kernel)[u] · coarse[u mod M]` on the fine grid, scaled.
    fn unfold(&self, coarse: &[Complex64], kernel: &[Complex64], weight: f64) -> Vec<Complex64> {
        let (f, c) = (&self.fine, &self.coarse);
        let mut out = vec![Complex64::default(); f.len()];
        out.par_chunks_mut(f.nx * f.ny).enumerate().for_each(|(w, slab)| {
            for v in 0..f.ny {
                let ci = c.index(0, v % c.ny, w % c.nz);
                let fi = f.index(0, v, w);
                for u in 0..f.nx {
                    slab[v * f.nx + u] = kernel[fi + u].conj() * coarse[ci + u % c.nx] * weight;
                }
            }
        });
        out
    }

    fn modulate(&self, o: &[f64], carrier: &[Complex64], order: i32) -> Vec<Complex64> {
        let plane = self.fine.nx * self.fine.ny;
        o.par_iter()
            .enumerate()
            .map(|(i, &v)| carrier[i % plane].powi(order) * v)
            .collect()
    }

    pub fn harmonics(&self, o: &Volume) -> Result<Harmonics> {
        o.grid().ensure_matches(&self.fine)?;
        let fft = Fft3::cached(self.fine.nx, self.fine.ny, self.fine.nz);
        let [w0, w1, w2] = self.weights;
        let mut spectrum: Vec<Complex64> = o.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.forward(&mut spectrum);
        let c0 = self.fold(&spectrum, &self.base, w0);
        drop(spectrum);
        let bands = self
            .orientations
            .par_iter()
            .map(|orient| {
                let mut z1 = self.modulate(o.as_slice(), &orient.carrier, 1);
                fft.forward(&mut z1);
                let c1 = self.fold(&z1, &self.modulated, w1);
                drop(z1);
                let mut z2 = self.modulate(o.as_slice(), &orient.carrier, 2);
                fft.forward(&mut z2);
                let c2 = self.fold(&z2, &self.base, w2);
                [c1, c2]
            })
            .collect();
        Ok(Harmonics { c0, bands })
    }

    /// Coarse spectrum of image `l` from the harmonic spectra.
    pub fn image_spectrum(&self, harmonics: &Harmonics, l: usize) -> Vec<Complex64> {
        let phi = self.specs[l].phi_rad;
        let [c1, c2] = &harmonics.bands[self.image_orientation[l]];
        let (e1, e2) = (Complex64::from_polar(1.0, phi), Complex64::from_polar(1.0, 2.0 * phi));
        harmonics
            .c0
            .iter()
            .zip(c1)
            .zip(c2)
            .map(|((a, b), c)| a + e1 * b + e2 * c)
            .collect()
    }
}

impl ForwardModel for SimModel {
    fn object_grid(&self) -> GridSpec {
        self.fine
    }

    fn image_grid(&self) -> GridSpec {
        self.coarse
    }

    fn num_images(&self) -> usize {
        self.specs.len()
    }

    fn forward(&self, o: &Volume) -> Result<Vec<Volume>> {
        let harmonics = self.harmonics(o)?;
        let fft = Fft3::cached(self.coarse.nx, self.coarse.ny, self.coarse.nz);
        (0..self.specs.len())
            .map(|l| {
                let mut s = self.image_spectrum(&harmonics, l);
                fft.inverse(&mut s);
                Volume::from_vec(self.coarse, s.into_iter().map(|c| c.re).collect())
            })
            .collect()
    }

    fn adjoint(&self, residuals: &[Volume]) -> Result<Volume> {
        if residuals.len() != self.specs.len() {
            return Err(Error::MissingImages(format!(
                "{} residuals for {} images",
                residuals.len(),
                self.specs.len()
            )));
        }
        let coarse_fft = Fft3::cached(self.coarse.nx, self.coarse.ny, self.coarse.nz);
        let fine_fft = Fft3::cached(self.fine.nx, self.fine.ny, self.fine.nz);
        let [w0, w1, w2] = self.weights;

        let n = self.coarse.len();
        let mut total = vec![Complex64::default(); n];
        let mut sums = vec![[vec![Complex64::default(); n], vec![Complex64::default(); n]]; self.orientations.len()];
        for (l, r) in residuals.iter().enumerate() {
            r.grid().ensure_matches(&self.coarse)?;
            let mut s: Vec<Complex64> = r.as_slice().iter().map(|&v| Complex64::new(v, 0.0)).collect();
            coarse_fft.forward(&mut s);
            let phi = self.specs[l].phi_rad;
            let (e1, e2) = (Complex64::from_polar(1.0, phi), Complex64::from_polar(1.0, 2.0 * phi));
            let [s1, s2] = &mut sums[self.image_orientation[l]];
            for i in 0..n {
                total[i] += s[i];
                s1[i] += e1 * s[i];
                s2[i] += e2 * s[i];
            }
        }

        let mut q0 = self.unfold(&total, &self.base, w0);
        fine_fft.inverse(&mut q0);
        let mut out: Vec<f64> = q0.iter().map(|c| c.re).collect();
        drop(q0);

        let plane = self.fine.nx * self.fine.ny;
        let parts: Vec<Vec<f64>> = self
            .orientations
            .par_iter()
            .zip(&sums)
            .map(|(orient, [s1, s2])| {
                let mut t1 = self.unfold(s1, &self.modulated, w1);
                fine_fft.inverse(&mut t1);
                let mut part: Vec<f64> = t1
                    .par_iter()
                    .enumerate()
                    .map(|(i, t)| (orient.carrier[i % plane] * t).re)
                    .collect();
                drop(t1);
                let mut t2 = self.unfold(s2, &self.base, w2);
                fine_fft.inverse(&mut t2);
                part.par_iter_mut().zip(&t2).enumerate().for_each(|(i, (p, t))| {
                    *p += (orient.carrier[i % plane].powi(2) * t).re;
                });
                part
            })
            .collect();
        for part in parts {
            out.par_iter_mut().zip(&part).for_each(|(a, b)| *a += b);
        }
        Volume::from_vec(self.fine, out)
    }
}
