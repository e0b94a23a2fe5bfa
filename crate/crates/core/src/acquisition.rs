//! Simulated acquisitions and their on-disk layout.
//!
//! A directory holds one volume per raw image, `raw_t{θ}_p{phase}`, and an
//! `acquisition.json` manifest with everything needed to rebuild the model.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{add_poisson_noise_stack, ForwardModel};
use crate::illumination::{IlluminationParams, PatternSpec};
use crate::io::{read_volume, write_volume};
use crate::operator::SimModel;
use crate::optics::{generate_psf, OpticsParams};
use crate::scheme::Scheme;
use crate::volume::{GridSpec, Volume};

pub const MANIFEST: &str = "acquisition.json";

/// Optics, patterns and grids shared by simulation and reconstruction.
#[derive(Debug, Clone)]
pub struct ImagingSetup {
    pub optics: OpticsParams,
    pub illumination: IlluminationParams,
    pub binning: usize,
    /// PSF on the fine (object) grid.
    pub psf: Volume,
}

impl ImagingSetup {
    pub fn new(
        optics: OpticsParams,
        illumination: IlluminationParams,
        object_grid: GridSpec,
        binning: usize,
    ) -> Result<Self> {
        if binning == 0 {
            return Err(Error::InvalidParameter("binning must be >= 1".into()));
        }
        object_grid.coarsen(binning)?;
        let psf = generate_psf(&optics, &object_grid)?;
        Ok(Self { optics, illumination, binning, psf })
    }

    pub fn object_grid(&self) -> GridSpec {
        *self.psf.grid()
    }

    pub fn image_grid(&self) -> GridSpec {
        self.object_grid().coarsen(self.binning).expect("checked at construction")
    }

    pub fn specs(&self, scheme: Scheme) -> Result<Vec<PatternSpec>> {
        scheme.specs(&self.optics, &self.illumination)
    }

    pub fn model(&self, specs: &[PatternSpec]) -> Result<SimModel> {
        SimModel::new(&self.psf, specs, &self.optics, self.binning)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionData {
    pub images: Vec<Volume>,
    pub specs: Vec<PatternSpec>,
    pub scheme: Scheme,
    /// Requested SNR; `+∞` for noiseless data.
    pub target_snr_db: f64,
    /// Achieved SNR; `+∞` for noiseless data.
    pub snr_db: f64,
    pub seed: u64,
    pub binning: usize,
}

impl AcquisitionData {
    pub fn validate(&self) -> Result<()> {
        if self.images.len() != self.scheme.len() || self.specs.len() != self.scheme.len() {
            return Err(Error::MissingImages(format!(
                "{} images and {} patterns for scheme {}",
                self.images.len(),
                self.specs.len(),
                self.scheme
            )));
        }
        if self.binning == 0 {
            return Err(Error::InvalidParameter("binning must be >= 1".into()));
        }
        let grid = *self.images[0].grid();
        for img in &self.images {
            img.grid().ensure_matches(&grid)?;
            if img.min() < 0.0 {
                return Err(Error::InvalidParameter("negative raw image value".into()));
            }
        }
        Ok(())
    }

    pub fn image_grid(&self) -> GridSpec {
        *self.images[0].grid()
    }

    /// The images of `scheme`, taken from a superset acquisition.
    pub fn subset(&self, scheme: Scheme) -> Result<AcquisitionData> {
        let mut keep = Vec::with_capacity(scheme.len());
        for (theta, phase) in scheme.pairs() {
            let idx = self
                .specs
                .iter()
                .position(|s| s.theta_deg == theta && s.phase_index == phase)
                .ok_or_else(|| {
                    Error::MissingImages(format!("{} data has no image at θ={theta}°, phase {phase}", self.scheme))
                })?;
            keep.push(idx);
        }
        Ok(AcquisitionData {
            images: keep.iter().map(|&i| self.images[i].clone()).collect(),
            specs: keep.iter().map(|&i| self.specs[i].clone()).collect(),
            scheme,
            ..self.clone()
        })
    }
}

/// Forward model per pattern, then Poisson noise over the binned stack.
pub fn simulate_acquisition(
    o_true: &Volume,
    setup: &ImagingSetup,
    scheme: Scheme,
    snr_db: f64,
    seed: u64,
) -> Result<AcquisitionData> {
    o_true.grid().ensure_matches(&setup.object_grid())?;
    if o_true.min() < 0.0 {
        return Err(Error::InvalidParameter("object must be nonnegative".into()));
    }
    let specs = setup.specs(scheme)?;
    let clean = setup.model(&specs)?.forward(o_true)?;
    let (images, achieved) = add_poisson_noise_stack(&clean, snr_db, seed)?;
    let data = AcquisitionData {
        images,
        specs,
        scheme,
        target_snr_db: snr_db,
        snr_db: achieved,
        seed,
        binning: setup.binning,
    };
    data.validate()?;
    Ok(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestImage {
    pub file: String,
    pub theta_deg: f64,
    pub phase_index: usize,
    pub phi_rad: f64,
}

/// Contents of `acquisition.json`. SNR fields are `null` for noiseless data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scheme: Scheme,
    pub seed: u64,
    pub target_snr_db: Option<f64>,
    pub snr_db: Option<f64>,
    pub binning: usize,
    pub optics: OpticsParams,
    pub illumination: IlluminationParams,
    pub object_grid: GridSpec,
    pub image_grid: GridSpec,
    pub u_m: f64,
    pub w_m: f64,
    pub images: Vec<ManifestImage>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn write_acquisition(dir: &Path, data: &AcquisitionData, setup: &ImagingSetup) -> Result<Manifest> {
    data.validate()?;
    fs::create_dir_all(dir)?;
    let mut images = Vec::with_capacity(data.images.len());
    for (img, spec) in data.images.iter().zip(&data.specs) {
        let stem = format!("raw_{}", spec.label());
        write_volume(&dir.join(&stem), img)?;
        images.push(ManifestImage {
            file: format!("{stem}.raw"),
            theta_deg: spec.theta_deg,
            phase_index: spec.phase_index,
            phi_rad: spec.phi_rad,
        });
    }
    let (u_m, w_m) = setup.illumination.modulation(&setup.optics);
    let manifest = Manifest {
        scheme: data.scheme,
        seed: data.seed,
        target_snr_db: finite(data.target_snr_db),
        snr_db: finite(data.snr_db),
        binning: data.binning,
        optics: setup.optics,
        illumination: setup.illumination.clone(),
        object_grid: setup.object_grid(),
        image_grid: data.image_grid(),
        u_m,
        w_m,
        images,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads images in manifest order and rebuilds the pattern specs.
pub fn read_acquisition(dir: &Path) -> Result<(AcquisitionData, Manifest)> {
    let manifest = read_manifest(dir)?;
    let mut images = Vec::with_capacity(manifest.images.len());
    let mut specs = Vec::with_capacity(manifest.images.len());
    for entry in &manifest.images {
        let img = read_volume(&dir.join(&entry.file))?;
        img.grid().ensure_matches(&manifest.image_grid)?;
        images.push(img);
        specs.push(manifest.illumination.spec(&manifest.optics, entry.theta_deg, entry.phase_index));
    }
    let expected: Vec<(f64, usize)> = manifest.scheme.pairs();
    let found: Vec<(f64, usize)> = specs.iter().map(|s| (s.theta_deg, s.phase_index)).collect();
    if expected != found {
        return Err(Error::Format(format!(
            "manifest images {found:?} do not match scheme {}",
            manifest.scheme
        )));
    }
    let data = AcquisitionData {
        images,
        specs,
        scheme: manifest.scheme,
        target_snr_db: manifest.target_snr_db.unwrap_or(f64::INFINITY),
        snr_db: manifest.snr_db.unwrap_or(f64::INFINITY),
        seed: manifest.seed,
        binning: manifest.binning,
    };
    data.validate()?;
    Ok((data, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> ImagingSetup {
        let grid = GridSpec::new(32, 32, 16, 60.0, 60.0, 120.0).unwrap();
        ImagingSetup::new(OpticsParams::paper(), IlluminationParams::default(), grid, 2).unwrap()
    }

    fn blob(grid: GridSpec) -> Volume {
        Volume::from_fn(grid, |x, y, z| {
            let r2 = (x as f64 - 16.0).powi(2) + (y as f64 - 15.0).powi(2) + 4.0 * (z as f64 - 8.0).powi(2);
            (-r2 / 20.0).exp()
        })
    }

    #[test]
    fn image_counts_per_scheme() {
        let s = setup();
        let o = blob(s.object_grid());
        for scheme in Scheme::ALL {
            let data = simulate_acquisition(&o, &s, scheme, f64::INFINITY, 1).unwrap();
            assert_eq!(data.images.len(), scheme.len());
            assert_eq!(data.image_grid().dims(), [16, 16, 8]);
        }
    }

    #[test]
    fn noiseless_mode_equals_forward_model() {
        let s = setup();
        let o = blob(s.object_grid());
        let data = simulate_acquisition(&o, &s, Scheme::Full15, f64::INFINITY, 1).unwrap();
        let expected = s.model(&data.specs).unwrap().forward(&o).unwrap();
        for (a, b) in data.images.iter().zip(&expected) {
            assert!(a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| x == y || (*y < 0.0 && *x == 0.0)));
        }
        assert!(data.snr_db.is_infinite());
    }

    #[test]
    fn noisy_data_hits_target() {
        let s = setup();
        let data = simulate_acquisition(&blob(s.object_grid()), &s, Scheme::Reduced7, 15.0, 3).unwrap();
        assert!((data.snr_db - 15.0).abs() <= 0.1);
    }

    #[test]
    fn negative_object_is_rejected() {
        let s = setup();
        let o = blob(s.object_grid()).map(|v| v - 0.5);
        assert!(simulate_acquisition(&o, &s, Scheme::Full15, 15.0, 1).is_err());
    }

    #[test]
    fn round_trips_through_directory() {
        let dir = tempfile::tempdir().unwrap();
        let s = setup();
        let data = simulate_acquisition(&blob(s.object_grid()), &s, Scheme::Reduced5, 20.0, 9).unwrap();
        let manifest = write_acquisition(dir.path(), &data, &s).unwrap();
        assert_eq!(manifest.images[3].file, "raw_t60_p1.raw");
        assert!(dir.path().join("raw_t120_p1.json").exists());
        let (back, m) = read_acquisition(dir.path()).unwrap();
        assert_eq!(m, manifest);
        assert_eq!(back.specs, data.specs);
        assert_eq!(back.seed, 9);
        for (a, b) in back.images.iter().zip(&data.images) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
    }

    #[test]
    fn subsets_follow_scheme_order() {
        let s = setup();
        let full = simulate_acquisition(&blob(s.object_grid()), &s, Scheme::Full15, f64::INFINITY, 0).unwrap();
        let r7 = full.subset(Scheme::Reduced7).unwrap();
        assert_eq!(r7.images[5], full.images[6]);
        assert_eq!(r7.images[6], full.images[11]);
        r7.validate().unwrap();
        assert!(matches!(r7.subset(Scheme::Full15), Err(Error::MissingImages(_))));
        assert_eq!(r7.subset(Scheme::Reduced5).unwrap().images[2], full.images[2]);
    }

    #[test]
    fn noiseless_manifest_uses_null_snr() {
        let dir = tempfile::tempdir().unwrap();
        let s = setup();
        let data = simulate_acquisition(&blob(s.object_grid()), &s, Scheme::Reduced5, f64::INFINITY, 0).unwrap();
        write_acquisition(dir.path(), &data, &s).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST)).unwrap()).unwrap();
        assert!(json["snr_db"].is_null());
        let (back, _) = read_acquisition(dir.path()).unwrap();
        assert!(back.target_snr_db.is_infinite());
    }
}
