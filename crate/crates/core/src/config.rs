//! Run configuration and named presets.

use serde::{Deserialize, Serialize};

use crate::acquisition::ImagingSetup;
use crate::error::{Error, Result};
use crate::gwf::GwfConfig;
use crate::illumination::IlluminationParams;
use crate::metrics::SsimConfig;
use crate::optics::OpticsParams;
use crate::phantom::{BeadRing, PhantomGeometry, PhantomSpec};
use crate::scheme::Scheme;
use crate::solver::SolverConfig;
use crate::volume::GridSpec;

pub const PRESETS: [&str; 4] = ["paper", "desk", "tiny", "hires"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Object (reconstruction) grid size.
    pub size: [usize; 3],
    pub voxel_nm: [f64; 3],
    /// Camera binning factor per axis.
    pub binning: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// `inf` disables noise.
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub grid: GridConfig,
    pub optics: OpticsParams,
    pub pattern: IlluminationParams,
    pub phantom: PhantomGeometry,
    pub noise: NoiseConfig,
    pub scheme: Scheme,
    pub solver: SolverConfig,
    pub gwf: GwfConfig,
    pub ssim: SsimConfig,
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let cubic = |n: usize, voxel: f64, binning: usize| GridConfig {
            size: [n; 3],
            voxel_nm: [voxel; 3],
            binning,
        };
        let base = |preset: &str, grid: GridConfig, max_iters: usize| RunConfig {
            preset: preset.to_string(),
            grid,
            optics: OpticsParams::paper(),
            pattern: IlluminationParams::default(),
            phantom: PhantomGeometry::default(),
            noise: NoiseConfig { snr_db: 15.0, seed: 42 },
            scheme: Scheme::Full15,
            solver: SolverConfig { max_iters, ..SolverConfig::default() },
            gwf: GwfConfig::default(),
            ssim: SsimConfig::default(),
        };
        Ok(match name {
            "paper" => base("paper", cubic(512, 12.5, 2), 150),
            "desk" => base("desk", cubic(128, 50.0, 2), 50),
            "hires" => base("hires", cubic(256, 25.0, 2), 150),
            "tiny" => {
                let mut c = base("tiny", cubic(32, 50.0, 2), 20);
                c.phantom = PhantomGeometry {
                    shell_diameter_nm: 1000.0,
                    shell_thickness_nm: 100.0,
                    rings: vec![BeadRing { radius_nm: 250.0, z_nm: 0.0, count: None }],
                    ..PhantomGeometry::default()
                };
                c
            }
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown preset {other:?} (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        })
    }

    pub fn object_grid(&self) -> Result<GridSpec> {
        let [nx, ny, nz] = self.grid.size;
        let [dx, dy, dz] = self.grid.voxel_nm;
        GridSpec::new(nx, ny, nz, dx, dy, dz)
    }

    pub fn image_grid(&self) -> Result<GridSpec> {
        self.object_grid()?.coarsen(self.grid.binning)
    }

    pub fn phantom_spec(&self) -> Result<PhantomSpec> {
        Ok(PhantomSpec::new(self.object_grid()?, self.phantom.clone()))
    }

    pub fn imaging_setup(&self) -> Result<ImagingSetup> {
        ImagingSetup::new(self.optics, self.pattern.clone(), self.object_grid()?, self.grid.binning)
    }

    pub fn validate(&self) -> Result<()> {
        self.image_grid()?;
        self.optics.validate()?;
        self.solver.validate()?;
        if !(self.gwf.wiener_param > 0.0) {
            return Err(Error::InvalidParameter("gwf.wiener_param must be > 0".into()));
        }
        if self.noise.snr_db.is_nan() {
            return Err(Error::InvalidParameter("noise.snr_db is NaN".into()));
        }
        if self.ssim.size % 2 == 0 || self.ssim.sigma <= 0.0 {
            return Err(Error::InvalidParameter("ssim window must be odd with sigma > 0".into()));
        }
        Ok(())
    }
}

/// Predicted widefield and SIM lateral resolution (nm) for a configuration.
pub fn resolution_bracket(optics: &OpticsParams, pattern: &IlluminationParams) -> (f64, f64) {
    let d = optics.widefield_resolution_nm();
    (d, crate::illumination::sim_resolution_nm(optics, pattern))
}
