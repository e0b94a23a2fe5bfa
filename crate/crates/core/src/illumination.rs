//! Three-beam interference patterns as separable lateral/axial components.
//!
//! With equal beam amplitudes and `ψ = 2π (u_m/2)(x cosθ + y sinθ)` the
//! intensity is
//!
//! ```text
//! I(x, z) = 3/9 + 4/9 cos(ψ + φ) cos(2π w_m z) + 2/9 cos(2ψ + 2φ)
//! ```
//!
//! so `u_m` is the highest lateral harmonic and `u_m/2` the fundamental.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::OpticsParams;
use crate::volume::{GridSpec, Volume};

pub const ORIENTATIONS_DEG: [f64; 3] = [0.0, 60.0, 120.0];
pub const PHASE_COUNT: usize = 5;
/// Number of separable components per pattern.
pub const COMPONENTS: usize = 3;

/// Component weights of the equal-amplitude three-beam pattern.
const WEIGHTS: [f64; 3] = [3.0, 4.0, 2.0];

/// Phase of step `index` in the uniform five-phase cycle.
pub fn phase_of(index: usize) -> f64 {
    TAU * index as f64 / PHASE_COUNT as f64
}

/// Pattern frequency settings relative to the objective cutoffs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationParams {
    /// Highest lateral harmonic as a fraction of `u_c`.
    pub lateral_ratio: f64,
    /// `w_m / u_m`; `None` uses `w_c / u_c = NA / (4n)`.
    pub axial_ratio: Option<f64>,
    pub orientations_deg: Vec<f64>,
    pub phases: usize,
    pub peak_normalized: bool,
}

impl Default for IlluminationParams {
    fn default() -> Self {
        Self {
            lateral_ratio: 0.8,
            axial_ratio: None,
            orientations_deg: ORIENTATIONS_DEG.to_vec(),
            phases: PHASE_COUNT,
            peak_normalized: true,
        }
    }
}

impl IlluminationParams {
    /// `(u_m, w_m)` in cycles/nm.
    pub fn modulation(&self, optics: &OpticsParams) -> (f64, f64) {
        let u_m = self.lateral_ratio * optics.lateral_cutoff();
        let ratio = self.axial_ratio.unwrap_or_else(|| optics.axial_to_lateral_ratio());
        (u_m, ratio * u_m)
    }

    pub fn spec(&self, optics: &OpticsParams, theta_deg: f64, phase_index: usize) -> PatternSpec {
        let (u_m, w_m) = self.modulation(optics);
        PatternSpec {
            theta_deg,
            phase_index,
            phi_rad: TAU * phase_index as f64 / self.phases as f64,
            u_m,
            w_m,
            peak_normalized: self.peak_normalized,
        }
    }
}

/// One `(θ, φ)` illumination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub theta_deg: f64,
    pub phase_index: usize,
    pub phi_rad: f64,
    /// Highest lateral harmonic (cycles/nm).
    pub u_m: f64,
    /// Axial modulation frequency (cycles/nm).
    pub w_m: f64,
    pub peak_normalized: bool,
}

impl PatternSpec {
    pub fn validate(&self, optics: &OpticsParams) -> Result<()> {
        if !(self.u_m >= 0.0 && self.w_m >= 0.0) {
            return Err(Error::InvalidParameter("modulation frequencies must be >= 0".into()));
        }
        if self.u_m > optics.lateral_cutoff() * (1.0 + 1e-12) {
            return Err(Error::PatternBeyondCutoff);
        }
        Ok(())
    }

    pub fn theta_rad(&self) -> f64 {
        self.theta_deg.to_radians()
    }

    /// Lateral fundamental frequency vector `(u_m/2)(cosθ, sinθ)`.
    pub fn fundamental(&self) -> [f64; 2] {
        let t = self.theta_rad();
        [0.5 * self.u_m * t.cos(), 0.5 * self.u_m * t.sin()]
    }

    /// Phase `ψ` of the fundamental at voxel `(x, y)`.
    pub fn psi(&self, grid: &GridSpec, x: usize, y: usize) -> f64 {
        let [kx, ky] = self.fundamental();
        TAU * (kx * x as f64 * grid.dx + ky * y as f64 * grid.dy)
    }

    /// Weights of the three components (sum 1 when peak-normalized).
    pub fn weights(&self) -> [f64; 3] {
        let scale = if self.peak_normalized { 1.0 / 9.0 } else { 1.0 };
        WEIGHTS.map(|w| w * scale)
    }

    /// File stem used for dumps, e.g. `t60_p2`.
    pub fn label(&self) -> String {
        format!("t{}_p{}", self.theta_deg.round() as i64, self.phase_index)
    }
}

/// Separable term `j_k(x, y) · i_k(z)` of a pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternComponent {
    /// `nx * ny` values, x-fastest.
    pub lateral: Vec<f64>,
    /// `nz` values sampled origin-cornered (`z` from the focal plane).
    pub axial: Vec<f64>,
}

impl PatternComponent {
    pub fn uniform(grid: &GridSpec) -> Self {
        Self { lateral: vec![1.0; grid.nx * grid.ny], axial: vec![1.0; grid.nz] }
    }
}

/// The three components of a pattern on `grid`.
pub fn pattern_components(
    spec: &PatternSpec,
    optics: &OpticsParams,
    grid: &GridSpec,
) -> Result<Vec<PatternComponent>> {
    spec.validate(optics)?;
    let [w0, w1, w2] = spec.weights();
    let plane = grid.nx * grid.ny;
    let mut first = Vec::with_capacity(plane);
    let mut second = Vec::with_capacity(plane);
    for y in 0..grid.ny {
        for x in 0..grid.nx {
            let arg = spec.psi(grid, x, y) + spec.phi_rad;
            first.push(arg.cos());
            second.push((2.0 * arg).cos());
        }
    }
    let axial: Vec<f64> = (0..grid.nz)
        .map(|k| {
            let z = GridSpec::centered_offset(k, grid.nz, grid.dz);
            w1 * (TAU * spec.w_m * z).cos()
        })
        .collect();
    Ok(vec![
        PatternComponent { lateral: vec![1.0; plane], axial: vec![w0; grid.nz] },
        PatternComponent { lateral: first, axial },
        PatternComponent { lateral: second, axial: vec![w2; grid.nz] },
    ])
}

/// All patterns of the acquisition protocol, orientation-major and
/// phase-ascending.
pub fn pattern_set(
    optics: &OpticsParams,
    params: &IlluminationParams,
    grid: &GridSpec,
) -> Result<Vec<(PatternSpec, Vec<PatternComponent>)>> {
    let mut out = Vec::with_capacity(params.orientations_deg.len() * params.phases);
    for &theta in &params.orientations_deg {
        for p in 0..params.phases {
            let spec = params.spec(optics, theta, p);
            let comps = pattern_components(&spec, optics, grid)?;
            out.push((spec, comps));
        }
    }
    Ok(out)
}

/// `Σ_k j_k(x, y) i_k(z)` as a volume.
pub fn recombine(components: &[PatternComponent], grid: &GridSpec) -> Volume {
    Volume::from_fn(*grid, |x, y, z| {
        components
            .iter()
            .map(|c| c.lateral[x + grid.nx * y] * c.axial[z])
            .sum()
    })
}

/// Predicted SIM lateral resolution `d / (1 + u_m / u_c)` (nm).
pub fn sim_resolution_nm(optics: &OpticsParams, params: &IlluminationParams) -> f64 {
    let (u_m, _) = params.modulation(optics);
    optics.widefield_resolution_nm() / (1.0 + u_m / optics.lateral_cutoff())
}
