//! Shell-and-beads test object.

use std::f64::consts::TAU;
use std::ops::{Deref, DerefMut};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{GridSpec, Volume};

/// Beads spaced evenly on a lateral circle around the cube center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeadRing {
    pub radius_nm: f64,
    /// Axial offset of the ring plane from the cube center.
    pub z_nm: f64,
    /// Number of beads; `None` fills the circle.
    pub count: Option<usize>,
}

/// Phantom geometry independent of the sampling grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomGeometry {
    /// Outer diameter; `0` disables the shell.
    pub shell_diameter_nm: f64,
    pub shell_thickness_nm: f64,
    pub bead_diameter_nm: f64,
    /// Center-to-center distance of neighboring beads on a ring.
    pub bead_spacing_nm: f64,
    pub rings: Vec<BeadRing>,
    pub shell_intensity: f64,
    pub bead_intensity: f64,
    /// Minimum empty margin around the shell, as a fraction of the cube side.
    pub guard_fraction: f64,
}

impl Default for PhantomGeometry {
    /// 3 µm shell of 200 nm wall with two rings of 150 nm beads at 175 nm
    /// spacing in the focal plane.
    fn default() -> Self {
        Self {
            shell_diameter_nm: 3000.0,
            shell_thickness_nm: 200.0,
            bead_diameter_nm: 150.0,
            bead_spacing_nm: 175.0,
            rings: vec![
                BeadRing { radius_nm: 600.0, z_nm: 0.0, count: None },
                BeadRing { radius_nm: 1000.0, z_nm: 0.0, count: None },
            ],
            shell_intensity: 1.0,
            bead_intensity: 1.0,
            guard_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub grid: GridSpec,
    pub geometry: PhantomGeometry,
}

impl Deref for PhantomSpec {
    type Target = PhantomGeometry;

    fn deref(&self) -> &PhantomGeometry {
        &self.geometry
    }
}

impl DerefMut for PhantomSpec {
    fn deref_mut(&mut self) -> &mut PhantomGeometry {
        &mut self.geometry
    }
}

impl PhantomSpec {
    pub fn new(grid: GridSpec, geometry: PhantomGeometry) -> Self {
        Self { grid, geometry }
    }

    pub fn standard(grid: GridSpec) -> Self {
        Self::new(grid, PhantomGeometry::default())
    }

    /// No shell, no beads.
    pub fn empty(grid: GridSpec) -> Self {
        let mut spec = Self::standard(grid);
        spec.shell_diameter_nm = 0.0;
        spec.rings.clear();
        spec
    }

    /// Cube center in nm (voxel `n/2` on every axis).
    pub fn center_nm(&self) -> [f64; 3] {
        let g = &self.grid;
        [(g.nx / 2) as f64 * g.dx, (g.ny / 2) as f64 * g.dy, (g.nz / 2) as f64 * g.dz]
    }

    /// Angular step between neighbors on a ring of radius `r`.
    fn ring_step(&self, r: f64) -> Result<f64> {
        let half = self.bead_spacing_nm / 2.0;
        if r < half {
            return Err(Error::InvalidGeometry(format!("ring radius {r} nm below half the bead spacing")));
        }
        Ok(2.0 * (half / r).asin())
    }

    /// Bead centers in nm. Bead `k` of a ring sits at angle `(k − ½)·step`,
    /// so beads 0 and 1 straddle the +x axis.
    pub fn bead_centers(&self) -> Result<Vec<[f64; 3]>> {
        let c = self.center_nm();
        let mut out = Vec::new();
        for ring in &self.rings {
            let step = self.ring_step(ring.radius_nm)?;
            let max_count = ((TAU / step) + 1e-9).floor() as usize;
            let count = ring.count.unwrap_or(max_count);
            if count > max_count {
                return Err(Error::InvalidGeometry(format!(
                    "{count} beads do not fit on a ring of radius {} nm",
                    ring.radius_nm
                )));
            }
            for k in 0..count {
                let a = (k as f64 - 0.5) * step;
                out.push([c[0] + ring.radius_nm * a.cos(), c[1] + ring.radius_nm * a.sin(), c[2] + ring.z_nm]);
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<Vec<[f64; 3]>> {
        let g = &self.grid;
        let [ex, ey, ez] = g.extent();
        let side = ex.min(ey).min(ez);
        for (name, v) in [
            ("shell diameter", self.shell_diameter_nm),
            ("shell thickness", self.shell_thickness_nm),
            ("bead diameter", self.bead_diameter_nm),
            ("guard fraction", self.guard_fraction),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidGeometry(format!("{name} must be finite and >= 0")));
            }
        }
        if self.shell_thickness_nm > self.shell_diameter_nm / 2.0 && self.shell_diameter_nm > 0.0 {
            return Err(Error::InvalidGeometry("shell thickness exceeds its radius".into()));
        }
        let c = self.center_nm();
        let guard = self.guard_fraction * side;
        let radius = self.shell_diameter_nm / 2.0;
        let half_extent = [ex / 2.0, ey / 2.0, ez / 2.0];
        let fits = |p: [f64; 3], r: f64| {
            (0..3).all(|a| p[a] - r >= guard && p[a] + r <= 2.0 * half_extent[a] - guard)
        };
        if self.shell_diameter_nm > 0.0 && !fits(c, radius) {
            return Err(Error::InvalidGeometry(format!(
                "shell of diameter {} nm leaves less than the {guard:.0} nm guard band",
                self.shell_diameter_nm
            )));
        }
        let beads = self.bead_centers()?;
        if !beads.is_empty() && self.bead_spacing_nm < self.bead_diameter_nm {
            return Err(Error::InvalidGeometry("bead spacing below bead diameter".into()));
        }
        let rb = self.bead_diameter_nm / 2.0;
        let inner = radius - self.shell_thickness_nm;
        for (i, p) in beads.iter().enumerate() {
            if !fits(*p, rb) {
                return Err(Error::InvalidGeometry(format!("bead {i} crosses the guard band")));
            }
            if self.shell_diameter_nm > 0.0 {
                let d = dist(*p, c);
                if d + rb > inner {
                    return Err(Error::InvalidGeometry(format!("bead {i} touches the shell")));
                }
            }
            for q in &beads[..i] {
                if dist(*p, *q) < self.bead_spacing_nm * (1.0 - 1e-9) {
                    return Err(Error::InvalidGeometry(format!("bead {i} closer than the bead spacing")));
                }
            }
        }
        Ok(beads)
    }

    /// Voxel through which a line along y crosses the first two beads of
    /// the first ring.
    pub fn bead_pair_anchor(&self) -> Result<[usize; 3]> {
        let beads = self.bead_centers()?;
        if beads.len() < 2 {
            return Err(Error::InvalidGeometry("phantom has fewer than two beads".into()));
        }
        let (a, b) = (beads[0], beads[1]);
        let g = &self.grid;
        let to_index = |v: f64, pitch: f64| (v / pitch).round() as usize;
        Ok([to_index((a[0] + b[0]) / 2.0, g.dx), to_index((a[1] + b[1]) / 2.0, g.dy), to_index(a[2], g.dz)])
    }

    /// Voxel indices along y of the first two bead centers.
    pub fn bead_pair_indices(&self) -> Result<(usize, usize)> {
        let beads = self.bead_centers()?;
        if beads.len() < 2 {
            return Err(Error::InvalidGeometry("phantom has fewer than two beads".into()));
        }
        let dy = self.grid.dy;
        Ok(((beads[0][1] / dy).round() as usize, (beads[1][1] / dy).round() as usize))
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

const SUPERSAMPLE: usize = 2;

/// Antialiased voxelization: each voxel is the mean of `2³` sub-samples.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<Volume> {
    let beads = spec.validate()?;
    let g = spec.grid;
    let c = spec.center_nm();
    let r_out = spec.shell_diameter_nm / 2.0;
    let r_in = (r_out - spec.shell_thickness_nm).max(0.0);
    let rb = spec.bead_diameter_nm / 2.0;
    let offsets: Vec<f64> =
        (0..SUPERSAMPLE).map(|s| (s as f64 + 0.5) / SUPERSAMPLE as f64 - 0.5).collect();
    let weight = 1.0 / (SUPERSAMPLE.pow(3)) as f64;

    let mut data = vec![0.0; g.len()];
    let plane = g.nx * g.ny;
    let bead_boxes: Vec<([usize; 3], [usize; 3])> = beads
        .iter()
        .map(|p| {
            let lo = |v: f64, pitch: f64| ((v - rb) / pitch).floor().max(0.0) as usize;
            let hi = |v: f64, pitch: f64, n: usize| (((v + rb) / pitch).ceil() as usize + 1).min(n);
            (
                [lo(p[0], g.dx), lo(p[1], g.dy), lo(p[2], g.dz)],
                [hi(p[0], g.dx, g.nx), hi(p[1], g.dy, g.ny), hi(p[2], g.dz, g.nz)],
            )
        })
        .collect();

    data.par_chunks_mut(plane).enumerate().for_each(|(z, slab)| {
        if spec.shell_diameter_nm > 0.0 && spec.shell_intensity != 0.0 {
            for y in 0..g.ny {
                for x in 0..g.nx {
                    let mut covered = 0usize;
                    for &oz in &offsets {
                        let pz = (z as f64 + oz) * g.dz - c[2];
                        for &oy in &offsets {
                            let py = (y as f64 + oy) * g.dy - c[1];
                            for &ox in &offsets {
                                let px = (x as f64 + ox) * g.dx - c[0];
                                let r = (px * px + py * py + pz * pz).sqrt();
                                if r <= r_out && r >= r_in {
                                    covered += 1;
                                }
                            }
                        }
                    }
                    if covered > 0 {
                        slab[x + g.nx * y] += spec.shell_intensity * covered as f64 * weight;
                    }
                }
            }
        }
        for (p, (lo, hi)) in beads.iter().zip(&bead_boxes) {
            if z < lo[2] || z >= hi[2] {
                continue;
            }
            for y in lo[1]..hi[1] {
                for x in lo[0]..hi[0] {
                    let mut covered = 0usize;
                    for &oz in &offsets {
                        let pz = (z as f64 + oz) * g.dz - p[2];
                        for &oy in &offsets {
                            let py = (y as f64 + oy) * g.dy - p[1];
                            for &ox in &offsets {
                                let px = (x as f64 + ox) * g.dx - p[0];
                                if px * px + py * py + pz * pz <= rb * rb {
                                    covered += 1;
                                }
                            }
                        }
                    }
                    if covered > 0 {
                        slab[x + g.nx * y] += spec.bead_intensity * covered as f64 * weight;
                    }
                }
            }
        }
    });
    Volume::from_vec(g, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_grid() -> GridSpec {
        GridSpec::cubic(128, 50.0).unwrap()
    }

    #[test]
    fn paper_scale_dimensions_in_voxels() {
        let g = GridSpec::cubic(512, 12.5).unwrap();
        let spec = PhantomSpec::standard(g);
        assert_eq!(spec.shell_diameter_nm / 2.0 / g.dx, 120.0);
        assert_eq!(spec.shell_thickness_nm / g.dx, 16.0);
        assert_eq!(spec.bead_diameter_nm / desk_grid().dx, 3.0);
        spec.validate().unwrap();
    }

    #[test]
    fn empty_spec_gives_zero_volume() {
        let v = generate_phantom(&PhantomSpec::empty(GridSpec::cubic(32, 50.0).unwrap())).unwrap();
        assert_eq!(v.max(), 0.0);
    }

    #[test]
    fn deterministic_and_bounded() {
        let spec = PhantomSpec::standard(desk_grid());
        let a = generate_phantom(&spec).unwrap();
        let b = generate_phantom(&spec).unwrap();
        assert_eq!(a, b);
        assert!(a.min() >= 0.0 && a.max() <= 1.0);
        // shell volume ≈ 4/3 π (R³ − r³)
        let mut shell_only = spec.clone();
        shell_only.rings.clear();
        let shell_only = generate_phantom(&shell_only).unwrap();
        let expected = 4.0 / 3.0 * std::f64::consts::PI * (1500f64.powi(3) - 1300f64.powi(3)) / 50f64.powi(3);
        assert!((shell_only.sum() - expected).abs() / expected < 0.02);
    }

    #[test]
    fn neighbor_beads_are_175_nm_apart() {
        let spec = PhantomSpec::standard(desk_grid());
        let beads = spec.bead_centers().unwrap();
        assert!((dist(beads[0], beads[1]) - 175.0).abs() < 1e-9);
        assert!((beads[0][0] - beads[1][0]).abs() < 1e-9, "pair is aligned along y");
        assert!(beads.len() > 20);
        spec.validate().unwrap();
    }

    #[test]
    fn bead_pair_profile_has_zero_gap() {
        let g = GridSpec::cubic(128, 25.0).unwrap();
        let mut spec = PhantomSpec::standard(g);
        spec.shell_diameter_nm = 0.0;
        let v = generate_phantom(&spec).unwrap();
        let [x, _, z] = spec.bead_pair_anchor().unwrap();
        let (a, b) = spec.bead_pair_indices().unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        assert!(v.get(x, lo, z) > 0.5 && v.get(x, hi, z) > 0.5);
        let gap = (lo..=hi).map(|y| v.get(x, y, z)).fold(f64::INFINITY, f64::min);
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn geometry_violations_are_rejected() {
        let g = GridSpec::cubic(64, 50.0).unwrap();
        // 3.2 µm cube cannot hold a 3 µm shell with a 10 % guard band
        assert!(matches!(generate_phantom(&PhantomSpec::standard(g)), Err(Error::InvalidGeometry(_))));
        let mut spec = PhantomSpec::standard(desk_grid());
        spec.rings[0].count = Some(1000);
        assert!(spec.validate().is_err());
        let mut spec = PhantomSpec::standard(desk_grid());
        spec.rings[1].radius_nm = 1400.0;
        assert!(spec.validate().is_err(), "beads touching the shell");
    }
}
