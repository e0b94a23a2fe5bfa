//! Raw `f32le` volume files with a JSON sidecar of the same basename.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{GridSpec, Volume};

pub const ORDER: &str = "x-fastest";
pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: [usize; 3],
    pub voxel_nm: [f64; 3],
    pub order: String,
    pub dtype: String,
}

impl Sidecar {
    pub fn for_grid(grid: &GridSpec) -> Self {
        Self {
            dims: grid.dims(),
            voxel_nm: grid.pitch(),
            order: ORDER.to_string(),
            dtype: DTYPE.to_string(),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        if self.order != ORDER {
            return Err(Error::Format(format!("unsupported order {:?}", self.order)));
        }
        if self.dtype != DTYPE {
            return Err(Error::Format(format!("unsupported dtype {:?}", self.dtype)));
        }
        let [nx, ny, nz] = self.dims;
        let [dx, dy, dz] = self.voxel_nm;
        GridSpec::new(nx, ny, nz, dx, dy, dz)
    }
}

/// `(raw, sidecar)` paths for a volume named by either file or a bare stem.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("json") => (path.with_extension("raw"), path.with_extension("json")),
        _ => {
            let mut raw = path.as_os_str().to_owned();
            raw.push(".raw");
            let raw = PathBuf::from(raw);
            let json = raw.with_extension("json");
            (raw, json)
        }
    }
}

pub fn write_volume(path: &Path, volume: &Volume) -> Result<PathBuf> {
    let (raw, json) = volume_paths(path);
    if let Some(parent) = raw.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(fs::File::create(&raw)?);
    for &v in volume.as_slice() {
        out.write_all(&(v as f32).to_le_bytes())?;
    }
    out.flush()?;
    let sidecar = Sidecar::for_grid(volume.grid());
    fs::write(&json, serde_json::to_string_pretty(&sidecar)? + "\n")?;
    Ok(raw)
}

pub fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let (_, json) = volume_paths(path);
    Ok(serde_json::from_str(&fs::read_to_string(json)?)?)
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let (raw, _) = volume_paths(path);
    let grid = read_sidecar(path)?.grid()?;
    let bytes = fs::read(&raw)?;
    if bytes.len() != grid.len() * 4 {
        return Err(Error::DimensionMismatch { expected: grid.len(), actual: bytes.len() / 4 });
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume::from_vec(grid, data)
}
