use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use image::{ImageBuffer, Luma};
use log::info;

use sim3d_core::acquisition::{read_acquisition, simulate_acquisition, write_acquisition, ImagingSetup};
use sim3d_core::config::RunConfig;
use sim3d_core::io::{read_volume, write_volume};
use sim3d_core::metrics::{evaluate, line_profile, Axis};
use sim3d_core::phantom::generate_phantom;
use sim3d_core::pipeline::{restore, Restoration};
use sim3d_core::scheme::Scheme;
use sim3d_core::solver::write_trace_csv;
use sim3d_core::{Error, Volume};

use crate::layers::{self, ConfigError};
use crate::{AxisArg, Cli, Command};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            bail!(ConfigError("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let overrides = cli.command.as_ref().map(Command::overrides).unwrap_or_default();
    let cfg = layers::resolve(cli.global.preset.as_deref(), cli.global.config.as_deref(), overrides)?;
    if cli.global.dump_config {
        print!("{}", layers::dump(&cfg)?);
        return Ok(());
    }
    let Some(command) = cli.command else {
        bail!(ConfigError("no subcommand given".into()));
    };
    match command {
        Command::Phantom { out } => phantom(&cfg, &out),
        Command::Simulate { object, out, .. } => simulate(&cfg, &object, &out),
        Command::Reconstruct { data, out, method, scheme, trace, .. } => {
            let method = method.map(Restoration::from).unwrap_or(cfg.solver.method.into());
            reconstruct(&cfg, &data, &out, method, scheme.map(Scheme::from), trace)
        }
        Command::Evaluate { truth, restored, out, upsample, method, scheme, iters } => {
            let mut report = evaluate_files(&cfg, &truth, &restored, upsample)?;
            report.method = method;
            report.scheme = scheme;
            report.iters = iters;
            let json = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(path) => fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{json}"),
            }
            Ok(())
        }
        Command::ExportSlice { volume, out, axis, index, profiles, anchor } => {
            export_slice(&cfg, &volume, &out, axis, index, profiles.as_deref(), anchor.as_deref())
        }
    }
}

fn phantom(cfg: &RunConfig, out: &Path) -> Result<()> {
    let spec = cfg.phantom_spec()?;
    let v = generate_phantom(&spec)?;
    let raw = write_volume(out, &v)?;
    info!("phantom {:?} written to {}", v.grid().dims(), raw.display());
    Ok(())
}

fn simulate(cfg: &RunConfig, object: &Path, out: &Path) -> Result<()> {
    let o = read_volume(object).with_context(|| format!("reading object {}", object.display()))?;
    o.grid()
        .ensure_matches(&cfg.object_grid()?)
        .context("object grid differs from the configured grid")?;
    let setup = cfg.imaging_setup()?;
    let data = simulate_acquisition(&o, &setup, cfg.scheme, cfg.noise.snr_db, cfg.noise.seed)?;
    write_acquisition(out, &data, &setup)?;
    info!("{} images at {:.3} dB written to {}", data.images.len(), data.snr_db, out.display());
    Ok(())
}

fn default_trace_path(out: &Path) -> PathBuf {
    let (raw, _) = sim3d_core::io::volume_paths(out);
    raw.with_extension("trace.csv")
}

fn reconstruct(
    cfg: &RunConfig,
    dir: &Path,
    out: &Path,
    method: Restoration,
    scheme: Option<Scheme>,
    trace: Option<PathBuf>,
) -> Result<()> {
    let (mut data, manifest) = read_acquisition(dir)?;
    if let Some(s) = scheme {
        if s != data.scheme {
            data = data.subset(s)?;
        }
    }
    let setup = ImagingSetup::new(manifest.optics, manifest.illumination, manifest.object_grid, manifest.binning)?;
    info!("restoring {} images ({}) with {method}", data.images.len(), data.scheme);
    let restored = restore(&data, &setup, method, &cfg.solver, &cfg.gwf)?;
    write_volume(out, &restored.volume)?;
    if let Some(s) = &restored.solver {
        let path = trace.unwrap_or_else(|| default_trace_path(out));
        write_trace_csv(&path, &s.trace)?;
        info!("{} iterations, stop {:?}, final cost {:.4e}", s.iterations, s.stop, s.final_cost());
    }
    Ok(())
}

fn evaluate_files(
    cfg: &RunConfig,
    truth: &Path,
    restored: &Path,
    upsample: bool,
) -> Result<sim3d_core::metrics::MetricsReport> {
    let t = read_volume(truth).with_context(|| format!("reading truth {}", truth.display()))?;
    let mut r = read_volume(restored).with_context(|| format!("reading restored {}", restored.display()))?;
    if !r.grid().matches(t.grid()) {
        if !upsample {
            return Err(Error::GridMismatch(format!(
                "truth {:?} vs restored {:?}; pass --upsample to replicate a coarser volume",
                t.grid().dims(),
                r.grid().dims()
            ))
            .into());
        }
        let factor = t.grid().nx / r.grid().nx.max(1);
        if factor < 2 || r.grid().refine(factor).map(|g| !g.matches(t.grid())).unwrap_or(true) {
            return Err(Error::GridMismatch(format!(
                "restored {:?} is not an integer coarsening of truth {:?}",
                r.grid().dims(),
                t.grid().dims()
            ))
            .into());
        }
        r = r.replicate(factor, 1.0)?;
    }
    Ok(evaluate(&t, &r, &cfg.ssim)?)
}

fn parse_anchor(cfg: &RunConfig, text: Option<&str>, v: &Volume) -> Result<[usize; 3]> {
    let g = v.grid();
    match text {
        None => Ok([g.nx / 2, g.ny / 2, g.nz / 2]),
        Some("beads") => {
            let spec = cfg.phantom_spec()?;
            spec.grid.ensure_matches(g).context("volume grid differs from the configured phantom grid")?;
            Ok(spec.bead_pair_anchor()?)
        }
        Some(s) => {
            let parts: Vec<usize> = s
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| anyhow!(ConfigError(format!("anchor {s:?} is not x,y,z"))))?;
            <[usize; 3]>::try_from(parts).map_err(|_| anyhow!(ConfigError(format!("anchor {s:?} is not x,y,z"))))
        }
    }
}

/// Plane with normal `axis` at `index`, scaled so the volume maximum maps to 65535.
pub fn slice_u16(v: &Volume, axis: AxisArg, index: usize) -> Result<ImageBuffer<Luma<u16>, Vec<u16>>> {
    let g = v.grid();
    let depth = match axis {
        AxisArg::X => g.nx,
        AxisArg::Y => g.ny,
        AxisArg::Z => g.nz,
    };
    if index >= depth {
        return Err(Error::AnchorOutOfRange(format!("plane {index} of {depth}")).into());
    }
    let peak = v.max();
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    let px = |value: f64| Luma([(value.max(0.0) * scale).round().min(65535.0) as u16]);
    let (w, h) = match axis {
        AxisArg::X => (g.ny, g.nz),
        AxisArg::Y => (g.nx, g.nz),
        AxisArg::Z => (g.nx, g.ny),
    };
    Ok(ImageBuffer::from_fn(w as u32, h as u32, |a, b| {
        let (a, b) = (a as usize, b as usize);
        px(match axis {
            AxisArg::X => v.get(index, a, b),
            AxisArg::Y => v.get(a, index, b),
            AxisArg::Z => v.get(a, b, index),
        })
    }))
}

fn export_slice(
    cfg: &RunConfig,
    path: &Path,
    out: &Path,
    axis: AxisArg,
    index: Option<usize>,
    profiles: Option<&Path>,
    anchor: Option<&str>,
) -> Result<()> {
    let v = read_volume(path).with_context(|| format!("reading {}", path.display()))?;
    let anchor = parse_anchor(cfg, anchor, &v)?;
    let plane = index.unwrap_or(match axis {
        AxisArg::X => anchor[0],
        AxisArg::Y => anchor[1],
        AxisArg::Z => anchor[2],
    });
    slice_u16(&v, axis, plane)?.save(out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(csv) = profiles {
        let mut f = std::io::BufWriter::new(fs::File::create(csv)?);
        writeln!(f, "axis,index,position_nm,value")?;
        for (name, ax) in [("x", Axis::X), ("y", Axis::Y), ("z", Axis::Z)] {
            for (i, (pos, value)) in line_profile(&v, ax, anchor)?.into_iter().enumerate() {
                writeln!(f, "{name},{i},{pos},{value:e}")?;
            }
        }
        f.flush()?;
    }
    Ok(())
}
