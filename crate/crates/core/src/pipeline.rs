//! End-to-end helpers: acquisition → restoration → metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::acquisition::{simulate_acquisition, AcquisitionData, ImagingSetup};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gwf::{run_gwf, GwfConfig};
use crate::metrics::{evaluate, MetricsReport, SsimConfig};
use crate::phantom::generate_phantom;
use crate::scheme::{initial_guess, widefield_sum};
use crate::solver::{run_solver, Method, SolverConfig, SolverOutput};
use crate::volume::Volume;

/// Any of the three restoration methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Restoration {
    Mb,
    Mbpc,
    Gwf,
}

impl Restoration {
    pub fn solver_method(self) -> Option<Method> {
        match self {
            Restoration::Mb => Some(Method::Mb),
            Restoration::Mbpc => Some(Method::Mbpc),
            Restoration::Gwf => None,
        }
    }
}

impl From<Method> for Restoration {
    fn from(m: Method) -> Self {
        match m {
            Method::Mb => Restoration::Mb,
            Method::Mbpc => Restoration::Mbpc,
        }
    }
}

impl fmt::Display for Restoration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Restoration::Mb => "mb",
            Restoration::Mbpc => "mbpc",
            Restoration::Gwf => "gwf",
        })
    }
}

impl FromStr for Restoration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gwf" => Ok(Restoration::Gwf),
            other => other.parse::<Method>().map(Restoration::from),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Restored {
    pub volume: Volume,
    /// Present for the iterative methods.
    pub solver: Option<SolverOutput>,
}

/// Model-based restoration from the widefield-derived initial guess.
pub fn restore_iterative(data: &AcquisitionData, setup: &ImagingSetup, config: &SolverConfig) -> Result<SolverOutput> {
    data.validate()?;
    let model = setup.model(&data.specs)?;
    let guess = initial_guess(&data.images, &data.specs, data.scheme, &model)?;
    run_solver(&data.images, &model, &guess, config)
}

pub fn restore(
    data: &AcquisitionData,
    setup: &ImagingSetup,
    method: Restoration,
    solver: &SolverConfig,
    gwf: &GwfConfig,
) -> Result<Restored> {
    match method.solver_method() {
        Some(m) => {
            let cfg = SolverConfig { method: m, ..solver.clone() };
            let out = restore_iterative(data, setup, &cfg)?;
            Ok(Restored { volume: out.restored.clone(), solver: Some(out) })
        }
        None => Ok(Restored { volume: run_gwf(data, setup, gwf)?, solver: None }),
    }
}

/// Widefield image (sum over the θ = 0° phases) replicated onto the object grid.
pub fn widefield_on_object_grid(data: &AcquisitionData) -> Result<Volume> {
    widefield_sum(&data.images, &data.specs, data.scheme)?.replicate(data.binning, 1.0)
}

pub fn evaluate_restoration(
    truth: &Volume,
    restored: &Restored,
    method: Restoration,
    data: &AcquisitionData,
    ssim: &SsimConfig,
) -> Result<MetricsReport> {
    let mut report = evaluate(truth, &restored.volume, ssim)?;
    report.method = Some(method.to_string());
    report.scheme = Some(data.scheme.to_string());
    report.iters = restored.solver.as_ref().map(|s| s.iterations);
    Ok(report)
}

/// Everything a single configured run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub truth: Volume,
    pub data: AcquisitionData,
    pub restored: Restored,
    pub report: MetricsReport,
}

/// Phantom, simulation, restoration and evaluation for one configuration.
pub fn run_pipeline(config: &RunConfig, method: Restoration) -> Result<RunOutput> {
    config.validate()?;
    let setup = config.imaging_setup()?;
    let truth = generate_phantom(&config.phantom_spec()?)?;
    let data = simulate_acquisition(&truth, &setup, config.scheme, config.noise.snr_db, config.noise.seed)?;
    let restored = restore(&data, &setup, method, &config.solver, &config.gwf)?;
    let report = evaluate_restoration(&truth, &restored, method, &data, &config.ssim)?;
    Ok(RunOutput { truth, data, restored, report })
}
