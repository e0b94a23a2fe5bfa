mod commands;
mod layers;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use toml::Value;

use sim3d_core::pipeline::Restoration;
use sim3d_core::scheme::Scheme;

/// Simulate and restore three-wave 3D structured illumination data.
#[derive(Debug, Parser)]
#[command(name = "sim3d", version, arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Named preset: paper, desk, tiny or hires.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// TOML configuration file layered over the preset.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub dump_config: bool,
    /// Worker thread cap.
    #[arg(long, global = true, env = "SIM3D_THREADS")]
    pub threads: Option<usize>,
    /// Log progress to stderr (-vv for per-iteration detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Full15,
    Reduced7,
    Reduced5,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Full15 => Scheme::Full15,
            SchemeArg::Reduced7 => Scheme::Reduced7,
            SchemeArg::Reduced5 => Scheme::Reduced5,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Mb,
    Mbpc,
    Gwf,
}

impl From<MethodArg> for Restoration {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mb => Restoration::Mb,
            MethodArg::Mbpc => Restoration::Mbpc,
            MethodArg::Gwf => Restoration::Gwf,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    X,
    Y,
    Z,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the ground-truth phantom volume.
    Phantom {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulate a raw SIM acquisition of an object volume.
    Simulate {
        #[arg(long)]
        object: PathBuf,
        /// Output directory for raw images and the manifest.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        /// Target stack SNR in dB; `inf` for noiseless data.
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Restore an object from an acquisition directory.
    Reconstruct {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Use only this scheme's images from the acquisition.
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        iters: Option<usize>,
        /// Wiener regularization weight (GWF only).
        #[arg(long)]
        wiener: Option<f64>,
        /// Apply the triangular apodization (GWF only).
        #[arg(long)]
        apodize: bool,
        /// Cost trace CSV; defaults to `<out>.trace.csv`.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare a restored volume against the ground truth.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        restored: PathBuf,
        /// JSON report path; stdout if omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Block-replicate a coarser restored volume onto the truth grid.
        #[arg(long)]
        upsample: bool,
        /// Labels copied into the report.
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        iters: Option<usize>,
    },
    /// Write one plane as a 16-bit PNG and line profiles as CSV.
    ExportSlice {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Plane normal.
        #[arg(long, value_enum, default_value = "z")]
        axis: AxisArg,
        /// Plane index; the center plane if omitted.
        #[arg(long)]
        index: Option<usize>,
        /// CSV of x, y and z profiles through the anchor.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Profile anchor as `x,y,z`, or `beads` for the configured bead pair.
        #[arg(long)]
        anchor: Option<String>,
    },
}

impl Command {
    /// Flag values that override the configuration, as dotted keys.
    fn overrides(&self) -> Vec<(&'static str, Value)> {
        let mut out = Vec::new();
        match self {
            Command::Simulate { scheme, snr_db, seed, .. } => {
                if let Some(s) = scheme {
                    out.push(("scheme", Value::String(Scheme::from(*s).name().into())));
                }
                if let Some(v) = snr_db {
                    out.push(("noise.snr_db", Value::Float(*v)));
                }
                if let Some(v) = seed {
                    out.push(("noise.seed", Value::Integer(*v as i64)));
                }
            }
            Command::Reconstruct { method, iters, wiener, apodize, .. } => {
                if let Some(m) = method.and_then(|m| Restoration::from(m).solver_method()) {
                    out.push(("solver.method", Value::String(m.to_string())));
                }
                if let Some(v) = iters {
                    out.push(("solver.max_iters", Value::Integer(*v as i64)));
                }
                if let Some(v) = wiener {
                    out.push(("gwf.wiener_param", Value::Float(*v)));
                }
                if *apodize {
                    out.push(("gwf.apodization", Value::Boolean(true)));
                }
            }
            _ => {}
        }
        out
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<sim3d_core::Error>() {
            return e.category();
        }
        if cause.downcast_ref::<layers::ConfigError>().is_some() {
            return "config";
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<image::ImageError>().is_some() {
            return "io";
        }
    }
    "internal"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.global.verbose);
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{}]: {msg}", category(&err));
            ExitCode::FAILURE
        }
    }
}
