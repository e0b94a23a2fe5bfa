pub mod acquisition;
pub mod config;
pub mod error;
pub mod fft;
pub mod io;
pub mod volume;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
pub use volume::{GridSpec, Spectrum, Volume};
pub mod forward;
pub mod gwf;
pub mod illumination;
pub mod operator;
pub mod metrics;
pub mod optics;
pub mod phantom;
pub mod pipeline;
pub mod scheme;
pub mod solver;
