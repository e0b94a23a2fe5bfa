//! Fixtures shared by the benchmarks.

use sim3d_core::acquisition::{simulate_acquisition, AcquisitionData, ImagingSetup};
use sim3d_core::illumination::IlluminationParams;
use sim3d_core::optics::OpticsParams;
use sim3d_core::phantom::{generate_phantom, PhantomSpec};
use sim3d_core::scheme::Scheme;
use sim3d_core::{GridSpec, Volume};

/// Cubic object grid of side `n` covering 6.4 µm, binned by 2 on the camera.
pub fn setup(n: usize) -> ImagingSetup {
    let grid = GridSpec::cubic(n, 6400.0 / n as f64).expect("valid grid");
    ImagingSetup::new(OpticsParams::paper(), IlluminationParams::default(), grid, 2).expect("valid setup")
}

pub fn object(setup: &ImagingSetup) -> Volume {
    generate_phantom(&PhantomSpec::standard(setup.object_grid())).expect("phantom fits")
}

pub fn acquisition(setup: &ImagingSetup, scheme: Scheme) -> (Volume, AcquisitionData) {
    let o = object(setup);
    let data = simulate_acquisition(&o, setup, scheme, 15.0, 1).expect("simulation");
    (o, data)
}
