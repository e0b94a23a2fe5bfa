//! Cached 3D complex FFT plans over x-fastest storage.
//!
//! Forward transforms are unnormalized; inverse transforms carry the
//! `1/(nx*ny*nz)` factor, so `conv(a, b) = ifft(fft(a) * fft(b))`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

pub struct Fft3 {
    nx: usize,
    ny: usize,
    nz: usize,
    forward: [Arc<dyn Fft<f64>>; 3],
    inverse: [Arc<dyn Fft<f64>>; 3],
}

fn plan_cache() -> &'static Mutex<HashMap<(usize, usize, usize), Arc<Fft3>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, usize), Arc<Fft3>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Fft3 {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = [
            planner.plan_fft(nx, FftDirection::Forward),
            planner.plan_fft(ny, FftDirection::Forward),
            planner.plan_fft(nz, FftDirection::Forward),
        ];
        let inverse = [
            planner.plan_fft(nx, FftDirection::Inverse),
            planner.plan_fft(ny, FftDirection::Inverse),
            planner.plan_fft(nz, FftDirection::Inverse),
        ];
        Self { nx, ny, nz, forward, inverse }
    }

    /// Shared plan for the given dimensions.
    pub fn cached(nx: usize, ny: usize, nz: usize) -> Arc<Fft3> {
        let mut cache = plan_cache().lock().expect("fft plan cache poisoned");
        cache
            .entry((nx, ny, nz))
            .or_insert_with(|| Arc::new(Fft3::new(nx, ny, nz)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.process(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.process(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|c| *c *= scale);
    }

    fn process(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 3]) {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        assert_eq!(data.len(), self.len(), "fft buffer length does not match plan");
        let plane = nx * ny;

        // x lines are contiguous
        data.par_chunks_mut(plane).for_each(|slab| {
            let mut scratch = vec![Complex64::default(); plans[0].get_inplace_scratch_len()];
            plans[0].process_with_scratch(slab, &mut scratch);
        });

        // y lines: transpose each z slab so that y is contiguous
        data.par_chunks_mut(plane).for_each(|slab| {
            let mut buf = vec![Complex64::default(); plane];
            let mut scratch = vec![Complex64::default(); plans[1].get_inplace_scratch_len()];
            for y in 0..ny {
                for x in 0..nx {
                    buf[x * ny + y] = slab[x + nx * y];
                }
            }
            plans[1].process_with_scratch(&mut buf, &mut scratch);
            for y in 0..ny {
                for x in 0..nx {
                    slab[x + nx * y] = buf[x * ny + y];
                }
            }
        });

        // z lines: gather one y row at a time
        let mut buf = vec![Complex64::default(); nx * nz];
        let mut scratch = vec![Complex64::default(); plans[2].get_inplace_scratch_len()];
        for y in 0..ny {
            for z in 0..nz {
                let row = &data[nx * y + plane * z..nx * y + plane * z + nx];
                for (x, v) in row.iter().enumerate() {
                    buf[x * nz + z] = *v;
                }
            }
            plans[2].process_with_scratch(&mut buf, &mut scratch);
            for z in 0..nz {
                let row = &mut data[nx * y + plane * z..nx * y + plane * z + nx];
                for (x, v) in row.iter_mut().enumerate() {
                    *v = buf[x * nz + z];
                }
            }
        }
    }
}

/// Signed frequency index of DFT bin `i` on an axis of length `n`.
#[inline]
pub fn signed_index(i: usize, n: usize) -> i64 {
    if i < n.div_ceil(2) {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Bin holding the negated frequency of bin `i`.
#[inline]
pub fn negated_index(i: usize, n: usize) -> usize {
    (n - i) % n
}
