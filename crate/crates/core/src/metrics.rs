//! Restoration quality metrics and line profiles.
//!
//! Both volumes are l2-normalized before comparison; the restored one is
//! then clamped to nonnegative values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

/// `(truth/‖truth‖, max(restored/‖restored‖, 0))`. An all-zero restoration
/// stays zero; an all-zero truth is an error.
pub fn normalize_pair(truth: &Volume, restored: &Volume) -> Result<(Volume, Volume)> {
    truth.grid().ensure_matches(restored.grid())?;
    let r = if restored.norm_sq() == 0.0 { restored.clone() } else { restored.l2_normalize()? };
    Ok((truth.l2_normalize()?, r.clamp_nonnegative()))
}

pub fn mse(truth: &Volume, restored: &Volume) -> Result<f64> {
    let (t, r) = normalize_pair(truth, restored)?;
    let sum: f64 = t.as_slice().iter().zip(r.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / t.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimConfig {
    pub sigma: f64,
    /// Window support per axis (odd).
    pub size: usize,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self { sigma: 1.5, size: 11, k1: 0.01, k2: 0.03 }
    }
}

fn gaussian_window(cfg: &SsimConfig) -> Vec<f64> {
    let half = (cfg.size / 2) as f64;
    let w: Vec<f64> =
        (0..cfg.size).map(|i| (-(i as f64 - half).powi(2) / (2.0 * cfg.sigma * cfg.sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering along x, then y, then z.
fn filter_valid(data: &[f64], dims: [usize; 3], k: &[f64]) -> (Vec<f64>, [usize; 3]) {
    let m = k.len();
    let mut cur = data.to_vec();
    let mut d = dims;
    for axis in 0..3 {
        let mut nd = d;
        nd[axis] = d[axis] + 1 - m;
        let stride = match axis {
            0 => 1,
            1 => d[0],
            _ => d[0] * d[1],
        };
        let mut out = vec![0.0; nd[0] * nd[1] * nd[2]];
        for z in 0..nd[2] {
            for y in 0..nd[1] {
                for x in 0..nd[0] {
                    let base = x + d[0] * (y + d[1] * z);
                    let mut acc = 0.0;
                    for (t, w) in k.iter().enumerate() {
                        acc += w * cur[base + t * stride];
                    }
                    out[x + nd[0] * (y + nd[1] * z)] = acc;
                }
            }
        }
        cur = out;
        d = nd;
    }
    (cur, d)
}

/// Mean local SSIM with a Gaussian window, valid region only, dynamic
/// range equal to the maximum of the normalized truth.
pub fn ssim3d(truth: &Volume, restored: &Volume, cfg: &SsimConfig) -> Result<f64> {
    let g = *truth.grid();
    if g.nx < cfg.size || g.ny < cfg.size || g.nz < cfg.size {
        return Err(Error::GridTooSmall(format!("grid {:?} smaller than the {}³ SSIM window", g.dims(), cfg.size)));
    }
    let (t, r) = normalize_pair(truth, restored)?;
    let dims = g.dims();
    let k = gaussian_window(cfg);
    let (x, y) = (t.as_slice(), r.as_slice());
    let products = |f: &dyn Fn(f64, f64) -> f64| x.iter().zip(y).map(|(&a, &b)| f(a, b)).collect::<Vec<f64>>();
    let (mu_x, _) = filter_valid(x, dims, &k);
    let (mu_y, _) = filter_valid(y, dims, &k);
    let (xx, _) = filter_valid(&products(&|a, _| a * a), dims, &k);
    let (yy, _) = filter_valid(&products(&|_, b| b * b), dims, &k);
    let (xy, _) = filter_valid(&products(&|a, b| a * b), dims, &k);

    let l = t.max();
    let c1 = (cfg.k1 * l).powi(2);
    let c2 = (cfg.k2 * l).powi(2);
    let n = mu_x.len();
    let mut total = 0.0;
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let sx = xx[i] - mx * mx;
        let sy = yy[i] - my * my;
        let sxy = xy[i] - mx * my;
        total += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2));
    }
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Samples along `axis` through `anchor`, as `(position in nm, value)`.
pub fn line_profile(v: &Volume, axis: Axis, anchor: [usize; 3]) -> Result<Vec<(f64, f64)>> {
    let g = v.grid();
    let dims = g.dims();
    if (0..3).any(|a| anchor[a] >= dims[a]) {
        return Err(Error::AnchorOutOfRange(format!("{anchor:?} outside grid {dims:?}")));
    }
    let [x, y, z] = anchor;
    Ok(match axis {
        Axis::X => (0..g.nx).map(|i| (i as f64 * g.dx, v.get(i, y, z))).collect(),
        Axis::Y => (0..g.ny).map(|i| (i as f64 * g.dy, v.get(x, i, z))).collect(),
        Axis::Z => (0..g.nz).map(|i| (i as f64 * g.dz, v.get(x, y, i))).collect(),
    })
}

/// `1 − valley / mean(peak heights)` for two expected peak positions.
///
/// Each peak is the maximum within one sample of its expected index; the
/// valley is the minimum strictly between the two peaks. Nonpositive values
/// mean no dip.
pub fn dip_depth(values: &[f64], first: usize, second: usize) -> Result<f64> {
    let (a, b) = (first.min(second), first.max(second));
    if b >= values.len() || b - a < 2 {
        return Err(Error::InvalidParameter(format!("peaks {a} and {b} need a sample between them")));
    }
    let peak_near = |i: usize| {
        (i.saturating_sub(1)..=(i + 1).min(values.len() - 1))
            .max_by(|&p, &q| values[p].total_cmp(&values[q]))
            .expect("non-empty")
    };
    let (pa, pb) = (peak_near(a), peak_near(b));
    let (pa, pb) = (pa.min(pb), pa.max(pb));
    let mean_peak = (values[pa] + values[pb]) / 2.0;
    if mean_peak <= 0.0 {
        return Ok(0.0);
    }
    if pb - pa < 2 {
        return Ok(0.0);
    }
    let valley = values[pa + 1..pb].iter().copied().fold(f64::INFINITY, f64::min);
    Ok(1.0 - valley / mean_peak)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub ssim: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
}

pub fn evaluate(truth: &Volume, restored: &Volume, cfg: &SsimConfig) -> Result<MetricsReport> {
    Ok(MetricsReport {
        mse: mse(truth, restored)?,
        ssim: ssim3d(truth, restored, cfg)?,
        method: None,
        scheme: None,
        iters: None,
    })
}
