//! Conjugate-gradient minimization of `F(o) = Σ_l ‖g_l − A_l o‖²`, either
//! directly on `o` (MB) or on `ζ` with `o = ζ²` (MBPC), with exact line
//! searches.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{residual_energy, stack_dot, ForwardModel};
use crate::volume::{dot, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Unconstrained, on `o`.
    Mb,
    /// Positivity-constrained, on `ζ` with `o = ζ²`.
    Mbpc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Mb => "mb",
            Method::Mbpc => "mbpc",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mb" => Ok(Method::Mb),
            "mbpc" => Ok(Method::Mbpc),
            other => Err(Error::InvalidParameter(format!("unknown solver method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    pub cost_rel_tol: f64,
    pub restart_every: usize,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { method: Method::Mbpc, max_iters: 150, cost_rel_tol: 1e-9, restart_every: 50, record_trace: true }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.cost_rel_tol >= 0.0) {
            return Err(Error::InvalidParameter("cost_rel_tol must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    MaxIters,
    Converged,
    Stagnation,
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    /// `o` for MB, `ζ²` for MBPC.
    pub restored: Volume,
    pub initial_cost: f64,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub stop: StopReason,
}

impl SolverOutput {
    /// Initial cost followed by the cost after each iteration.
    pub fn cost_trace(&self) -> Vec<f64> {
        std::iter::once(self.initial_cost).chain(self.trace.iter().map(|r| r.cost)).collect()
    }

    pub fn final_cost(&self) -> f64 {
        self.trace.last().map_or(self.initial_cost, |r| r.cost)
    }
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "iteration,cost,alpha,gamma,grad_norm")?;
    for r in trace {
        writeln!(out, "{},{:e},{:e},{:e},{:e}", r.iteration, r.cost, r.alpha, r.gamma, r.grad_norm)?;
    }
    out.flush()?;
    Ok(())
}

fn square(v: &Volume) -> Volume {
    v.map(|x| x * x)
}

fn check_data(data: &[Volume], model: &dyn ForwardModel) -> Result<()> {
    if data.len() != model.num_images() {
        return Err(Error::MissingImages(format!(
            "{} images for a model of {}",
            data.len(),
            model.num_images()
        )));
    }
    let grid = model.image_grid();
    data.iter().try_for_each(|g| g.grid().ensure_matches(&grid))
}

/// `g_l − A_l o` for every image.
pub fn residuals(o: &Volume, data: &[Volume], model: &dyn ForwardModel) -> Result<Vec<Volume>> {
    check_data(data, model)?;
    model
        .forward(o)?
        .iter()
        .zip(data)
        .map(|(p, g)| g.zip_map(p, |a, b| a - b))
        .collect()
}

/// `Σ_l ‖g_l − A_l o‖²` with `o = iterate` (MB) or `o = iterate²` (MBPC).
pub fn cost(iterate: &Volume, data: &[Volume], model: &dyn ForwardModel, method: Method) -> Result<f64> {
    let o = match method {
        Method::Mb => iterate.clone(),
        Method::Mbpc => square(iterate),
    };
    check_data(data, model)?;
    Ok(residual_energy(data, &model.forward(&o)?))
}

/// `−2 Σ_l A_l†(g_l − A_l o)`.
pub fn grad_mb(o: &Volume, data: &[Volume], model: &dyn ForwardModel) -> Result<Volume> {
    Ok(model.adjoint(&residuals(o, data, model)?)?.scale(-2.0))
}

/// `−4 ζ Σ_l A_l†(g_l − A_l ζ²)`.
pub fn grad_mbpc(zeta: &Volume, data: &[Volume], model: &dyn ForwardModel) -> Result<Volume> {
    let back = model.adjoint(&residuals(&square(zeta), data, model)?)?;
    zeta.zip_map(&back, |z, q| -4.0 * z * q)
}

/// Polak–Ribière `⟨∇_n, ∇_n − ∇_{n−1}⟩ / ‖∇_{n−1}‖²`, unclamped.
pub fn polak_ribiere(grad: &Volume, grad_prev: &Volume) -> f64 {
    let (g, p) = (grad.as_slice(), grad_prev.as_slice());
    let denom = dot(p, p);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(g, g) - dot(g, p)) / denom
}

/// Descent direction `−∇_n + γ d_{n−1}` with `γ = max(PR, 0)`.
///
/// Steepest descent is used on iteration 1, every `restart_every`
/// iterations, and whenever the PR coefficient is clamped.
pub fn cg_direction(
    grad: &Volume,
    grad_prev: Option<&Volume>,
    dir_prev: Option<&Volume>,
    iteration: usize,
    restart_every: usize,
) -> (Volume, f64) {
    let restart = iteration <= 1 || (restart_every > 0 && (iteration - 1) % restart_every == 0);
    let steepest = || grad.scale(-1.0);
    match (grad_prev, dir_prev) {
        (Some(gp), Some(dp)) if !restart => {
            let gamma = polak_ribiere(grad, gp);
            if gamma > 0.0 {
                let d = dp.zip_map(grad, |d, g| -g + gamma * d).expect("grids match");
                (d, gamma)
            } else {
                (steepest(), 0.0)
            }
        }
        _ => (steepest(), 0.0),
    }
}

/// Exact minimizer of the quadratic `Σ_l ‖r_l − α (A d)_l‖²`.
/// Returns `None` when `A d` vanishes.
pub fn quadratic_step(residuals: &[Volume], ad: &[Volume]) -> Option<f64> {
    let den = stack_dot(ad, ad);
    if den > 0.0 {
        Some(stack_dot(residuals, ad) / den)
    } else {
        None
    }
}

/// MB step along `d` from `o`; `0` when `d` lies in the null space.
pub fn line_search_mb(o: &Volume, d: &Volume, data: &[Volume], model: &dyn ForwardModel) -> Result<f64> {
    let r = residuals(o, data, model)?;
    Ok(quadratic_step(&r, &model.forward(d)?).unwrap_or(0.0))
}

/// `F(α) = Σ_i c[i] α^i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartic {
    pub c: [f64; 5],
}

impl Quartic {
    /// Cost of `r(α) = r0 − α g1 − α² g2`.
    pub fn from_stacks(r0: &[Volume], g1: &[Volume], g2: &[Volume]) -> Self {
        let rr = stack_dot(r0, r0);
        let r1 = stack_dot(r0, g1);
        let r2 = stack_dot(r0, g2);
        let g11 = stack_dot(g1, g1);
        let g12 = stack_dot(g1, g2);
        let g22 = stack_dot(g2, g2);
        Self { c: [rr, -2.0 * r1, g11 - 2.0 * r2, 2.0 * g12, g22] }
    }

    pub fn eval(&self, a: f64) -> f64 {
        self.c.iter().rev().fold(0.0, |acc, &c| acc * a + c)
    }

    /// Global minimizer over the real roots of `F'` and `α = 0`. Ties keep
    /// the earlier candidate, so `0` wins unless strictly beaten.
    pub fn argmin(&self) -> f64 {
        let [_, c1, c2, c3, c4] = self.c;
        let mut best = (0.0, self.eval(0.0));
        for root in solve_cubic(4.0 * c4, 3.0 * c3, 2.0 * c2, c1) {
            let value = self.eval(root);
            if value < best.1 {
                best = (root, value);
            }
        }
        best.0
    }
}

/// Real roots of `a x³ + b x² + c x + d`, degrading to lower degree when the
/// leading coefficients vanish.
pub fn solve_cubic(a: f64, b: f64, c: f64, d: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs()).max(d.abs());
    if scale == 0.0 || !scale.is_finite() {
        return Vec::new();
    }
    let (a, b, c, d) = (a / scale, b / scale, c / scale, d / scale);
    let eps = 1e-14;
    let roots = if a.abs() <= eps {
        solve_quadratic(b, c, d)
    } else {
        // depressed cubic t³ + p t + q with x = t − b/(3a)
        let (b, c, d) = (b / a, c / a, d / a);
        let shift = b / 3.0;
        let p = c - b * b / 3.0;
        let q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
        let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
        let ts = if disc > 0.0 {
            let s = disc.sqrt();
            vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt()]
        } else if p == 0.0 {
            vec![0.0]
        } else {
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            (0..3).map(|k| m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos()).collect()
        };
        let poly = |x: f64| ((x + b) * x + c) * x + d;
        let deriv = |x: f64| (3.0 * x + 2.0 * b) * x + c;
        ts.into_iter()
            .map(|t| {
                // two Newton polishes
                let mut x = t - shift;
                for _ in 0..2 {
                    let dx = deriv(x);
                    if dx != 0.0 {
                        let next = x - poly(x) / dx;
                        if next.is_finite() {
                            x = next;
                        }
                    }
                }
                x
            })
            .collect()
    };
    roots.into_iter().filter(|r| r.is_finite()).collect()
}

fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() <= 1e-14 {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// Quartic of `α ↦ F((ζ + α d)²)`.
pub fn mbpc_quartic(zeta: &Volume, d: &Volume, data: &[Volume], model: &dyn ForwardModel) -> Result<Quartic> {
    let r0 = residuals(&square(zeta), data, model)?;
    let g1 = model.forward(&zeta.zip_map(d, |z, d| 2.0 * z * d)?)?;
    let g2 = model.forward(&square(d))?;
    Ok(Quartic::from_stacks(&r0, &g1, &g2))
}

/// MBPC step along `d` from `ζ`.
pub fn line_search_mbpc(zeta: &Volume, d: &Volume, data: &[Volume], model: &dyn ForwardModel) -> Result<f64> {
    Ok(mbpc_quartic(zeta, d, data, model)?.argmin())
}

/// `sqrt(max(guess, 0) + ε)` with `ε = 1e-6 · max(guess)`.
pub fn mbpc_start(guess: &Volume) -> Volume {
    let clamped = guess.clamp_nonnegative();
    let eps = 1e-6 * clamped.max();
    clamped.map(|v| (v + eps).sqrt())
}

fn update_residuals(r: &[Volume], terms: &[(f64, &[Volume])]) -> Vec<Volume> {
    r.iter()
        .enumerate()
        .map(|(l, rl)| {
            let mut out = rl.clone();
            for (coef, stack) in terms {
                out.axpy(-coef, &stack[l]).expect("grids match");
            }
            out
        })
        .collect()
}

/// Runs CG from `initial` (an object-space guess) until `max_iters`, a
/// relative cost change below `cost_rel_tol`, or stagnation.
pub fn run_solver(
    data: &[Volume],
    model: &dyn ForwardModel,
    initial: &Volume,
    config: &SolverConfig,
) -> Result<SolverOutput> {
    config.validate()?;
    check_data(data, model)?;
    initial.grid().ensure_matches(&model.object_grid())?;
    if initial.as_slice().iter().all(|&v| v == 0.0) {
        return Err(Error::InitialGuessOrthogonal);
    }

    let mut x = match config.method {
        Method::Mb => initial.clone(),
        Method::Mbpc => mbpc_start(initial),
    };
    let object = |x: &Volume| match config.method {
        Method::Mb => x.clone(),
        Method::Mbpc => square(x),
    };
    let mut r = residuals(&object(&x), data, model)?;
    let mut f = stack_dot(&r, &r);
    let initial_cost = f;
    let mut trace = Vec::new();
    let mut grad_prev: Option<Volume> = None;
    let mut dir_prev: Option<Volume> = None;
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;

    for n in 1..=config.max_iters {
        let back = model.adjoint(&r)?;
        let grad = match config.method {
            Method::Mb => back.scale(-2.0),
            Method::Mbpc => x.zip_map(&back, |z, q| -4.0 * z * q)?,
        };
        drop(back);
        let grad_norm = grad.norm();
        if grad_norm == 0.0 {
            stop = StopReason::Converged;
            break;
        }
        let (mut d, mut gamma) =
            cg_direction(&grad, grad_prev.as_ref(), dir_prev.as_ref(), n, config.restart_every);
        if d.inner_product(&grad)? >= 0.0 {
            d = grad.scale(-1.0);
            gamma = 0.0;
        }

        let (alpha, r_new) = match config.method {
            Method::Mb => {
                let ad = model.forward(&d)?;
                match quadratic_step(&r, &ad) {
                    Some(a) if a > 0.0 => (a, update_residuals(&r, &[(a, &ad)])),
                    _ => (0.0, Vec::new()),
                }
            }
            Method::Mbpc => {
                let g1 = model.forward(&x.zip_map(&d, |z, d| 2.0 * z * d)?)?;
                let g2 = model.forward(&square(&d))?;
                let a = Quartic::from_stacks(&r, &g1, &g2).argmin();
                if a != 0.0 {
                    (a, update_residuals(&r, &[(a, &g1), (a * a, &g2)]))
                } else {
                    (0.0, Vec::new())
                }
            }
        };
        let f_new = if alpha != 0.0 { stack_dot(&r_new, &r_new) } else { f };
        if alpha == 0.0 || !(f_new <= f) {
            if n == 1 {
                return Err(Error::InitialGuessOrthogonal);
            }
            stop = StopReason::Stagnation;
            break;
        }

        x.axpy(alpha, &d)?;
        r = r_new;
        let rel = (f - f_new) / f;
        f = f_new;
        iterations = n;
        if config.record_trace {
            trace.push(TraceRow { iteration: n, cost: f, alpha, gamma, grad_norm });
        }
        log::debug!("iter {n}: cost {f:.6e} alpha {alpha:.3e} gamma {gamma:.3e}");
        grad_prev = Some(grad);
        dir_prev = Some(d);
        if rel < config.cost_rel_tol {
            stop = StopReason::Converged;
            break;
        }
    }

    Ok(SolverOutput { restored: object(&x), initial_cost, trace, iterations, stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ComponentModel;
    use crate::illumination::PatternComponent;
    use crate::volume::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_kernel(grid: GridSpec, width: f64) -> Volume {
        let h = Volume::from_fn(grid, |x, y, z| {
            let d = |i: usize, n: usize| GridSpec::centered_offset(i, n, 1.0);
            (-(d(x, grid.nx).powi(2) + d(y, grid.ny).powi(2) + 2.0 * d(z, grid.nz).powi(2)) / width).exp()
        });
        let s = h.sum();
        h.scale(1.0 / s)
    }

    fn random_instance(n: usize, images: usize, seed: u64) -> (ComponentModel, Vec<Volume>, Volume) {
        let grid = GridSpec::cubic(n, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let comps = (0..images)
            .map(|_| {
                vec![PatternComponent {
                    lateral: (0..n * n).map(|_| rng.gen_range(0.2..1.0)).collect(),
                    axial: (0..n).map(|_| rng.gen_range(0.5..1.0)).collect(),
                }]
            })
            .collect();
        let model = ComponentModel::new(&smooth_kernel(grid, 2.0), comps, 2).unwrap();
        let truth = Volume::from_fn(grid, |_, _, _| rng.gen_range(0.0..1.0));
        let data = model.forward(&truth).unwrap();
        let start = Volume::from_fn(grid, |_, _, _| rng.gen_range(0.1..1.0));
        (model, data, start)
    }

    #[test]
    fn cost_basics() {
        let (model, data, _) = random_instance(8, 2, 1);
        let zero = Volume::zeros(model.object_grid());
        let expected: f64 = data.iter().map(Volume::norm_sq).sum();
        assert!((cost(&zero, &data, &model, Method::Mb).unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn exact_fit_has_zero_cost_and_gradient() {
        let grid = GridSpec::cubic(8, 1.0).unwrap();
        let model = ComponentModel::widefield(&smooth_kernel(grid, 2.0), 1).unwrap();
        let o = Volume::from_fn(grid, |x, y, z| ((x + 2 * y + 3 * z) % 4) as f64);
        let data = model.forward(&o).unwrap();
        assert!(cost(&o, &data, &model, Method::Mb).unwrap() < 1e-18);
        assert!(grad_mb(&o, &data, &model).unwrap().as_slice().iter().all(|v| v.abs() < 1e-12));
        let zeta = o.map(f64::sqrt);
        assert!(grad_mbpc(&zeta, &data, &model).unwrap().as_slice().iter().all(|v| v.abs() < 1e-12));
    }

    fn finite_difference_check(method: Method, seed: u64) {
        let (model, data, x) = random_instance(16, 3, seed);
        let grad = match method {
            Method::Mb => grad_mb(&x, &data, &model).unwrap(),
            Method::Mbpc => grad_mbpc(&x, &data, &model).unwrap(),
        };
        let step = 1e-4 * x.max();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for _ in 0..20 {
            let i = rng.gen_range(0..x.len());
            let mut plus = x.clone();
            plus.as_mut_slice()[i] += step;
            let mut minus = x.clone();
            minus.as_mut_slice()[i] -= step;
            let fd = (cost(&plus, &data, &model, method).unwrap() - cost(&minus, &data, &model, method).unwrap())
                / (2.0 * step);
            let g = grad.as_slice()[i];
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-8), "{method}: fd {fd} vs grad {g}");
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(Method::Mb, 3);
        finite_difference_check(Method::Mbpc, 4);
    }

    #[test]
    fn mbpc_gradient_vanishes_where_zeta_is_zero() {
        let (model, data, mut x) = random_instance(8, 2, 5);
        x.set(1, 2, 3, 0.0);
        let g = grad_mbpc(&x, &data, &model).unwrap();
        assert_eq!(g.get(1, 2, 3), 0.0);
    }

    #[test]
    fn gradient_scales_with_data() {
        let (model, data, x) = random_instance(8, 2, 6);
        let g = grad_mb(&x, &data, &model).unwrap();
        let scaled: Vec<Volume> = data.iter().map(|d| d.scale(3.0)).collect();
        let gs = grad_mb(&x.scale(3.0), &scaled, &model).unwrap();
        for (a, b) in g.as_slice().iter().zip(gs.as_slice()) {
            assert!((3.0 * a - b).abs() <= 1e-9 * b.abs().max(1e-9));
        }
    }

    #[test]
    fn direction_rules() {
        let grid = GridSpec::cubic(4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut rand_vol = || Volume::from_fn(grid, |_, _, _| rng.gen_range(-1.0..1.0));
        let (g, gp, dp) = (rand_vol(), rand_vol(), rand_vol());

        let (d, gamma) = cg_direction(&g, None, None, 1, 50);
        assert_eq!(gamma, 0.0);
        assert_eq!(d, g.scale(-1.0));

        let (d, gamma) = cg_direction(&g, Some(&g), Some(&dp), 2, 50);
        assert_eq!(gamma, 0.0);
        assert_eq!(d, g.scale(-1.0));

        // direct oracle
        let (a, b) = (g.as_slice(), gp.as_slice());
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..a.len() {
            num += a[i] * (a[i] - b[i]);
            den += b[i] * b[i];
        }
        assert!((polak_ribiere(&g, &gp) - num / den).abs() < 1e-12);

        let (_, gamma) = cg_direction(&g, Some(&gp), Some(&dp), 51, 50);
        assert_eq!(gamma, 0.0, "periodic restart");
    }

    #[test]
    fn quadratic_step_is_exact_on_one_image_toy() {
        let grid = GridSpec::cubic(8, 1.0).unwrap();
        let model = ComponentModel::widefield(&smooth_kernel(grid, 2.0), 1).unwrap();
        let target = Volume::from_fn(grid, |x, _, _| x as f64);
        let data = model.forward(&target).unwrap();
        let o = Volume::zeros(grid);
        let d = target.scale(0.25);
        let alpha = line_search_mb(&o, &d, &data, &model).unwrap();
        assert!((alpha - 4.0).abs() < 1e-10);
        let mut moved = o.clone();
        moved.axpy(alpha, &d).unwrap();
        assert!(cost(&moved, &data, &model, Method::Mb).unwrap() < 1e-18);
    }

    #[test]
    fn quartic_matches_sampled_cost() {
        let (model, data, zeta) = random_instance(8, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = Volume::from_fn(model.object_grid(), |_, _, _| rng.gen_range(-0.5..0.5));
        let q = mbpc_quartic(&zeta, &d, &data, &model).unwrap();
        for a in [-1.0, -0.3, 0.0, 0.4, 1.7] {
            let mut z = zeta.clone();
            z.axpy(a, &d).unwrap();
            let f = cost(&z, &data, &model, Method::Mbpc).unwrap();
            assert!((q.eval(a) - f).abs() <= 1e-10 * f.max(1.0));
        }
    }

    #[test]
    fn cubic_roots() {
        let mut r = solve_cubic(1.0, -6.0, 11.0, -6.0);
        r.sort_by(f64::total_cmp);
        for (x, e) in r.iter().zip([1.0, 2.0, 3.0]) {
            assert!((x - e).abs() < 1e-12);
        }
        assert_eq!(solve_cubic(0.0, 0.0, 2.0, -4.0), vec![2.0]);
        assert!(solve_cubic(0.0, 1.0, 0.0, 1.0).is_empty());
        let one = solve_cubic(1.0, 0.0, 1.0, -2.0);
        assert_eq!(one.len(), 1);
        assert!((one[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deconvolution_smoke_test() {
        let grid = GridSpec::cubic(32, 1.0).unwrap();
        let model = ComponentModel::widefield(&smooth_kernel(grid, 1.0), 1).unwrap();
        let truth = Volume::from_fn(grid, |x, y, z| {
            let d = ((x as f64 - 16.0).powi(2) + (y as f64 - 14.0).powi(2) + (z as f64 - 15.0).powi(2)).sqrt();
            (-d * d / 40.0).exp()
        });
        let data = model.forward(&truth).unwrap();
        let start = Volume::filled(grid, truth.sum() / grid.len() as f64);
        let config = SolverConfig { method: Method::Mb, max_iters: 100, cost_rel_tol: 0.0, ..Default::default() };
        let out = run_solver(&data, &model, &start, &config).unwrap();
        let costs = out.cost_trace();
        assert!(costs.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.final_cost() <= 1e-6 * out.initial_cost, "{} vs {}", out.final_cost(), out.initial_cost);
    }

    #[test]
    fn mbpc_output_is_nonnegative_and_monotone() {
        let (model, data, start) = random_instance(16, 3, 10);
        let config = SolverConfig { method: Method::Mbpc, max_iters: 30, ..Default::default() };
        let out = run_solver(&data, &model, &start, &config).unwrap();
        assert!(out.restored.min() >= 0.0);
        assert!(out.cost_trace().windows(2).all(|w| w[1] <= w[0]));
        assert!(out.final_cost() < out.initial_cost);
    }

    #[test]
    fn zero_guess_is_rejected() {
        let (model, data, _) = random_instance(8, 2, 11);
        let zero = Volume::zeros(model.object_grid());
        for method in [Method::Mb, Method::Mbpc] {
            let config = SolverConfig { method, ..Default::default() };
            assert!(matches!(run_solver(&data, &model, &zero, &config), Err(Error::InitialGuessOrthogonal)));
        }
    }

    #[test]
    fn trace_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let rows = [TraceRow { iteration: 1, cost: 2.0, alpha: 0.5, gamma: 0.0, grad_norm: 3.0 }];
        write_trace_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iteration,cost,alpha,gamma,grad_norm");
        assert_eq!(lines.next().unwrap().split(',').count(), 5);
    }
}
