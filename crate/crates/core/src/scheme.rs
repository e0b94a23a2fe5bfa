//! Acquisition schemes and the widefield-derived initial guess.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{stack_dot, ForwardModel};
use crate::illumination::{IlluminationParams, PatternSpec, ORIENTATIONS_DEG, PHASE_COUNT};
use crate::optics::OpticsParams;
use crate::volume::Volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Full15,
    Reduced7,
    Reduced5,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Full15, Scheme::Reduced7, Scheme::Reduced5];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Full15 => "full15",
            Scheme::Reduced7 => "reduced7",
            Scheme::Reduced5 => "reduced5",
        }
    }

    /// `(θ in degrees, phase index)` pairs, θ-major and phase-ascending.
    pub fn pairs(&self) -> Vec<(f64, usize)> {
        let [t0, t1, t2] = ORIENTATIONS_DEG;
        match self {
            Scheme::Full15 => ORIENTATIONS_DEG
                .iter()
                .flat_map(|&t| (0..PHASE_COUNT).map(move |p| (t, p)))
                .collect(),
            Scheme::Reduced7 => {
                let mut v: Vec<_> = (0..PHASE_COUNT).map(|p| (t0, p)).collect();
                v.extend([(t1, 1), (t2, 1)]);
                v
            }
            Scheme::Reduced5 => vec![(t0, 0), (t0, 1), (t0, 2), (t1, 1), (t2, 1)],
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Scheme::Full15 => 15,
            Scheme::Reduced7 => 7,
            Scheme::Reduced5 => 5,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The θ = 0° images summed into the initial guess.
    pub fn guess_pairs(&self) -> Vec<(f64, usize)> {
        let count = match self {
            Scheme::Full15 | Scheme::Reduced7 => PHASE_COUNT,
            Scheme::Reduced5 => 3,
        };
        (0..count).map(|p| (ORIENTATIONS_DEG[0], p)).collect()
    }

    pub fn specs(&self, optics: &OpticsParams, params: &IlluminationParams) -> Result<Vec<PatternSpec>> {
        if params.phases != PHASE_COUNT {
            return Err(Error::InvalidParameter(format!(
                "schemes are defined for {PHASE_COUNT} phases, got {}",
                params.phases
            )));
        }
        self.pairs()
            .into_iter()
            .map(|(t, p)| {
                let s = params.spec(optics, t, p);
                s.validate(optics)?;
                Ok(s)
            })
            .collect()
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full15" => Ok(Scheme::Full15),
            "reduced7" => Ok(Scheme::Reduced7),
            "reduced5" => Ok(Scheme::Reduced5),
            other => Err(Error::UnknownScheme(other.to_string())),
        }
    }
}

/// Sum of the designated θ = 0° images on the camera grid.
pub fn widefield_sum(images: &[Volume], specs: &[PatternSpec], scheme: Scheme) -> Result<Volume> {
    if images.len() != specs.len() {
        return Err(Error::MissingImages(format!("{} images for {} patterns", images.len(), specs.len())));
    }
    let mut sum: Option<Volume> = None;
    for (theta, phase) in scheme.guess_pairs() {
        let idx = specs
            .iter()
            .position(|s| s.theta_deg == theta && s.phase_index == phase)
            .ok_or_else(|| Error::MissingImages(format!("no image at θ={theta}°, phase {phase}")))?;
        match sum.as_mut() {
            None => sum = Some(images[idx].clone()),
            Some(acc) => acc.axpy(1.0, &images[idx])?,
        }
    }
    Ok(sum.expect("every scheme designates at least one image"))
}

/// Widefield-derived starting object on the fine grid: block-replicated,
/// clamped, and rescaled by the scalar minimizing `Σ_l ‖g_l − A_l(c·x)‖²`.
/// All-zero data yields an all-zero guess.
pub fn initial_guess(
    images: &[Volume],
    specs: &[PatternSpec],
    scheme: Scheme,
    model: &dyn ForwardModel,
) -> Result<Volume> {
    let coarse = widefield_sum(images, specs, scheme)?;
    coarse.grid().ensure_matches(&model.image_grid())?;
    let fine = model.object_grid();
    let binning = fine.nx / coarse.grid().nx;
    let guess = coarse.replicate(binning, 1.0)?.clamp_nonnegative();
    if guess.max() == 0.0 {
        return Ok(guess);
    }
    let predicted = model.forward(&guess)?;
    let num = stack_dot(images, &predicted);
    let den = stack_dot(&predicted, &predicted);
    if !(den > 0.0 && num > 0.0) {
        return Ok(Volume::zeros(fine));
    }
    Ok(guess.scale(num / den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::ComponentModel;
    use crate::operator::SimModel;
    use crate::optics::generate_psf;
    use crate::volume::GridSpec;

    #[test]
    fn pair_lists() {
        assert_eq!(Scheme::Full15.pairs().len(), 15);
        let r7 = Scheme::Reduced7.pairs();
        assert_eq!(r7.len(), 7);
        assert_eq!(r7.iter().filter(|p| p.0 == 0.0).count(), 5);
        assert_eq!(&r7[5..], &[(60.0, 1), (120.0, 1)]);
        let r5 = Scheme::Reduced5.pairs();
        assert_eq!(r5, vec![(0.0, 0), (0.0, 1), (0.0, 2), (60.0, 1), (120.0, 1)]);
        for s in Scheme::ALL {
            assert_eq!(s.pairs().len(), s.len());
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!(matches!("full16".parse::<Scheme>(), Err(Error::UnknownScheme(_))));
        assert_eq!(Scheme::Reduced5.guess_pairs().len(), 3);
    }

    #[test]
    fn reduced_phases_match_protocol() {
        let optics = OpticsParams::paper();
        let specs = Scheme::Reduced5.specs(&optics, &IlluminationParams::default()).unwrap();
        let phases: Vec<f64> = specs.iter().map(|s| s.phi_rad).collect();
        let step = std::f64::consts::TAU / 5.0;
        for (p, e) in phases.iter().zip([0.0, step, 2.0 * step, step, step]) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    fn small_setup(scheme: Scheme) -> (Volume, SimModel, Vec<PatternSpec>) {
        let optics = OpticsParams::paper();
        let grid = GridSpec::new(32, 32, 16, 60.0, 60.0, 120.0).unwrap();
        let h = generate_psf(&optics, &grid).unwrap();
        let specs = scheme.specs(&optics, &IlluminationParams::default()).unwrap();
        let model = SimModel::new(&h, &specs, &optics, 2).unwrap();
        (h, model, specs)
    }

    #[test]
    fn widefield_sum_matches_uniform_illumination() {
        let (h, model, specs) = small_setup(Scheme::Full15);
        let mut o = Volume::zeros(*h.grid());
        o.set(16, 16, 8, 1.0);
        o.set(3, 20, 2, 0.5);
        let images = model.forward(&o).unwrap();
        let wf = widefield_sum(&images, &specs, Scheme::Full15).unwrap();
        let reference = ComponentModel::widefield(&h, 2).unwrap().forward(&o).unwrap().remove(0);
        // five patterns, each with unit-weight DC term 3/9
        let expected = reference.scale(5.0 / 3.0);
        let diff = wf.zip_map(&expected, |a, b| a - b).unwrap();
        assert!(diff.norm() <= 1e-8 * expected.norm());
    }

    #[test]
    fn guess_is_scaled_widefield() {
        let (h, model, specs) = small_setup(Scheme::Full15);
        let o = Volume::from_fn(*h.grid(), |x, y, z| ((x * 7 + y * 3 + z) % 5) as f64);
        let images = model.forward(&o).unwrap();
        let guess = initial_guess(&images, &specs, Scheme::Full15, &model).unwrap();
        let wf = widefield_sum(&images, &specs, Scheme::Full15).unwrap().replicate(2, 1.0).unwrap();
        let ratio = guess.sum() / wf.sum();
        assert!(ratio > 0.0);
        let diff = guess.zip_map(&wf.clamp_nonnegative().scale(ratio), |a, b| a - b).unwrap();
        assert!(diff.norm() <= 1e-12 * guess.norm());

        // rescaling cannot increase the residual over c = 1
        let fit = |v: &Volume| {
            let p = model.forward(v).unwrap();
            crate::forward::residual_energy(&images, &p)
        };
        assert!(fit(&guess) <= fit(&wf.clamp_nonnegative()) + 1e-12);
    }

    #[test]
    fn reduced5_guess_uses_three_images() {
        let (_, model, specs) = small_setup(Scheme::Reduced5);
        let images: Vec<Volume> = (0..5)
            .map(|l| Volume::filled(model.image_grid(), if l < 3 { 1.0 } else { 100.0 }))
            .collect();
        let wf = widefield_sum(&images, &specs, Scheme::Reduced5).unwrap();
        assert!(wf.as_slice().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn zero_data_gives_zero_guess_and_missing_images_error() {
        let (_, model, specs) = small_setup(Scheme::Reduced7);
        let zeros = vec![Volume::zeros(model.image_grid()); 7];
        let guess = initial_guess(&zeros, &specs, Scheme::Reduced7, &model).unwrap();
        assert_eq!(guess.max(), 0.0);
        assert!(matches!(
            widefield_sum(&zeros[4..], &specs[4..], Scheme::Full15),
            Err(Error::MissingImages(_))
        ));
    }
}
