//! Synthetic linear-mixture scenes with known endmembers and abundances.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{
    matrix_conditioning, AbundanceMap, EndmemberSet, Provenance, SpectralImage, UnmixMode,
};

pub const REJECTION_BUDGET: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub bands: usize,
    pub endmembers: usize,
    pub pixels: usize,
    pub pure_pixel_copies: usize,
    pub noise_sigma: f64,
    pub dirichlet_concentration: f64,
    /// Rejection bound on the condition number of the true endmember matrix.
    pub max_condition: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(bands: usize, endmembers: usize, pixels: usize, seed: u64) -> Self {
        Self {
            bands,
            endmembers,
            pixels,
            pure_pixel_copies: 3,
            noise_sigma: 0.0,
            dirichlet_concentration: 1.0,
            max_condition: 50.0,
            seed,
        }
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.endmembers == 0 || self.endmembers > self.bands {
            return bad(format!(
                "need 1 <= endmembers <= bands, got {} endmembers for {} bands",
                self.endmembers, self.bands
            ));
        }
        if self.pixels < self.endmembers * self.pure_pixel_copies || self.pixels == 0 {
            return bad(format!(
                "{} pixels cannot hold {} pure copies of {} endmembers",
                self.pixels, self.pure_pixel_copies, self.endmembers
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.dirichlet_concentration > 0.0 && self.dirichlet_concentration.is_finite()) {
            return bad(format!(
                "Dirichlet concentration must be > 0, got {}",
                self.dirichlet_concentration
            ));
        }
        if !(self.max_condition >= 1.0) {
            return bad(format!("max condition must be >= 1, got {}", self.max_condition));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub image: SpectralImage,
    pub endmembers: EndmemberSet,
    pub abundances: AbundanceMap,
    /// For each true endmember, the pixel indices holding it in pure form.
    pub pure_pixels: Vec<Vec<usize>>,
}

/// Draw a smooth, strictly positive spectrum: a baseline plus two Gaussian
/// absorption/reflection bumps.
fn draw_spectrum(rng: &mut rng::Rng, bands: usize) -> Vec<f64> {
    let base = rng.random_range(0.05..0.4);
    let slope = rng.random_range(-0.2..0.2);
    let bumps: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| {
            let centre = rng.random_range(0.0..bands as f64);
            let width = rng.random_range(0.05..0.25) * bands as f64;
            let amp = rng.random_range(0.1..0.6);
            (centre, width.max(0.5), amp)
        })
        .collect();
    (0..bands)
        .map(|b| {
            let t = b as f64 / bands.max(2).saturating_sub(1).max(1) as f64;
            let mut v = base + slope * (t - 0.5);
            for &(c, w, a) in &bumps {
                let z = (b as f64 - c) / w;
                v += a * (-0.5 * z * z).exp();
            }
            v.max(0.01)
        })
        .collect()
}

pub fn synthesize(spec: &SynthSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let (n, k, p) = (spec.bands, spec.endmembers, spec.pixels);
    let mut rng = rng::seeded(spec.seed);

    let mut spectra = None;
    for _ in 0..REJECTION_BUDGET {
        let columns: Vec<f64> = (0..k).flat_map(|_| draw_spectrum(&mut rng, n)).collect();
        let e = DMatrix::from_column_slice(n, k, &columns);
        let c = matrix_conditioning(&e)?;
        if !c.rank_deficient && c.kappa <= spec.max_condition {
            spectra = Some(e);
            break;
        }
    }
    let spectra = spectra.ok_or(Error::RejectionBudget {
        draws: REJECTION_BUDGET,
        max_condition: spec.max_condition,
    })?;

    let gamma = Gamma::new(spec.dirichlet_concentration, 1.0)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let pure = k * spec.pure_pixel_copies;
    let mut abundances = DMatrix::zeros(k, p);
    for j in 0..p {
        if j < pure {
            abundances[(j / spec.pure_pixel_copies, j)] = 1.0;
            continue;
        }
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        let mut partial = 0.0;
        for i in 0..k - 1 {
            let a = draws[i] / total;
            abundances[(i, j)] = a;
            partial += a;
        }
        abundances[(k - 1, j)] = (1.0 - partial).max(0.0);
    }

    // Scatter the pure pixels through the scene.
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(&mut rng);
    let abundances = abundances.select_columns(&order);
    let mut pure_pixels = vec![Vec::new(); k];
    for (position, &source) in order.iter().enumerate() {
        if source < pure {
            pure_pixels[source / spec.pure_pixel_copies].push(position);
        }
    }

    let mut data = &spectra * &abundances;
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        data.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }

    let members = (0..k)
        .map(|i| Provenance::Synthetic {
            name: format!("gt{i}"),
        })
        .collect();
    Ok(SyntheticScene {
        image: SpectralImage::new(data)?,
        endmembers: EndmemberSet::new(spectra, members, "ground_truth")?,
        abundances: AbundanceMap::new(abundances, UnmixMode::FullyConstrained, 1e-12)?,
        pure_pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{condition_number, rmse};

    #[test]
    fn noiseless_scene_is_exact() {
        let scene = synthesize(&SynthSpec::new(20, 4, 200, 7)).unwrap();
        let r = rmse(&scene.endmembers, &scene.abundances, &scene.image).unwrap();
        assert_eq!(r, 0.0);
        assert!(condition_number(&scene.endmembers).unwrap() <= 50.0);
    }

    #[test]
    fn pure_pixels_hold_the_true_spectra() {
        let scene = synthesize(&SynthSpec::new(12, 3, 50, 3)).unwrap();
        for (i, pixels) in scene.pure_pixels.iter().enumerate() {
            assert_eq!(pixels.len(), 3);
            for &j in pixels {
                assert_eq!(scene.image.pixel(j), scene.endmembers.spectra().column(i));
            }
        }
    }

    #[test]
    fn abundances_are_on_the_simplex() {
        let scene = synthesize(&SynthSpec::new(10, 5, 300, 11)).unwrap();
        for col in scene.abundances.values().column_iter() {
            assert!(col.iter().all(|&a| a >= 0.0));
            assert!((col.sum() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SynthSpec::new(8, 3, 40, 5).with_noise(0.01);
        let a = synthesize(&spec).unwrap();
        let b = synthesize(&spec).unwrap();
        assert_eq!(a.image, b.image);
        let c = synthesize(&SynthSpec { seed: 6, ..spec }).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn invalid_specs() {
        assert!(synthesize(&SynthSpec::new(3, 4, 100, 0)).is_err());
        assert!(synthesize(&SynthSpec::new(10, 4, 11, 0)).is_err());
        assert!(synthesize(&SynthSpec::new(10, 4, 100, 0).with_noise(-1.0)).is_err());
    }

    #[test]
    fn impossible_condition_bound_exhausts_budget() {
        let spec = SynthSpec {
            max_condition: 1.0,
            ..SynthSpec::new(10, 3, 20, 0)
        };
        assert!(matches!(synthesize(&spec), Err(Error::RejectionBudget { .. })));
    }
}
