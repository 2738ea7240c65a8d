//! Direct endmember extraction: OSP, N-FINDR and VCA.
//!
//! Every extractor returns actual pixels of the input image, never
//! synthetic spectra, and never selects the same pixel twice. Ties are
//! broken towards the lowest pixel index.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen, QR};
use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{EndmemberSet, SpectralImage, EPS_RANK};

/// Re-draw budget for the N-FINDR initial simplex.
pub const NFINDR_MAX_DRAWS: usize = 100;

/// Relative volume gain N-FINDR needs before it swaps a vertex; absorbs
/// rounding noise between identical pixels.
const NFINDR_MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Osp,
    NFindr,
    Vca,
}

impl Algorithm {
    /// OSP has no random component.
    pub fn is_deterministic(self) -> bool {
        matches!(self, Algorithm::Osp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Osp => "osp",
            Algorithm::NFindr => "nfindr",
            Algorithm::Vca => "vca",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "").as_str() {
            "osp" => Ok(Algorithm::Osp),
            "nfindr" => Ok(Algorithm::NFindr),
            "vca" => Ok(Algorithm::Vca),
            other => Err(Error::Unsupported {
                what: "extraction algorithm",
                value: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractionConfig {
    pub target_size: usize,
    pub seed: u64,
    pub nfindr_max_sweeps: usize,
    /// Use VCA's SNR-dependent projection instead of the plain projective one.
    pub vca_snr_projection: bool,
}

impl ExtractionConfig {
    pub fn new(target_size: usize, seed: u64) -> Self {
        Self {
            target_size,
            seed,
            nfindr_max_sweeps: 10,
            vca_snr_projection: false,
        }
    }

    fn validate(&self, image: &SpectralImage) -> Result<()> {
        let limit = image.bands().min(image.pixels());
        if self.target_size == 0 || self.target_size > limit {
            return Err(Error::InvalidConfig(format!(
                "target size {} must lie in [1, min(bands, pixels) = {limit}]",
                self.target_size
            )));
        }
        if self.nfindr_max_sweeps == 0 {
            return Err(Error::InvalidConfig("nfindr_max_sweeps must be positive".into()));
        }
        Ok(())
    }
}

pub fn extract(algorithm: Algorithm, image: &SpectralImage, config: &ExtractionConfig) -> Result<EndmemberSet> {
    match algorithm {
        Algorithm::Osp => extract_osp(image, config),
        Algorithm::NFindr => extract_nfindr(image, config),
        Algorithm::Vca => extract_vca(image, config),
    }
}

/// Index of the largest score; ties go to the lowest index.
fn argmax(scores: &[f64], excluded: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &s) in scores.iter().enumerate() {
        if excluded.contains(&j) {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((j, s));
        }
    }
    best
}

/// Orthogonal subspace projection.
///
/// The first endmember is the pixel of largest norm; each further one
/// maximizes the norm of its projection onto the orthogonal complement of
/// the current set. The projector is rebuilt from a fresh QR factorization
/// at every step.
pub fn extract_osp(image: &SpectralImage, config: &ExtractionConfig) -> Result<EndmemberSet> {
    config.validate(image)?;
    let data = image.data();
    let p = image.pixels();
    let norms: Vec<f64> = data.column_iter().map(|c| c.norm()).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let mut picks: Vec<usize> = Vec::with_capacity(config.target_size);

    for step in 0..config.target_size {
        let scores: Vec<f64> = if picks.is_empty() {
            norms.clone()
        } else {
            let q = QR::new(data.select_columns(&picks)).q();
            (0..p)
                .into_par_iter()
                .map(|j| {
                    let x = data.column(j);
                    let coeff = q.tr_mul(&x);
                    (x - &q * coeff).norm()
                })
                .collect()
        };
        let (best, score) = argmax(&scores, &picks).ok_or(Error::RankCollapse { step })?;
        if !(score > EPS_RANK * max_norm) {
            return Err(Error::RankCollapse { step });
        }
        picks.push(best);
    }
    EndmemberSet::from_pixels(image, &picks, "osp")
}

/// Leading eigenvectors (as columns) and all eigenvalues of a symmetric
/// matrix, sorted by decreasing eigenvalue.
fn leading_eigen(matrix: DMatrix<f64>, count: usize) -> (DMatrix<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vectors = eig.eigenvectors.select_columns(&order[..count]);
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (vectors, values)
}

fn column_mean(data: &DMatrix<f64>) -> DVector<f64> {
    data.column_mean()
}

/// N-FINDR simplex volume maximization.
///
/// Pixels are reduced to `m − 1` principal components of the mean-centred
/// data (whitened, which scales every volume by the same constant). The
/// initial vertices are drawn at random; full sweeps then replace a vertex
/// by any pixel that strictly increases `|det [1; vertices]|`.
pub fn extract_nfindr(image: &SpectralImage, config: &ExtractionConfig) -> Result<EndmemberSet> {
    config.validate(image)?;
    let m = config.target_size;
    if m < 2 {
        return Err(Error::InvalidConfig("N-FINDR needs a target size of at least 2".into()));
    }
    let data = image.data();
    let p = image.pixels();
    let mean = column_mean(data);
    let centred = DMatrix::from_fn(data.nrows(), p, |b, j| data[(b, j)] - mean[b]);
    let covariance = (&centred * centred.transpose()) / p as f64;
    let dims = m - 1;
    let (basis, values) = leading_eigen(covariance, dims);
    let degenerate = Error::DegenerateInitialization {
        attempts: NFINDR_MAX_DRAWS,
    };
    let top = values[0];
    if !(top > 0.0) || values[dims - 1] <= EPS_RANK * top {
        return Err(degenerate);
    }
    let mut reduced = basis.tr_mul(&centred);
    for (k, value) in values.iter().take(dims).enumerate() {
        let s = value.sqrt();
        reduced.row_mut(k).iter_mut().for_each(|v| *v /= s);
    }
    let homogeneous = |j: usize| {
        let mut v = DVector::zeros(m);
        v[0] = 1.0;
        v.rows_mut(1, dims).copy_from(&reduced.column(j));
        v
    };

    let mut rng = rng::seeded(config.seed);
    let mut simplex = DMatrix::zeros(m, m);
    let mut vertices = Vec::new();
    for _ in 0..NFINDR_MAX_DRAWS {
        let draw = index::sample(&mut rng, p, m).into_vec();
        for (i, &j) in draw.iter().enumerate() {
            simplex.set_column(i, &homogeneous(j));
        }
        if simplex.determinant().abs() > EPS_RANK {
            vertices = draw;
            break;
        }
    }
    if vertices.is_empty() {
        return Err(degenerate);
    }

    for _ in 0..config.nfindr_max_sweeps {
        let mut changed = false;
        for i in 0..m {
            let mut inverse = simplex
                .clone()
                .try_inverse()
                .ok_or(Error::DegenerateInitialization { attempts: 0 })?;
            for j in 0..p {
                if vertices.contains(&j) {
                    continue;
                }
                // Cramer: replacing column i by v scales det by (M⁻¹v)_i.
                let v = homogeneous(j);
                let ratio = (inverse.row(i) * &v)[0].abs();
                if ratio > 1.0 + NFINDR_MIN_GAIN {
                    simplex.set_column(i, &v);
                    vertices[i] = j;
                    changed = true;
                    inverse = simplex
                        .clone()
                        .try_inverse()
                        .ok_or(Error::DegenerateInitialization { attempts: 0 })?;
                }
            }
        }
        if !changed {
            break;
        }
    }
    EndmemberSet::from_pixels(image, &vertices, "nfindr")
}

/// Vertex component analysis without the noise-reduction stage.
///
/// Data are projected onto the `m` leading principal directions of the
/// uncentred correlation matrix and scaled projectively (`y = x / ⟨x, ū⟩`).
/// Each step draws a Gaussian direction, removes its component in the span
/// of the current picks, and selects the pixel with the largest absolute
/// projection onto it. With `vca_snr_projection` the SNR estimate decides
/// between this and the mean-centred projection of the original method.
pub fn extract_vca(image: &SpectralImage, config: &ExtractionConfig) -> Result<EndmemberSet> {
    config.validate(image)?;
    let m = config.target_size;
    let data = image.data();
    let (n, p) = data.shape();

    let projected = if config.vca_snr_projection && m >= 2 {
        let mean = column_mean(data);
        let centred = DMatrix::from_fn(n, p, |b, j| data[(b, j)] - mean[b]);
        let (basis, _) = leading_eigen((&centred * centred.transpose()) / p as f64, m);
        let x = basis.tr_mul(&centred);
        let power_data = data.norm_squared() / p as f64;
        let power_signal = x.norm_squared() / p as f64 + mean.norm_squared();
        let snr = 10.0
            * ((power_signal - m as f64 / n as f64 * power_data) / (power_data - power_signal)).log10();
        let threshold = 15.0 + 10.0 * (m as f64).log10();
        if snr.is_nan() || snr >= threshold {
            projective(data, m)
        } else {
            let x = x.rows(0, m - 1).into_owned();
            let c = x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
            let mut y = DMatrix::from_element(m, p, c);
            y.rows_mut(0, m - 1).copy_from(&x);
            y
        }
    } else {
        projective(data, m)
    };

    let scale = projected.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut rng = rng::seeded(config.seed);
    let mut picks: Vec<usize> = Vec::with_capacity(m);
    for step in 0..m {
        let w = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let f = if picks.is_empty() {
            w
        } else {
            let q = QR::new(projected.select_columns(&picks)).q();
            let coeff = q.tr_mul(&w);
            &w - &q * coeff
        };
        let norm = f.norm();
        if !(norm > 0.0) {
            return Err(Error::RankCollapse { step });
        }
        let f = f / norm;
        let scores: Vec<f64> = (0..p)
            .into_par_iter()
            .map(|j| f.dot(&projected.column(j)).abs())
            .collect();
        let (best, score) = argmax(&scores, &picks).ok_or(Error::RankCollapse { step })?;
        if !(score > EPS_RANK * scale) {
            return Err(Error::RankCollapse { step });
        }
        picks.push(best);
    }
    EndmemberSet::from_pixels(image, &picks, "vca")
}

fn projective(data: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let p = data.ncols();
    let (basis, _) = leading_eigen((data * data.transpose()) / p as f64, m);
    let mut x = basis.tr_mul(data);
    let u = column_mean(&x);
    for mut col in x.column_iter_mut() {
        let d = col.dot(&u);
        // Pixels orthogonal to the mean direction keep their raw projection.
        if d.abs() > f64::MIN_POSITIVE {
            col /= d;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(d: DMatrix<f64>) -> SpectralImage {
        SpectralImage::new(d).unwrap()
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("N-FINDR".parse::<Algorithm>().unwrap(), Algorithm::NFindr);
        assert_eq!(Algorithm::Vca.to_string(), "vca");
        assert!("ppi".parse::<Algorithm>().is_err());
        assert!(Algorithm::Osp.is_deterministic());
    }

    #[test]
    fn osp_single_member_is_max_norm_pixel() {
        let d = DMatrix::from_row_slice(2, 4, &[1.0, 3.0, 0.0, 3.0, 0.0, 1.0, 2.0, 1.0]);
        let set = extract_osp(&img(d), &ExtractionConfig::new(1, 0)).unwrap();
        // Pixels 1 and 3 tie; the lower index wins.
        assert_eq!(set.pixel_indices(), vec![1]);
    }

    #[test]
    fn osp_rank_collapse() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert!(matches!(
            extract_osp(&img(d), &ExtractionConfig::new(2, 0)),
            Err(Error::RankCollapse { step: 1 })
        ));
    }

    #[test]
    fn target_size_is_validated() {
        let d = DMatrix::from_element(3, 2, 1.0);
        assert!(matches!(
            extract_osp(&img(d.clone()), &ExtractionConfig::new(3, 0)),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            extract_nfindr(&img(d), &ExtractionConfig::new(1, 0)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn nfindr_collinear_data_is_degenerate() {
        let d = DMatrix::from_fn(3, 20, |b, j| (b as f64 + 1.0) * j as f64 * 0.1);
        assert!(matches!(
            extract_nfindr(&img(d), &ExtractionConfig::new(3, 1)),
            Err(Error::DegenerateInitialization { .. })
        ));
    }

    #[test]
    fn vca_is_reproducible() {
        let d = DMatrix::from_fn(5, 40, |b, j| ((b * 31 + j * 17) % 13) as f64 / 13.0 + 0.1);
        let cfg = ExtractionConfig::new(4, 99);
        let a = extract_vca(&img(d.clone()), &cfg).unwrap();
        let b = extract_vca(&img(d), &cfg).unwrap();
        assert_eq!(a.members(), b.members());
    }
}
