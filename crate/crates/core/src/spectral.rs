//! Image, endmember and abundance containers plus the two quality measures
//! of an endmember set: the condition number of its matrix and the
//! reconstruction RMSE after unmixing.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVectorView, SVD};

use crate::error::{Error, Result};

/// Relative threshold below which the smallest singular value counts as zero.
pub const EPS_RANK: f64 = 1e-12;

/// Condition number reported for rank-deficient endmember matrices.
///
/// It is finite so that it orders above every real condition number and
/// keeps the reduction score free of NaN.
pub const KAPPA_CAP: f64 = 1e15;

/// A hyperspectral cube flattened to `bands × pixels`, one column per pixel.
///
/// Pixels are ordered row-major over `(line, sample)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    data: DMatrix<f64>,
    width: Option<usize>,
    height: Option<usize>,
    band_centers: Option<Vec<f64>>,
}

impl SpectralImage {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptyInput(format!(
                "image must have at least one band and one pixel, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        for (pixel, col) in data.column_iter().enumerate() {
            if let Some(band) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { band, pixel });
            }
        }
        Ok(Self {
            data,
            width: None,
            height: None,
            band_centers: None,
        })
    }

    /// Attach a spatial shape; `width * height` must equal the pixel count.
    pub fn with_shape(mut self, width: usize, height: usize) -> Result<Self> {
        if width * height != self.pixels() {
            return Err(Error::Invariant(format!(
                "shape {width}x{height} does not cover {} pixels",
                self.pixels()
            )));
        }
        self.width = Some(width);
        self.height = Some(height);
        Ok(self)
    }

    pub fn with_band_centers(mut self, centers: Vec<f64>) -> Result<Self> {
        if centers.len() != self.bands() {
            return Err(Error::Dimension(format!(
                "{} band centers for {} bands",
                centers.len(),
                self.bands()
            )));
        }
        self.band_centers = Some(centers);
        Ok(self)
    }

    pub fn bands(&self) -> usize {
        self.data.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.data.ncols()
    }

    pub fn width(&self) -> Option<usize> {
        self.width
    }

    pub fn height(&self) -> Option<usize> {
        self.height
    }

    pub fn band_centers(&self) -> Option<&[f64]> {
        self.band_centers.as_deref()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn pixel(&self, index: usize) -> DVectorView<'_, f64> {
        self.data.column(index)
    }

    /// Copy the shape metadata of `other` onto `self` when the pixel counts agree.
    pub(crate) fn inherit_metadata(mut self, other: &SpectralImage) -> Self {
        if self.pixels() == other.pixels() {
            self.width = other.width;
            self.height = other.height;
        }
        if self.bands() == other.bands() {
            self.band_centers = other.band_centers.clone();
        }
        self
    }
}

/// Where an endmember spectrum came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Provenance {
    /// An actual pixel of the image it was extracted from.
    Pixel { index: usize, name: String },
    /// Generated (e.g. ground truth of a synthetic scene).
    Synthetic { name: String },
    /// Loaded from a file without pixel information.
    File { name: String },
}

impl Provenance {
    pub fn pixel(index: usize) -> Self {
        Provenance::Pixel {
            index,
            name: format!("px{index}"),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Provenance::Pixel { name, .. }
            | Provenance::Synthetic { name }
            | Provenance::File { name } => name,
        }
    }

    pub fn pixel_index(&self) -> Option<usize> {
        match self {
            Provenance::Pixel { index, .. } => Some(*index),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Provenance::Pixel { .. } => "pixel",
            Provenance::Synthetic { .. } => "synthetic",
            Provenance::File { .. } => "file",
        }
    }
}

/// An ordered set of endmember spectra stored as the columns of an `n × m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberSet {
    spectra: DMatrix<f64>,
    members: Vec<Provenance>,
    label: String,
}

impl EndmemberSet {
    pub fn new(
        spectra: DMatrix<f64>,
        members: Vec<Provenance>,
        label: impl Into<String>,
    ) -> Result<Self> {
        if spectra.ncols() == 0 || spectra.nrows() == 0 {
            return Err(Error::EmptyInput("endmember set has no members".into()));
        }
        if members.len() != spectra.ncols() {
            return Err(Error::Dimension(format!(
                "{} provenance records for {} columns",
                members.len(),
                spectra.ncols()
            )));
        }
        for (j, col) in spectra.column_iter().enumerate() {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!("endmember {j} has non-finite entries")));
            }
            if col.iter().all(|&v| v == 0.0) {
                return Err(Error::Invariant(format!("endmember {j} is all zeros")));
            }
        }
        Ok(Self {
            spectra,
            members,
            label: label.into(),
        })
    }

    /// Build a set from image pixels, in the given order.
    pub fn from_pixels(
        image: &SpectralImage,
        indices: &[usize],
        label: impl Into<String>,
    ) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= image.pixels()) {
            return Err(Error::Dimension(format!(
                "pixel index {bad} out of range for {} pixels",
                image.pixels()
            )));
        }
        let spectra = image.data().select_columns(indices);
        let members = indices.iter().map(|&i| Provenance::pixel(i)).collect();
        Self::new(spectra, members, label)
    }

    pub fn bands(&self) -> usize {
        self.spectra.nrows()
    }

    pub fn len(&self) -> usize {
        self.spectra.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.spectra.ncols() == 0
    }

    pub fn spectra(&self) -> &DMatrix<f64> {
        &self.spectra
    }

    pub fn members(&self) -> &[Provenance] {
        &self.members
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Pixel indices of all members that are image pixels, in member order.
    pub fn pixel_indices(&self) -> Vec<usize> {
        self.members.iter().filter_map(Provenance::pixel_index).collect()
    }

    /// The subset formed by the given columns, in the given order.
    pub fn select(&self, columns: &[usize]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptyInput("empty column selection".into()));
        }
        if let Some(&bad) = columns.iter().find(|&&c| c >= self.len()) {
            return Err(Error::Dimension(format!(
                "column {bad} out of range for a set of {}",
                self.len()
            )));
        }
        Ok(Self {
            spectra: self.spectra.select_columns(columns),
            members: columns.iter().map(|&c| self.members[c].clone()).collect(),
            label: self.label.clone(),
        })
    }

    /// The set with column `column` removed.
    pub fn without(&self, column: usize) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&c| c != column).collect();
        if keep.len() == self.len() {
            return Err(Error::Dimension(format!(
                "column {column} out of range for a set of {}",
                self.len()
            )));
        }
        self.select(&keep)
    }
}

/// Unmixing mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnmixMode {
    /// Non-negative abundances that sum to one.
    FullyConstrained,
    /// Plain least squares.
    Unconstrained,
}

impl fmt::Display for UnmixMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnmixMode::FullyConstrained => "fully_constrained",
            UnmixMode::Unconstrained => "unconstrained",
        })
    }
}

impl FromStr for UnmixMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "fully_constrained" | "fcls" => Ok(UnmixMode::FullyConstrained),
            "unconstrained" | "ucls" => Ok(UnmixMode::Unconstrained),
            other => Err(Error::Unsupported {
                what: "unmixing mode",
                value: other.to_string(),
            }),
        }
    }
}

/// Per-pixel abundances, `m × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMap {
    values: DMatrix<f64>,
    mode: UnmixMode,
    solver_tolerance: f64,
}

impl AbundanceMap {
    pub fn new(values: DMatrix<f64>, mode: UnmixMode, solver_tolerance: f64) -> Result<Self> {
        let map = Self {
            values,
            mode,
            solver_tolerance,
        };
        map.validate()?;
        Ok(map)
    }

    /// Re-check the feasibility invariant of fully constrained maps.
    pub fn validate(&self) -> Result<()> {
        if !(self.solver_tolerance > 0.0) {
            return Err(Error::Invariant(format!(
                "solver tolerance must be positive, got {}",
                self.solver_tolerance
            )));
        }
        if self.mode != UnmixMode::FullyConstrained {
            return Ok(());
        }
        let tol = self.solver_tolerance;
        for (pixel, col) in self.values.column_iter().enumerate() {
            if let Some(row) = col.iter().position(|&v| !(v >= -tol)) {
                return Err(Error::Invariant(format!(
                    "abundance {} of endmember {row} at pixel {pixel} is negative",
                    col[row]
                )));
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > 10.0 * tol {
                return Err(Error::Invariant(format!(
                    "abundances at pixel {pixel} sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mode(&self) -> UnmixMode {
        self.mode
    }

    pub fn solver_tolerance(&self) -> f64 {
        self.solver_tolerance
    }

    pub fn endmembers(&self) -> usize {
        self.values.nrows()
    }

    pub fn pixels(&self) -> usize {
        self.values.ncols()
    }
}

/// One point of a condition-residuum diagram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityPoint {
    pub kappa: f64,
    pub rmse: f64,
    pub set_size: usize,
}

impl QualityPoint {
    pub fn is_capped(&self) -> bool {
        self.kappa >= KAPPA_CAP
    }
}

/// Condition number together with the rank-deficiency flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditioning {
    pub kappa: f64,
    pub rank_deficient: bool,
}

/// Condition number `σ_max / σ_min` of an `n × m` matrix with `n ≥ m`.
pub fn matrix_conditioning(matrix: &DMatrix<f64>) -> Result<Conditioning> {
    let (n, m) = matrix.shape();
    if m == 0 {
        return Err(Error::EmptyInput("matrix has no columns".into()));
    }
    if n < m {
        return Err(Error::Dimension(format!(
            "condition number needs at least as many bands as endmembers, got {n} < {m}"
        )));
    }
    let sv = SVD::new(matrix.clone(), false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= EPS_RANK * max {
        return Ok(Conditioning {
            kappa: KAPPA_CAP,
            rank_deficient: true,
        });
    }
    Ok(Conditioning {
        kappa: (max / min).min(KAPPA_CAP),
        rank_deficient: false,
    })
}

pub fn conditioning(set: &EndmemberSet) -> Result<Conditioning> {
    matrix_conditioning(set.spectra())
}

/// `σ_max(E) / σ_min(E)`, or [`KAPPA_CAP`] for rank-deficient sets.
pub fn condition_number(set: &EndmemberSet) -> Result<f64> {
    conditioning(set).map(|c| c.kappa)
}

/// `‖E·A − I‖_F / √(n·p)`.
pub fn rmse(set: &EndmemberSet, abundances: &AbundanceMap, image: &SpectralImage) -> Result<f64> {
    matrix_rmse(set.spectra(), abundances.values(), image.data())
}

pub(crate) fn matrix_rmse(
    spectra: &DMatrix<f64>,
    abundances: &DMatrix<f64>,
    image: &DMatrix<f64>,
) -> Result<f64> {
    let (n, m) = spectra.shape();
    if abundances.nrows() != m || image.nrows() != n || abundances.ncols() != image.ncols() {
        return Err(Error::Dimension(format!(
            "E is {n}x{m}, A is {}x{}, I is {}x{}",
            abundances.nrows(),
            abundances.ncols(),
            image.nrows(),
            image.ncols()
        )));
    }
    let p = image.ncols();
    let residual = spectra * abundances - image;
    Ok(residual.norm() / ((n * p) as f64).sqrt())
}

/// Angle between two spectra in radians, in `[0, π]`.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "spectra of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector("spectral angle of a zero spectrum".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0).acos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn set(m: DMatrix<f64>) -> EndmemberSet {
        let members = (0..m.ncols())
            .map(|i| Provenance::Synthetic {
                name: format!("e{i}"),
            })
            .collect();
        EndmemberSet::new(m, members, "test").unwrap()
    }

    #[test]
    fn identity_is_perfectly_conditioned() {
        let k = condition_number(&set(DMatrix::identity(3, 3))).unwrap();
        assert_relative_eq!(k, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn duplicate_columns_hit_the_cap() {
        let c = conditioning(&set(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]))).unwrap();
        assert!(c.rank_deficient);
        assert_eq!(c.kappa, KAPPA_CAP);
    }

    #[test]
    fn golden_ratio_squared_matrix() {
        // Gram matrix [[1,1],[1,2]]: eigenvalues (3 ± √5)/2.
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 1.0, 0.0, 0.0]);
        let s5 = 5f64.sqrt();
        let expected = ((3.0 + s5) / (3.0 - s5)).sqrt();
        assert_relative_eq!(condition_number(&set(e)).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 2.618033988749895, max_relative = 1e-15);
    }

    #[test]
    fn wide_matrix_is_a_dimension_error() {
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(condition_number(&set(e)), Err(Error::Dimension(_))));
    }

    #[test]
    fn rmse_scalar_case() {
        let e = set(DMatrix::from_element(1, 1, 2.0));
        let a = AbundanceMap::new(DMatrix::from_element(1, 1, 1.0), UnmixMode::FullyConstrained, 1e-9)
            .unwrap();
        let img = SpectralImage::new(DMatrix::from_element(1, 1, 3.0)).unwrap();
        assert_eq!(rmse(&e, &a, &img).unwrap(), 1.0);
    }

    #[test]
    fn rmse_of_exact_reconstruction_is_zero() {
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.2, 1.0, 0.3, 0.3]);
        let a = DMatrix::from_row_slice(2, 2, &[0.25, 1.0, 0.75, 0.0]);
        let img = SpectralImage::new(&e * &a).unwrap();
        let map = AbundanceMap::new(a, UnmixMode::FullyConstrained, 1e-9).unwrap();
        assert_eq!(rmse(&set(e), &map, &img).unwrap(), 0.0);
    }

    #[test]
    fn rmse_rejects_mismatched_shapes() {
        let e = set(DMatrix::from_element(2, 1, 1.0));
        let a = AbundanceMap::new(DMatrix::from_element(1, 3, 1.0), UnmixMode::Unconstrained, 1e-9)
            .unwrap();
        let img = SpectralImage::new(DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(matches!(rmse(&e, &a, &img), Err(Error::Dimension(_))));
    }

    #[test]
    fn spectral_angles() {
        assert_eq!(spectral_angle(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_relative_eq!(spectral_angle(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), FRAC_PI_2);
        assert_relative_eq!(spectral_angle(&[1.0, 0.0], &[1.0, 1.0]).unwrap(), FRAC_PI_4, epsilon = 1e-15);
        assert!(matches!(spectral_angle(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroVector(_))));
    }

    #[test]
    fn all_zero_endmember_is_rejected() {
        let e = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let members = vec![Provenance::pixel(0), Provenance::pixel(1)];
        assert!(matches!(EndmemberSet::new(e, members, "x"), Err(Error::Invariant(_))));
    }

    #[test]
    fn image_rejects_nan_and_bad_shape() {
        let mut d = DMatrix::from_element(2, 3, 1.0);
        d[(1, 2)] = f64::NAN;
        assert!(matches!(SpectralImage::new(d), Err(Error::NonFinite { band: 1, pixel: 2 })));
        let img = SpectralImage::new(DMatrix::from_element(2, 6, 1.0)).unwrap();
        assert!(img.clone().with_shape(3, 2).is_ok());
        assert!(img.with_shape(4, 2).is_err());
    }

    #[test]
    fn infeasible_fully_constrained_map_is_rejected() {
        let bad = DMatrix::from_column_slice(2, 1, &[0.7, 0.7]);
        assert!(AbundanceMap::new(bad.clone(), UnmixMode::FullyConstrained, 1e-9).is_err());
        assert!(AbundanceMap::new(bad, UnmixMode::Unconstrained, 1e-9).is_ok());
    }
}
