//! Per-pixel linear unmixing.
//!
//! The fully constrained solver is a Lawson–Hanson style active-set method
//! for `min ‖E·a − x‖₂  s.t.  a ≥ 0, Σa = 1`. The endmember matrix is
//! factored once as `E = Q·R`; each pixel then solves the equivalent
//! problem `min ‖R·a − Qᵀx‖₂` in the endmember space, which keeps the
//! conditioning of `E` (not of `EᵀE`). On the free set the sum-to-one
//! constraint is eliminated against a reference column.

use nalgebra::{DMatrix, DVector, QR, SVD};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{AbundanceMap, EndmemberSet, SpectralImage, UnmixMode, EPS_RANK};

pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// KKT tolerance, relative to `‖E‖_F·(‖E‖_F + ‖x‖)`.
    pub tolerance: f64,
    /// Iteration cap per pixel; `None` means `10·m·n`.
    pub max_iterations: Option<usize>,
    pub mode: UnmixMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
            mode: UnmixMode::FullyConstrained,
        }
    }
}

impl SolverConfig {
    pub fn unconstrained() -> Self {
        Self {
            mode: UnmixMode::Unconstrained,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance <= 1e-3) {
            return Err(Error::InvalidConfig(format!(
                "solver tolerance must lie in (0, 1e-3], got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        Ok(())
    }

    fn iteration_cap(&self, bands: usize, members: usize) -> usize {
        self.max_iterations
            .unwrap_or_else(|| (10 * bands * members).max(1))
    }
}

/// Unmix every pixel of `image` against `set`.
pub fn unmix(set: &EndmemberSet, image: &SpectralImage, config: &SolverConfig) -> Result<AbundanceMap> {
    if set.bands() != image.bands() {
        return Err(Error::Dimension(format!(
            "endmembers have {} bands, image has {}",
            set.bands(),
            image.bands()
        )));
    }
    let values = unmix_matrix(set.spectra(), image.data(), config)?;
    AbundanceMap::new(values, config.mode, config.tolerance)
}

/// Matrix-level unmixing: returns the `m × p` abundance matrix.
pub fn unmix_matrix(spectra: &DMatrix<f64>, data: &DMatrix<f64>, config: &SolverConfig) -> Result<DMatrix<f64>> {
    config.validate()?;
    if spectra.nrows() != data.nrows() {
        return Err(Error::Dimension(format!(
            "endmembers have {} bands, image has {}",
            spectra.nrows(),
            data.nrows()
        )));
    }
    match config.mode {
        UnmixMode::FullyConstrained => fully_constrained(spectra, data, config),
        UnmixMode::Unconstrained => unconstrained(spectra, data),
    }
}

/// `E·A` as an image.
pub fn reconstruct(set: &EndmemberSet, abundances: &AbundanceMap) -> Result<SpectralImage> {
    if abundances.endmembers() != set.len() {
        return Err(Error::Dimension(format!(
            "{} abundance rows for {} endmembers",
            abundances.endmembers(),
            set.len()
        )));
    }
    SpectralImage::new(set.spectra() * abundances.values())
}

/// [`reconstruct`], carrying over the shape metadata of `source`.
pub fn reconstruct_like(
    set: &EndmemberSet,
    abundances: &AbundanceMap,
    source: &SpectralImage,
) -> Result<SpectralImage> {
    Ok(reconstruct(set, abundances)?.inherit_metadata(source))
}

fn unconstrained(spectra: &DMatrix<f64>, data: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = spectra.shape();
    if m > n {
        return Err(Error::Dimension(format!(
            "unconstrained unmixing needs m <= n, got {m} endmembers for {n} bands"
        )));
    }
    let svd = SVD::new(spectra.clone(), true, true);
    let cutoff = EPS_RANK * svd.singular_values.max();
    svd.solve(data, cutoff).map_err(|e| Error::Invariant(e.to_string()))
}

fn fully_constrained(spectra: &DMatrix<f64>, data: &DMatrix<f64>, config: &SolverConfig) -> Result<DMatrix<f64>> {
    let solver = FclsSolver::new(spectra, config)?;
    let p = data.ncols();
    let columns: Vec<Result<DVector<f64>>> = (0..p)
        .into_par_iter()
        .map(|j| {
            solver.solve(data.column(j).as_slice()).map_err(|it| Error::NonConvergence {
                pixel: j,
                iterations: it,
            })
        })
        .collect();
    let mut out = DMatrix::zeros(spectra.ncols(), p);
    for (j, col) in columns.into_iter().enumerate() {
        out.set_column(j, &col?);
    }
    Ok(out)
}

/// Fully constrained least-squares solver for a fixed endmember matrix.
pub struct FclsSolver {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    r_norm: f64,
    tolerance: f64,
    max_iterations: usize,
}

impl FclsSolver {
    pub fn new(spectra: &DMatrix<f64>, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let (n, m) = spectra.shape();
        if m == 0 || n == 0 {
            return Err(Error::EmptyInput("empty endmember matrix".into()));
        }
        let qr = QR::new(spectra.clone());
        let q = qr.q();
        let r = qr.r();
        let r_norm = r.norm();
        Ok(Self {
            q,
            r,
            r_norm,
            tolerance: config.tolerance,
            max_iterations: config.iteration_cap(n, m),
        })
    }

    /// Solve one pixel. On failure returns the number of iterations spent.
    pub fn solve(&self, pixel: &[f64]) -> std::result::Result<DVector<f64>, usize> {
        let (n, rows) = self.q.shape();
        let mut y = vec![0.0; rows];
        for (k, yk) in y.iter_mut().enumerate() {
            let col = self.q.column(k);
            *yk = (0..n).map(|i| col[i] * pixel[i]).sum();
        }
        self.solve_reduced(&y)
    }

    fn solve_reduced(&self, y: &[f64]) -> std::result::Result<DVector<f64>, usize> {
        let r = &self.r;
        let (rows, m) = r.shape();
        let mut a = DVector::zeros(m);
        if m == 1 {
            a[0] = 1.0;
            return Ok(a);
        }
        let y_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tol = self.tolerance * self.r_norm * (self.r_norm + y_norm);
        let mut scratch = Scratch::new(rows, m);

        // Interior solutions need no active set.
        let all: Vec<usize> = (0..m).collect();
        let z = scratch.equality_ls(r, &all, y);
        if z.iter().all(|&v| v > 0.0) {
            a.as_mut_slice().copy_from_slice(z);
            return Ok(a);
        }

        // Start at the best-fitting vertex of the simplex.
        let start = (0..m)
            .map(|k| {
                let c = r.column(k);
                (k, (0..rows).map(|i| (c[i] - y[i]).powi(2)).sum::<f64>())
            })
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0;
        a[start] = 1.0;
        let mut free = vec![start];
        let mut blocked = vec![false; m];
        let mut iterations = 0usize;

        loop {
            iterations += 1;
            if iterations > self.max_iterations {
                return Err(iterations);
            }
            let w = scratch.gradient(r, &a, y);
            let mu = free.iter().map(|&i| w[i]).sum::<f64>() / free.len() as f64;
            let mut entering = None;
            let mut best = tol;
            for j in 0..m {
                if blocked[j] || free.contains(&j) {
                    continue;
                }
                let gain = w[j] - mu;
                if gain > best {
                    best = gain;
                    entering = Some(j);
                }
            }
            let Some(j) = entering else { break };
            free.push(j);

            let mut first = true;
            loop {
                iterations += 1;
                if iterations > self.max_iterations {
                    return Err(iterations);
                }
                let z = scratch.equality_ls(r, &free, y);
                if free.iter().all(|&i| z[i] > 0.0) {
                    a.fill(0.0);
                    for &i in &free {
                        a[i] = z[i];
                    }
                    blocked.iter_mut().for_each(|b| *b = false);
                    break;
                }
                // Move towards z until the first free coordinate hits zero.
                let mut step = f64::INFINITY;
                let mut leaving = free[0];
                for &i in &free {
                    if z[i] <= 0.0 {
                        let denom = a[i] - z[i];
                        let t = if denom > 0.0 { a[i] / denom } else { 0.0 };
                        if t < step || (t == step && i == j) {
                            step = t;
                            leaving = i;
                        }
                    }
                }
                if first && leaving == j && step == 0.0 {
                    // The entering column cannot take a positive weight; the
                    // gradient test was numerically marginal.
                    free.pop();
                    blocked[j] = true;
                    break;
                }
                first = false;
                for &i in &free {
                    a[i] += step * (z[i] - a[i]);
                }
                a[leaving] = 0.0;
                free.retain(|&i| i != leaving && a[i] > 0.0);
                for i in 0..m {
                    if !free.contains(&i) {
                        a[i] = 0.0;
                    }
                }
                if free.is_empty() {
                    // Cannot happen in exact arithmetic since Σa = 1; restart
                    // from the best vertex.
                    a[start] = 1.0;
                    free.push(start);
                    break;
                }
            }
        }
        Ok(a)
    }
}

/// Per-pixel work buffers, so the active-set loop does not allocate.
struct Scratch {
    residual: Vec<f64>,
    w: Vec<f64>,
    z: Vec<f64>,
    d: Vec<f64>,
    b: Vec<f64>,
    v: Vec<f64>,
}

impl Scratch {
    fn new(rows: usize, m: usize) -> Self {
        Self {
            residual: vec![0.0; rows],
            w: vec![0.0; m],
            z: vec![0.0; m],
            d: Vec::with_capacity(rows * m),
            b: vec![0.0; rows],
            v: vec![0.0; rows],
        }
    }

    /// `Rᵀ(y − R·a)`
    fn gradient(&mut self, r: &DMatrix<f64>, a: &DVector<f64>, y: &[f64]) -> &[f64] {
        let (rows, m) = r.shape();
        self.residual.copy_from_slice(y);
        for k in 0..m {
            if a[k] != 0.0 {
                let c = r.column(k);
                for i in 0..rows {
                    self.residual[i] -= a[k] * c[i];
                }
            }
        }
        for k in 0..m {
            let c = r.column(k);
            self.w[k] = (0..rows).map(|i| c[i] * self.residual[i]).sum();
        }
        &self.w
    }

    /// Minimize `‖R_F·z − y‖` subject to `Σz = 1` over the free set `F`,
    /// eliminating the first free coordinate. Returns a length-`m` slice
    /// with zeros outside `F`.
    fn equality_ls(&mut self, r: &DMatrix<f64>, free: &[usize], y: &[f64]) -> &[f64] {
        let rows = r.nrows();
        let reference = free[0];
        let cols = free.len() - 1;
        self.z.fill(0.0);
        if cols == 0 {
            self.z[reference] = 1.0;
            return &self.z;
        }
        let base = r.column(reference);
        self.d.clear();
        for &i in &free[1..] {
            let c = r.column(i);
            self.d.extend((0..rows).map(|k| c[k] - base[k]));
        }
        for k in 0..rows {
            self.b[k] = y[k] - base[k];
        }
        let t = householder_ls(&mut self.d, &mut self.b, &mut self.v, rows, cols).unwrap_or_else(|| {
            let d = DMatrix::from_fn(rows, cols, |i, k| r[(i, free[k + 1])] - base[i]);
            let b = DVector::from_fn(rows, |i, _| y[i] - base[i]);
            let svd = SVD::new(d, true, true);
            let cutoff = 1e-13 * svd.singular_values.max();
            svd.solve(&b, cutoff)
                .map(|t| t.as_slice().to_vec())
                .unwrap_or_else(|_| vec![0.0; cols])
        });
        let mut sum = 0.0;
        for (k, &i) in free[1..].iter().enumerate() {
            self.z[i] = t[k];
            sum += t[k];
        }
        self.z[reference] = 1.0 - sum;
        &self.z
    }
}

/// In-place Householder least squares for the column-major `rows × cols`
/// matrix `d`. Returns `None` when `d` is numerically rank deficient, in
/// which case the caller falls back to the SVD.
fn householder_ls(d: &mut [f64], b: &mut [f64], v: &mut [f64], rows: usize, cols: usize) -> Option<Vec<f64>> {
    if rows < cols {
        return None;
    }
    let scale = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    for k in 0..cols {
        let col = &d[k * rows..(k + 1) * rows];
        let norm = col[k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-13 * scale {
            return None;
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        v[k..rows].copy_from_slice(&col[k..]);
        v[k] -= alpha;
        let vv: f64 = v[k..rows].iter().map(|x| x * x).sum();
        for j in k + 1..cols {
            let cj = &mut d[j * rows..(j + 1) * rows];
            let s: f64 = (k..rows).map(|i| v[i] * cj[i]).sum::<f64>() * 2.0 / vv;
            for i in k..rows {
                cj[i] -= s * v[i];
            }
        }
        let s: f64 = (k..rows).map(|i| v[i] * b[i]).sum::<f64>() * 2.0 / vv;
        for i in k..rows {
            b[i] -= s * v[i];
        }
        d[k * rows + k] = alpha;
    }
    let mut t = vec![0.0; cols];
    for k in (0..cols).rev() {
        let mut acc = b[k];
        for j in k + 1..cols {
            acc -= d[j * rows + k] * t[j];
        }
        t[k] = acc / d[k * rows + k];
    }
    Some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Provenance;
    use approx::assert_relative_eq;

    fn set(m: DMatrix<f64>) -> EndmemberSet {
        let members = (0..m.ncols()).map(Provenance::pixel).collect();
        EndmemberSet::new(m, members, "t").unwrap()
    }

    fn image(d: DMatrix<f64>) -> SpectralImage {
        SpectralImage::new(d).unwrap()
    }

    #[test]
    fn pure_pixel_maps_to_unit_vector() {
        let e = DMatrix::from_row_slice(4, 3, &[
            1.0, 0.2, 0.1, //
            0.3, 1.0, 0.2, //
            0.1, 0.4, 1.0, //
            0.5, 0.5, 0.5,
        ]);
        let x = e.column(1).into_owned();
        let a = unmix(&set(e), &image(DMatrix::from_column_slice(4, 1, x.as_slice())), &SolverConfig::default())
            .unwrap();
        assert_relative_eq!(a.values()[(1, 0)], 1.0, epsilon = 1e-12);
        assert!(a.values()[(0, 0)].abs() < 1e-12);
        assert!(a.values()[(2, 0)].abs() < 1e-12);
    }

    #[test]
    fn orthogonal_mixture_is_recovered() {
        let e = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let x = e.column(0) * 0.3 + e.column(1) * 0.7;
        let a = unmix(&set(e), &image(DMatrix::from_column_slice(3, 1, x.as_slice())), &SolverConfig::default())
            .unwrap();
        assert_relative_eq!(a.values()[(0, 0)], 0.3, epsilon = 1e-12);
        assert_relative_eq!(a.values()[(1, 0)], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn zero_pixel_has_a_feasible_optimum() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let a = unmix(&set(e), &image(DMatrix::zeros(2, 1)), &SolverConfig::default()).unwrap();
        // min 1·a0² + 9·a1² on the simplex: a = (0.9, 0.1).
        assert_relative_eq!(a.values()[(0, 0)], 0.9, epsilon = 1e-12);
        assert_relative_eq!(a.values()[(1, 0)], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn duplicate_columns_are_tolerated() {
        let e = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.2]);
        let x = DMatrix::from_column_slice(3, 1, &[0.5, 0.5, 0.35]);
        let a = unmix(&set(e.clone()), &image(x.clone()), &SolverConfig::default()).unwrap();
        let r = crate::spectral::matrix_rmse(&e, a.values(), &x).unwrap();
        assert!(r < 1e-12, "rmse {r}");
    }

    #[test]
    fn unconstrained_matches_normal_equations() {
        let e = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 0.2, 1.0, 0.3, 0.1, 0.9, 0.4]);
        let x = DMatrix::from_column_slice(4, 1, &[0.7, -0.2, 1.1, 0.3]);
        let a = unmix_matrix(&e, &x, &SolverConfig::unconstrained()).unwrap();
        let g = e.tr_mul(&e);
        let expected = g.lu().solve(&e.tr_mul(&x)).unwrap();
        assert_relative_eq!(a, expected, epsilon = 1e-12);
    }

    #[test]
    fn unconstrained_rejects_wide_sets() {
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let x = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            unmix_matrix(&e, &x, &SolverConfig::unconstrained()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let e = set(DMatrix::from_element(3, 1, 1.0));
        let img = image(DMatrix::from_element(2, 1, 1.0));
        assert!(matches!(unmix(&e, &img, &SolverConfig::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn tolerance_bounds_are_enforced() {
        let bad = SolverConfig {
            tolerance: 0.1,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let zero = SolverConfig {
            tolerance: 0.0,
            ..SolverConfig::default()
        };
        assert!(zero.validate().is_err());
    }

    #[test]
    fn iteration_cap_reports_pixel() {
        let e = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.5, 0.5, 0.0]);
        let cfg = SolverConfig {
            max_iterations: Some(1),
            ..SolverConfig::default()
        };
        match unmix_matrix(&e, &x, &cfg) {
            Err(Error::NonConvergence { pixel, .. }) => assert_eq!(pixel, 1),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn reconstruction_replicates_endmembers() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.5, 0.9]);
        let a = AbundanceMap::new(DMatrix::identity(2, 2), UnmixMode::FullyConstrained, 1e-9).unwrap();
        let img = reconstruct(&set(e.clone()), &a).unwrap();
        assert_eq!(img.data(), &e);
        let zero = AbundanceMap::new(DMatrix::zeros(2, 3), UnmixMode::Unconstrained, 1e-9).unwrap();
        assert_eq!(reconstruct(&set(e), &zero).unwrap().data(), &DMatrix::zeros(2, 3));
    }
}
