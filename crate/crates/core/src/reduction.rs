//! Greedy reduction of over-complete endmember sets.
//!
//! At every level the member `e` maximizing
//!
//! ```text
//! (1 − α)·(κ(S) − κ(S∖e)) / κ(S)  +  α·(RMSE(S) − RMSE(S∖e)) / RMSE(S)
//! ```
//!
//! is removed, producing nested sets `S_m ⊃ S_{m−1} ⊃ … ⊃ S_1`. `α = 0`
//! reduces purely by condition number, `α = 1` purely by residuum.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{matrix_conditioning, matrix_rmse, EndmemberSet, Provenance, QualityPoint, SpectralImage};
use crate::unmixing::{unmix_matrix, SolverConfig};

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_EPS_RMSE: f64 = 1e-12;
pub const DEFAULT_BRUTE_FORCE_CAP: u128 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionConfig {
    pub alpha: f64,
    pub solver: SolverConfig,
    /// Below this RMSE of the current set the residuum term is zero.
    pub eps_rmse: f64,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            solver: SolverConfig::default(),
            eps_rmse: DEFAULT_EPS_RMSE,
        }
    }
}

impl ReductionConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.eps_rmse >= 0.0) {
            return Err(Error::InvalidConfig(format!("eps_rmse must be >= 0, got {}", self.eps_rmse)));
        }
        self.solver.validate()
    }
}

/// Score of one removal candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub column: usize,
    pub member: Provenance,
    /// Quality of the set without this member.
    pub quality: QualityPoint,
    pub kappa_term: f64,
    pub rmse_term: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionStep {
    /// Column index of the removed member in the parent set.
    pub removed_column: usize,
    pub removed: Provenance,
    pub score: f64,
    pub before: QualityPoint,
    pub after: QualityPoint,
    pub candidates: Vec<CandidateScore>,
    /// Number of unmixings performed for this step.
    pub unmixings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionTrace {
    pub initial: EndmemberSet,
    pub alpha: f64,
    pub initial_quality: QualityPoint,
    pub steps: Vec<ReductionStep>,
}

impl ReductionTrace {
    /// Quality points for set sizes `m, m−1, …, 1`.
    pub fn points(&self) -> Vec<QualityPoint> {
        std::iter::once(self.initial_quality)
            .chain(self.steps.iter().map(|s| s.after))
            .collect()
    }

    /// The nested sets `S_m, …, S_1`.
    pub fn sets(&self) -> Vec<EndmemberSet> {
        let mut out = vec![self.initial.clone()];
        for step in &self.steps {
            let next = out
                .last()
                .and_then(|s| s.without(step.removed_column).ok())
                .expect("trace steps index valid columns");
            out.push(next);
        }
        out
    }

    /// The set of the given size, if the trace reaches it.
    pub fn set_of_size(&self, size: usize) -> Option<EndmemberSet> {
        let m = self.initial.len();
        if size == 0 || size > m {
            return None;
        }
        self.sets().into_iter().nth(m - size)
    }

    /// Total unmixings including the evaluation of the initial set.
    pub fn total_unmixings(&self) -> usize {
        1 + self.steps.iter().map(|s| s.unmixings).sum::<usize>()
    }
}

/// Condition number and fully constrained RMSE of a set against an image.
pub fn evaluate(set: &EndmemberSet, image: &SpectralImage, solver: &SolverConfig) -> Result<QualityPoint> {
    evaluate_matrix(set.spectra(), image.data(), solver)
}

fn evaluate_matrix(spectra: &DMatrix<f64>, data: &DMatrix<f64>, solver: &SolverConfig) -> Result<QualityPoint> {
    let kappa = matrix_conditioning(spectra)?.kappa;
    let abundances = unmix_matrix(spectra, data, solver)?;
    let rmse = matrix_rmse(spectra, &abundances, data)?;
    Ok(QualityPoint {
        kappa,
        rmse,
        set_size: spectra.ncols(),
    })
}

/// The two relative gains and their blend for removing a member.
///
/// Returns `(kappa_term, rmse_term, score)`.
pub fn score_terms(before: &QualityPoint, after: &QualityPoint, alpha: f64, eps_rmse: f64) -> (f64, f64, f64) {
    let kappa_term = (before.kappa - after.kappa) / before.kappa;
    let rmse_term = if before.rmse < eps_rmse {
        0.0
    } else {
        (before.rmse - after.rmse) / before.rmse
    };
    (kappa_term, rmse_term, (1.0 - alpha) * kappa_term + alpha * rmse_term)
}

/// Position of the maximal score, lowest index on ties.
pub fn argmax_score(scores: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// One level of the reduction.
pub fn reduce_step(set: &EndmemberSet, image: &SpectralImage, config: &ReductionConfig) -> Result<ReductionStep> {
    config.validate()?;
    check_inputs(set, image)?;
    let before = evaluate(set, image, &config.solver)?;
    step_from(set, before, image, config)
}

fn check_inputs(set: &EndmemberSet, image: &SpectralImage) -> Result<()> {
    if set.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "reduction needs at least 2 endmembers, got {}",
            set.len()
        )));
    }
    if set.bands() != image.bands() {
        return Err(Error::Dimension(format!(
            "endmembers have {} bands, image has {}",
            set.bands(),
            image.bands()
        )));
    }
    Ok(())
}

fn step_from(
    set: &EndmemberSet,
    before: QualityPoint,
    image: &SpectralImage,
    config: &ReductionConfig,
) -> Result<ReductionStep> {
    let size = set.len();
    let evaluated: Vec<Result<CandidateScore>> = (0..size)
        .into_par_iter()
        .map(|column| {
            let keep: Vec<usize> = (0..size).filter(|&c| c != column).collect();
            let spectra = set.spectra().select_columns(&keep);
            let quality = evaluate_matrix(&spectra, image.data(), &config.solver).map_err(|e| Error::Candidate {
                column,
                name: set.members()[column].name().to_string(),
                source: Box::new(e),
            })?;
            let (kappa_term, rmse_term, score) = score_terms(&before, &quality, config.alpha, config.eps_rmse);
            Ok(CandidateScore {
                column,
                member: set.members()[column].clone(),
                quality,
                kappa_term,
                rmse_term,
                score,
            })
        })
        .collect();
    let candidates = evaluated.into_iter().collect::<Result<Vec<_>>>()?;
    let chosen = argmax_score(candidates.iter().map(|c| c.score)).expect("at least two candidates");
    let winner = &candidates[chosen];
    Ok(ReductionStep {
        removed_column: winner.column,
        removed: winner.member.clone(),
        score: winner.score,
        before,
        after: winner.quality,
        unmixings: candidates.len(),
        candidates,
    })
}

/// Reduce `set` down to a single member, recording every level.
pub fn reduce_full(set: &EndmemberSet, image: &SpectralImage, config: &ReductionConfig) -> Result<ReductionTrace> {
    config.validate()?;
    check_inputs(set, image)?;
    let initial_quality = evaluate(set, image, &config.solver)?;
    let mut current = set.clone();
    let mut before = initial_quality;
    let mut steps = Vec::with_capacity(set.len() - 1);
    while current.len() > 1 {
        let step = step_from(&current, before, image, config)?;
        current = current.without(step.removed_column)?;
        before = step.after;
        steps.push(step);
    }
    Ok(ReductionTrace {
        initial: set.clone(),
        alpha: config.alpha,
        initial_quality,
        steps,
    })
}

/// `C(m, k)`, saturating.
pub fn binomial(m: usize, k: usize) -> u128 {
    if k > m {
        return 0;
    }
    let k = k.min(m - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((m - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// All `k`-subsets of `m` columns as bitmasks, in increasing numeric order.
pub fn subset_masks(m: usize, k: usize) -> Vec<u64> {
    if k == 0 || k > m || m > 64 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(binomial(m, k) as usize);
    let mut mask: u64 = if k == 64 { u64::MAX } else { (1u64 << k) - 1 };
    loop {
        out.push(mask);
        // Gosper's hack: next integer with the same popcount.
        let c = mask & mask.wrapping_neg();
        let r = mask.wrapping_add(c);
        if r == 0 {
            break;
        }
        let next = (((r ^ mask) >> 2) / c) | r;
        if m < 64 && next >> m != 0 {
            break;
        }
        mask = next;
    }
    out
}

pub fn mask_columns(mask: u64) -> Vec<usize> {
    (0..64).filter(|&i| mask >> i & 1 == 1).collect()
}

/// κ and RMSE of every `k`-subset of `set`.
///
/// Refuses to enumerate more than `cap` subsets unless `force` is set.
pub fn brute_force_subsets(
    set: &EndmemberSet,
    image: &SpectralImage,
    k: usize,
    solver: &SolverConfig,
    cap: u128,
    force: bool,
) -> Result<Vec<(u64, QualityPoint)>> {
    solver.validate()?;
    let m = set.len();
    if k == 0 || k > m {
        return Err(Error::InvalidConfig(format!("subset size {k} must lie in [1, {m}]")));
    }
    if m > 64 {
        return Err(Error::InvalidConfig(format!("brute force supports at most 64 members, got {m}")));
    }
    if set.bands() != image.bands() {
        return Err(Error::Dimension(format!(
            "endmembers have {} bands, image has {}",
            set.bands(),
            image.bands()
        )));
    }
    let count = binomial(m, k);
    if count > cap && !force {
        return Err(Error::CombinatorialExplosion { count, cap });
    }
    subset_masks(m, k)
        .into_par_iter()
        .map(|mask| {
            let spectra = set.spectra().select_columns(&mask_columns(mask));
            evaluate_matrix(&spectra, image.data(), solver).map(|q| (mask, q))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Bitmask of the columns of `set` whose provenance appears in `subset`.
pub fn subset_mask(set: &EndmemberSet, subset: &EndmemberSet) -> Option<u64> {
    let mut mask = 0u64;
    for member in subset.members() {
        let column = set.members().iter().position(|m| m == member)?;
        mask |= 1 << column;
    }
    Some(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(12, 6), 924);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
    }

    #[test]
    fn masks_are_ordered_and_complete() {
        let masks = subset_masks(4, 2);
        assert_eq!(masks, vec![0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
        assert_eq!(subset_masks(12, 6).len(), 924);
        assert_eq!(subset_masks(5, 5), vec![0b11111]);
        assert_eq!(mask_columns(0b1010), vec![1, 3]);
    }

    #[test]
    fn score_terms_handle_degenerate_measures() {
        let before = QualityPoint {
            kappa: crate::KAPPA_CAP,
            rmse: 0.0,
            set_size: 3,
        };
        let finite = QualityPoint {
            kappa: 10.0,
            rmse: 0.0,
            set_size: 2,
        };
        let (k, r, s) = score_terms(&before, &finite, 0.5, 1e-12);
        assert!((k - 1.0).abs() < 1e-13);
        assert_eq!(r, 0.0);
        assert!((s - 0.5).abs() < 1e-13);
        let capped = QualityPoint {
            kappa: crate::KAPPA_CAP,
            ..finite
        };
        assert_eq!(score_terms(&before, &capped, 0.5, 1e-12).0, 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax_score([0.1, 0.3, 0.3, -1.0]), Some(1));
        assert_eq!(argmax_score(std::iter::empty()), None);
    }

    #[test]
    fn alpha_is_validated() {
        assert!(ReductionConfig::with_alpha(1.5).validate().is_err());
        assert!(ReductionConfig::with_alpha(-0.1).validate().is_err());
        assert!(ReductionConfig::with_alpha(1.0).validate().is_ok());
    }
}
