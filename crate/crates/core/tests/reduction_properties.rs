mod common;

use common::*;
use emreduce_core::extraction::extract_osp;
use emreduce_core::reduction::{
    binomial, brute_force_subsets, evaluate, mask_columns, subset_mask, subset_masks, DEFAULT_BRUTE_FORCE_CAP,
};
use emreduce_core::synth::{synthesize, SynthSpec};
use emreduce_core::{
    reduce_full, reduce_step, spectral_angle, EndmemberSet, Error, ExtractionConfig, ReductionConfig, SolverConfig,
    KAPPA_CAP,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng as _;

fn mixed_image(rng: &mut emreduce_core::rng::Rng, e: &DMatrix<f64>, pixels: usize, noise: f64) -> DMatrix<f64> {
    let (n, k) = e.shape();
    let mut x = DMatrix::zeros(n, pixels);
    for j in 0..pixels {
        let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = w.iter().sum();
        for b in 0..n {
            x[(b, j)] = (0..k).map(|i| e[(b, i)] * w[i] / s).sum::<f64>() + noise * rng.random_range(-1.0..1.0);
        }
    }
    x
}

#[test]
fn step_scores_match_independent_recomputation() {
    let mut rng = rng(30);
    for alpha in [0.0, 0.3, 0.5, 1.0] {
        let e = uniform_matrix(&mut rng, 12, 6, 0.0, 1.0);
        let image = image_of(mixed_image(&mut rng, &e.columns(0, 4).into_owned(), 80, 0.02));
        let set = set_of(e.clone());
        let config = ReductionConfig::with_alpha(alpha);
        let step = reduce_step(&set, &image, &config).unwrap();
        let k0 = gram_condition(&e);
        let r0 = step.before.rmse;
        assert!(((step.before.kappa - k0) / k0).abs() < 1e-8);
        let mut expected = Vec::new();
        for c in 0..6 {
            let keep: Vec<usize> = (0..6).filter(|&i| i != c).collect();
            let k1 = gram_condition(&e.select_columns(&keep));
            let r1 = step.candidates[c].quality.rmse;
            let s = blend(alpha, k0, k1, r0, r1, config.eps_rmse);
            assert!((step.candidates[c].score - s).abs() < 1e-8, "alpha {alpha} column {c}");
            expected.push(s);
        }
        let best = expected.iter().cloned().fold(f64::MIN, f64::max);
        assert!(step.score >= best - 1e-8);
    }
}

#[test]
fn duplicate_member_is_removed_first() {
    let mut rng = rng(31);
    let mut e = uniform_matrix(&mut rng, 10, 5, 0.0, 1.0);
    let copy = e.column(2).into_owned();
    e.set_column(4, &copy);
    let image = image_of(mixed_image(&mut rng, &e, 60, 0.01));
    for alpha in [0.0, 0.5] {
        let step = reduce_step(&set_of(e.clone()), &image, &ReductionConfig::with_alpha(alpha)).unwrap();
        assert_eq!(step.before.kappa, KAPPA_CAP);
        assert!([2, 4].contains(&step.removed_column), "alpha {alpha}");
        assert!(step.after.kappa < KAPPA_CAP);
    }
}

#[test]
fn rmse_only_score_drops_the_unused_member() {
    let mut rng = rng(32);
    let e = uniform_matrix(&mut rng, 15, 5, 0.0, 1.0);
    let image = image_of(mixed_image(&mut rng, &e.columns(0, 4).into_owned(), 100, 1e-3));
    let step = reduce_step(&set_of(e), &image, &ReductionConfig::with_alpha(1.0)).unwrap();
    assert_eq!(step.removed_column, 4);
}

#[test]
fn kappa_only_score_follows_gram_oracle() {
    let mut rng = rng(33);
    for _ in 0..10 {
        let e = uniform_matrix(&mut rng, 14, 7, 0.0, 1.0);
        let image = image_of(mixed_image(&mut rng, &e, 40, 0.01));
        let step = reduce_step(&set_of(e.clone()), &image, &ReductionConfig::with_alpha(0.0)).unwrap();
        let kappas: Vec<f64> = (0..7)
            .map(|c| {
                let keep: Vec<usize> = (0..7).filter(|&i| i != c).collect();
                gram_condition(&e.select_columns(&keep))
            })
            .collect();
        let best = (0..7).min_by(|&a, &b| kappas[a].total_cmp(&kappas[b])).unwrap();
        assert_eq!(step.removed_column, best);
    }
}

#[test]
fn two_member_set_reduces_in_one_step() {
    let mut rng = rng(34);
    let e = uniform_matrix(&mut rng, 6, 2, 0.0, 1.0);
    let image = image_of(mixed_image(&mut rng, &e, 20, 0.0));
    let trace = reduce_full(&set_of(e), &image, &ReductionConfig::default()).unwrap();
    assert_eq!(trace.steps.len(), 1);
    assert_eq!(trace.points().len(), 2);
    assert_eq!(trace.total_unmixings(), 3);
}

#[test]
fn trace_is_consistent() {
    let mut rng = rng(35);
    let e = uniform_matrix(&mut rng, 20, 8, 0.0, 1.0);
    let image = image_of(mixed_image(&mut rng, &e.columns(0, 5).into_owned(), 100, 0.01));
    let set = set_of(e);
    let trace = reduce_full(&set, &image, &ReductionConfig::default()).unwrap();
    let points = trace.points();
    let sizes: Vec<usize> = points.iter().map(|p| p.set_size).collect();
    assert_eq!(sizes, (1..=8).rev().collect::<Vec<_>>());
    for w in points.windows(2) {
        assert!(w[1].kappa <= w[0].kappa);
    }
    let sets = trace.sets();
    let solver = SolverConfig::default();
    for (s, p) in sets.iter().zip(&points) {
        let q = evaluate(s, &image, &solver).unwrap();
        assert_eq!(q, *p);
    }
    assert_eq!(trace.total_unmixings(), 1 + (2..=8).sum::<usize>());
    assert_eq!(trace.set_of_size(3).unwrap().len(), 3);
}

#[test]
fn every_alpha_starts_from_the_same_point() {
    let mut rng = rng(36);
    let e = uniform_matrix(&mut rng, 10, 5, 0.0, 1.0);
    let image = image_of(mixed_image(&mut rng, &e, 50, 0.01));
    let set = set_of(e);
    let first: Vec<_> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&a| reduce_full(&set, &image, &ReductionConfig::with_alpha(a)).unwrap().points()[0])
        .collect();
    assert!(first.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn greedy_recovers_true_members_in_over_complete_set() {
    let scene = synthesize(&SynthSpec::new(40, 5, 1500, 37).with_noise(1e-3)).unwrap();
    let extracted = extract_osp(&scene.image, &ExtractionConfig::new(10, 0)).unwrap();
    let trace = reduce_full(&extracted, &scene.image, &ReductionConfig::default()).unwrap();
    let five = trace.set_of_size(5).unwrap();
    for t in 0..5 {
        let truth: Vec<f64> = scene.endmembers.spectra().column(t).iter().copied().collect();
        let best = (0..5)
            .map(|c| {
                let s: Vec<f64> = five.spectra().column(c).iter().copied().collect();
                spectral_angle(&truth, &s).unwrap()
            })
            .fold(f64::MAX, f64::min);
        assert!(best.to_degrees() < 1.0, "member {t} angle {}", best.to_degrees());
    }
}

#[test]
fn brute_force_enumerates_all_subsets() {
    let mut rng = rng(38);
    let e = uniform_matrix(&mut rng, 8, 4, 0.0, 1.0);
    let image = image_of(mixed_image(&mut rng, &e, 30, 0.01));
    let set = set_of(e);
    let solver = SolverConfig::default();
    let all = brute_force_subsets(&set, &image, 2, &solver, DEFAULT_BRUTE_FORCE_CAP, false).unwrap();
    assert_eq!(all.len(), 6);
    let mut masks: Vec<u64> = all.iter().map(|(m, _)| *m).collect();
    masks.dedup();
    assert_eq!(masks.len(), 6);
    assert!(masks.iter().all(|m| m.count_ones() == 2 && *m < 16));

    let trace = reduce_full(&set, &image, &ReductionConfig::default()).unwrap();
    let greedy = trace.set_of_size(2).unwrap();
    let mask = subset_mask(&set, &greedy).unwrap();
    let entry = all.iter().find(|(m, _)| *m == mask).expect("greedy subset enumerated");
    assert_eq!(entry.1, trace.points()[2]);
}

#[test]
fn brute_force_respects_the_cap() {
    let mut rng = rng(39);
    let e = uniform_matrix(&mut rng, 14, 12, 0.0, 1.0);
    let image = image_of(mixed_image(&mut rng, &e, 10, 0.01));
    let set = set_of(e);
    let solver = SolverConfig::default();
    assert!(matches!(
        brute_force_subsets(&set, &image, 6, &solver, 100, false),
        Err(Error::CombinatorialExplosion { count: 924, cap: 100 })
    ));
    assert_eq!(brute_force_subsets(&set, &image, 6, &solver, 100, true).unwrap().len(), 924);
}

#[test]
fn subset_masks_match_binomials() {
    for m in 1..=12 {
        for k in 1..=m {
            let masks = subset_masks(m, k);
            assert_eq!(masks.len() as u128, binomial(m, k));
            assert!(masks.windows(2).all(|w| w[0] < w[1]));
            assert!(masks.iter().all(|&x| mask_columns(x).len() == k && x >> m == 0));
        }
    }
}

#[test]
fn single_member_cannot_be_reduced() {
    let e = DMatrix::from_element(3, 1, 1.0);
    let image = image_of(e.clone());
    let set: EndmemberSet = set_of(e);
    assert!(matches!(
        reduce_full(&set, &image, &ReductionConfig::default()),
        Err(Error::InvalidConfig(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reduction_is_deterministic(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let mut rng = rng(seed);
        let e = uniform_matrix(&mut rng, 9, 5, 0.0, 1.0);
        let image = image_of(mixed_image(&mut rng, &e, 25, 0.02));
        let set = set_of(e);
        let config = ReductionConfig::with_alpha(alpha);
        let a = reduce_full(&set, &image, &config).unwrap();
        let b = reduce_full(&set, &image, &config).unwrap();
        prop_assert_eq!(a.points(), b.points());
        let removed_a: Vec<usize> = a.steps.iter().map(|s| s.removed_column).collect();
        let removed_b: Vec<usize> = b.steps.iter().map(|s| s.removed_column).collect();
        prop_assert_eq!(removed_a, removed_b);
    }

    #[test]
    fn chosen_score_is_maximal(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let mut rng = rng(seed);
        let e = uniform_matrix(&mut rng, 9, 5, 0.0, 1.0);
        let image = image_of(mixed_image(&mut rng, &e, 25, 0.02));
        let step = reduce_step(&set_of(e), &image, &ReductionConfig::with_alpha(alpha)).unwrap();
        for c in &step.candidates {
            prop_assert!(c.score <= step.score);
            if c.score == step.score {
                prop_assert!(c.column >= step.removed_column);
            }
        }
    }
}
