mod common;

use proptest::prelude::*;

use dishnet::metrics::{average_precision, mean_average_precision, Averaging, PredictionSet, ThresholdGrid};
use dishnet::Tensor;

fn instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<bool>)> {
    (1usize..=8, 1usize..=6).prop_flat_map(|(b, k)| {
        (Just(b), Just(k), prop::collection::vec(0.0f64..=1.0, b * k), prop::collection::vec(any::<bool>(), b * k))
    })
}

fn tensors(b: usize, k: usize, scores: &[f64], labels: &[bool]) -> (Tensor<f64>, Tensor<f64>) {
    (
        Tensor::new(scores.to_vec(), &[b, k]).unwrap(),
        Tensor::new(labels.iter().map(|&l| f64::from(u8::from(l))).collect(), &[b, k]).unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn micro_map_equals_brute_force((b, k, scores, labels) in instance()) {
        prop_assume!(labels.iter().any(|&l| l));
        let (s, y) = tensors(b, k, &scores, &labels);
        let got = mean_average_precision(&s, &y, &ThresholdGrid::default(), Averaging::Micro).unwrap();
        prop_assert_eq!(got, common::brute_force_ap(&scores, &labels, 500));
        prop_assert!((0.0..=1.0).contains(&got));
    }

    #[test]
    fn well_separated_scores_give_rank_ap(
        slots in prop::sample::subsequence((0..=250).collect::<Vec<u32>>(), 1..40),
        labels in prop::collection::vec(any::<bool>(), 40),
    ) {
        // Scores m/250 are at least 1/250 > 1/499 apart.
        let scores: Vec<f64> = slots.iter().map(|&m| f64::from(m) / 250.0).collect();
        let labels = &labels[..scores.len()];
        prop_assume!(labels.iter().any(|&l| l));
        let p = PredictionSet::new(scores.clone(), labels.to_vec()).unwrap();
        let ap = average_precision(&p, &ThresholdGrid::default()).unwrap();
        prop_assert!((ap - common::rank_ap(&scores, labels)).abs() < 1e-12);
    }

    #[test]
    fn micro_map_ignores_sample_and_label_order(
        (b, k, scores, labels) in instance(), seed in any::<u64>(),
    ) {
        prop_assume!(labels.iter().any(|&l| l));
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rows: Vec<usize> = (0..b).collect();
        let mut cols: Vec<usize> = (0..k).collect();
        rows.shuffle(&mut rng);
        cols.shuffle(&mut rng);
        let pick = |v: &[f64]| -> Vec<f64> { rows.iter().flat_map(|&r| cols.iter().map(move |&c| v[r * k + c])).collect() };
        let lab: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();
        let grid = ThresholdGrid::default();
        let (s, y) = tensors(b, k, &scores, &labels);
        let a = mean_average_precision(&s, &y, &grid, Averaging::Micro).unwrap();
        let s2 = Tensor::new(pick(&scores), &[b, k]).unwrap();
        let y2 = Tensor::new(pick(&lab), &[b, k]).unwrap();
        prop_assert_eq!(a, mean_average_precision(&s2, &y2, &grid, Averaging::Micro).unwrap());
    }

    #[test]
    fn transforms_within_grid_cells_keep_ap(
        cells in prop::collection::vec((0u32..499, 0.05f64..0.95, 0.05f64..0.95), 1..30),
        labels in prop::collection::vec(any::<bool>(), 30),
    ) {
        // Each score moves inside its own open grid cell, so no score crosses
        // a threshold.
        let a: Vec<f64> = cells.iter().map(|&(c, u, _)| (f64::from(c) + u) / 499.0).collect();
        let b: Vec<f64> = cells.iter().map(|&(c, _, v)| (f64::from(c) + v) / 499.0).collect();
        let labels = &labels[..a.len()];
        prop_assume!(labels.iter().any(|&l| l));
        let grid = ThresholdGrid::default();
        let ap = |s: &[f64]| average_precision(&PredictionSet::new(s.to_vec(), labels.to_vec()).unwrap(), &grid).unwrap();
        prop_assert_eq!(ap(&a), ap(&b));
    }
}

#[test]
fn worked_example() {
    let p = PredictionSet::new(vec![0.9, 0.8, 0.1], vec![false, true, true]).unwrap();
    let ap = average_precision(&p, &ThresholdGrid::default()).unwrap();
    assert!((ap - 0.583333).abs() < 1e-6);
    assert!((ap - (0.25 + 1.0 / 3.0)).abs() < 1e-12);
}

#[test]
fn perfect_and_constant_scores() {
    let grid = ThresholdGrid::default();
    let s = Tensor::new(vec![0.9, 0.1, 0.1, 0.9], &[2, 2]).unwrap();
    let y = Tensor::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2]).unwrap();
    assert_eq!(mean_average_precision(&s, &y, &grid, Averaging::Micro).unwrap(), 1.0);
    let flat = PredictionSet::new(vec![0.5; 8], vec![true, false, false, true, false, false, false, true]).unwrap();
    assert!((average_precision(&flat, &grid).unwrap() - 3.0 / 8.0).abs() < 1e-12);
}
