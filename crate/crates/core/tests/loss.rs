mod common;

use proptest::prelude::*;

use dishnet::loss::{batch_loss, per_label_loss, AsymmetricLossConfig, BatchReduction};
use dishnet::tensor::finite_difference_check;
use dishnet::Tensor;

fn cfg(gamma_plus: f64, gamma_minus: f64) -> AsymmetricLossConfig {
    AsymmetricLossConfig { gamma_plus, gamma_minus, ..Default::default() }
}

proptest! {
    #[test]
    fn nonnegative_and_finite(z in -30.0f64..30.0, positive in any::<bool>(), gp in 0.0f64..6.0, gm in 0.0f64..6.0) {
        let l = per_label_loss(z, positive, &cfg(gp, gm)).unwrap();
        prop_assert!(l.is_finite() && l >= 0.0);
    }

    #[test]
    fn monotone_in_the_logit(a in -20.0f64..20.0, step in 0.01f64..5.0) {
        let b = a + step;
        let asl = AsymmetricLossConfig::default();
        prop_assert!(per_label_loss(b, true, &asl).unwrap() < per_label_loss(a, true, &asl).unwrap());
        let bce = AsymmetricLossConfig::bce();
        prop_assert!(per_label_loss(b, false, &bce).unwrap() > per_label_loss(a, false, &bce).unwrap());
    }

    #[test]
    fn negative_focusing_ratio_is_p_to_gamma(z in -8.0f64..8.0, gamma in 0.5f64..6.0) {
        let p = 1.0 / (1.0 + (-z).exp());
        let ratio = per_label_loss(z, false, &cfg(0.0, gamma)).unwrap() / per_label_loss(z, false, &cfg(0.0, 0.0)).unwrap();
        prop_assert!((ratio - p.powf(gamma)).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_differences_per_label(z in -20.0f64..20.0, positive in any::<bool>(), gp in 0.0f64..3.0, gm in 0.0f64..6.0) {
        // The loss is a sum of independent per-label terms, so each term is
        // checked on its own; summed with much larger terms a tiny gradient
        // would sit below the round-off of the differences.
        let x = Tensor::new(vec![z], &[1, 1]).unwrap();
        let y = Tensor::new(vec![f64::from(u8::from(positive))], &[1, 1]).unwrap();
        let err = finite_difference_check(|t| batch_loss(t, &y, &cfg(gp, gm)), &x, 1e-5).unwrap();
        prop_assert!(err < 1e-4, "{err:e}");
    }

    #[test]
    fn gradient_matches_differences_per_batch(
        values in prop::collection::vec((-2.0f64..2.0, any::<bool>()), 1..12),
        gp in 0.0f64..2.0, gm in 0.0f64..6.0,
    ) {
        let k = values.len();
        let z = Tensor::new(values.iter().map(|v| v.0).collect(), &[1, k]).unwrap();
        let y = Tensor::new(values.iter().map(|v| f64::from(u8::from(v.1))).collect(), &[1, k]).unwrap();
        let err = finite_difference_check(|x| batch_loss(x, &y, &cfg(gp, gm)), &z, 1e-5).unwrap();
        prop_assert!(err < 1e-4, "{err:e}");
    }
}

#[test]
fn bce_gradient_is_p_minus_y_over_batch() {
    let z = Tensor::<f64>::param(vec![0.3, -1.2, 2.0, 0.0, 4.0, -0.5], &[3, 2]).unwrap();
    let y = Tensor::new(vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[3, 2]).unwrap();
    batch_loss(&z, &y, &AsymmetricLossConfig::bce()).unwrap().backward().unwrap();
    for ((g, zi), yi) in z.grad().unwrap().iter().zip(z.data()).zip(y.data()) {
        let p = 1.0 / (1.0 + (-zi).exp());
        assert!((g - (p - yi) / 3.0).abs() < 1e-12);
    }
    let sum = AsymmetricLossConfig { batch_reduction: BatchReduction::Sum, ..AsymmetricLossConfig::bce() };
    let mean = batch_loss(&z, &y, &AsymmetricLossConfig::bce()).unwrap().item().unwrap();
    assert!((batch_loss(&z, &y, &sum).unwrap().item().unwrap() - 3.0 * mean).abs() < 1e-12);
    assert!((mean - common::bce_oracle(z.data(), y.data(), 3)).abs() < 1e-12);
}

#[test]
fn saturated_logits_keep_gradients() {
    for z0 in [-20.0, 20.0] {
        for target in [0.0, 1.0] {
            let z = Tensor::<f64>::new(vec![z0, -z0 / 2.0], &[1, 2]).unwrap();
            let y = Tensor::new(vec![target, 1.0 - target], &[1, 2]).unwrap();
            let err = finite_difference_check(|x| batch_loss(x, &y, &AsymmetricLossConfig::default()), &z, 1e-5).unwrap();
            assert!(err < 1e-4, "z={z0} y={target}: {err:e}");
        }
    }
}
