use nnfs_core::baselines::{
    head_loss_and_gradient, head_predict, train_head, HeadConfig, LinearHead,
};
use nnfs_core::{l2_normalize, FeatureMatrix64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn loss_at(head: &LinearHead<f64>, x: &FeatureMatrix64, y: &[usize]) -> f64 {
    head_loss_and_gradient(head, x, y).unwrap().loss
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
    let (c, dim, n) = (3, 4, 9);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let x = FeatureMatrix64::from_rows(&rows).unwrap();
    let y: Vec<usize> = (0..n).map(|i| i % c).collect();
    let mut head = LinearHead::zeros(c, dim);
    head.weights
        .iter_mut()
        .for_each(|w| *w = rng.random_range(-0.5..0.5));
    head.bias
        .iter_mut()
        .for_each(|b| *b = rng.random_range(-0.5..0.5));

    let g = head_loss_and_gradient(&head, &x, &y).unwrap();
    let h = 1e-5;
    let mut max_diff: f64 = 0.0;
    for k in 0..head.weights.len() {
        let mut plus = head.clone();
        let mut minus = head.clone();
        plus.weights[k] += h;
        minus.weights[k] -= h;
        let fd = (loss_at(&plus, &x, &y) - loss_at(&minus, &x, &y)) / (2.0 * h);
        max_diff = max_diff.max((fd - g.weights[k]).abs());
    }
    for k in 0..c {
        let mut plus = head.clone();
        let mut minus = head.clone();
        plus.bias[k] += h;
        minus.bias[k] -= h;
        let fd = (loss_at(&plus, &x, &y) - loss_at(&minus, &x, &y)) / (2.0 * h);
        max_diff = max_diff.max((fd - g.bias[k]).abs());
    }
    assert!(max_diff < 1e-6, "max |fd − analytic| = {max_diff}");
}

// Expected behaviour from tests/oracles/head_reference.py.
#[test]
fn separable_two_class_support() {
    let x = FeatureMatrix64::from_rows(&[
        [2.0, 0.1],
        [2.1, -0.1],
        [1.9, 0.0],
        [-2.0, 0.1],
        [-2.1, 0.0],
        [-1.9, -0.1],
    ])
    .unwrap();
    let y = [0, 0, 0, 1, 1, 1];
    let head = train_head(
        &x,
        &y,
        2,
        HeadConfig {
            epochs: 200,
            learning_rate: 0.5,
        },
    )
    .unwrap();
    assert_eq!(head.training_log.len(), 200);
    assert_eq!(head_predict(&head, &x).unwrap().hard_labels, y.to_vec());
    let q = FeatureMatrix64::from_rows(&[[2.0, 0.0]]).unwrap();
    let r = head_predict(&head, &q).unwrap();
    assert_eq!(r.hard_labels, vec![0]);
    assert!(r.distribution_row(0)[0] > 0.9);
    assert!((r.distribution_row(0)[0] - 0.998_786_297_769_376_8).abs() < 1e-9);
}

#[test]
fn loss_is_non_increasing_on_unit_features() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for lr in [0.01, 0.05, 0.1] {
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x = l2_normalize(&FeatureMatrix64::from_rows(&rows).unwrap()).unwrap();
        let y: Vec<usize> = (0..15).map(|i| i % 3).collect();
        let head = train_head(
            &x,
            &y,
            3,
            HeadConfig {
                epochs: 300,
                learning_rate: lr,
            },
        )
        .unwrap();
        for w in head.training_log.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-9, "lr {lr}: {:?}", w);
        }
    }
}

proptest! {
    #[test]
    fn head_rows_are_distributions(
        weights in prop::collection::vec(-20.0f64..20.0, 12),
        bias in prop::collection::vec(-20.0f64..20.0, 3),
        q in prop::collection::vec(-5.0f64..5.0, 8),
    ) {
        let head = LinearHead { weights, bias, num_classes: 3, dim: 4, training_log: vec![] };
        let x = FeatureMatrix64::new(2, 4, q).unwrap();
        let r = head_predict(&head, &x).unwrap();
        for i in 0..2 {
            let row = r.distribution_row(i);
            prop_assert!(row.iter().all(|p| p.is_finite() && *p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
