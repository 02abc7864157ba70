mod common;

use common::separable_set;
use proptest::prelude::*;
use slorag::policy::{example_weights, train_policy, Objective, PolicyModel, TrainConfig};

#[test]
fn gradients_match_central_differences() {
    if let Err(e) = common::gradient_check(20, 11) {
        panic!("{e}");
    }
}

#[test]
fn threshold_labels_are_recovered() {
    let set = separable_set(500, 3);
    let model = train_policy(&set, 4, Objective::ArgmaxCe, "p", &TrainConfig::default()).unwrap();
    let agree = set
        .features
        .iter()
        .zip(&set.labels)
        .filter(|(x, &y)| model.predict_action(x).unwrap().id() as usize == y)
        .count();
    assert!(agree as f64 / 500.0 >= 0.95, "agreement {agree}/500");
}

#[test]
fn small_step_loss_never_increases() {
    let set = separable_set(200, 8);
    let cfg = TrainConfig { learning_rate: 1e-3, epochs: 300, ..TrainConfig::default() };
    let model = train_policy(&set, 4, Objective::ArgmaxCe, "p", &cfg).unwrap();
    assert_eq!(model.loss_trace.len(), 300);
    assert!((model.loss_trace[0] - 5f64.ln()).abs() < 1e-12);
    assert!(model.loss_trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn equal_margins_make_objectives_coincide() {
    let mut set = separable_set(120, 4);
    set.margins = vec![0.37; 120];
    let cfg = TrainConfig { epochs: 30, ..TrainConfig::default() };
    let ce = train_policy(&set, 4, Objective::ArgmaxCe, "p", &cfg).unwrap();
    let wt = train_policy(&set, 4, Objective::ArgmaxCeWt, "p", &cfg).unwrap();
    assert_eq!(ce.weights, wt.weights);
    assert_eq!(ce.bias, wt.bias);
    assert_eq!(ce.loss_trace, wt.loss_trace);
}

#[test]
fn training_is_deterministic_and_serializes_exactly() {
    let set = separable_set(150, 21);
    let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
    let a = train_policy(&set, 4, Objective::ArgmaxCeWt, "cheap", &cfg).unwrap();
    let b = train_policy(&set, 4, Objective::ArgmaxCeWt, "cheap", &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let back = PolicyModel::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    assert!(back.weights.iter().zip(&a.weights).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn dimension_mismatch_is_rejected() {
    let set = separable_set(10, 1);
    assert!(train_policy(&set, 5, Objective::ArgmaxCe, "p", &TrainConfig::default()).is_err());
    let m = PolicyModel::zeros(4, Objective::ArgmaxCe, "p", 0);
    assert!(m.forward_softmax(&[0.0; 3]).is_err());
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant_and_normalized(
        bias in prop::array::uniform5(-30.0f64..30.0),
        shift in -50.0f64..50.0,
    ) {
        let mut m = PolicyModel::zeros(1, Objective::ArgmaxCe, "p", 0);
        m.bias = bias;
        let p = m.forward_softmax(&[0.0]).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| v > 0.0));
        m.bias.iter_mut().for_each(|b| *b += shift);
        let q = m.forward_softmax(&[0.0]).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_survives_positive_scaling(
        bias in prop::array::uniform5(-5.0f64..5.0),
        scale in 0.01f64..100.0,
    ) {
        let mut m = PolicyModel::zeros(1, Objective::ArgmaxCe, "p", 0);
        m.bias = bias;
        let before = m.predict_action(&[0.0]).unwrap();
        m.bias.iter_mut().for_each(|b| *b *= scale);
        prop_assert_eq!(before, m.predict_action(&[0.0]).unwrap());
    }

    #[test]
    fn weighted_examples_average_to_one(margins in prop::collection::vec(0.0f64..3.0, 1..40)) {
        let w = example_weights(Objective::ArgmaxCeWt, &margins);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() / w.len() as f64 - 1.0).abs() < 1e-9);
    }
}
