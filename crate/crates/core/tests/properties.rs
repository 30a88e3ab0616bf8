use std::sync::Arc;

use proptest::prelude::*;
use shapkit::fixtures;
use shapkit::models::{Activation, LinearModel};
use shapkit::*;

fn game_from(m: usize, values: Vec<f64>) -> TabularGame {
    TabularGame::new(m, values).unwrap()
}

fn arb_game(max_m: usize) -> impl Strategy<Value = TabularGame> {
    (1..=max_m).prop_flat_map(|m| prop::collection::vec(-10.0..10.0f64, 1 << m).prop_map(move |v| game_from(m, v)))
}

/// Values on a coarse grid so ties and values below the reference are common.
fn arb_max_input() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (prop::collection::vec(-3i32..4, 1..=8), -2i32..2).prop_map(|(v, r)| (v.into_iter().map(f64::from).collect(), f64::from(r)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_agrees_with_permutation_average(game in arb_game(6)) {
        let a = shapley_exact(&game).unwrap();
        let b = shapley_permutation_exact(&game).unwrap();
        prop_assert!(a.max_abs_deviation(&b).unwrap() < 1e-9);
        prop_assert!(axioms::check_local_accuracy(&a, 1e-9));
    }

    #[test]
    fn max_shap_matches_enumeration((values, reference) in arb_max_input()) {
        let fast = max_shap(&values, reference).unwrap();
        let slow = shapley_exact(&fixtures::max_game(&values, reference)).unwrap();
        prop_assert!(fast.max_abs_deviation(&slow).unwrap() < 1e-9);
        prop_assert!((fast.base_value - reference).abs() < 1e-12);
    }

    #[test]
    fn max_shap_is_permutation_equivariant((values, reference) in arb_max_input(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.shuffle(&mut fixtures::rng(seed));
        let permuted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let a = max_shap(&values, reference).unwrap();
        let b = max_shap(&permuted, reference).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert!((b.attributions[k] - a.attributions[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_shap_matches_masked_game(m in 1usize..=6, seed in any::<u64>()) {
        let mut rng = fixtures::rng(seed);
        let model = fixtures::random_linear(m, &mut rng);
        let x = fixtures::normal_rows(1, m, &mut rng).remove(0);
        let bg = BackgroundData::new(fixtures::normal_rows(7, m, &mut rng)).unwrap();
        let fast = linear_shap(&model, &x, &bg).unwrap();
        let game = MaskedGame::new(Arc::new(model), x, Arc::new(bg), MaskingMode::Independence).unwrap();
        let slow = shapley_exact(&game).unwrap();
        prop_assert!(fast.max_abs_deviation(&slow).unwrap() < 1e-9);
        prop_assert!((fast.base_value - slow.base_value).abs() < 1e-9);
    }

    #[test]
    fn kernel_local_accuracy_at_any_budget(m in 3usize..=9, extra in 0usize..200, seed in any::<u64>()) {
        let game = fixtures::random_game(m, seed);
        let budget = (4 * m + extra).min((1 << m) - 2);
        match kernel_shap(&game, &KernelConfig::new(budget, seed)) {
            Ok(e) => prop_assert!((e.total() - e.fx_full).abs() < 1e-9 * (1.0 + e.fx_full.abs())),
            Err(ShapError::Singular(_)) => {}
            Err(other) => prop_assert!(false, "{other}"),
        }
    }

    #[test]
    fn deep_shap_sums_to_delta(seed in any::<u64>(), hidden in 1usize..6) {
        let mut rng = fixtures::rng(seed);
        let net = fixtures::random_mlp(&[4, hidden, 3, 1], Activation::Relu, &mut rng);
        let x = fixtures::normal_rows(1, 4, &mut rng).remove(0);
        let bg = BackgroundData::new(fixtures::normal_rows(5, 4, &mut rng)).unwrap();
        let e = deep_shap(&net, &x, &bg, 0).unwrap();
        let sum: f64 = e.attributions.iter().sum();
        prop_assert!((sum - (e.fx_full - e.base_value)).abs() < 1e-9);
    }

    #[test]
    fn coalition_complement_round_trip(m in 1usize..=64, raw in any::<u64>()) {
        let mask = if m == 64 { raw } else { raw & ((1u64 << m) - 1) };
        let c = Coalition::new(mask, m).unwrap();
        prop_assert_eq!(c.complement().complement(), c);
        prop_assert_eq!(c.size() + c.complement().size(), m);
        let members: Vec<usize> = c.members().collect();
        prop_assert_eq!(Coalition::from_members(&members, m).unwrap(), c);
    }
}

#[test]
fn sampling_converges_on_sickness_game() {
    let g = fixtures::sickness_game();
    let e = sampling_shap(&g, &SamplingConfig::new(2000, 7)).unwrap();
    assert!(e.attributions.iter().all(|p| (p - 1.0).abs() < 0.15));
}

#[test]
fn identity_network_equals_linear_model() {
    let mut rng = fixtures::rng(5);
    let net = fixtures::random_mlp(&[5, 3, 1], Activation::Identity, &mut rng);
    let x = fixtures::normal_rows(1, 5, &mut rng).remove(0);
    let bg = BackgroundData::new(fixtures::normal_rows(9, 5, &mut rng)).unwrap();
    // Collapse the two affine layers into one.
    let (l0, l1) = (&net.layers()[0], &net.layers()[1]);
    let weights: Vec<f64> = (0..5)
        .map(|i| (0..3).map(|h| l0.weight(i, h) * l1.weight(h, 0)).sum())
        .collect();
    let bias = l1.bias[0] + (0..3).map(|h| l0.bias[h] * l1.weight(h, 0)).sum::<f64>();
    let lin = LinearModel::new(weights, bias).unwrap();
    let d = deep_shap(&net, &x, &bg, 0).unwrap();
    let l = linear_shap(&lin, &x, &bg).unwrap();
    assert!(d.max_abs_deviation(&l).unwrap() < 1e-9);
}
