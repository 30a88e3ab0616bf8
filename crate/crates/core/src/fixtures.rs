//! Seeded test and benchmark fixtures.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::coalition::Coalition;
use crate::error::Result;
use crate::game::TabularGame;
use crate::models::{Activation, DecisionTree, Layer, LinearModel, MaxModel, MlpModel, TreeNode};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two symptoms: the score is 5 when exactly one is present, 2 when both are, 0 otherwise.
pub fn sickness_game() -> TabularGame {
    TabularGame::new(2, vec![0.0, 5.0, 5.0, 2.0]).expect("static fixture")
}

/// Scores of three players; profit is the best score.
pub const PROFIT_SCORES: [f64; 3] = [5.0, 4.0, 0.0];

pub fn profit_model() -> MaxModel {
    MaxModel {
        n_features: 3,
        baseline: 0.0,
    }
}

/// `v(S) = max(0, max_{i∈S} score_i)` for the profit scores.
pub fn profit_game() -> TabularGame {
    max_game(&PROFIT_SCORES, 0.0)
}

pub fn max_game(values: &[f64], reference: f64) -> TabularGame {
    TabularGame::from_fn(values.len(), |s| {
        s.members().map(|i| values[i]).fold(reference, f64::max)
    })
    .expect("max game within enumeration guard")
}

/// Table of `2^M` values drawn uniformly from `[-10, 10)`.
pub fn random_game(m: usize, seed: u64) -> TabularGame {
    let mut rng = rng(seed);
    let values = (0..1usize << m).map(|_| rng.random_range(-10.0..10.0)).collect();
    TabularGame::new(m, values).expect("valid table")
}

/// A game `B` that dominates `A` in every marginal contribution of player `i`:
/// `v_B(S ∪ {i}) = v_A(S ∪ {i}) + δ_S` with `δ_S ∈ [0, max_increment)`.
pub fn monotone_pair(base: &TabularGame, i: usize, max_increment: f64, rng: &mut impl Rng) -> TabularGame {
    let m = base.values().len().trailing_zeros() as usize;
    let mut values = base.values().to_vec();
    for (mask, v) in values.iter_mut().enumerate() {
        if mask & (1 << i) != 0 {
            *v += rng.random_range(0.0..max_increment);
        }
    }
    TabularGame::new(m, values).expect("same shape")
}

/// Every ordering of `0..m` (`m!` of them), lexicographic.
pub fn all_orderings(m: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

pub fn normal_rows(n: usize, m: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

pub fn random_linear(m: usize, rng: &mut impl Rng) -> LinearModel {
    let weights = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
    LinearModel::new(weights, rng.random_range(-5.0..5.0)).expect("finite weights")
}

/// Complete binary tree of the given depth over `n_features` inputs, splitting only on
/// `features`. Every listed feature appears at least once when the tree has enough
/// internal nodes. Thresholds lie in `[-1, 1)`, leaf values in `[-5, 5)`.
pub fn random_tree(n_features: usize, depth: usize, features: &[usize], rng: &mut impl Rng) -> DecisionTree {
    let n_internal = (1usize << depth) - 1;
    let mut assigned: Vec<usize> = features.to_vec();
    assigned.shuffle(rng);
    assigned.truncate(n_internal);
    while assigned.len() < n_internal {
        assigned.push(*features.choose(rng).expect("non-empty feature list"));
    }
    assigned.shuffle(rng);
    let mut nodes = Vec::with_capacity(2 * n_internal + 1);
    for (i, &feature) in assigned.iter().enumerate() {
        nodes.push(TreeNode::Split {
            feature,
            threshold: rng.random_range(-1.0..1.0),
            left: 2 * i + 1,
            right: 2 * i + 2,
        });
    }
    for _ in 0..=n_internal {
        nodes.push(TreeNode::Leaf(rng.random_range(-5.0..5.0)));
    }
    DecisionTree::new(n_features, nodes, 0).expect("well-formed complete tree")
}

/// Fully connected network with the given widths (`widths[0]` inputs) and the same
/// activation on every hidden layer; the last layer is identity.
pub fn random_mlp(widths: &[usize], hidden: Activation, rng: &mut impl Rng) -> MlpModel {
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            let (rows, cols) = (w[0], w[1]);
            let scale = 1.0 / (rows as f64).sqrt();
            Layer {
                rows,
                cols,
                weights: (0..rows * cols)
                    .map(|_| rng.random_range(-2.0..2.0) * scale)
                    .collect(),
                bias: (0..cols).map(|_| rng.random_range(-0.5..0.5)).collect(),
                activation: if l + 2 == widths.len() {
                    Activation::Identity
                } else {
                    hidden
                },
                pool_size: None,
            }
        })
        .collect();
    MlpModel::new(layers, 0).expect("chained widths")
}

/// Coalition from a list of members; panics on bad input (fixtures only).
pub fn coalition(members: &[usize], m: usize) -> Coalition {
    Coalition::from_members(members, m).expect("fixture coalition")
}

/// Synthetic two-class problem for masking experiments: inputs are standard normal,
/// a hidden relu layer feeds two logits.
pub struct MaskingFixture {
    pub model: MlpModel,
    pub instances: Vec<Vec<f64>>,
    pub background: Vec<Vec<f64>>,
}

pub const MASKING_FEATURES: usize = 10;
pub const MASKING_HIDDEN: usize = 16;

pub fn masking_fixture(n_instances: usize, n_background: usize, seed: u64) -> Result<MaskingFixture> {
    let mut rng = rng(seed);
    let model = random_mlp(&[MASKING_FEATURES, MASKING_HIDDEN, 2], Activation::Relu, &mut rng);
    let instances = normal_rows(n_instances, MASKING_FEATURES, &mut rng);
    let background = normal_rows(n_background, MASKING_FEATURES, &mut rng);
    Ok(MaskingFixture {
        model,
        instances,
        background,
    })
}
