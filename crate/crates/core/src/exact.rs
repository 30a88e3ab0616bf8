//! Ground-truth Shapley solvers and the permutation-sampling estimator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coalition::{check_enumerable, Coalition};
use crate::error::{Result, ShapError};
use crate::explanation::{Explanation, Method};
use crate::game::GameOracle;

/// Largest `M` accepted by [`shapley_exact`].
pub const EXACT_LIMIT: usize = 20;
/// Largest `M` accepted by [`shapley_permutation_exact`].
pub const PERMUTATION_EXACT_LIMIT: usize = 8;

/// `|S|!(M-|S|-1)!/M!` for `|S| = 0..M-1`.
pub fn shapley_weights(m: usize) -> Vec<f64> {
    // 1 / (M * C(M-1, s))
    let mut binom = 1.0f64;
    (0..m)
        .map(|s| {
            if s > 0 {
                binom = binom * (m - s) as f64 / s as f64;
            }
            1.0 / (m as f64 * binom)
        })
        .collect()
}

/// Exact Shapley values by enumerating every coalition once.
pub fn shapley_exact<G: GameOracle + ?Sized>(game: &G) -> Result<Explanation> {
    let m = game.n_features();
    check_enumerable(m, EXACT_LIMIT)?;
    let start = game.evaluations();
    let values = (0..1u64 << m)
        .map(|mask| game.value(Coalition::new(mask, m)?))
        .collect::<Result<Vec<f64>>>()?;
    let weights = shapley_weights(m);
    let mut phi = vec![0.0; m];
    for (mask, &v) in values.iter().enumerate() {
        let size = mask.count_ones() as usize;
        if size == m {
            continue;
        }
        let w = weights[size];
        for (i, p) in phi.iter_mut().enumerate() {
            if mask & (1 << i) == 0 {
                *p += w * (values[mask | 1 << i] - v);
            }
        }
    }
    Ok(Explanation {
        base_value: values[0],
        attributions: phi,
        fx_full: values[values.len() - 1],
        method: Method::Exact,
        evaluations_used: game.evaluations() - start,
    })
}

/// Exact Shapley values as the average marginal contribution over all `M!` orderings.
///
/// Independent of [`shapley_exact`]; exists to cross-check it.
pub fn shapley_permutation_exact<G: GameOracle + ?Sized>(game: &G) -> Result<Explanation> {
    let m = game.n_features();
    check_enumerable(m, PERMUTATION_EXACT_LIMIT)?;
    let start = game.evaluations();
    let mut memo: Vec<Option<f64>> = vec![None; 1 << m];
    let mut lookup = |mask: u64| -> Result<f64> {
        if let Some(v) = memo[mask as usize] {
            return Ok(v);
        }
        let v = game.value(Coalition::new(mask, m)?)?;
        memo[mask as usize] = Some(v);
        Ok(v)
    };
    let base = lookup(0)?;
    let mut phi = vec![0.0; m];
    let mut count = 0u64;
    let mut perm: Vec<usize> = (0..m).collect();
    // Heap's algorithm, iterative form.
    let mut c = vec![0usize; m];
    let mut visit = |perm: &[usize], phi: &mut [f64]| -> Result<()> {
        let mut mask = 0u64;
        let mut prev = base;
        for &i in perm {
            mask |= 1 << i;
            let v = lookup(mask)?;
            phi[i] += v - prev;
            prev = v;
        }
        Ok(())
    };
    visit(&perm, &mut phi)?;
    count += 1;
    let mut k = 1;
    while k < m {
        if c[k] < k {
            if k % 2 == 0 {
                perm.swap(0, k);
            } else {
                perm.swap(c[k], k);
            }
            visit(&perm, &mut phi)?;
            count += 1;
            c[k] += 1;
            k = 1;
        } else {
            c[k] = 0;
            k += 1;
        }
    }
    let full = game.value(Coalition::full(m))?;
    for p in &mut phi {
        *p /= count as f64;
    }
    Ok(Explanation {
        base_value: base,
        attributions: phi,
        fx_full: full,
        method: Method::PermutationExact,
        evaluations_used: game.evaluations() - start,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    /// Orderings averaged, counting each antithetic reverse as one ordering.
    pub n_permutations: usize,
    pub seed: u64,
    /// Pair every drawn ordering with its reverse.
    pub antithetic: bool,
}

impl SamplingConfig {
    pub fn new(n_permutations: usize, seed: u64) -> Self {
        SamplingConfig {
            n_permutations,
            seed,
            antithetic: true,
        }
    }
}

/// Orderings drawn from one RNG stream; fixed so results do not depend on thread count.
const ORDERINGS_PER_CHUNK: usize = 64;

/// Adds the marginal contributions along `order` into `phi`. `v(∅)` and `v(full)` are
/// supplied by the caller, so each ordering costs `M - 1` evaluations.
fn accumulate_ordering<G: GameOracle + ?Sized>(
    game: &G,
    order: &[usize],
    v_empty: f64,
    v_full: f64,
    phi: &mut [f64],
) -> Result<()> {
    let m = order.len();
    let mut coalition = Coalition::empty(m);
    let mut prev = v_empty;
    for (k, &i) in order.iter().enumerate() {
        coalition = coalition.with(i);
        let v = if k + 1 == m { v_full } else { game.value(coalition)? };
        phi[i] += v - prev;
        prev = v;
    }
    Ok(())
}

fn finish(
    game_start: u64,
    game: &(impl GameOracle + ?Sized),
    v_empty: f64,
    v_full: f64,
    mut sums: Vec<f64>,
    n: usize,
) -> Explanation {
    for s in &mut sums {
        *s /= n as f64;
    }
    Explanation {
        base_value: v_empty,
        attributions: sums,
        fx_full: v_full,
        method: Method::Sampling,
        evaluations_used: game.evaluations() - game_start,
    }
}

/// Shapley sampling values: mean marginal contribution over random orderings.
///
/// Uses `2 + n_permutations · (M − 1)` evaluations.
pub fn sampling_shap<G: GameOracle + ?Sized>(game: &G, config: &SamplingConfig) -> Result<Explanation> {
    let m = game.n_features();
    if config.n_permutations == 0 {
        return Err(ShapError::Config("n_permutations must be at least 1".into()));
    }
    let start = game.evaluations();
    let v_empty = game.value(Coalition::empty(m))?;
    let v_full = game.value(Coalition::full(m))?;
    let n = config.n_permutations;
    let n_chunks = n.div_ceil(ORDERINGS_PER_CHUNK);

    let partials = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| -> Result<Vec<f64>> {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(chunk as u64);
            let lo = chunk * ORDERINGS_PER_CHUNK;
            let hi = (lo + ORDERINGS_PER_CHUNK).min(n);
            let mut phi = vec![0.0; m];
            let mut order: Vec<usize> = (0..m).collect();
            let mut k = lo;
            while k < hi {
                order.shuffle(&mut rng);
                accumulate_ordering(game, &order, v_empty, v_full, &mut phi)?;
                k += 1;
                if config.antithetic && k < hi {
                    order.reverse();
                    accumulate_ordering(game, &order, v_empty, v_full, &mut phi)?;
                    k += 1;
                }
            }
            Ok(phi)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sums = vec![0.0; m];
    for part in partials {
        for (s, p) in sums.iter_mut().zip(part) {
            *s += p;
        }
    }
    Ok(finish(start, game, v_empty, v_full, sums, n))
}

/// Average marginal contributions over an explicit list of orderings.
pub fn average_over_orderings<G: GameOracle + ?Sized>(
    game: &G,
    orderings: &[Vec<usize>],
) -> Result<Explanation> {
    let m = game.n_features();
    if orderings.is_empty() {
        return Err(ShapError::Config("at least one ordering is required".into()));
    }
    for order in orderings {
        let mut seen = vec![false; m];
        if order.len() != m || !order.iter().all(|&i| i < m && !std::mem::replace(&mut seen[i], true)) {
            return Err(ShapError::Domain(format!("{order:?} is not a permutation of 0..{m}")));
        }
    }
    let start = game.evaluations();
    let v_empty = game.value(Coalition::empty(m))?;
    let v_full = game.value(Coalition::full(m))?;
    let mut sums = vec![0.0; m];
    for order in orderings {
        accumulate_ordering(game, order, v_empty, v_full, &mut sums)?;
    }
    Ok(finish(start, game, v_empty, v_full, sums, orderings.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::game::TabularGame;

    #[test]
    fn weights_sum_to_one_over_coalitions() {
        // Σ_s C(M-1, s) w(s) = 1
        for m in 1..=12 {
            let w = shapley_weights(m);
            let mut binom = 1.0;
            let mut total = 0.0;
            for (s, ws) in w.iter().enumerate() {
                if s > 0 {
                    binom = binom * (m - s) as f64 / s as f64;
                }
                total += binom * ws;
            }
            assert!((total - 1.0).abs() < 1e-12, "M = {m}");
        }
    }

    #[test]
    fn sickness_game() {
        let g = fixtures::sickness_game();
        let e = shapley_exact(&g).unwrap();
        assert_eq!(e.base_value, 0.0);
        assert!((e.attributions[0] - 1.0).abs() < 1e-12);
        assert!((e.attributions[1] - 1.0).abs() < 1e-12);
        assert_eq!(e.evaluations_used, 4);

        let p = shapley_permutation_exact(&g).unwrap();
        assert!(p.max_abs_deviation(&e).unwrap() < 1e-12);
    }

    #[test]
    fn additive_game() {
        let c = [1.5, -2.0, 0.25, 4.0];
        let g = TabularGame::from_fn(4, |s| s.members().map(|i| c[i]).sum()).unwrap();
        let e = shapley_exact(&g).unwrap();
        for (p, ci) in e.attributions.iter().zip(c) {
            assert!((p - ci).abs() < 1e-12);
        }
        let s = sampling_shap(&g, &SamplingConfig::new(1, 9)).unwrap();
        for (p, ci) in s.attributions.iter().zip(c) {
            assert!((p - ci).abs() < 1e-12);
        }
    }

    #[test]
    fn max_game() {
        let g = fixtures::profit_game();
        let e = shapley_exact(&g).unwrap();
        let expected = [3.0, 2.0, 0.0];
        for (p, x) in e.attributions.iter().zip(expected) {
            assert!((p - x).abs() < 1e-12);
        }
    }

    #[test]
    fn single_player() {
        let g = TabularGame::new(1, vec![2.0, 7.0]).unwrap();
        let p = shapley_permutation_exact(&g).unwrap();
        assert_eq!(p.base_value, 2.0);
        assert_eq!(p.attributions, vec![5.0]);
    }

    #[test]
    fn guards() {
        let g = TabularGame::new(9, vec![0.0; 512]).unwrap();
        assert!(matches!(shapley_permutation_exact(&g), Err(ShapError::Capacity(_))));
        assert!(matches!(
            sampling_shap(&g, &SamplingConfig::new(0, 1)),
            Err(ShapError::Config(_))
        ));
    }

    #[test]
    fn sampling_evaluation_count() {
        let g = fixtures::random_game(6, 1);
        let e = sampling_shap(&g, &SamplingConfig::new(37, 4)).unwrap();
        assert_eq!(e.evaluations_used, 2 + 37 * 5);
        assert_eq!(e.evaluations_used, g.evaluations());
    }

    #[test]
    fn sampling_sickness_within_bound() {
        let g = fixtures::sickness_game();
        let e = sampling_shap(&g, &SamplingConfig::new(2000, 7)).unwrap();
        for p in &e.attributions {
            assert!((p - 1.0).abs() < 0.15, "{p}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let g = fixtures::random_game(7, 3);
        let cfg = SamplingConfig::new(500, 42);
        assert_eq!(sampling_shap(&g, &cfg).unwrap().attributions, sampling_shap(&g, &cfg).unwrap().attributions);
        let other = SamplingConfig { seed: 43, ..cfg };
        assert_ne!(sampling_shap(&g, &other).unwrap().attributions, sampling_shap(&g, &SamplingConfig::new(500, 42)).unwrap().attributions);
    }

    #[test]
    fn exhaustive_orderings_reproduce_exact() {
        let g = fixtures::random_game(4, 17);
        let exact = shapley_exact(&g).unwrap();
        let orders = fixtures::all_orderings(4);
        let twice: Vec<Vec<usize>> = orders.iter().chain(orders.iter()).cloned().collect();
        let e = average_over_orderings(&g, &twice).unwrap();
        assert!(e.max_abs_deviation(&exact).unwrap() < 1e-9);
        assert!(average_over_orderings(&g, &[vec![0, 0, 1, 2]]).is_err());
    }
}
