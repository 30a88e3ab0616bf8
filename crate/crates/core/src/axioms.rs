//! Executable forms of the additive-attribution properties.

use crate::coalition::{check_enumerable, Coalition};
use crate::error::{Result, ShapError};
use crate::explanation::Explanation;
use crate::game::GameOracle;

/// Default tolerance for closed-form and enumeration paths.
pub const ANALYTIC_TOL: f64 = 1e-9;
/// Default tolerance for regression paths.
pub const REGRESSION_TOL: f64 = 1e-6;

/// Largest `M` for which [`check_consistency_pair`] verifies its precondition itself.
pub const CONSISTENCY_CHECK_LIMIT: usize = 12;

/// Local accuracy: `|φ0 + Σφ − f(x)| ≤ tol`.
pub fn check_local_accuracy(expl: &Explanation, tol: f64) -> bool {
    (expl.total() - expl.fx_full).abs() <= tol
}

/// Consistency between two games for player `i`.
///
/// Requires `v_b(S ∪ {i}) − v_b(S) ≥ v_a(S ∪ {i}) − v_a(S)` for every `S`; for
/// `M ≤ 12` this is verified by enumeration and a violation is reported as
/// [`ShapError::InvalidPair`]. Returns whether `φ_i(b) ≥ φ_i(a) − 1e-9` under `solver`.
pub fn check_consistency_pair<F>(
    game_a: &dyn GameOracle,
    game_b: &dyn GameOracle,
    i: usize,
    solver: F,
) -> Result<bool>
where
    F: Fn(&dyn GameOracle) -> Result<Explanation>,
{
    let m = game_a.n_features();
    if game_b.n_features() != m {
        return Err(ShapError::InvalidPair(format!(
            "games disagree on M ({m} vs {})",
            game_b.n_features()
        )));
    }
    if i >= m {
        return Err(ShapError::Domain(format!("feature {i} out of range for M = {m}")));
    }
    if m <= CONSISTENCY_CHECK_LIMIT {
        for mask in 0..1u64 << m {
            let s = Coalition::new(mask, m)?;
            if s.contains(i) {
                continue;
            }
            let da = game_a.value(s.with(i))? - game_a.value(s)?;
            let db = game_b.value(s.with(i))? - game_b.value(s)?;
            if db < da - ANALYTIC_TOL {
                return Err(ShapError::InvalidPair(format!(
                    "marginal of feature {i} at {s:?} drops from {da} to {db}"
                )));
            }
        }
    }
    let phi_a = solver(game_a)?;
    let phi_b = solver(game_b)?;
    Ok(phi_b.attributions[i] >= phi_a.attributions[i] - ANALYTIC_TOL)
}

/// Whether player `i` never changes the game value (`v(S ∪ {i}) = v(S)` for all `S`).
pub fn is_dummy<G: GameOracle + ?Sized>(game: &G, i: usize, tol: f64) -> Result<bool> {
    let m = game.n_features();
    check_enumerable(m, CONSISTENCY_CHECK_LIMIT)?;
    for mask in 0..1u64 << m {
        let s = Coalition::new(mask, m)?;
        if !s.contains(i) && (game.value(s.with(i))? - game.value(s)?).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether players `i` and `j` are interchangeable (`v(S ∪ {i}) = v(S ∪ {j})` for all
/// `S` excluding both).
pub fn are_symmetric<G: GameOracle + ?Sized>(game: &G, i: usize, j: usize, tol: f64) -> Result<bool> {
    let m = game.n_features();
    check_enumerable(m, CONSISTENCY_CHECK_LIMIT)?;
    for mask in 0..1u64 << m {
        let s = Coalition::new(mask, m)?;
        if s.contains(i) || s.contains(j) {
            continue;
        }
        if (game.value(s.with(i))? - game.value(s.with(j))?).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}
