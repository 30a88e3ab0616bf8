//! The set-function abstraction every estimator consumes.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::coalition::{check_enumerable, Coalition, ENUMERATION_LIMIT};
use crate::error::{Result, ShapError};

/// A cooperative game `v(S)` over `M` players.
///
/// Implementations must be deterministic and bump their evaluation counter by exactly
/// one per call to [`GameOracle::value`].
pub trait GameOracle: Send + Sync {
    fn n_features(&self) -> usize;

    fn value(&self, coalition: Coalition) -> Result<f64>;

    /// Number of `value` calls served so far.
    fn evaluations(&self) -> u64;
}

impl<G: GameOracle + ?Sized> GameOracle for &G {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        (**self).value(coalition)
    }

    fn evaluations(&self) -> u64 {
        (**self).evaluations()
    }
}

/// Atomic evaluation counter shared by game implementations.
#[derive(Debug, Default)]
pub struct EvalCounter(AtomicU64);

impl EvalCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

impl Clone for EvalCounter {
    fn clone(&self) -> Self {
        EvalCounter(AtomicU64::new(self.get()))
    }
}

pub(crate) fn check_coalition(game_m: usize, coalition: Coalition) -> Result<()> {
    if coalition.n_features() != game_m {
        return Err(ShapError::Shape {
            expected: game_m,
            actual: coalition.n_features(),
        });
    }
    Ok(())
}

/// Game given by an explicit table of `2^M` values indexed by coalition mask.
#[derive(Debug, Clone)]
pub struct TabularGame {
    n_features: usize,
    values: Vec<f64>,
    counter: EvalCounter,
}

impl TabularGame {
    pub fn new(n_features: usize, values: Vec<f64>) -> Result<Self> {
        check_enumerable(n_features, ENUMERATION_LIMIT)?;
        if values.len() != 1 << n_features {
            return Err(ShapError::Shape {
                expected: 1 << n_features,
                actual: values.len(),
            });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(ShapError::Numeric(format!("table entry {bad} is not finite")));
        }
        Ok(TabularGame {
            n_features,
            values,
            counter: EvalCounter::default(),
        })
    }

    pub fn from_fn(n_features: usize, mut f: impl FnMut(Coalition) -> f64) -> Result<Self> {
        check_enumerable(n_features, ENUMERATION_LIMIT)?;
        let values = (0..1u64 << n_features)
            .map(|mask| f(Coalition::new(mask, n_features).expect("mask in range")))
            .collect();
        TabularGame::new(n_features, values)
    }

    /// Tabulate another game; consumes `2^M` of its evaluations.
    pub fn tabulate<G: GameOracle + ?Sized>(game: &G) -> Result<Self> {
        let m = game.n_features();
        check_enumerable(m, ENUMERATION_LIMIT)?;
        let values = (0..1u64 << m)
            .map(|mask| game.value(Coalition::new(mask, m)?))
            .collect::<Result<Vec<_>>>()?;
        TabularGame::new(m, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Uncounted lookup, for building derived fixtures.
    pub fn get(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }

    pub fn to_doc(&self) -> GameDoc {
        GameDoc {
            kind: "game".to_string(),
            n_features: self.n_features,
            values: self.values.clone(),
        }
    }
}

impl GameOracle for TabularGame {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        check_coalition(self.n_features, coalition)?;
        self.counter.bump();
        Ok(self.values[coalition.mask() as usize])
    }

    fn evaluations(&self) -> u64 {
        self.counter.get()
    }
}

/// Serialized form of a [`TabularGame`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GameDoc {
    #[serde(rename = "type")]
    pub kind: String,
    pub n_features: usize,
    pub values: Vec<f64>,
}

impl TryFrom<GameDoc> for TabularGame {
    type Error = ShapError;

    fn try_from(doc: GameDoc) -> Result<Self> {
        if doc.kind != "game" {
            return Err(ShapError::validation("type", format!("expected \"game\", got {:?}", doc.kind)));
        }
        TabularGame::new(doc.n_features, doc.values)
    }
}

/// A game whose value depends only on the members of `active`; every other player is a
/// dummy. Lookups project onto the active players and read a small table.
#[derive(Debug)]
pub struct ProjectedGame {
    n_features: usize,
    active: Vec<usize>,
    table: Vec<f64>,
    counter: EvalCounter,
}

impl ProjectedGame {
    /// `table` is indexed by masks over `active` (bit `k` for `active[k]`).
    pub fn new(n_features: usize, active: Vec<usize>, table: Vec<f64>) -> Result<Self> {
        if active.iter().any(|&i| i >= n_features) {
            return Err(ShapError::Domain("active feature out of range".into()));
        }
        if table.len() != 1 << active.len() {
            return Err(ShapError::Shape {
                expected: 1 << active.len(),
                actual: table.len(),
            });
        }
        Ok(ProjectedGame {
            n_features,
            active,
            table,
            counter: EvalCounter::default(),
        })
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// The game restricted to the active players.
    pub fn restricted(&self) -> Result<TabularGame> {
        TabularGame::new(self.active.len(), self.table.clone())
    }
}

impl GameOracle for ProjectedGame {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        check_coalition(self.n_features, coalition)?;
        self.counter.bump();
        let idx = self
            .active
            .iter()
            .enumerate()
            .filter(|(_, &f)| coalition.contains(f))
            .fold(0usize, |acc, (k, _)| acc | (1 << k));
        Ok(self.table[idx])
    }

    fn evaluations(&self) -> u64 {
        self.counter.get()
    }
}
