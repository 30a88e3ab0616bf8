//! Turning a model, an instance and background data into a game.
//!
//! `v(S)` approximates `E[f(z) | z_S]` either by averaging over background rows with
//! the absent features taken from each row (feature independence), or by a single
//! evaluation with absent features set to the column means (model linearity).

use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::error::{Result, ShapError};
use crate::game::{check_coalition, EvalCounter, GameOracle};
use crate::models::{checked_predict, Model};

/// Rows kept before a background is subsampled.
pub const DEFAULT_BACKGROUND_CAP: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundData {
    n_features: usize,
    rows: Vec<f64>,
    means: Vec<f64>,
}

impl BackgroundData {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(ShapError::Config("background data has no rows".into()));
        };
        let m = first.len();
        if m == 0 {
            return Err(ShapError::Config("background rows have no columns".into()));
        }
        let mut flat = Vec::with_capacity(rows.len() * m);
        for (k, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(ShapError::Shape {
                    expected: m,
                    actual: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(ShapError::Numeric(format!("background row {k}, column {j} is not finite")));
            }
            flat.extend_from_slice(row);
        }
        Ok(Self::from_flat(m, flat))
    }

    fn from_flat(n_features: usize, rows: Vec<f64>) -> Self {
        let n = rows.len() / n_features;
        let mut means = vec![0.0; n_features];
        for row in rows.chunks(n_features) {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        BackgroundData {
            n_features,
            rows,
            means,
        }
    }

    /// A single reference point.
    pub fn single(reference: Vec<f64>) -> Result<Self> {
        BackgroundData::new(vec![reference])
    }

    /// Keep at most `cap` rows, drawn uniformly without replacement with `seed`.
    /// Row order of the kept subset follows the original order.
    pub fn capped(self, cap: usize, seed: u64) -> Result<Self> {
        if cap == 0 {
            return Err(ShapError::Config("background cap must be positive".into()));
        }
        let n = self.len();
        if n <= cap {
            return Ok(self);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = rand::seq::index::sample(&mut rng, n, cap).into_vec();
        keep.sort_unstable();
        let m = self.n_features;
        let rows = keep
            .iter()
            .flat_map(|&k| self.rows[k * m..(k + 1) * m].iter().copied())
            .collect();
        Ok(Self::from_flat(m, rows))
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k * self.n_features..(k + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks(self.n_features)
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }
}

/// How absent features are filled in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskingMode {
    /// Average over background rows.
    #[default]
    Independence,
    /// One evaluation at the background column means.
    MeanImputation,
}

impl FromStr for MaskingMode {
    type Err = ShapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independence" => Ok(MaskingMode::Independence),
            "mean" | "mean_imputation" => Ok(MaskingMode::MeanImputation),
            other => Err(ShapError::Config(format!("unknown background mode {other:?}"))),
        }
    }
}

pub struct MaskedGame {
    model: Arc<dyn Model>,
    instance: Vec<f64>,
    background: Arc<BackgroundData>,
    mode: MaskingMode,
    fx: f64,
    counter: EvalCounter,
    model_calls: EvalCounter,
}

impl MaskedGame {
    pub fn new(
        model: Arc<dyn Model>,
        instance: Vec<f64>,
        background: Arc<BackgroundData>,
        mode: MaskingMode,
    ) -> Result<Self> {
        let m = model.n_features();
        if background.n_features() != m {
            return Err(ShapError::Shape {
                expected: m,
                actual: background.n_features(),
            });
        }
        let fx = checked_predict(model.as_ref(), &instance)?;
        Ok(MaskedGame {
            model,
            instance,
            background,
            mode,
            fx,
            counter: EvalCounter::default(),
            model_calls: EvalCounter::default(),
        })
    }

    pub fn instance(&self) -> &[f64] {
        &self.instance
    }

    pub fn background(&self) -> &BackgroundData {
        &self.background
    }

    pub fn mode(&self) -> MaskingMode {
        self.mode
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    /// Raw model invocations so far (N per coalition under independence).
    pub fn model_calls(&self) -> u64 {
        self.model_calls.get()
    }

    fn composite_value(&self, coalition: Coalition, fill: &[f64], buf: &mut [f64]) -> Result<f64> {
        for (j, slot) in buf.iter_mut().enumerate() {
            *slot = if coalition.contains(j) {
                self.instance[j]
            } else {
                fill[j]
            };
        }
        self.model_calls.bump();
        checked_predict(self.model.as_ref(), buf)
    }
}

impl GameOracle for MaskedGame {
    fn n_features(&self) -> usize {
        self.instance.len()
    }

    fn value(&self, coalition: Coalition) -> Result<f64> {
        check_coalition(self.instance.len(), coalition)?;
        self.counter.bump();
        if coalition.is_full() {
            // No masking: the instance itself, independent of background and mode.
            self.model_calls.bump();
            return Ok(self.fx);
        }
        let mut buf = vec![0.0; self.instance.len()];
        match self.mode {
            MaskingMode::MeanImputation => {
                self.composite_value(coalition, self.background.means(), &mut buf)
            }
            MaskingMode::Independence => {
                let mut total = 0.0;
                for row in self.background.rows() {
                    total += self.composite_value(coalition, row, &mut buf)?;
                }
                Ok(total / self.background.len() as f64)
            }
        }
    }

    fn evaluations(&self) -> u64 {
        self.counter.get()
    }
}
