//! Name-based registry of estimators.
//!
//! Every estimator implements [`Estimator`]; the registry maps a method name to a
//! factory that builds the estimator from [`MethodParams`]. Callers such as the command
//! line pick a method by name at runtime.

use std::collections::BTreeMap;

use crate::error::{Result, ShapError};
use crate::exact::{sampling_shap, shapley_exact, shapley_permutation_exact, SamplingConfig};
use crate::explanation::{Explanation, Method};
use crate::game::GameOracle;
use crate::kernel::{kernel_shap, KernelConfig, Regularization};
use crate::masked::BackgroundData;
use crate::models::ModelSpec;
use crate::specific::{deep_shap, linear_shap, low_order_dispatch, max_shap, DEFAULT_LOW_ORDER_THRESHOLD};

pub const DEFAULT_PERMUTATIONS: usize = 1000;

/// Everything an estimator may look at. Game-based estimators only use `game`;
/// model-specific ones need the model, instance and background too.
#[derive(Clone, Copy)]
pub struct ExplainInput<'a> {
    pub game: &'a dyn GameOracle,
    pub model: Option<&'a ModelSpec>,
    pub instance: Option<&'a [f64]>,
    pub background: Option<&'a BackgroundData>,
}

impl<'a> ExplainInput<'a> {
    pub fn game_only(game: &'a dyn GameOracle) -> Self {
        ExplainInput {
            game,
            model: None,
            instance: None,
            background: None,
        }
    }

    fn model_parts(&self, method: &str) -> Result<(&'a ModelSpec, &'a [f64], &'a BackgroundData)> {
        match (self.model, self.instance, self.background) {
            (Some(m), Some(x), Some(bg)) => Ok((m, x, bg)),
            _ => Err(ShapError::Inapplicable {
                method: method.to_string(),
                reason: "needs a model, an instance and background data".into(),
            }),
        }
    }
}

/// Lasso penalty selection for the kernel estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LassoPenalty {
    CrossValidated,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodParams {
    pub budget: Option<usize>,
    pub n_permutations: Option<usize>,
    pub lasso: Option<LassoPenalty>,
    pub threshold: Option<usize>,
    pub seed: u64,
    pub antithetic: bool,
    pub paired_sampling: bool,
    /// Output unit explained by `deep`; defaults to the model's own output index.
    pub output_index: Option<usize>,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            budget: None,
            n_permutations: None,
            lasso: None,
            threshold: None,
            seed: 0,
            antithetic: true,
            paired_sampling: true,
            output_index: None,
        }
    }
}

pub trait Estimator: Send + Sync {
    fn method(&self) -> Method;

    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation>;
}

pub type Factory = fn(&MethodParams) -> Result<Box<dyn Estimator>>;

pub struct Registry {
    factories: BTreeMap<&'static str, Factory>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry {
            factories: BTreeMap::new(),
        }
    }

    /// Registry with every built-in estimator.
    pub fn builtin() -> Self {
        let mut r = Registry::empty();
        r.register("exact", |_| Ok(Box::new(ExactEstimator)));
        r.register("permutation-exact", |_| Ok(Box::new(PermutationExactEstimator)));
        r.register("sampling", |p| {
            let n = p.n_permutations.unwrap_or(DEFAULT_PERMUTATIONS);
            if n == 0 {
                return Err(ShapError::Config("--permutations must be at least 1".into()));
            }
            Ok(Box::new(SamplingEstimator(SamplingConfig {
                n_permutations: n,
                seed: p.seed,
                antithetic: p.antithetic,
            })))
        });
        r.register("kernel", |p| {
            if let Some(LassoPenalty::Fixed(l)) = p.lasso {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(ShapError::Config(format!("lasso penalty {l} must be finite and non-negative")));
                }
            }
            Ok(Box::new(KernelEstimator {
                budget: p.budget,
                regularization: match p.lasso {
                    None => Regularization::None,
                    Some(LassoPenalty::CrossValidated) => Regularization::DebiasedLasso { lambda: None },
                    Some(LassoPenalty::Fixed(l)) => Regularization::DebiasedLasso { lambda: Some(l) },
                },
                seed: p.seed,
                paired_sampling: p.paired_sampling,
            }))
        });
        r.register("low-order", |p| {
            Ok(Box::new(LowOrderEstimator(p.threshold.unwrap_or(DEFAULT_LOW_ORDER_THRESHOLD))))
        });
        r.register("linear", |_| Ok(Box::new(LinearEstimator)));
        r.register("max", |_| Ok(Box::new(MaxEstimator)));
        r.register("deep", |p| Ok(Box::new(DeepEstimator(p.output_index))));
        r
    }

    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, name: &str, params: &MethodParams) -> Result<Box<dyn Estimator>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| ShapError::UnknownMethod(name.to_string()))?;
        factory(params)
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::builtin()
    }
}

struct ExactEstimator;

impl Estimator for ExactEstimator {
    fn method(&self) -> Method {
        Method::Exact
    }

    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation> {
        shapley_exact(input.game)
    }
}

struct PermutationExactEstimator;

impl Estimator for PermutationExactEstimator {
    fn method(&self) -> Method {
        Method::PermutationExact
    }

    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation> {
        shapley_permutation_exact(input.game)
    }
}

struct SamplingEstimator(SamplingConfig);

impl Estimator for SamplingEstimator {
    fn method(&self) -> Method {
        Method::Sampling
    }

    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation> {
        sampling_shap(input.game, &self.0)
    }
}

struct KernelEstimator {
    budget: Option<usize>,
    regularization: Regularization,
    seed: u64,
    paired_sampling: bool,
}

/// Largest `M` for which the kernel estimator defaults to the full design.
const KERNEL_DEFAULT_FULL_LIMIT: usize = DEFAULT_LOW_ORDER_THRESHOLD;

impl Estimator for KernelEstimator {
    fn method(&self) -> Method {
        Method::Kernel
    }

    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation> {
        let m = input.game.n_features();
        let budget = match self.budget {
            Some(b) => b,
            None if m <= KERNEL_DEFAULT_FULL_LIMIT => KernelConfig::full(m).budget,
            None => {
                return Err(ShapError::Config(format!(
                    "kernel needs --budget for M = {m} (full enumeration only up to M = {KERNEL_DEFAULT_FULL_LIMIT})"
                )))
            }
        };
        let config = KernelConfig {
            budget,
            regularization: self.regularization,
            seed: self.seed,
            paired_sampling: self.paired_sampling,
        };
        kernel_shap(input.game, &config)
    }
}

struct LowOrderEstimator(usize);

impl Estimator for LowOrderEstimator {
    fn method(&self) -> Method {
        Method::LowOrder
    }

    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation> {
        low_order_dispatch(input.game, self.0)
    }
}

struct LinearEstimator;

impl Estimator for LinearEstimator {
    fn method(&self) -> Method {
        Method::Linear
    }

    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation> {
        let (model, x, bg) = input.model_parts("linear")?;
        match model {
            ModelSpec::Linear(lin) => linear_shap(lin, x, bg),
            other => Err(ShapError::Inapplicable {
                method: "linear".into(),
                reason: format!("model type is {}", other.kind()),
            }),
        }
    }
}

struct MaxEstimator;

impl Estimator for MaxEstimator {
    fn method(&self) -> Method {
        Method::Max
    }

    /// The masked game of a max model equals `max(baseline, max_S x)` only when no
    /// background value exceeds the baseline, so that is required.
    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation> {
        let (model, x, bg) = input.model_parts("max")?;
        let ModelSpec::Max(max) = model else {
            return Err(ShapError::Inapplicable {
                method: "max".into(),
                reason: format!("model type is {}", model.kind()),
            });
        };
        if bg.rows().flatten().any(|&v| v > max.baseline) {
            return Err(ShapError::Inapplicable {
                method: "max".into(),
                reason: format!("background values exceed the model baseline {}", max.baseline),
            });
        }
        max_shap(x, max.baseline)
    }
}

struct DeepEstimator(Option<usize>);

impl Estimator for DeepEstimator {
    fn method(&self) -> Method {
        Method::Deep
    }

    fn explain(&self, input: &ExplainInput<'_>) -> Result<Explanation> {
        let (model, x, bg) = input.model_parts("deep")?;
        match model {
            ModelSpec::Mlp(mlp) => deep_shap(mlp, x, bg, self.0.unwrap_or(mlp.output_index())),
            other => Err(ShapError::Inapplicable {
                method: "deep".into(),
                reason: format!("model type is {}", other.kind()),
            }),
        }
    }
}
