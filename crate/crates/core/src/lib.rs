//! Shapley additive explanations.
//!
//! A model and a background distribution define a cooperative game over the input
//! features ([`MaskedGame`]). Estimators turn any [`GameOracle`] into an
//! [`Explanation`]: exact enumeration, permutation sampling, kernel regression, and
//! closed forms for linear, max and feed-forward network models. [`Registry`] exposes
//! them by name.

pub mod axioms;
pub mod bench;
pub mod coalition;
pub mod error;
pub mod exact;
pub mod explanation;
pub mod fixtures;
pub mod game;
pub mod kernel;
pub mod masked;
pub mod models;
pub mod registry;
pub mod specific;
pub mod wls;

pub use coalition::{enumerate_coalitions, Coalition, ENUMERATION_LIMIT, MAX_FEATURES};
pub use error::{Result, ShapError};
pub use exact::{sampling_shap, shapley_exact, shapley_permutation_exact, SamplingConfig};
pub use explanation::{Explanation, Method};
pub use game::{GameOracle, ProjectedGame, TabularGame};
pub use kernel::{kernel_shap, shapley_kernel_weight, KernelConfig, KernelWeight, Regularization};
pub use masked::{BackgroundData, MaskedGame, MaskingMode};
pub use models::{load_model, predict, Model, ModelSpec};
pub use registry::{Estimator, ExplainInput, LassoPenalty, MethodParams, Registry};
pub use specific::{deep_shap, linear_shap, low_order_dispatch, max_shap};
