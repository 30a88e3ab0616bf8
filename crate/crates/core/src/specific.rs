//! Model-specific estimators: closed forms for linear and max models, low-order
//! dispatch to the full kernel regression, and multiplier back-propagation for MLPs.

use crate::coalition::check_enumerable;
use crate::error::{Result, ShapError};
use crate::exact::shapley_exact;
use crate::explanation::{Explanation, Method};
use crate::game::{GameOracle, TabularGame};
use crate::kernel::{kernel_shap, KernelConfig};
use crate::masked::BackgroundData;
use crate::models::{checked_predict, Activation, LinearModel, MlpModel};

pub const DEFAULT_LOW_ORDER_THRESHOLD: usize = 13;

/// `φ_i = w_i (x_i − E[x_i])` and `φ0 = b + Σ w_i E[x_i]`.
pub fn linear_shap(model: &LinearModel, x: &[f64], background: &BackgroundData) -> Result<Explanation> {
    let fx = checked_predict(model, x)?;
    if background.n_features() != x.len() {
        return Err(ShapError::Shape {
            expected: x.len(),
            actual: background.n_features(),
        });
    }
    let means = background.means();
    let attributions = model
        .weights
        .iter()
        .zip(x.iter().zip(means))
        .map(|(w, (xi, mi))| w * (xi - mi))
        .collect();
    let base_value = model.bias + model.weights.iter().zip(means).map(|(w, m)| w * m).sum::<f64>();
    Ok(Explanation {
        base_value,
        attributions,
        fx_full: fx,
        method: Method::Linear,
        evaluations_used: 0,
    })
}

/// Full kernel regression (`2^M` evaluations) for `M ≤ threshold`.
pub fn low_order_dispatch<G: GameOracle + ?Sized>(game: &G, threshold: usize) -> Result<Explanation> {
    let m = game.n_features();
    if m > threshold || m > 25 {
        return Err(ShapError::BudgetRequired {
            n_features: m,
            threshold,
        });
    }
    let mut e = kernel_shap(game, &KernelConfig::full(m))?;
    e.method = Method::LowOrder;
    Ok(e)
}

/// Shapley values of `v(S) = max(reference, max_{i∈S} values_i)` in `O(M log M)`.
///
/// After clamping to the reference and sorting ascending
/// (`x_(0) = reference ≤ x_(1) ≤ … ≤ x_(M)`), the `k`-th smallest input receives
/// `Σ_{j≤k} (x_(j) − x_(j−1)) / (M − j + 1)`: each increment of the running maximum is
/// shared equally by every input that reaches it.
pub fn max_shap(values: &[f64], reference: f64) -> Result<Explanation> {
    let m = values.len();
    if m == 0 {
        return Err(ShapError::Domain("max_shap needs at least one input".into()));
    }
    if !reference.is_finite() || values.iter().any(|v| !v.is_finite()) {
        return Err(ShapError::Numeric("max_shap inputs must be finite".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut phi = vec![0.0; m];
    let mut prev = reference;
    let mut running = 0.0;
    for (j, &i) in order.iter().enumerate() {
        let x = values[i].max(reference);
        running += (x - prev) / (m - j) as f64;
        phi[i] = running;
        prev = x;
    }
    Ok(Explanation {
        base_value: reference,
        attributions: phi,
        fx_full: prev,
        method: Method::Max,
        evaluations_used: 0,
    })
}

/// Largest max-pool window for which heterogeneous references are solved by enumeration.
pub const POOL_ENUMERATION_LIMIT: usize = 16;

/// Shapley values of one max-pool window where absent inputs fall back to their own
/// reference activations: `v(S) = max(x_S ∪ r_{S̄})`.
fn pool_shapley(x: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let r0 = r[0];
    if r.iter().all(|&v| v == r0) {
        // Common reference: v(S) = max(r0, max_S x), the closed form applies.
        return Ok(max_shap(x, r0)?.attributions);
    }
    check_enumerable(x.len(), POOL_ENUMERATION_LIMIT)?;
    let game = TabularGame::from_fn(x.len(), |s| {
        (0..x.len())
            .map(|i| if s.contains(i) { x[i] } else { r[i] })
            .fold(f64::NEG_INFINITY, f64::max)
    })?;
    Ok(shapley_exact(&game)?.attributions)
}

/// Multiplier `(a(y) − a(r)) / (y − r)`, or the derivative at `y` when `y = r`.
fn activation_multiplier(act: Activation, y: f64, r: f64) -> f64 {
    match act {
        Activation::Identity => 1.0,
        _ if y == r => act.derivative(y),
        _ => (act.apply(y) - act.apply(r)) / (y - r),
    }
}

/// Deep SHAP with the background column means as the single reference input.
///
/// Multipliers flow backwards from the selected output: linear layers pass weights,
/// single-input activations pass `Δout/Δin`, max pools pass `φ_i/Δin_i` from the pool's
/// Shapley values. Attributions are `m_{x_i} (x_i − E[x_i])` and sum to
/// `f(x) − f(E[x])`.
pub fn deep_shap(model: &MlpModel, x: &[f64], background: &BackgroundData, output_index: usize) -> Result<Explanation> {
    if output_index >= model.output_width() {
        return Err(ShapError::Config(format!(
            "output index {output_index} out of range for output width {}",
            model.output_width()
        )));
    }
    let model = model.with_output_index(output_index)?;
    let fx = checked_predict(&model, x)?;
    let reference = background.means();
    if reference.len() != x.len() {
        return Err(ShapError::Shape {
            expected: x.len(),
            actual: reference.len(),
        });
    }
    let f_ref = checked_predict(&model, reference)?;
    let trace_x = model.forward_trace(x);
    let trace_r = model.forward_trace(reference);

    let layers = model.layers();
    let mut mult = vec![0.0; model.output_width()];
    mult[output_index] = 1.0;
    for (l, layer) in layers.iter().enumerate().rev() {
        let (tx, tr) = (&trace_x[l], &trace_r[l]);
        // Through the activation: multipliers with respect to the pre-activations.
        let pre_mult: Vec<f64> = match layer.activation {
            Activation::Maxpool => {
                let k = layer.pool_size.unwrap_or(1);
                let mut out = vec![0.0; layer.cols];
                for (p, (wx, wr)) in tx.pre.chunks(k).zip(tr.pre.chunks(k)).enumerate() {
                    let phi = pool_shapley(wx, wr)?;
                    let argmax = wx
                        .iter()
                        .enumerate()
                        .fold(0, |best, (i, &v)| if v > wx[best] { i } else { best });
                    for i in 0..k {
                        let delta = wx[i] - wr[i];
                        let local = if delta != 0.0 {
                            phi[i] / delta
                        } else if i == argmax {
                            1.0
                        } else {
                            0.0
                        };
                        out[p * k + i] = mult[p] * local;
                    }
                }
                out
            }
            act => tx
                .pre
                .iter()
                .zip(&tr.pre)
                .zip(&mult)
                .map(|((&y, &r), &m)| m * activation_multiplier(act, y, r))
                .collect(),
        };
        // Through the affine map: chain rule over the weight matrix.
        mult = (0..layer.rows)
            .map(|i| {
                (0..layer.cols)
                    .map(|o| layer.weight(i, o) * pre_mult[o])
                    .sum()
            })
            .collect();
    }

    let attributions = mult
        .iter()
        .zip(x.iter().zip(reference))
        .map(|(m, (xi, ri))| m * (xi - ri))
        .collect();
    Ok(Explanation {
        base_value: f_ref,
        attributions,
        fx_full: fx,
        method: Method::Deep,
        evaluations_used: 0,
    })
}
