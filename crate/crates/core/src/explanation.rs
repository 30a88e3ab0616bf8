use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ShapError;

/// Which estimator produced an [`Explanation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    PermutationExact,
    Sampling,
    Kernel,
    Linear,
    LowOrder,
    Max,
    Deep,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Exact,
        Method::PermutationExact,
        Method::Sampling,
        Method::Kernel,
        Method::Linear,
        Method::LowOrder,
        Method::Max,
        Method::Deep,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::PermutationExact => "permutation-exact",
            Method::Sampling => "sampling",
            Method::Kernel => "kernel",
            Method::Linear => "linear",
            Method::LowOrder => "low-order",
            Method::Max => "max",
            Method::Deep => "deep",
        }
    }

    /// Estimators whose output is the Shapley value of the game up to rounding.
    pub fn is_exact(&self) -> bool {
        matches!(
            self,
            Method::Exact | Method::PermutationExact | Method::LowOrder | Method::Max
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ShapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ShapError::UnknownMethod(s.to_string()))
    }
}

/// Additive explanation of one prediction: `fx_full ≈ base_value + Σ attributions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// φ0, the game value of the empty coalition.
    pub base_value: f64,
    /// φ1..φM, one per simplified feature.
    pub attributions: Vec<f64>,
    /// Game value of the full coalition (the model output being explained).
    pub fx_full: f64,
    pub method: Method,
    /// Game evaluations consumed, in coalition units.
    pub evaluations_used: u64,
}

impl Explanation {
    pub fn n_features(&self) -> usize {
        self.attributions.len()
    }

    pub fn total(&self) -> f64 {
        self.base_value + self.attributions.iter().sum::<f64>()
    }

    /// Largest absolute attribution difference; `None` when lengths differ.
    pub fn max_abs_deviation(&self, other: &Explanation) -> Option<f64> {
        if self.attributions.len() != other.attributions.len() {
            return None;
        }
        Some(
            self.attributions
                .iter()
                .zip(&other.attributions)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert!("lime".parse::<Method>().is_err());
    }
}
