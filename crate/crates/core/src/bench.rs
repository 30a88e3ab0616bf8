//! Seeded convergence and masking experiments.
//!
//! Results are pure functions of `(scenario, seed)` and serialize to comma-separated
//! tables with a header row. Replicates run in parallel but rows are sorted before
//! they are returned.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::axioms::{check_local_accuracy, is_dummy, ANALYTIC_TOL};
use crate::coalition::Coalition;
use crate::error::{Result, ShapError};
use crate::exact::{shapley_exact, shapley_permutation_exact};
use crate::explanation::{Explanation, Method};
use crate::fixtures;
use crate::game::{GameOracle, ProjectedGame, TabularGame};
use crate::masked::{BackgroundData, MaskedGame, MaskingMode};
use crate::models::{Activation, DecisionTree, MlpModel, ModelSpec};
use crate::registry::{ExplainInput, LassoPenalty, MethodParams, Registry};

pub const DEFAULT_BUDGETS: [usize; 3] = [32, 128, 512];
pub const DEFAULT_REPLICATES: usize = 200;
pub const SCENARIO_BACKGROUND_ROWS: usize = 100;
pub const SUMMARY_PROBS: [f64; 3] = [0.1, 0.5, 0.9];
pub const LOG_ODDS_CLAMP: f64 = 1e-12;

/// SplitMix64 finalizer over the base seed and a list of tags.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    DenseTree,
    SparseTree,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::DenseTree => "dense_tree",
            Scenario::SparseTree => "sparse_tree",
        }
    }

    pub fn n_features(self) -> usize {
        match self {
            Scenario::DenseTree => 10,
            Scenario::SparseTree => 30,
        }
    }

    pub fn depth(self) -> usize {
        match self {
            Scenario::DenseTree => 4,
            Scenario::SparseTree => 3,
        }
    }

    /// Dense uses the standard budgets. Paired rows at budget 32
    /// span fewer than 29 directions, so the sparse scenario starts at 128.
    pub fn default_budgets(self) -> Vec<usize> {
        match self {
            Scenario::DenseTree => DEFAULT_BUDGETS.to_vec(),
            Scenario::SparseTree => vec![128, 256, 512],
        }
    }

    pub fn n_active(self) -> usize {
        match self {
            Scenario::DenseTree => 10,
            Scenario::SparseTree => 3,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = ShapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense_tree" => Ok(Scenario::DenseTree),
            "sparse_tree" => Ok(Scenario::SparseTree),
            other => Err(ShapError::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConvMethod {
    Kernel,
    KernelLasso,
    Sampling,
}

impl ConvMethod {
    pub const ALL: [ConvMethod; 3] = [ConvMethod::Kernel, ConvMethod::KernelLasso, ConvMethod::Sampling];

    pub fn as_str(self) -> &'static str {
        match self {
            ConvMethod::Kernel => "kernel",
            ConvMethod::KernelLasso => "kernel+lasso",
            ConvMethod::Sampling => "sampling",
        }
    }

    /// Registry name and parameters for one run. Sampling gets `⌈B / (M−1)⌉`
    /// permutations, so it never uses fewer evaluations than the kernel run.
    fn params(self, budget: usize, m: usize, seed: u64) -> (&'static str, MethodParams) {
        let mut p = MethodParams {
            seed,
            ..MethodParams::default()
        };
        let name = match self {
            ConvMethod::Kernel => {
                p.budget = Some(budget);
                "kernel"
            }
            ConvMethod::KernelLasso => {
                p.budget = Some(budget);
                p.lasso = Some(LassoPenalty::CrossValidated);
                "kernel"
            }
            ConvMethod::Sampling => {
                p.n_permutations = Some(budget.div_ceil(m.saturating_sub(1).max(1)).max(1));
                "sampling"
            }
        };
        (name, p)
    }
}

impl fmt::Display for ConvMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConvMethod {
    type Err = ShapError;

    fn from_str(s: &str) -> Result<Self> {
        ConvMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| ShapError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug)]
enum GameSource {
    Dense(Vec<f64>),
    Sparse { active: Vec<usize>, table: Vec<f64> },
}

/// Tree, instance and background of one scenario, plus its tabulated masked game and
/// exact attributions.
#[derive(Debug)]
pub struct ScenarioFixture {
    pub scenario: Scenario,
    pub seed: u64,
    pub tree: DecisionTree,
    pub instance: Vec<f64>,
    pub background: Vec<Vec<f64>>,
    pub active: Vec<usize>,
    pub exact: Explanation,
    pub reported_feature: usize,
    source: GameSource,
}

impl ScenarioFixture {
    pub fn build(scenario: Scenario, seed: u64) -> Result<Self> {
        let m = scenario.n_features();
        let mut rng = fixtures::rng(derive_seed(seed, &[scenario as u64]));
        let mut active: Vec<usize> = rand::seq::index::sample(&mut rng, m, scenario.n_active()).into_vec();
        active.sort_unstable();
        let tree = fixtures::random_tree(m, scenario.depth(), &active, &mut rng);
        if tree.used_features() != active {
            return Err(ShapError::Config(format!(
                "{scenario} tree uses {:?}, expected {active:?}",
                tree.used_features()
            )));
        }
        let instance: Vec<f64> = fixtures::normal_rows(1, m, &mut rng).remove(0);
        let background = fixtures::normal_rows(SCENARIO_BACKGROUND_ROWS, m, &mut rng);
        let masked = MaskedGame::new(
            Arc::new(tree.clone()),
            instance.clone(),
            Arc::new(BackgroundData::new(background.clone())?),
            MaskingMode::Independence,
        )?;

        let (source, exact) = match scenario {
            Scenario::DenseTree => {
                let table = TabularGame::tabulate(&masked)?;
                let exact = shapley_exact(&table)?;
                for i in (0..m).filter(|i| !active.contains(i)) {
                    if !is_dummy(&table, i, ANALYTIC_TOL)? || exact.attributions[i].abs() > ANALYTIC_TOL {
                        return Err(axiom_failure(scenario, "dummy"));
                    }
                }
                (GameSource::Dense(table.values().to_vec()), exact)
            }
            Scenario::SparseTree => {
                let table: Vec<f64> = (0..1usize << active.len())
                    .map(|t| {
                        let members: Vec<usize> =
                            (0..active.len()).filter(|k| t >> k & 1 == 1).map(|k| active[k]).collect();
                        masked.value(Coalition::from_members(&members, m)?)
                    })
                    .collect::<Result<_>>()?;
                let projected = ProjectedGame::new(m, active.clone(), table.clone())?;
                check_projection(&masked, &projected, &mut rng)?;
                let restricted = projected.restricted()?;
                let small = shapley_exact(&restricted)?;
                if small
                    .max_abs_deviation(&shapley_permutation_exact(&restricted)?)
                    .is_none_or(|d| d > ANALYTIC_TOL)
                {
                    return Err(axiom_failure(scenario, "oracle agreement"));
                }
                let mut attributions = vec![0.0; m];
                for (k, &f) in active.iter().enumerate() {
                    attributions[f] = small.attributions[k];
                }
                let exact = Explanation {
                    attributions,
                    method: Method::Exact,
                    ..small
                };
                (GameSource::Sparse { active: active.clone(), table }, exact)
            }
        };
        if !check_local_accuracy(&exact, ANALYTIC_TOL) {
            return Err(axiom_failure(scenario, "local accuracy"));
        }
        let reported_feature = argmax_abs(&exact.attributions);
        Ok(ScenarioFixture {
            scenario,
            seed,
            tree,
            instance,
            background,
            active,
            exact,
            reported_feature,
            source,
        })
    }

    pub fn n_features(&self) -> usize {
        self.scenario.n_features()
    }

    /// A fresh game with its own evaluation counter.
    pub fn game(&self) -> Box<dyn GameOracle> {
        let m = self.n_features();
        match &self.source {
            GameSource::Dense(values) => Box::new(TabularGame::new(m, values.clone()).expect("tabulated")),
            GameSource::Sparse { active, table } => {
                Box::new(ProjectedGame::new(m, active.clone(), table.clone()).expect("validated"))
            }
        }
    }

    pub fn inactive(&self) -> Vec<usize> {
        (0..self.n_features()).filter(|i| !self.active.contains(i)).collect()
    }
}

fn axiom_failure(scenario: Scenario, what: &str) -> ShapError {
    ShapError::Config(format!("{scenario} exact reference fails the {what} check"))
}

/// Spot-check that players outside the tree are dummies of the real masked game.
fn check_projection(masked: &MaskedGame, projected: &ProjectedGame, rng: &mut impl Rng) -> Result<()> {
    let m = masked.n_features();
    for _ in 0..64 {
        let mask = rng.random::<u64>() & ((1u64 << m) - 1);
        let c = Coalition::new(mask, m)?;
        let a = masked.value(c)?;
        let b = projected.value(c)?;
        if (a - b).abs() > ANALYTIC_TOL * (1.0 + a.abs()) {
            return Err(ShapError::Config(
                "sparse scenario: inactive feature changes the masked game".into(),
            ));
        }
    }
    Ok(())
}

fn argmax_abs(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
        .0
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub scenario: Scenario,
    pub methods: Vec<ConvMethod>,
    pub budgets: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl ConvergenceConfig {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        ConvergenceConfig {
            scenario,
            methods: ConvMethod::ALL.to_vec(),
            budgets: scenario.default_budgets(),
            replicates: DEFAULT_REPLICATES,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub method: ConvMethod,
    pub budget: usize,
    pub replicate: usize,
    pub seed: u64,
    pub evaluations_used: u64,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub budget: usize,
    pub feature: usize,
    pub percentiles: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug)]
pub struct ConvergenceResult {
    pub config: ConvergenceConfig,
    pub fixture: ScenarioFixture,
    pub rows: Vec<ConvergenceRow>,
    pub summary: Vec<SummaryRow>,
}

pub fn run_convergence(config: &ConvergenceConfig) -> Result<ConvergenceResult> {
    if config.replicates < 2 {
        return Err(ShapError::Config("at least 2 replicates are needed for percentiles".into()));
    }
    if config.methods.is_empty() || config.budgets.is_empty() {
        return Err(ShapError::Config("no methods or budgets selected".into()));
    }
    let fixture = ScenarioFixture::build(config.scenario, config.seed)?;
    let m = fixture.n_features();
    let registry = Registry::builtin();

    let mut jobs = Vec::new();
    for &method in &config.methods {
        for &budget in &config.budgets {
            for replicate in 0..config.replicates {
                jobs.push((method, budget, replicate));
            }
        }
    }
    let mut rows: Vec<ConvergenceRow> = jobs
        .par_iter()
        .map(|&(method, budget, replicate)| {
            let seed = derive_seed(config.seed, &[budget as u64, replicate as u64]);
            let (name, params) = method.params(budget, m, seed);
            let game = fixture.game();
            let e = registry.build(name, &params)?.explain(&ExplainInput::game_only(game.as_ref()))?;
            Ok(ConvergenceRow {
                method,
                budget,
                replicate,
                seed,
                evaluations_used: e.evaluations_used,
                phi: e.attributions,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| (r.method, r.budget, r.replicate));

    let grouped: Vec<(String, usize, Vec<Vec<f64>>)> = group_rows(&rows);
    let summary = summarize_percentiles(&grouped, &SUMMARY_PROBS)?;
    Ok(ConvergenceResult {
        config: config.clone(),
        fixture,
        rows,
        summary,
    })
}

fn group_rows(rows: &[ConvergenceRow]) -> Vec<(String, usize, Vec<Vec<f64>>)> {
    let mut out: Vec<(String, usize, Vec<Vec<f64>>)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((m, b, g)) if m == r.method.as_str() && *b == r.budget => g.push(r.phi.clone()),
            _ => out.push((r.method.as_str().to_string(), r.budget, vec![r.phi.clone()])),
        }
    }
    out
}

/// Linear interpolation between order statistics at 0-based rank `p·(n−1)`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = rank - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Per `(method, budget, feature)` percentiles of replicate attributions. Each group is
/// `(method, budget, replicate vectors)`.
pub fn summarize_percentiles(groups: &[(String, usize, Vec<Vec<f64>>)], probs: &[f64]) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for (method, budget, reps) in groups {
        if reps.len() < 2 {
            return Err(ShapError::Config(format!(
                "group ({method}, {budget}) has {} rows, at least 2 needed",
                reps.len()
            )));
        }
        let width = reps[0].len();
        for feature in 0..width {
            let mut col: Vec<f64> = reps.iter().map(|r| r[feature]).collect();
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let variance = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            col.sort_by(f64::total_cmp);
            out.push(SummaryRow {
                method: method.clone(),
                budget: *budget,
                feature,
                percentiles: probs.iter().map(|&p| percentile(&col, p)).collect(),
                mean,
                variance,
            });
        }
    }
    Ok(out)
}

impl ConvergenceResult {
    fn summary_row(&self, method: ConvMethod, budget: usize, feature: usize) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.method == method.as_str() && r.budget == budget && r.feature == feature)
    }

    /// `(p10, p90)` of one feature's replicate estimates.
    pub fn band(&self, method: ConvMethod, budget: usize, feature: usize) -> Option<(f64, f64)> {
        let r = self.summary_row(method, budget, feature)?;
        let lo = SUMMARY_PROBS.iter().position(|&p| p == 0.1)?;
        let hi = SUMMARY_PROBS.iter().position(|&p| p == 0.9)?;
        Some((r.percentiles[lo], r.percentiles[hi]))
    }

    pub fn variance(&self, method: ConvMethod, budget: usize, feature: usize) -> Option<f64> {
        self.summary_row(method, budget, feature).map(|r| r.variance)
    }

    pub fn raw_csv(&self) -> Result<String> {
        let m = self.fixture.n_features();
        let mut header = vec!["method".to_string(), "budget".into(), "replicate".into(), "seed".into(), "evaluations_used".into()];
        header.extend((0..m).map(|i| format!("phi_{i}")));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.method.as_str().to_string(),
                r.budget.to_string(),
                r.replicate.to_string(),
                r.seed.to_string(),
                r.evaluations_used.to_string(),
            ];
            rec.extend(r.phi.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        finish(w)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut header = vec!["method".to_string(), "budget".into(), "feature".into()];
        header.extend(SUMMARY_PROBS.iter().map(|p| format!("p{}", (p * 100.0).round())));
        header.extend(["band".into(), "mean".into(), "variance".into(), "exact".into()]);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for r in &self.summary {
            let mut rec = vec![r.method.clone(), r.budget.to_string(), r.feature.to_string()];
            rec.extend(r.percentiles.iter().map(f64::to_string));
            let band = r.percentiles[r.percentiles.len() - 1] - r.percentiles[0];
            rec.push(band.to_string());
            rec.push(r.mean.to_string());
            rec.push(r.variance.to_string());
            rec.push(self.fixture.exact.attributions[r.feature].to_string());
            w.write_record(&rec)?;
        }
        finish(w)
    }

    pub fn exact_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "phi"])?;
        for (i, p) in self.fixture.exact.attributions.iter().enumerate() {
            w.write_record([i.to_string(), p.to_string()])?;
        }
        finish(w)
    }

    pub fn manifest(&self) -> Value {
        let f = &self.fixture;
        json!({
            "kind": "convergence",
            "scenario": f.scenario.as_str(),
            "seed": self.config.seed,
            "n_features": f.n_features(),
            "active_features": f.active,
            "background_rows": f.background.len(),
            "methods": self.config.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>(),
            "budgets": self.config.budgets,
            "replicates": self.config.replicates,
            "percentiles": SUMMARY_PROBS,
            "reported_feature": f.reported_feature,
            "base_value": f.exact.base_value,
            "prediction": f.exact.fx_full,
        })
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| ShapError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ShapError::Io(e.to_string()))
}

/// How a network's output maps to a class probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    /// Two logits; softmax.
    TwoLogit,
    /// One logit for class 1.
    Logit,
    /// One sigmoid probability for class 1.
    Probability,
}

pub fn output_kind(model: &MlpModel) -> Result<OutputKind> {
    let last = model.layers().last().expect("validated network").activation;
    match (model.output_width(), last) {
        (2, Activation::Identity) => Ok(OutputKind::TwoLogit),
        (1, Activation::Identity) => Ok(OutputKind::Logit),
        (1, Activation::Sigmoid) => Ok(OutputKind::Probability),
        (w, a) => Err(ShapError::Config(format!(
            "masking needs a binary probability, one logit or two logits; got {w} outputs with {a:?} activation"
        ))),
    }
}

/// Probability of class 1 and of the predicted class from raw outputs.
fn class_probability(kind: OutputKind, out: &[f64], class: usize) -> f64 {
    let p1 = match kind {
        OutputKind::TwoLogit => crate::models::sigmoid(out[1] - out[0]),
        OutputKind::Logit => crate::models::sigmoid(out[0]),
        OutputKind::Probability => out[0],
    };
    if class == 1 {
        p1
    } else {
        1.0 - p1
    }
}

pub fn log_odds(p: f64) -> f64 {
    let p = p.clamp(LOG_ODDS_CLAMP, 1.0 - LOG_ODDS_CLAMP);
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone)]
pub struct MaskingConfig {
    pub method: String,
    pub params: MethodParams,
    pub fractions: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Ranking {
    Shap,
    Random,
}

impl Ranking {
    pub fn as_str(self) -> &'static str {
        match self {
            Ranking::Shap => "shap",
            Ranking::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskingRow {
    pub instance: usize,
    pub ranking: Ranking,
    pub fraction: f64,
    pub masked: usize,
    pub class: usize,
    pub p_before: f64,
    pub p_after: f64,
    pub delta_log_odds: f64,
}

#[derive(Debug)]
pub struct MaskingResult {
    pub config: MaskingConfig,
    pub n_instances: usize,
    pub n_features: usize,
    pub rows: Vec<MaskingRow>,
}

/// Attribution of every feature toward `class`. Shapley values are linear in the game,
/// so the two-logit case is the difference of two per-logit explanations built with
/// identical seeds.
fn attribution_toward(
    registry: &Registry,
    config: &MaskingConfig,
    model: &MlpModel,
    kind: OutputKind,
    x: &[f64],
    background: &Arc<BackgroundData>,
    class: usize,
) -> Result<Vec<f64>> {
    let explain_output = |k: usize| -> Result<Vec<f64>> {
        let net = model.with_output_index(k)?;
        let spec = ModelSpec::Mlp(net.clone());
        let game = MaskedGame::new(Arc::new(net), x.to_vec(), background.clone(), MaskingMode::Independence)?;
        let params = MethodParams {
            output_index: Some(k),
            ..config.params.clone()
        };
        let input = ExplainInput {
            game: &game,
            model: Some(&spec),
            instance: Some(x),
            background: Some(background),
        };
        Ok(registry.build(&config.method, &params)?.explain(&input)?.attributions)
    };
    match kind {
        OutputKind::TwoLogit => {
            let own = explain_output(class)?;
            let other = explain_output(1 - class)?;
            Ok(own.iter().zip(&other).map(|(a, b)| a - b).collect())
        }
        OutputKind::Logit | OutputKind::Probability => {
            let phi = explain_output(0)?;
            Ok(if class == 1 { phi } else { phi.into_iter().map(|v| -v).collect() })
        }
    }
}

pub fn run_masking(
    model: &MlpModel,
    instances: &[Vec<f64>],
    background: &BackgroundData,
    config: &MaskingConfig,
) -> Result<MaskingResult> {
    let kind = output_kind(model)?;
    if let Some(f) = config.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(ShapError::Config(format!("masking fraction {f} outside [0, 1]")));
    }
    let m = model.layers()[0].rows;
    if background.n_features() != m {
        return Err(ShapError::Shape {
            expected: m,
            actual: background.n_features(),
        });
    }
    let registry = Registry::builtin();
    registry.build(&config.method, &config.params)?;
    let background = Arc::new(background.clone());
    let means = background.means().to_vec();

    let per_instance: Vec<Vec<MaskingRow>> = instances
        .par_iter()
        .enumerate()
        .map(|(idx, x)| {
            if x.len() != m {
                return Err(ShapError::Shape {
                    expected: m,
                    actual: x.len(),
                });
            }
            let out = model.forward(x);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(ShapError::Numeric(format!("non-finite output for instance {idx}")));
            }
            let p1 = class_probability(kind, &out, 1);
            let class = usize::from(p1 >= 0.5);
            let p_before = class_probability(kind, &out, class);
            let phi = attribution_toward(&registry, config, model, kind, x, &background, class)?;

            let mut shap_order: Vec<usize> = (0..m).collect();
            shap_order.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
            let mut random_order: Vec<usize> = (0..m).collect();
            random_order.shuffle(&mut fixtures::rng(derive_seed(config.seed, &[idx as u64])));

            let mut rows = Vec::new();
            for (ranking, order) in [(Ranking::Shap, &shap_order), (Ranking::Random, &random_order)] {
                for &fraction in &config.fractions {
                    let k = (fraction * m as f64).round() as usize;
                    let mut masked = x.clone();
                    for &j in &order[..k] {
                        masked[j] = means[j];
                    }
                    let p_after = class_probability(kind, &model.forward(&masked), class);
                    rows.push(MaskingRow {
                        instance: idx,
                        ranking,
                        fraction,
                        masked: k,
                        class,
                        p_before,
                        p_after,
                        delta_log_odds: log_odds(p_after) - log_odds(p_before),
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<MaskingRow> = per_instance.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.ranking, a.instance)
            .cmp(&(b.ranking, b.instance))
            .then(a.fraction.total_cmp(&b.fraction))
    });
    Ok(MaskingResult {
        config: config.clone(),
        n_instances: instances.len(),
        n_features: m,
        rows,
    })
}

/// One-sided paired t-test that SHAP-ranked masking moves the log-odds more than the
/// random control: `d_i = |Δ_shap,i| − |Δ_random,i|`, alternative `mean(d) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedTest {
    pub fraction: f64,
    pub n: usize,
    pub shap_mean_abs: f64,
    pub random_mean_abs: f64,
    pub mean_diff: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

impl MaskingResult {
    fn abs_deltas(&self, ranking: Ranking, fraction: f64) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.ranking == ranking && r.fraction == fraction)
            .map(|r| r.delta_log_odds.abs())
            .collect()
    }

    pub fn paired_test(&self, fraction: f64) -> Result<PairedTest> {
        let shap = self.abs_deltas(Ranking::Shap, fraction);
        let random = self.abs_deltas(Ranking::Random, fraction);
        let n = shap.len();
        if n < 2 || random.len() != n {
            return Err(ShapError::Config(format!(
                "paired test at fraction {fraction} needs at least 2 paired instances"
            )));
        }
        let d: Vec<f64> = shap.iter().zip(&random).map(|(a, b)| a - b).collect();
        let nf = n as f64;
        let mean_diff = d.iter().sum::<f64>() / nf;
        let sd = (d.iter().map(|v| (v - mean_diff).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
        let (t_statistic, p_value) = if sd > 0.0 {
            let t = mean_diff / (sd / nf.sqrt());
            let dist = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| ShapError::Numeric(e.to_string()))?;
            (t, 1.0 - dist.cdf(t))
        } else if mean_diff > 0.0 {
            (f64::INFINITY, 0.0)
        } else {
            (0.0, 1.0)
        };
        Ok(PairedTest {
            fraction,
            n,
            shap_mean_abs: shap.iter().sum::<f64>() / nf,
            random_mean_abs: random.iter().sum::<f64>() / nf,
            mean_diff,
            t_statistic,
            p_value,
        })
    }

    pub fn csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["ranking", "instance", "fraction", "masked", "class", "p_before", "p_after", "delta_log_odds"])?;
        for r in &self.rows {
            w.write_record([
                r.ranking.as_str().to_string(),
                r.instance.to_string(),
                r.fraction.to_string(),
                r.masked.to_string(),
                r.class.to_string(),
                r.p_before.to_string(),
                r.p_after.to_string(),
                r.delta_log_odds.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn tests_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["fraction", "n", "shap_mean_abs", "random_mean_abs", "mean_diff", "t_statistic", "p_value"])?;
        for &f in &self.config.fractions {
            let Ok(t) = self.paired_test(f) else { continue };
            w.write_record([
                f.to_string(),
                t.n.to_string(),
                t.shap_mean_abs.to_string(),
                t.random_mean_abs.to_string(),
                t.mean_diff.to_string(),
                t.t_statistic.to_string(),
                t.p_value.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn manifest(&self) -> Value {
        json!({
            "kind": "masking",
            "seed": self.config.seed,
            "method": self.config.method,
            "fractions": self.config.fractions,
            "n_instances": self.n_instances,
            "n_features": self.n_features,
        })
    }
}

/// The synthetic two-logit masking problem used by the `masking` benchmark.
pub fn masking_scenario(n_instances: usize, seed: u64) -> Result<(MlpModel, Vec<Vec<f64>>, BackgroundData)> {
    let fx = fixtures::masking_fixture(n_instances, SCENARIO_BACKGROUND_ROWS, seed)?;
    Ok((fx.model, fx.instances, BackgroundData::new(fx.background)?))
}

/// Predictions at the background means, per class, for boundary checks.
pub fn probability_at_means(model: &MlpModel, background: &BackgroundData, class: usize) -> Result<f64> {
    let kind = output_kind(model)?;
    Ok(class_probability(kind, &model.forward(background.means()), class))
}
