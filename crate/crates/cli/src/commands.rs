use anyhow::Context;
use serde_json::{json, Value};
use shapkit::bench::{self, ConvMethod, ConvergenceConfig, MaskingConfig, Scenario, ScenarioFixture};
use shapkit::fixtures;
use shapkit::models::MaxModel;
use shapkit::{Explanation, ModelSpec, Registry, ShapError};

use crate::input::{check_flags_apply, method_params, prepare};
use crate::output::{emit, explanation_csv, explanation_json, matrix_csv, pretty, OutputDir};
use crate::{BenchmarkArgs, CompareArgs, ExplainArgs, Format, GenFixturesArgs};

pub fn explain(args: &ExplainArgs) -> anyhow::Result<()> {
    check_flags_apply(&args.method, &args.params)?;
    let params = method_params(&args.params)?;
    let registry = Registry::builtin();
    let estimator = registry.build(&args.method, &params)?;
    let prepared = prepare(&args.input, args.params.seed)?;
    let e = estimator.explain(&prepared.input())?;
    let text = match args.format {
        Format::Json => pretty(&explanation_json(&e, args.params.seed)),
        Format::Csv => explanation_csv(&e, args.params.seed)?,
    };
    emit(args.output.as_deref(), &text)?;
    Ok(())
}

pub fn compare(args: &CompareArgs) -> anyhow::Result<()> {
    if args.methods.is_empty() {
        return Err(ShapError::Config("no methods to compare".into()).into());
    }
    let params = method_params(&args.params)?;
    let registry = Registry::builtin();
    let prepared = prepare(&args.input, args.params.seed)?;

    let mut results: Vec<(String, Result<Explanation, ShapError>)> = Vec::new();
    for name in &args.methods {
        let outcome = registry
            .build(name, &params)
            .and_then(|est| est.explain(&prepared.input()));
        results.push((name.clone(), outcome));
    }

    let entries: Vec<Value> = results
        .iter()
        .map(|(name, r)| match r {
            Ok(e) => json!({ "name": name, "ok": true, "explanation": explanation_json(e, args.params.seed) }),
            Err(err) => json!({ "name": name, "ok": false, "error": err.code(), "message": err.to_string() }),
        })
        .collect();
    let mut deviations = Vec::new();
    for (i, (a, ra)) in results.iter().enumerate() {
        for (b, rb) in &results[i + 1..] {
            if let (Ok(ea), Ok(eb)) = (ra, rb) {
                deviations.push(json!({
                    "a": a,
                    "b": b,
                    "max_abs_deviation": ea.max_abs_deviation(eb),
                    "base_value_deviation": (ea.base_value - eb.base_value).abs(),
                }));
            }
        }
    }
    let doc = json!({ "seed": args.params.seed, "methods": entries, "deviations": deviations });
    emit(args.output.as_deref(), &pretty(&doc))?;

    if results.iter().all(|(_, r)| r.is_err()) {
        let (_, first) = results.into_iter().next().expect("non-empty");
        return Err(first.expect_err("all failed")).context("every method failed");
    }
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs) -> anyhow::Result<()> {
    if args.scenario == "masking" {
        return benchmark_masking(args);
    }
    let scenario: Scenario = args.scenario.parse()?;
    let methods = match &args.methods {
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<ConvMethod>, _>>()?,
        None => ConvMethod::ALL.to_vec(),
    };
    let config = ConvergenceConfig {
        scenario,
        methods,
        budgets: args.budgets.clone().unwrap_or_else(|| scenario.default_budgets()),
        replicates: args.replicates,
        seed: args.seed,
    };
    let result = bench::run_convergence(&config)?;
    let fixture = &result.fixture;
    let mut out = OutputDir::create(&args.output)?;
    out.write("tree.json", &pretty(&ModelSpec::Tree(fixture.tree.clone()).to_json()))?;
    out.write("data.csv", &matrix_csv(&scenario_data(fixture))?)?;
    out.write("raw.csv", &result.raw_csv()?)?;
    out.write("summary.csv", &result.summary_csv()?)?;
    out.write("exact.csv", &result.exact_csv()?)?;
    out.finish(result.manifest())?;
    Ok(())
}

/// The explained instance first, then the background rows, so `explain --data` on
/// row 0 reproduces the scenario game.
fn scenario_data(fixture: &ScenarioFixture) -> Vec<Vec<f64>> {
    std::iter::once(fixture.instance.clone())
        .chain(fixture.background.iter().cloned())
        .collect()
}

fn benchmark_masking(args: &BenchmarkArgs) -> anyhow::Result<()> {
    if args.instances < 2 {
        return Err(ShapError::Config("masking needs at least 2 instances".into()).into());
    }
    let (model, instances, background) = bench::masking_scenario(args.instances, args.seed)?;
    let config = MaskingConfig {
        method: args.method.clone(),
        params: shapkit::MethodParams {
            seed: args.seed,
            ..Default::default()
        },
        fractions: args.fractions.clone(),
        seed: args.seed,
    };
    let result = bench::run_masking(&model, &instances, &background, &config)?;
    let mut out = OutputDir::create(&args.output)?;
    out.write("model.json", &pretty(&ModelSpec::Mlp(model).to_json()))?;
    out.write("instances.csv", &matrix_csv(&instances)?)?;
    out.write("background.csv", &matrix_csv(&background.rows().map(<[f64]>::to_vec).collect::<Vec<_>>())?)?;
    out.write("masking.csv", &result.csv()?)?;
    out.write("tests.csv", &result.tests_csv()?)?;
    out.finish(result.manifest())?;
    Ok(())
}

pub fn gen_fixtures(args: &GenFixturesArgs) -> anyhow::Result<()> {
    let mut out = OutputDir::create(&args.output)?;
    out.write("sickness_game.json", &pretty(&serde_json::to_value(fixtures::sickness_game().to_doc())?))?;

    let profit = fixtures::profit_model();
    out.write("profit_max.json", &pretty(&ModelSpec::Max(profit.clone()).to_json()))?;
    out.write("profit_data.csv", &matrix_csv(&[fixtures::PROFIT_SCORES.to_vec()])?)?;
    let MaxModel { n_features, baseline } = profit;
    out.write("profit_background.csv", &matrix_csv(&[vec![baseline; n_features]])?)?;

    for scenario in [Scenario::DenseTree, Scenario::SparseTree] {
        let fixture = ScenarioFixture::build(scenario, args.seed)?;
        let name = scenario.as_str();
        out.write(&format!("{name}.json"), &pretty(&ModelSpec::Tree(fixture.tree.clone()).to_json()))?;
        out.write(&format!("{name}_data.csv"), &matrix_csv(&scenario_data(&fixture))?)?;
    }

    let (model, instances, background) = bench::masking_scenario(50, args.seed)?;
    out.write("masking_mlp.json", &pretty(&ModelSpec::Mlp(model).to_json()))?;
    out.write("masking_data.csv", &matrix_csv(&instances)?)?;
    out.write(
        "masking_background.csv",
        &matrix_csv(&background.rows().map(<[f64]>::to_vec).collect::<Vec<_>>())?,
    )?;

    out.finish(json!({ "kind": "fixtures", "seed": args.seed }))?;
    Ok(())
}
