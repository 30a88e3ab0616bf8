use std::fs;
use std::path::Path;
use std::sync::Arc;

use shapkit::game::GameDoc;
use shapkit::masked::DEFAULT_BACKGROUND_CAP;
use shapkit::{
    load_model, BackgroundData, ExplainInput, GameOracle, LassoPenalty, MaskedGame, MaskingMode, MethodParams,
    ModelSpec, ShapError, TabularGame,
};

use crate::{BackgroundMode, InputArgs, MethodArgs};

type Result<T> = std::result::Result<T, ShapError>;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| ShapError::Io(format!("{}: {e}", path.display())))
}

/// Numeric CSV with a header row; every row must have the header's width.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let width = reader.headers()?.len();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| ShapError::validation(format!("{}:{}", path.display(), r + 2), e.to_string()))?;
        if record.len() != width {
            return Err(ShapError::validation(
                format!("{}:{}", path.display(), r + 2),
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        ShapError::validation(
                            format!("{}:{}:{}", path.display(), r + 2, c + 1),
                            format!("not a finite number: {field:?}"),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_model(path: &Path) -> Result<ModelSpec> {
    load_model(&read_text(path)?)
}

pub fn read_game(path: &Path) -> Result<TabularGame> {
    let doc: GameDoc = serde_json::from_str(&read_text(path)?).map_err(|e| ShapError::validation("$", e.to_string()))?;
    TabularGame::try_from(doc)
}

/// Everything needed to explain one prediction.
pub struct Prepared {
    pub game: Box<dyn GameOracle>,
    pub model: Option<ModelSpec>,
    pub instance: Option<Vec<f64>>,
    pub background: Option<BackgroundData>,
}

impl Prepared {
    pub fn input(&self) -> ExplainInput<'_> {
        ExplainInput {
            game: self.game.as_ref(),
            model: self.model.as_ref(),
            instance: self.instance.as_deref(),
            background: self.background.as_ref(),
        }
    }
}

pub fn prepare(args: &InputArgs, seed: u64) -> Result<Prepared> {
    if let Some(path) = &args.game {
        if args.data.is_some() || args.background.is_some() {
            return Err(ShapError::Config("--game takes no --data or --background".into()));
        }
        return Ok(Prepared {
            game: Box::new(read_game(path)?),
            model: None,
            instance: None,
            background: None,
        });
    }
    let model_path = args
        .model
        .as_ref()
        .ok_or_else(|| ShapError::Config("either --model or --game is required".into()))?;
    let data_path = args
        .data
        .as_ref()
        .ok_or_else(|| ShapError::Config("--data is required with --model".into()))?;
    let model = read_model(model_path)?;
    let mut data = read_matrix(data_path)?;
    if args.instance >= data.len() {
        return Err(ShapError::Config(format!(
            "--instance {} out of range for {} data rows",
            args.instance,
            data.len()
        )));
    }
    let instance = data.remove(args.instance);
    let rows = match &args.background {
        Some(path) => read_matrix(path)?,
        None => data,
    };
    if rows.is_empty() {
        return Err(ShapError::Config(
            "background is empty; pass --background or more --data rows".into(),
        ));
    }
    let background = BackgroundData::new(rows)?.capped(DEFAULT_BACKGROUND_CAP, seed)?;
    let mode = match args.background_mode {
        BackgroundMode::Independence => MaskingMode::Independence,
        BackgroundMode::Mean => MaskingMode::MeanImputation,
    };
    let game = MaskedGame::new(Arc::new(model.clone()), instance.clone(), Arc::new(background.clone()), mode)?;
    Ok(Prepared {
        game: Box::new(game),
        model: Some(model),
        instance: Some(instance),
        background: Some(background),
    })
}

pub fn method_params(args: &MethodArgs) -> Result<MethodParams> {
    let lasso = match args.lasso.as_deref() {
        None => None,
        Some("auto") => Some(LassoPenalty::CrossValidated),
        Some(text) => Some(LassoPenalty::Fixed(text.parse::<f64>().map_err(|_| {
            ShapError::Config(format!("--lasso expects a number or \"auto\", got {text:?}"))
        })?)),
    };
    Ok(MethodParams {
        budget: args.budget,
        n_permutations: args.permutations,
        lasso,
        threshold: args.threshold,
        seed: args.seed,
        output_index: args.output_index,
        ..MethodParams::default()
    })
}

/// Reject flags that the chosen method would silently ignore.
pub fn check_flags_apply(method: &str, args: &MethodArgs) -> Result<()> {
    let flags: [(&str, bool, &[&str]); 5] = [
        ("--budget", args.budget.is_some(), &["kernel"]),
        ("--lasso", args.lasso.is_some(), &["kernel"]),
        ("--permutations", args.permutations.is_some(), &["sampling"]),
        ("--threshold", args.threshold.is_some(), &["low-order"]),
        ("--output-index", args.output_index.is_some(), &["deep"]),
    ];
    for (flag, given, methods) in flags {
        if given && !methods.contains(&method) {
            return Err(ShapError::Config(format!("{flag} does not apply to method {method}")));
        }
    }
    Ok(())
}
