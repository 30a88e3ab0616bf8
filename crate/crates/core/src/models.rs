//! Model zoo: linear models, decision trees, multilayer perceptrons and max functions,
//! plus the JSON schema they are loaded from.
//!
//! Schema (one document per model, discriminated by `"type"`):
//!
//! ```text
//! {"type":"linear","weights":[2,3],"bias":1}
//! {"type":"tree","n_features":2,"feature":[0,-1,-1],"threshold":[0.5,0,0],
//!  "left":[1,-1,-1],"right":[2,-1,-1],"value":[0,0,1]}          // root = node 0, x <= t goes left
//! {"type":"mlp","output_index":0,"layers":[
//!   {"rows":2,"cols":3,"weights":[...row-major...],"bias":[...3],"activation":"relu"},
//!   {"rows":3,"cols":1,"weights":[...],"bias":[0],"activation":"identity"}]}
//! {"type":"max","n_features":3,"baseline":0}
//! ```
//!
//! MLP layers compute `y = act(x W + b)` with `W` stored `rows = inputs` by
//! `cols = outputs`. A `maxpool` layer takes the max over consecutive windows of
//! `pool_size` pre-activations, so its output width is `cols / pool_size`.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, ShapError};

/// Anything that maps a feature vector to a scalar output.
pub trait Model: Send + Sync {
    fn n_features(&self) -> usize;

    /// Output on `x`; callers go through [`checked_predict`] for validation.
    fn predict_unchecked(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &[f64]) -> Result<f64> {
        checked_predict(self, x)
    }
}

pub fn checked_predict<M: Model + ?Sized>(model: &M, x: &[f64]) -> Result<f64> {
    if x.len() != model.n_features() {
        return Err(ShapError::Shape {
            expected: model.n_features(),
            actual: x.len(),
        });
    }
    if let Some(j) = x.iter().position(|v| !v.is_finite()) {
        return Err(ShapError::Numeric(format!("input feature {j} is not finite")));
    }
    let y = model.predict_unchecked(x);
    if !y.is_finite() {
        return Err(ShapError::Numeric("model output is not finite".into()));
    }
    Ok(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(ShapError::validation("weights", "at least one weight is required"));
        }
        if let Some(j) = weights.iter().position(|w| !w.is_finite()) {
            return Err(ShapError::validation(format!("weights[{j}]"), "not finite"));
        }
        if !bias.is_finite() {
            return Err(ShapError::validation("bias", "not finite"));
        }
        Ok(LinearModel { weights, bias })
    }
}

impl Model for LinearModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// Binary regression tree; `x[feature] <= threshold` descends left.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    n_features: usize,
    nodes: Vec<TreeNode>,
    root: usize,
}

impl DecisionTree {
    pub fn new(n_features: usize, nodes: Vec<TreeNode>, root: usize) -> Result<Self> {
        validate_tree(n_features, &nodes, root)?;
        Ok(DecisionTree {
            n_features,
            nodes,
            root,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Distinct features referenced by split nodes, ascending.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { feature, .. } => Some(*feature),
                TreeNode::Leaf(_) => None,
            })
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }
}

fn validate_tree(n_features: usize, nodes: &[TreeNode], root: usize) -> Result<()> {
    if n_features == 0 {
        return Err(ShapError::validation("n_features", "must be positive"));
    }
    if root >= nodes.len() {
        return Err(ShapError::validation("root", format!("index {root} out of range")));
    }
    for (i, node) in nodes.iter().enumerate() {
        match *node {
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if feature >= n_features {
                    return Err(ShapError::validation(
                        format!("feature[{i}]"),
                        format!("{feature} >= n_features {n_features}"),
                    ));
                }
                if !threshold.is_finite() {
                    return Err(ShapError::validation(format!("threshold[{i}]"), "not finite"));
                }
                for (name, child) in [("left", left), ("right", right)] {
                    if child >= nodes.len() {
                        return Err(ShapError::validation(
                            format!("{name}[{i}]"),
                            format!("child {child} out of range"),
                        ));
                    }
                }
            }
            TreeNode::Leaf(v) => {
                if !v.is_finite() {
                    return Err(ShapError::validation(format!("value[{i}]"), "not finite"));
                }
            }
        }
    }
    // Iterative DFS with colors: 1 = on the current path, 2 = finished.
    let mut color = vec![0u8; nodes.len()];
    let mut stack = vec![(root, false)];
    while let Some((i, done)) = stack.pop() {
        if done {
            color[i] = 2;
            continue;
        }
        if color[i] == 2 {
            continue;
        }
        color[i] = 1;
        stack.push((i, true));
        if let TreeNode::Split { left, right, .. } = nodes[i] {
            for (name, child) in [("left", left), ("right", right)] {
                match color[child] {
                    1 => {
                        return Err(ShapError::validation(
                            format!("{name}[{i}]"),
                            format!("cycle through node {child}"),
                        ))
                    }
                    0 => stack.push((child, false)),
                    _ => {}
                }
            }
        }
    }
    Ok(())
}

impl Model for DecisionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        let mut i = self.root;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf(v) => return v,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
    Maxpool,
}

impl Activation {
    /// Elementwise activation; not defined for `Maxpool`.
    pub fn apply(self, y: f64) -> f64 {
        match self {
            Activation::Identity | Activation::Maxpool => y,
            Activation::Relu => y.max(0.0),
            Activation::Sigmoid => sigmoid(y),
        }
    }

    pub fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Identity | Activation::Maxpool => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(y);
                s * (1.0 - s)
            }
        }
    }
}

pub fn sigmoid(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
}

impl Layer {
    pub fn output_width(&self) -> usize {
        match (self.activation, self.pool_size) {
            (Activation::Maxpool, Some(k)) if k > 0 => self.cols / k,
            _ => self.cols,
        }
    }

    #[inline]
    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[input * self.cols + output]
    }

    /// Pre-activation `x W + b`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.weights[i * self.cols..(i + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += xi * w;
            }
        }
        out
    }

    pub fn activate(&self, pre: &[f64]) -> Vec<f64> {
        match self.activation {
            Activation::Maxpool => {
                let k = self.pool_size.unwrap_or(1);
                pre.chunks(k)
                    .map(|w| w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                    .collect()
            }
            a => pre.iter().map(|&y| a.apply(y)).collect(),
        }
    }
}

/// Pre- and post-activation values of one layer in a forward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    output_index: usize,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>, output_index: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(ShapError::validation("layers", "at least one layer is required"));
        }
        for (l, layer) in layers.iter().enumerate() {
            let path = |f: &str| format!("layers[{l}].{f}");
            if layer.rows == 0 || layer.cols == 0 {
                return Err(ShapError::validation(path("rows"), "dimensions must be positive"));
            }
            if layer.weights.len() != layer.rows * layer.cols {
                return Err(ShapError::validation(
                    path("weights"),
                    format!("expected {}×{} = {} entries, got {}", layer.rows, layer.cols, layer.rows * layer.cols, layer.weights.len()),
                ));
            }
            if layer.bias.len() != layer.cols {
                return Err(ShapError::validation(
                    path("bias"),
                    format!("expected {} entries, got {}", layer.cols, layer.bias.len()),
                ));
            }
            if layer.weights.iter().chain(&layer.bias).any(|v| !v.is_finite()) {
                return Err(ShapError::validation(path("weights"), "non-finite parameter"));
            }
            match (layer.activation, layer.pool_size) {
                (Activation::Maxpool, Some(k)) if k > 0 && layer.cols % k == 0 => {}
                (Activation::Maxpool, _) => {
                    return Err(ShapError::validation(
                        path("pool_size"),
                        "maxpool needs a positive pool_size dividing cols",
                    ))
                }
                (_, Some(_)) => {
                    return Err(ShapError::validation(path("pool_size"), "only valid for maxpool"))
                }
                _ => {}
            }
            if l > 0 {
                let prev = layers[l - 1].output_width();
                if prev != layer.rows {
                    return Err(ShapError::validation(
                        path("rows"),
                        format!("chain mismatch: previous layer outputs {prev}, this layer expects {}", layer.rows),
                    ));
                }
            }
        }
        let width = layers.last().map(Layer::output_width).unwrap_or(0);
        if output_index >= width {
            return Err(ShapError::validation(
                "output_index",
                format!("{output_index} out of range for output width {width}"),
            ));
        }
        Ok(MlpModel {
            layers,
            output_index,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn output_index(&self) -> usize {
        self.output_index
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(Layer::output_width).unwrap_or(0)
    }

    /// Same network explaining a different output unit.
    pub fn with_output_index(&self, output_index: usize) -> Result<Self> {
        MlpModel::new(self.layers.clone(), output_index)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Vec<LayerTrace> {
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let pre = layer.affine(&a);
            let post = layer.activate(&pre);
            a = post.clone();
            traces.push(LayerTrace { pre, post });
        }
        traces
    }

    /// Full output vector.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.layers
            .iter()
            .fold(x.to_vec(), |a, layer| layer.activate(&layer.affine(&a)))
    }
}

impl Model for MlpModel {
    fn n_features(&self) -> usize {
        self.layers[0].rows
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.forward(x)[self.output_index]
    }
}

/// `f(x) = max(baseline, max_i x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxModel {
    pub n_features: usize,
    pub baseline: f64,
}

impl Model for MaxModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        x.iter().copied().fold(self.baseline, f64::max)
    }
}

/// A validated model of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Linear(LinearModel),
    Tree(DecisionTree),
    Mlp(MlpModel),
    Max(MaxModel),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Linear(_) => "linear",
            ModelSpec::Tree(_) => "tree",
            ModelSpec::Mlp(_) => "mlp",
            ModelSpec::Max(_) => "max",
        }
    }

    fn inner(&self) -> &dyn Model {
        match self {
            ModelSpec::Linear(m) => m,
            ModelSpec::Tree(m) => m,
            ModelSpec::Mlp(m) => m,
            ModelSpec::Max(m) => m,
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            ModelSpec::Linear(m) => serde_json::json!({
                "type": "linear", "weights": m.weights, "bias": m.bias,
            }),
            ModelSpec::Tree(t) => {
                let (mut feature, mut threshold, mut left, mut right, mut value) =
                    (vec![], vec![], vec![], vec![], vec![]);
                for node in &t.nodes {
                    match *node {
                        TreeNode::Split {
                            feature: f,
                            threshold: th,
                            left: l,
                            right: r,
                        } => {
                            feature.push(f as i64);
                            threshold.push(th);
                            left.push(l as i64);
                            right.push(r as i64);
                            value.push(0.0);
                        }
                        TreeNode::Leaf(v) => {
                            feature.push(-1);
                            threshold.push(0.0);
                            left.push(-1);
                            right.push(-1);
                            value.push(v);
                        }
                    }
                }
                serde_json::json!({
                    "type": "tree", "n_features": t.n_features, "root": t.root,
                    "feature": feature, "threshold": threshold,
                    "left": left, "right": right, "value": value,
                })
            }
            ModelSpec::Mlp(m) => serde_json::json!({
                "type": "mlp", "output_index": m.output_index, "layers": m.layers,
            }),
            ModelSpec::Max(m) => serde_json::json!({
                "type": "max", "n_features": m.n_features, "baseline": m.baseline,
            }),
        }
    }
}

impl Model for ModelSpec {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.inner().predict_unchecked(x)
    }
}

/// Evaluate any model on one input.
pub fn predict(model: &ModelSpec, x: &[f64]) -> Result<f64> {
    checked_predict(model, x)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearDoc {
    #[serde(rename = "type")]
    _kind: String,
    weights: Vec<f64>,
    bias: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeDoc {
    #[serde(rename = "type")]
    _kind: String,
    n_features: usize,
    #[serde(default)]
    root: usize,
    feature: Vec<i64>,
    threshold: Vec<f64>,
    left: Vec<i64>,
    right: Vec<i64>,
    value: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpDoc {
    #[serde(rename = "type")]
    _kind: String,
    layers: Vec<Layer>,
    #[serde(default)]
    output_index: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaxDoc {
    #[serde(rename = "type")]
    _kind: String,
    n_features: usize,
    #[serde(default)]
    baseline: f64,
}

fn parse_doc<T: serde::de::DeserializeOwned>(value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| ShapError::validation("$", e.to_string()))
}

/// Parse and validate a model document.
pub fn load_model(text: &str) -> Result<ModelSpec> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| ShapError::validation("$", e.to_string()))?;
    model_from_value(value)
}

pub fn model_from_value(value: Value) -> Result<ModelSpec> {
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| ShapError::validation("type", "missing string field"))?
        .to_string();
    match kind.as_str() {
        "linear" => {
            let doc: LinearDoc = parse_doc(value)?;
            Ok(ModelSpec::Linear(LinearModel::new(doc.weights, doc.bias)?))
        }
        "tree" => {
            let doc: TreeDoc = parse_doc(value)?;
            let n = doc.value.len();
            for (name, len) in [
                ("feature", doc.feature.len()),
                ("threshold", doc.threshold.len()),
                ("left", doc.left.len()),
                ("right", doc.right.len()),
            ] {
                if len != n {
                    return Err(ShapError::validation(
                        name,
                        format!("length {len} differs from value length {n}"),
                    ));
                }
            }
            let mut nodes = Vec::with_capacity(n);
            for i in 0..n {
                let node = match (doc.left[i], doc.right[i]) {
                    (-1, -1) => TreeNode::Leaf(doc.value[i]),
                    (l, r) if l >= 0 && r >= 0 => {
                        if doc.feature[i] < 0 {
                            return Err(ShapError::validation(
                                format!("feature[{i}]"),
                                "internal node needs a feature index",
                            ));
                        }
                        TreeNode::Split {
                            feature: doc.feature[i] as usize,
                            threshold: doc.threshold[i],
                            left: l as usize,
                            right: r as usize,
                        }
                    }
                    _ => {
                        return Err(ShapError::validation(
                            format!("left[{i}]"),
                            "children must both be -1 (leaf) or both be node indices",
                        ))
                    }
                };
                nodes.push(node);
            }
            Ok(ModelSpec::Tree(DecisionTree::new(doc.n_features, nodes, doc.root)?))
        }
        "mlp" => {
            let doc: MlpDoc = parse_doc(value)?;
            Ok(ModelSpec::Mlp(MlpModel::new(doc.layers, doc.output_index)?))
        }
        "max" => {
            let doc: MaxDoc = parse_doc(value)?;
            if doc.n_features == 0 {
                return Err(ShapError::validation("n_features", "must be positive"));
            }
            if !doc.baseline.is_finite() {
                return Err(ShapError::validation("baseline", "not finite"));
            }
            Ok(ModelSpec::Max(MaxModel {
                n_features: doc.n_features,
                baseline: doc.baseline,
            }))
        }
        other => Err(ShapError::validation("type", format!("unknown model type {other:?}"))),
    }
}
