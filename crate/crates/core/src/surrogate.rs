//! Gradient-boosted regression trees.
//!
//! Squared-error objective, so every row has gradient `pred - y` and unit
//! hessian. Each round grows one tree on the current residuals with exact
//! greedy split search:
//!
//! ```text
//! leaf weight = sum(residual) / (count + lambda)
//! gain        = 1/2 [S_L^2/(n_L+lambda) + S_R^2/(n_R+lambda) - S^2/(n+lambda)] - gamma
//! ```
//!
//! A split is kept only when its gain is strictly positive. Rows with
//! `x[feature] < threshold` go left. The raw score is
//! `base_score + learning_rate * sum(leaf values)`; the prediction is the raw
//! score mapped back through the model's target transform.
//!
//! Two optional conveniences help with profit-like targets. Trees may also
//! split on sums of feature groups (total regional capacity), appended after
//! the input features. Targets may be fitted on a signed log scale so that
//! squared error in the fitted space tracks relative error in money.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sampler::{self, Dataset};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "epec-gbt";
pub const MODEL_VERSION: u32 = 1;

/// Floor on the denominator of the relative error, in money units.
pub const RELATIVE_ERROR_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 regularization on leaf weights (lambda).
    pub l2_leaf_reg: f64,
    /// Minimum gain for a split (gamma).
    pub min_split_gain: f64,
    /// Stop when the held-out error has not improved for this many rounds.
    /// Only used when validation rows are supplied.
    pub early_stopping_rounds: Option<usize>,
    pub target_transform: TargetTransform,
    /// Let trees split on per-region capacity totals.
    pub sum_features: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    Identity,
    /// `sign(y) * ln(1 + |y|)`.
    #[default]
    SignedLog,
}

impl TargetTransform {
    pub fn forward(self, y: f64) -> f64 {
        match self {
            Self::Identity => y,
            Self::SignedLog => y.signum() * y.abs().ln_1p(),
        }
    }

    pub fn inverse(self, z: f64) -> f64 {
        match self {
            Self::Identity => z,
            Self::SignedLog => z.signum() * z.abs().exp_m1(),
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_rounds: 300,
            max_depth: 5,
            learning_rate: 0.1,
            l2_leaf_reg: 1.0,
            min_split_gain: 0.0,
            early_stopping_rounds: Some(25),
            target_transform: TargetTransform::SignedLog,
            sum_features: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_leaf_reg >= 0.0 && self.l2_leaf_reg.is_finite()) {
            return Err(Error::InvalidInput("l2_leaf_reg must be >= 0".into()));
        }
        if !(self.min_split_gain >= 0.0 && self.min_split_gain.is_finite()) {
            return Err(Error::InvalidInput("min_split_gain must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// Left child is the next node in preorder; `right` is its index.
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
    Leaf(f64),
}

/// A regression tree stored as a preorder node list.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf(value)],
        }
    }

    /// Rebuild a tree from preorder nodes given as `Some((feature, threshold))`
    /// for splits and `None`-tagged leaf values.
    pub fn from_preorder(nodes: &[PreorderNode]) -> Result<Self> {
        fn walk(nodes: &[PreorderNode], at: usize, out: &mut Vec<Node>, depth: usize) -> Result<usize> {
            if depth > 64 {
                return Err(Error::Model("tree is too deep".into()));
            }
            let node = nodes
                .get(at)
                .ok_or_else(|| Error::Model("truncated tree".into()))?;
            match *node {
                PreorderNode::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(Error::Model("leaf value is not finite".into()));
                    }
                    out.push(Node::Leaf(value));
                    Ok(at + 1)
                }
                PreorderNode::Split { feature, threshold } => {
                    if !threshold.is_finite() {
                        return Err(Error::Model("split threshold is not finite".into()));
                    }
                    let me = out.len();
                    out.push(Node::Split {
                        feature,
                        threshold,
                        right: 0,
                    });
                    let next = walk(nodes, at + 1, out, depth + 1)?;
                    let right = out.len();
                    if let Node::Split { right: r, .. } = &mut out[me] {
                        *r = right;
                    }
                    walk(nodes, next, out, depth + 1)
                }
            }
        }
        let mut out = Vec::with_capacity(nodes.len());
        let end = walk(nodes, 0, &mut out, 0)?;
        if end != nodes.len() {
            return Err(Error::Model(format!(
                "tree has {} trailing nodes",
                nodes.len() - end
            )));
        }
        Ok(Self { nodes: out })
    }

    pub fn to_preorder(&self) -> Vec<PreorderNode> {
        self.nodes
            .iter()
            .map(|n| match *n {
                Node::Split {
                    feature, threshold, ..
                } => PreorderNode::Split { feature, threshold },
                Node::Leaf(value) => PreorderNode::Leaf { value },
            })
            .collect()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaf_value(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => at = if x[feature] < threshold { at + 1 } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> (usize, usize) {
            // (depth, index after subtree)
            match nodes[at] {
                Node::Leaf(_) => (0, at + 1),
                Node::Split { right, .. } => {
                    let (l, _) = go(nodes, at + 1);
                    let (r, end) = go(nodes, right);
                    (1 + l.max(r), end)
                }
            }
        }
        go(&self.nodes, 0).0
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf(_) => None,
            })
            .max()
    }
}

/// Serialized node form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PreorderNode {
    Split { feature: usize, threshold: f64 },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub feature_names: Vec<String>,
    /// Input-feature groups whose sums are appended as extra split features.
    pub sum_groups: Vec<Vec<usize>>,
    pub target_transform: TargetTransform,
    pub trees: Vec<Tree>,
    /// Configuration the model was trained with, echoed into model files.
    pub config: TrainConfig,
}

impl GbtModel {
    /// A tree-less model that predicts `base_score` everywhere.
    pub fn constant(base_score: f64, feature_names: Vec<String>) -> Self {
        Self {
            base_score,
            learning_rate: 1.0,
            feature_names,
            sum_groups: Vec::new(),
            target_transform: TargetTransform::Identity,
            trees: Vec::new(),
            config: TrainConfig::default(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: x.len(),
            });
        }
        Ok(self.score(x))
    }

    /// Prediction without the dimension check.
    pub fn score(&self, x: &[f64]) -> f64 {
        let raw = if self.sum_groups.is_empty() {
            self.raw_score(x)
        } else {
            self.raw_score(&augment(x, &self.sum_groups))
        };
        self.target_transform.inverse(raw)
    }

    /// Ensemble sum in the fitted space, on an already augmented row.
    fn raw_score(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(row)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|x| self.predict(x)).collect()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            config: self.config.clone(),
            feature_names: self.feature_names.clone(),
            sum_groups: self.sum_groups.clone(),
            target_transform: self.target_transform,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            trees: self.trees.iter().map(Tree::to_preorder).collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if probe.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
            return Err(Error::Model(format!("not an {MODEL_FORMAT} model file")));
        }
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(MODEL_VERSION) => {}
            Some(v) => {
                return Err(Error::Model(format!(
                    "unsupported model version {v} (expected {MODEL_VERSION})"
                )))
            }
            None => return Err(Error::Model("missing model version".into())),
        }
        let file: ModelFile =
            serde_json::from_value(probe).map_err(|e| Error::Model(e.to_string()))?;
        let trees = file
            .trees
            .iter()
            .map(|t| Tree::from_preorder(t))
            .collect::<Result<Vec<_>>>()?;
        let n = file.feature_names.len();
        if file.sum_groups.iter().flatten().any(|&i| i >= n) {
            return Err(Error::Model("sum group refers to a missing feature".into()));
        }
        let width = n + file.sum_groups.len();
        if let Some(f) = trees.iter().filter_map(Tree::max_feature).max() {
            if f >= width {
                return Err(Error::Model(format!(
                    "split on feature {f} but model has {width} split features"
                )));
            }
        }
        if !file.base_score.is_finite() || !file.learning_rate.is_finite() {
            return Err(Error::Model("base_score and learning_rate must be finite".into()));
        }
        Ok(Self {
            base_score: file.base_score,
            learning_rate: file.learning_rate,
            feature_names: file.feature_names,
            sum_groups: file.sum_groups,
            target_transform: file.target_transform,
            trees,
            config: file.config,
        })
    }
}

fn augment(x: &[f64], groups: &[Vec<usize>]) -> Vec<f64> {
    let mut row = Vec::with_capacity(x.len() + groups.len());
    row.extend_from_slice(x);
    row.extend(groups.iter().map(|g| g.iter().map(|&i| x[i]).sum::<f64>()));
    row
}

/// Group `k_<region>_<tech>` style names by region. Names without a `_`
/// all fall into one group. A grand total is added when there are several
/// regions.
pub fn region_groups(feature_names: &[String]) -> Vec<Vec<usize>> {
    let mut keys: Vec<&str> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, name) in feature_names.iter().enumerate() {
        let key = name.rsplit_once('_').map_or("", |(head, _)| head);
        match keys.iter().position(|k| *k == key) {
            Some(g) => groups[g].push(i),
            None => {
                keys.push(key);
                groups.push(vec![i]);
            }
        }
    }
    if groups.len() > 1 {
        groups.push((0..feature_names.len()).collect());
    }
    groups
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    config: TrainConfig,
    feature_names: Vec<String>,
    sum_groups: Vec<Vec<usize>>,
    target_transform: TargetTransform,
    base_score: f64,
    learning_rate: f64,
    trees: Vec<Vec<PreorderNode>>,
}

pub fn save_model(model: &GbtModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GbtModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    GbtModel::from_json(&text).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Per-round diagnostics from [`fit_with_validation`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Training MSE in the fitted (transformed) space after each kept round;
    /// index 0 is the base score alone.
    pub train_mse: Vec<f64>,
    /// Held-out relative error after each round, when validation rows exist.
    pub valid_error: Vec<f64>,
    pub rounds_kept: usize,
    pub stopped_early: bool,
}

struct TreeBuilder<'a> {
    /// Column-major features.
    columns: &'a [Vec<f64>],
    residual: &'a [f64],
    config: &'a TrainConfig,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    fn leaf_weight(&self, sum: f64, count: usize) -> f64 {
        let denom = count as f64 + self.config.l2_leaf_reg;
        if denom > 0.0 {
            sum / denom
        } else {
            0.0
        }
    }

    fn score(&self, sum: f64, count: usize) -> f64 {
        let denom = count as f64 + self.config.l2_leaf_reg;
        if denom > 0.0 {
            sum * sum / denom
        } else {
            0.0
        }
    }

    fn find_split(&self, rows: &[usize], total: f64) -> Option<BestSplit> {
        let n = rows.len();
        let parent = self.score(total, n);
        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        for (f, column) in self.columns.iter().enumerate() {
            sorted.copy_from_slice(rows);
            sorted.sort_unstable_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.residual[sorted[i]];
                let (lo, hi) = (column[sorted[i]], column[sorted[i + 1]]);
                if lo == hi {
                    continue;
                }
                let n_left = i + 1;
                let gain = 0.5
                    * (self.score(left_sum, n_left) + self.score(total - left_sum, n - n_left)
                        - parent)
                    - self.config.min_split_gain;
                if gain > 0.0 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold <= lo {
                        threshold = hi;
                    }
                    best = Some(BestSplit {
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) {
        let total: f64 = rows.iter().map(|&r| self.residual[r]).sum();
        let split = if depth < self.config.max_depth && rows.len() >= 2 {
            self.find_split(&rows, total)
        } else {
            None
        };
        let Some(split) = split else {
            let w = self.leaf_weight(total, rows.len());
            self.nodes.push(Node::Leaf(w));
            return;
        };
        let column = &self.columns[split.feature];
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| column[r] < split.threshold);
        let me = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            right: 0,
        });
        self.grow(left, depth + 1);
        let right_at = self.nodes.len();
        if let Node::Split { right, .. } = &mut self.nodes[me] {
            *right = right_at;
        }
        self.grow(right, depth + 1);
    }
}

fn check_matrix(inputs: &[Vec<f64>], targets: &[f64]) -> Result<usize> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            found: targets.len(),
        });
    }
    let n_features = inputs.first().map_or(0, Vec::len);
    for row in inputs {
        if row.len() != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                found: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("inputs contain missing or non-finite values".into()));
        }
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("targets contain missing or non-finite values".into()));
    }
    Ok(n_features)
}

fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("f{i}")).collect()
}

/// Fit on all rows for exactly `config.n_rounds` rounds (or until the
/// residuals are exhausted). Feature names default to `f0, f1, ...`.
pub fn fit(inputs: &[Vec<f64>], targets: &[f64], config: &TrainConfig) -> Result<GbtModel> {
    let names = default_names(inputs.first().map_or(0, Vec::len));
    fit_with_validation(inputs, targets, None, names, config).map(|(m, _)| m)
}

/// Fit with an optional held-out set driving early stopping.
pub fn fit_with_validation(
    inputs: &[Vec<f64>],
    targets: &[f64],
    validation: Option<(&[Vec<f64>], &[f64])>,
    feature_names: Vec<String>,
    config: &TrainConfig,
) -> Result<(GbtModel, TrainReport)> {
    config.validate()?;
    let n_features = check_matrix(inputs, targets)?;
    if inputs.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 training rows".into()));
    }
    if feature_names.len() != n_features {
        return Err(Error::DimensionMismatch {
            expected: n_features,
            found: feature_names.len(),
        });
    }
    if let Some((vx, vy)) = validation {
        let vf = check_matrix(vx, vy)?;
        if !vx.is_empty() && vf != n_features {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                found: vf,
            });
        }
    }
    let validation = validation.filter(|(vx, _)| !vx.is_empty());

    if targets.iter().all(|&y| y == targets[0]) {
        let mut model = GbtModel::constant(targets[0], feature_names);
        model.config = config.clone();
        let report = TrainReport {
            train_mse: vec![0.0],
            valid_error: validation
                .map(|(_, vy)| vec![relative_error(&vec![targets[0]; vy.len()], vy)])
                .unwrap_or_default(),
            ..Default::default()
        };
        return Ok((model, report));
    }

    let sum_groups = if config.sum_features {
        region_groups(&feature_names)
    } else {
        Vec::new()
    };
    let transform = config.target_transform;
    let rows: Vec<Vec<f64>> = inputs.iter().map(|x| augment(x, &sum_groups)).collect();
    let fitted: Vec<f64> = targets.iter().map(|&y| transform.forward(y)).collect();
    let valid_rows: Option<Vec<Vec<f64>>> =
        validation.map(|(vx, _)| vx.iter().map(|x| augment(x, &sum_groups)).collect());

    let n = rows.len();
    let columns: Vec<Vec<f64>> = (0..n_features + sum_groups.len())
        .map(|f| rows.iter().map(|row| row[f]).collect())
        .collect();
    let base_score = fitted.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut residual: Vec<f64> = fitted.iter().map(|y| y - base_score).collect();
    let mut valid_raw = valid_rows.as_ref().map(|vx| vec![base_score; vx.len()]);
    let valid_error = |raw: &[f64], vy: &[f64]| {
        let pred: Vec<f64> = raw.iter().map(|&z| transform.inverse(z)).collect();
        relative_error(&pred, vy)
    };

    let mut model = GbtModel {
        base_score,
        learning_rate: config.learning_rate,
        feature_names,
        sum_groups,
        target_transform: transform,
        trees: Vec::new(),
        config: config.clone(),
    };
    let mut report = TrainReport {
        train_mse: vec![mse(&residual)],
        ..Default::default()
    };
    let mut best_valid = (f64::INFINITY, 0usize);
    if let (Some((_, vy)), Some(raw)) = (validation, &valid_raw) {
        best_valid = (valid_error(raw, vy), 0);
        report.valid_error.push(best_valid.0);
    }

    for round in 1..=config.n_rounds {
        let mut builder = TreeBuilder {
            columns: &columns,
            residual: &residual,
            config,
            nodes: Vec::new(),
        };
        builder.grow((0..n).collect(), 0);
        let tree = Tree {
            nodes: builder.nodes,
        };
        if tree.nodes.len() == 1 && tree.nodes[0] == Node::Leaf(0.0) {
            break;
        }
        for i in 0..n {
            pred[i] += config.learning_rate * tree.leaf_value(&rows[i]);
            residual[i] = fitted[i] - pred[i];
        }
        report.train_mse.push(mse(&residual));
        if let (Some((_, vy)), Some(vx), Some(raw)) =
            (validation, valid_rows.as_ref(), valid_raw.as_mut())
        {
            for (p, x) in raw.iter_mut().zip(vx) {
                *p += config.learning_rate * tree.leaf_value(x);
            }
            let err = valid_error(raw, vy);
            report.valid_error.push(err);
            if err < best_valid.0 {
                best_valid = (err, round);
            }
        }
        model.trees.push(tree);
        if let (Some(_), Some(patience)) = (validation, config.early_stopping_rounds) {
            if round - best_valid.1 >= patience {
                report.stopped_early = true;
                break;
            }
        }
    }

    if validation.is_some() && config.early_stopping_rounds.is_some() {
        model.trees.truncate(best_valid.1);
        report.train_mse.truncate(best_valid.1 + 1);
    }
    report.rounds_kept = model.trees.len();
    Ok((model, report))
}

fn mse(residual: &[f64]) -> f64 {
    residual.iter().map(|r| r * r).sum::<f64>() / residual.len().max(1) as f64
}

/// `mean(|pred - y| / max(|y|, 1))`.
pub fn relative_error(pred: &[f64], targets: &[f64]) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    pred.iter()
        .zip(targets)
        .map(|(p, y)| (p - y).abs() / y.abs().max(RELATIVE_ERROR_FLOOR))
        .sum::<f64>()
        / targets.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub train_error: f64,
    pub test_error: f64,
}

/// Relative error on a train and a test set.
pub fn evaluate(
    model: &GbtModel,
    train: (&[Vec<f64>], &[f64]),
    test: (&[Vec<f64>], &[f64]),
) -> Result<Evaluation> {
    Ok(Evaluation {
        train_error: relative_error(&model.predict_rows(train.0)?, train.1),
        test_error: relative_error(&model.predict_rows(test.0)?, test.1),
    })
}

// ---------------------------------------------------------------------------
// One model per slot
// ---------------------------------------------------------------------------

/// Surrogates for every target column of a dataset, in target order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSet {
    pub target_names: Vec<String>,
    pub models: Vec<GbtModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetReport {
    pub target: String,
    pub evaluation: Evaluation,
    pub rounds_kept: usize,
}

/// Held-out share used for validation and early stopping.
pub const TEST_FRACTION: f64 = 0.25;

/// Train one model per target on a seeded 75/25 split; targets train in
/// parallel.
pub fn train_all(
    dataset: &Dataset,
    config: &TrainConfig,
    split_seed: u64,
) -> Result<(SurrogateSet, Vec<TargetReport>)> {
    let targets: Vec<usize> = (0..dataset.target_names.len()).collect();
    train_targets(dataset, &targets, config, split_seed)
}

pub fn train_targets(
    dataset: &Dataset,
    targets: &[usize],
    config: &TrainConfig,
    split_seed: u64,
) -> Result<(SurrogateSet, Vec<TargetReport>)> {
    if dataset.len() < 2 {
        return Err(Error::InvalidInput("dataset needs at least 2 rows".into()));
    }
    let (train_idx, test_idx) = sampler::train_test_split(dataset.len(), TEST_FRACTION, split_seed);
    let train = dataset.subset(&train_idx);
    let test = dataset.subset(&test_idx);
    let results = targets
        .par_iter()
        .map(|&j| {
            let ty = train.target_column(j);
            let vy = test.target_column(j);
            let (model, report) = fit_with_validation(
                &train.inputs,
                &ty,
                Some((&test.inputs, &vy)),
                dataset.feature_names.clone(),
                config,
            )?;
            let evaluation = evaluate(&model, (&train.inputs, &ty), (&test.inputs, &vy))?;
            Ok((
                model,
                TargetReport {
                    target: dataset.target_names[j].clone(),
                    evaluation,
                    rounds_kept: report.rounds_kept,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (models, reports): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((
        SurrogateSet {
            target_names: targets.iter().map(|&j| dataset.target_names[j].clone()).collect(),
            models,
        },
        reports,
    ))
}

impl SurrogateSet {
    pub fn model_path(dir: &Path, target: &str) -> PathBuf {
        dir.join(format!("{target}.json"))
    }

    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, model) in self.target_names.iter().zip(&self.models) {
            save_model(model, Self::model_path(dir, name))?;
        }
        Ok(())
    }

    /// Load `<dir>/<target>.json` for each requested target.
    pub fn load_dir(dir: impl AsRef<Path>, target_names: &[String]) -> Result<Self> {
        let dir = dir.as_ref();
        let models = target_names
            .iter()
            .map(|t| load_model(Self::model_path(dir, t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            target_names: target_names.to_vec(),
            models,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stump() -> GbtModel {
        let tree = Tree::from_preorder(&[
            PreorderNode::Split {
                feature: 0,
                threshold: 100.0,
            },
            PreorderNode::Leaf { value: -1.0 },
            PreorderNode::Leaf { value: 1.0 },
        ])
        .unwrap();
        GbtModel {
            trees: vec![tree],
            ..GbtModel::constant(0.0, default_names(2))
        }
    }

    fn random_rows(n: usize, dims: usize, hi: f64, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..dims).map(|_| rng.gen_range(0.0..hi)).collect())
            .collect()
    }

    #[test]
    fn stump_traversal() {
        let m = stump();
        assert_eq!(m.predict(&[50.0, 0.0]).unwrap(), -1.0);
        assert_eq!(m.predict(&[150.0, 0.0]).unwrap(), 1.0);
        assert_eq!(m.predict(&[100.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(
            m.predict(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn constant_targets_give_base_only_model() {
        let x = random_rows(30, 2, 10.0, 1);
        let y = vec![7.0; 30];
        let m = fit(&x, &y, &TrainConfig::default()).unwrap();
        assert!(m.trees.is_empty());
        assert_eq!(m.base_score, 7.0);
        assert_eq!(m.predict(&[3.0, 4.0]).unwrap(), 7.0);
    }

    #[test]
    fn base_only_model_predicts_base_everywhere() {
        let m = GbtModel::constant(12.5, default_names(3));
        for x in random_rows(10, 3, 1000.0, 2) {
            assert_eq!(m.predict(&x).unwrap(), 12.5);
        }
    }

    #[test]
    fn learns_a_linear_function() {
        let f = |x: &[f64]| 3.0 * x[0] + 2.0 * x[1];
        let train = random_rows(1000, 3, 600.0, 3);
        let test = random_rows(300, 3, 600.0, 4);
        let ty: Vec<f64> = train.iter().map(|x| f(x)).collect();
        let vy: Vec<f64> = test.iter().map(|x| f(x)).collect();
        let cfg = TrainConfig {
            n_rounds: 200,
            max_depth: 4,
            ..Default::default()
        };
        let m = fit(&train, &ty, &cfg).unwrap();
        let pred = m.predict_rows(&test).unwrap();
        let err = relative_error(&pred, &vy);
        assert!(err < 0.05, "held-out relative error {err}");
        assert!(m.trees.iter().all(|t| t.depth() <= 4));
    }

    #[test]
    fn training_loss_never_increases() {
        let x = random_rows(200, 2, 10.0, 5);
        let y: Vec<f64> = x.iter().map(|r| (r[0] * r[1]).sin() * 10.0 + r[0]).collect();
        for lambda in [0.0, 1.0, 10.0] {
            let cfg = TrainConfig {
                n_rounds: 40,
                l2_leaf_reg: lambda,
                ..Default::default()
            };
            let (_, report) = fit_with_validation(&x, &y, None, default_names(2), &cfg).unwrap();
            assert!(
                report.train_mse.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
                "{:?}",
                report.train_mse
            );
        }
    }

    #[test]
    fn interpolates_distinct_points() {
        for depth in 1..=4 {
            let n = 1usize << depth;
            let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 1.5]).collect();
            let y: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
            let cfg = TrainConfig {
                n_rounds: 200,
                max_depth: depth,
                learning_rate: 1.0,
                l2_leaf_reg: 0.0,
                min_split_gain: 0.0,
                early_stopping_rounds: None,
                target_transform: TargetTransform::Identity,
                sum_features: false,
                seed: 0,
            };
            let m = fit(&x, &y, &cfg).unwrap();
            for (row, target) in x.iter().zip(&y) {
                assert!((m.score(row) - target).abs() < 1e-9, "depth {depth}");
            }
        }
    }

    #[test]
    fn scaling_a_feature_with_its_thresholds_preserves_predictions() {
        let x = random_rows(200, 3, 100.0, 6);
        let y: Vec<f64> = x.iter().map(|r| r[0] * r[0] - 4.0 * r[2]).collect();
        let cfg = TrainConfig {
            n_rounds: 30,
            target_transform: TargetTransform::Identity,
            sum_features: false,
            ..Default::default()
        };
        let m = fit(&x, &y, &cfg).unwrap();
        let scale = 2.5;
        let mut scaled = m.clone();
        for tree in &mut scaled.trees {
            for node in &mut tree.nodes {
                if let Node::Split { feature: 1, threshold, .. } = node {
                    *threshold *= scale;
                }
            }
        }
        for row in random_rows(100, 3, 100.0, 7) {
            let mut s = row.clone();
            s[1] *= scale;
            assert_eq!(m.score(&row), scaled.score(&s));
        }
    }

    #[test]
    fn training_is_deterministic() {
        let x = random_rows(150, 3, 50.0, 8);
        let y: Vec<f64> = x.iter().map(|r| r[0] - r[1] * r[2]).collect();
        let cfg = TrainConfig { n_rounds: 20, ..Default::default() };
        assert_eq!(fit(&x, &y, &cfg).unwrap().to_json(), fit(&x, &y, &cfg).unwrap().to_json());
    }

    #[test]
    fn early_stopping_keeps_the_best_round() {
        let x = random_rows(300, 2, 10.0, 9);
        let noise = random_rows(300, 1, 1.0, 10);
        let y: Vec<f64> = x.iter().zip(&noise).map(|(r, e)| r[0] + 50.0 * e[0]).collect();
        let (tx, vx) = x.split_at(200);
        let (ty, vy) = y.split_at(200);
        let cfg = TrainConfig {
            n_rounds: 500,
            max_depth: 6,
            learning_rate: 0.5,
            early_stopping_rounds: Some(5),
            ..Default::default()
        };
        let (m, report) =
            fit_with_validation(tx, ty, Some((vx, vy)), default_names(2), &cfg).unwrap();
        assert!(report.stopped_early);
        assert_eq!(m.trees.len(), report.rounds_kept);
        let best = report.valid_error.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(report.valid_error[report.rounds_kept], best);
    }

    #[test]
    fn signed_log_round_trips() {
        let t = TargetTransform::SignedLog;
        for y in [0.0, 1e-3, 1.0, -7.5, 3.6e6, -2.2e9] {
            let back = t.inverse(t.forward(y));
            assert!((back - y).abs() <= 1e-12 * y.abs().max(1.0), "{y} -> {back}");
        }
        assert_eq!(t.forward(0.0), 0.0);
    }

    #[test]
    fn region_groups_follow_feature_names() {
        let names: Vec<String> = ["k_R1_ST", "k_R1_CT", "k_R2_ST", "k_R2_CT"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            region_groups(&names),
            vec![vec![0, 1], vec![2, 3], vec![0, 1, 2, 3]]
        );
        assert_eq!(region_groups(&names[..2]), vec![vec![0, 1]]);
        assert_eq!(region_groups(&default_names(0)), Vec::<Vec<usize>>::new());
    }

    #[test]
    fn sum_feature_captures_a_diagonal_boundary() {
        let x = random_rows(400, 2, 10.0, 13);
        let y: Vec<f64> = x.iter().map(|r| if r[0] + r[1] > 10.0 { 5.0 } else { 1.0 }).collect();
        let names = vec!["k_R1_A".to_string(), "k_R1_B".to_string()];
        let cfg = TrainConfig {
            n_rounds: 1,
            max_depth: 1,
            learning_rate: 1.0,
            l2_leaf_reg: 0.0,
            target_transform: TargetTransform::Identity,
            ..Default::default()
        };
        let (m, _) = fit_with_validation(&x, &y, None, names, &cfg).unwrap();
        assert_eq!(m.sum_groups, vec![vec![0, 1]]);
        for (row, target) in x.iter().zip(&y) {
            assert!((m.score(row) - target).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_error_edges() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        // Zero target uses the unit floor.
        let e = relative_error(&[5.0, 5.0], &[0.0, 10.0]);
        assert!(e.is_finite());
        assert_eq!(e, (5.0 + 0.5) / 2.0);
    }

    #[test]
    fn rejects_bad_training_input() {
        let cfg = TrainConfig::default();
        assert!(fit(&[vec![1.0]], &[1.0], &cfg).is_err());
        assert!(fit(&[vec![1.0], vec![f64::NAN]], &[1.0, 2.0], &cfg).is_err());
        assert!(fit(&[vec![1.0], vec![2.0]], &[1.0], &cfg).is_err());
        let bad = TrainConfig { learning_rate: 0.0, ..Default::default() };
        assert!(fit(&[vec![1.0], vec![2.0]], &[1.0, 2.0], &bad).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let x = random_rows(200, 3, 900.0, 11);
        let y: Vec<f64> = x.iter().map(|r| r[0] * 11961.0 / 7.0 - r[1].sqrt()).collect();
        let m = fit(&x, &y, &TrainConfig { n_rounds: 25, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        for row in random_rows(100, 3, 900.0, 12) {
            assert_eq!(back.score(&row).to_bits(), m.score(&row).to_bits());
        }
    }

    #[test]
    fn zero_tree_model_file_is_valid() {
        let m = GbtModel::constant(3.25, default_names(2));
        let back = GbtModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back.predict(&[0.0, 0.0]).unwrap(), 3.25);
    }

    #[test]
    fn corrupt_or_foreign_files_are_rejected() {
        let good = stump().to_json();
        assert!(GbtModel::from_json("{not json").is_err());
        assert!(GbtModel::from_json(&good[..good.len() / 2]).is_err());
        let wrong_version = good.replace("\"version\": 1", "\"version\": 99");
        let err = GbtModel::from_json(&wrong_version).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
        let mut value: serde_json::Value = serde_json::from_str(&good).unwrap();
        value["trees"][0].as_array_mut().unwrap().pop();
        assert!(GbtModel::from_json(&value.to_string()).is_err());
        value["trees"][0]
            .as_array_mut()
            .unwrap()
            .extend([serde_json::json!({"leaf": {"value": 1.0}}), serde_json::json!({"leaf": {"value": 2.0}})]);
        assert!(GbtModel::from_json(&value.to_string()).is_err());
        let bad_feature = good.replace("\"feature\": 0", "\"feature\": 7");
        assert!(GbtModel::from_json(&bad_feature).is_err());
    }
}
