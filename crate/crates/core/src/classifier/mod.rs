//! Black-box binary predictors audited by the metrics and FIF code.
//!
//! Everything downstream sees a classifier only through [`Predictor`]: a pure
//! map from one record `(x, a)` to a bit. Predictors never read the label.

mod logistic;
mod tree;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, GroupKey, Record, Schema};

pub use logistic::{train_logistic, LogisticFit, LogisticModel, LogisticOptions};
pub use tree::{build_fixed_tree, train_tree, ThresholdTree, TreeNode, TreeOptions};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("tree references unknown feature '{0}'")]
    UnknownFeature(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),
    #[error("training data has a single label class ({0})")]
    SingleClass(u8),
    #[error("training needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("dataset has no prediction column")]
    MissingPredictionColumn,
    #[error("row {0} has no stored prediction")]
    MissingPrediction(usize),
    #[error("row {0} is not part of the dataset the prediction column came from")]
    UnknownRow(usize),
    #[error("unknown sensitive value {0} for an encoder trained without it")]
    UnknownCategory(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    FixedTree,
    Logistic,
    Tree,
    Column,
    Override,
    Function,
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PredictorKind::FixedTree => "fixed-tree",
            PredictorKind::Logistic => "logistic",
            PredictorKind::Tree => "tree",
            PredictorKind::Column => "column",
            PredictorKind::Override => "override",
            PredictorKind::Function => "function",
        };
        f.write_str(s)
    }
}

pub trait Predictor: Send + Sync {
    fn predict(&self, row: &Record) -> Result<u8, ClassifierError>;

    fn kind(&self) -> PredictorKind;

    fn predict_all(&self, d: &Dataset) -> Result<Vec<u8>, ClassifierError> {
        d.records().iter().map(|r| self.predict(r)).collect()
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn predict(&self, row: &Record) -> Result<u8, ClassifierError> {
        (**self).predict(row)
    }
    fn kind(&self) -> PredictorKind {
        (**self).kind()
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, row: &Record) -> Result<u8, ClassifierError> {
        (**self).predict(row)
    }
    fn kind(&self) -> PredictorKind {
        (**self).kind()
    }
}

/// Wraps a closure over `(x, a)`. Used for constructed fixtures.
pub struct FnPredictor<F>(pub F);

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[f64], &GroupKey) -> u8 + Send + Sync,
{
    fn predict(&self, row: &Record) -> Result<u8, ClassifierError> {
        Ok(u8::from((self.0)(&row.x, &row.a) != 0))
    }
    fn kind(&self) -> PredictorKind {
        PredictorKind::Function
    }
}

/// Replays the stored prediction column of one dataset.
#[derive(Debug, Clone)]
pub struct PredictionColumn {
    by_id: HashMap<usize, (Vec<f64>, GroupKey, u8)>,
}

pub fn from_prediction_column(d: &Dataset) -> Result<PredictionColumn, ClassifierError> {
    if d.schema().prediction.is_none() {
        return Err(ClassifierError::MissingPredictionColumn);
    }
    let mut by_id = HashMap::with_capacity(d.len());
    for r in d.records() {
        let p = r.y_hat.ok_or(ClassifierError::MissingPrediction(r.id))?;
        by_id.insert(r.id, (r.x.clone(), r.a.clone(), p));
    }
    Ok(PredictionColumn { by_id })
}

impl Predictor for PredictionColumn {
    fn predict(&self, row: &Record) -> Result<u8, ClassifierError> {
        match self.by_id.get(&row.id) {
            Some((x, a, p)) if *x == row.x && *a == row.a => Ok(*p),
            _ => Err(ClassifierError::UnknownRow(row.id)),
        }
    }
    fn kind(&self) -> PredictorKind {
        PredictorKind::Column
    }
}

/// An inner predictor with per-row (by record id) replacement outputs.
pub struct OverridePredictor<P> {
    pub inner: P,
    pub overrides: HashMap<usize, u8>,
}

impl<P: Predictor> Predictor for OverridePredictor<P> {
    fn predict(&self, row: &Record) -> Result<u8, ClassifierError> {
        match self.overrides.get(&row.id) {
            Some(&p) => Ok(p),
            None => self.inner.predict(row),
        }
    }
    fn kind(&self) -> PredictorKind {
        PredictorKind::Override
    }
}

/// Maps a record to the design vector seen by trainable models: the
/// non-sensitive features, then (if opted in) one indicator per observed
/// sensitive category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub feature_names: Vec<String>,
    /// Per sensitive feature: its name and observed levels. Empty when
    /// sensitive features are excluded.
    pub sensitive_levels: Vec<(String, Vec<String>)>,
}

impl FeatureEncoder {
    pub fn new(d: &Dataset, include_sensitive: bool) -> Self {
        let schema: &Schema = d.schema();
        let mut sensitive_levels = Vec::new();
        if include_sensitive {
            for (j, name) in schema.sensitive.iter().enumerate() {
                let mut levels: Vec<String> = Vec::new();
                for r in d.records() {
                    if !levels.contains(&r.a.0[j]) {
                        levels.push(r.a.0[j].clone());
                    }
                }
                sensitive_levels.push((name.clone(), levels));
            }
        }
        FeatureEncoder {
            feature_names: schema.features.clone(),
            sensitive_levels,
        }
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len() + self.sensitive_levels.iter().map(|(_, l)| l.len()).sum::<usize>()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = self.feature_names.clone();
        for (name, levels) in &self.sensitive_levels {
            names.extend(levels.iter().map(|l| format!("{name}={l}")));
        }
        names
    }

    pub fn encode(&self, row: &Record) -> Result<Vec<f64>, ClassifierError> {
        let mut v = row.x.clone();
        for (j, (_, levels)) in self.sensitive_levels.iter().enumerate() {
            let value = &row.a.0[j];
            if !levels.contains(value) {
                return Err(ClassifierError::UnknownCategory(value.clone()));
            }
            v.extend(levels.iter().map(|l| if l == value { 1.0 } else { 0.0 }));
        }
        Ok(v)
    }
}

/// Serializable form of any trainable or fixed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum SavedModel {
    FixedTree { root: TreeNode },
    Tree { encoder: FeatureEncoder, root: TreeNode },
    Logistic(LogisticModel),
}

impl SavedModel {
    pub fn into_predictor(self, schema: &Schema) -> Result<Box<dyn Predictor>, ClassifierError> {
        Ok(match self {
            SavedModel::FixedTree { root } => Box::new(build_fixed_tree(&root, schema)?),
            SavedModel::Tree { encoder, root } => {
                Box::new(ThresholdTree::from_encoder(&root, encoder, PredictorKind::Tree)?)
            }
            SavedModel::Logistic(m) => Box::new(m),
        })
    }
}
