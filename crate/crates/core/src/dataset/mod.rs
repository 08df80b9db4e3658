//! Tabular datasets with designated sensitive features.
//!
//! A [`Dataset`] is immutable once built. Every [`Record`] carries a stable
//! `id` (its position in the dataset it was first loaded or generated into)
//! which survives filtering, so predictors keyed by row can still find it.

mod csv_io;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_csv, load_schema, read_csv, write_csv};
pub use synthetic::{
    generate_insurance_example, generate_population, insurance_schema, InsuranceParams, LabelModel, PopulationParams,
    TruncatedNormal, EXAMPLE_SEED,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("column '{0}' missing from header")]
    MissingColumn(String),
    #[error("row {row}, column '{column}': missing value")]
    MissingCell { row: usize, column: String },
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    Parse { row: usize, column: String, value: String },
    #[error("row {row}, column '{column}': '{value}' is not a binary label (expected 0 or 1)")]
    NonBinary { row: usize, column: String, value: String },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowShape { row: usize, expected: usize, found: usize },
    #[error("dataset has no rows")]
    Empty,
    #[error("group {0} has no rows")]
    EmptyGroup(GroupKey),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Column roles of a dataset.
///
/// Serialized as the JSON sidecar
/// `{"features": [...], "sensitive": [...], "label": "...", "prediction": "..." | null}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    /// Real-valued non-sensitive features, in order.
    pub features: Vec<String>,
    /// Categorical sensitive features, in order.
    pub sensitive: Vec<String>,
    /// Binary ground-truth column.
    pub label: String,
    /// Optional precomputed binary prediction column.
    #[serde(default)]
    pub prediction: Option<String>,
}

impl Schema {
    pub fn new(
        features: Vec<String>,
        sensitive: Vec<String>,
        label: impl Into<String>,
        prediction: Option<String>,
    ) -> Result<Self, DatasetError> {
        let schema = Schema {
            features,
            sensitive,
            label: label.into(),
            prediction,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.features.is_empty() {
            return Err(DatasetError::Schema("no non-sensitive features".into()));
        }
        if self.sensitive.is_empty() {
            return Err(DatasetError::Schema("no sensitive features".into()));
        }
        let mut seen = HashSet::new();
        for name in self.column_names() {
            if !seen.insert(name) {
                return Err(DatasetError::Schema(format!("duplicate column name '{name}'")));
            }
        }
        Ok(())
    }

    /// All column names in canonical order: features, sensitive, label, prediction.
    pub fn column_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.features.iter().map(String::as_str).collect();
        names.extend(self.sensitive.iter().map(String::as_str));
        names.push(&self.label);
        if let Some(p) = &self.prediction {
            names.push(p);
        }
        names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f == name)
    }
}

/// One assignment of every sensitive feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupKey(pub Vec<String>);

impl GroupKey {
    pub fn new<S: Into<String>>(values: impl IntoIterator<Item = S>) -> Self {
        GroupKey(values.into_iter().map(Into::into).collect())
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: usize,
    pub x: Vec<f64>,
    pub a: GroupKey,
    pub y: u8,
    pub y_hat: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    records: Vec<Record>,
    weights: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<Record>, weights: Option<Vec<f64>>) -> Result<Self, DatasetError> {
        schema.validate()?;
        if records.is_empty() {
            return Err(DatasetError::Empty);
        }
        let k = schema.features.len();
        let m = schema.sensitive.len();
        for (i, r) in records.iter().enumerate() {
            if r.x.len() != k || r.a.arity() != m {
                return Err(DatasetError::RowShape {
                    row: i + 1,
                    expected: k + m,
                    found: r.x.len() + r.a.arity(),
                });
            }
            if r.y > 1 {
                return Err(DatasetError::NonBinary {
                    row: i + 1,
                    column: schema.label.clone(),
                    value: r.y.to_string(),
                });
            }
            if let Some(p) = r.y_hat {
                if p > 1 {
                    return Err(DatasetError::NonBinary {
                        row: i + 1,
                        column: schema.prediction.clone().unwrap_or_default(),
                        value: p.to_string(),
                    });
                }
            }
            if r.x.iter().any(|v| !v.is_finite()) {
                return Err(DatasetError::Schema(format!("row {}: non-finite feature", i + 1)));
            }
        }
        if let Some(w) = &weights {
            validate_weights(w, records.len())?;
        }
        Ok(Dataset {
            schema,
            records,
            weights,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of non-sensitive features.
    pub fn k(&self) -> usize {
        self.schema.features.len()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of row `i`; 1 when the dataset is unweighted.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Per-row weights, materialized (all ones when unweighted).
    pub fn weight_vec(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0; self.len()],
        }
    }

    pub fn total_weight(&self) -> f64 {
        match &self.weights {
            Some(w) => w.iter().sum(),
            None => self.len() as f64,
        }
    }

    pub fn with_weights(&self, weights: Option<Vec<f64>>) -> Result<Dataset, DatasetError> {
        if let Some(w) = &weights {
            validate_weights(w, self.len())?;
        }
        Ok(Dataset {
            schema: self.schema.clone(),
            records: self.records.clone(),
            weights,
        })
    }

    /// Replace the records, keeping schema and weights.
    pub fn with_records(&self, records: Vec<Record>) -> Result<Dataset, DatasetError> {
        Dataset::new(self.schema.clone(), records, self.weights.clone())
    }

    pub fn with_schema(&self, schema: Schema) -> Result<Dataset, DatasetError> {
        Dataset::new(schema, self.records.clone(), self.weights.clone())
    }

    /// Feature column `j` as a vector.
    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.x[j]).collect()
    }

    /// Distinct sensitive assignments in first-occurrence order.
    pub fn group_keys(&self) -> Vec<GroupKey> {
        let mut seen = HashSet::new();
        let mut keys = Vec::new();
        for r in &self.records {
            if seen.insert(&r.a) {
                keys.push(r.a.clone());
            }
        }
        keys
    }

    /// Rows whose sensitive vector equals `g`, in order, with their weights.
    pub fn filter_group(&self, g: &GroupKey) -> Result<Dataset, DatasetError> {
        self.filter(|r| &r.a == g)
            .ok_or_else(|| DatasetError::EmptyGroup(g.clone()))
    }

    /// Rows satisfying `keep`, or `None` when nothing matches.
    pub fn filter(&self, mut keep: impl FnMut(&Record) -> bool) -> Option<Dataset> {
        let mut records = Vec::new();
        let mut weights = self.weights.as_ref().map(|_| Vec::new());
        for (i, r) in self.records.iter().enumerate() {
            if keep(r) {
                records.push(r.clone());
                if let (Some(out), Some(w)) = (weights.as_mut(), self.weights.as_ref()) {
                    out.push(w[i]);
                }
            }
        }
        if records.is_empty() {
            return None;
        }
        // A weighted filter may select only zero-weight rows; fall back to
        // treating it as empty so downstream rates stay defined.
        if let Some(w) = &weights {
            if !w.iter().any(|&v| v > 0.0) {
                return None;
            }
        }
        Some(Dataset {
            schema: self.schema.clone(),
            records,
            weights,
        })
    }
}

fn validate_weights(w: &[f64], n: usize) -> Result<(), DatasetError> {
    if w.len() != n {
        return Err(DatasetError::Weights(format!("{} weights for {} rows", w.len(), n)));
    }
    if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(DatasetError::Weights("weights must be finite and non-negative".into()));
    }
    if !w.iter().any(|&v| v > 0.0) {
        return Err(DatasetError::Weights("no strictly positive weight".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> Schema {
        Schema::new(vec!["x1".into()], vec!["race".into(), "sex".into()], "y", None).unwrap()
    }

    fn rec(id: usize, x: f64, race: &str, sex: &str, y: u8) -> Record {
        Record {
            id,
            x: vec![x],
            a: GroupKey::new([race, sex]),
            y,
            y_hat: None,
        }
    }

    #[test]
    fn schema_rejects_duplicates_and_empty_roles() {
        assert!(Schema::new(vec!["a".into()], vec!["a".into()], "y", None).is_err());
        assert!(Schema::new(vec![], vec!["s".into()], "y", None).is_err());
        assert!(Schema::new(vec!["a".into()], vec![], "y", None).is_err());
        assert!(Schema::new(vec!["a".into()], vec!["s".into()], "a", None).is_err());
        assert!(Schema::new(vec!["a".into()], vec!["s".into()], "y", Some("y".into())).is_err());
    }

    #[test]
    fn group_keys_intersectional_first_occurrence() {
        let rows = vec![
            rec(0, 0.1, "b", "m", 1),
            rec(1, 0.2, "w", "f", 0),
            rec(2, 0.3, "b", "m", 0),
            rec(3, 0.4, "w", "m", 1),
            rec(4, 0.5, "b", "f", 1),
        ];
        let d = Dataset::new(schema2(), rows, None).unwrap();
        let keys = d.group_keys();
        assert_eq!(
            keys,
            vec![
                GroupKey::new(["b", "m"]),
                GroupKey::new(["w", "f"]),
                GroupKey::new(["w", "m"]),
                GroupKey::new(["b", "f"]),
            ]
        );
    }

    #[test]
    fn absent_combination_not_reported() {
        let rows = vec![
            rec(0, 0.1, "b", "m", 1),
            rec(1, 0.2, "w", "f", 0),
            rec(2, 0.3, "w", "m", 0),
        ];
        let d = Dataset::new(schema2(), rows, None).unwrap();
        assert_eq!(d.group_keys().len(), 3);
        assert!(matches!(
            d.filter_group(&GroupKey::new(["b", "f"])),
            Err(DatasetError::EmptyGroup(_))
        ));
    }

    #[test]
    fn filter_preserves_order_and_weights() {
        let rows = vec![
            rec(0, 0.1, "b", "m", 1),
            rec(1, 0.2, "w", "f", 0),
            rec(2, 0.3, "b", "m", 0),
        ];
        let d = Dataset::new(schema2(), rows, Some(vec![1.0, 2.0, 3.0])).unwrap();
        let g = d.filter_group(&GroupKey::new(["b", "m"])).unwrap();
        assert_eq!(g.records().iter().map(|r| r.id).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(g.weights().unwrap(), &[1.0, 3.0]);
    }

    #[test]
    fn weights_need_a_positive_entry() {
        let rows = vec![rec(0, 0.1, "b", "m", 1)];
        assert!(Dataset::new(schema2(), rows.clone(), Some(vec![0.0])).is_err());
        assert!(Dataset::new(schema2(), rows.clone(), Some(vec![-1.0])).is_err());
        assert!(Dataset::new(schema2(), rows, Some(vec![0.5])).is_ok());
    }

    #[test]
    fn label_must_be_binary() {
        let mut r = rec(0, 0.1, "b", "m", 1);
        r.y = 2;
        assert!(matches!(
            Dataset::new(schema2(), vec![r], None),
            Err(DatasetError::NonBinary { row: 1, .. })
        ));
    }
}
