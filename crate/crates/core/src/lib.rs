//! Fairness influence auditing for binary classifiers.
//!
//! The bias of a classifier under a group-fairness metric (statistical parity,
//! equalized odds, predictive parity) is split into signed contributions of
//! every subset of non-sensitive features up to a chosen order. The split
//! comes from a set-additive surrogate of the classifier, learned per
//! sensitive group by backfitting tensor-product cubic B-splines, whose
//! component covariances with the classifier output are combined across the
//! most and least favored groups.
//!
//! Modules, bottom-up:
//! - [`dataset`]: schema, CSV ingestion, group filtering, synthetic generators
//! - [`classifier`]: predictors audited by everything else
//! - [`metrics`]: exact group-fairness metrics by counting
//! - [`gsa`]: B-spline basis, backfitting, covariance variance shares
//! - [`fif`]: fairness influence functions and their reports
//! - [`oracle`]: brute-force ANOVA and identity checks
//! - [`interventions`]: reweighing and label poisoning
//! - [`report`]: JSON/CSV/SVG rendering shared by the CLI
//! - [`checks`]: oracle fixture suite behind `fifaudit check`

pub mod checks;
pub mod classifier;
pub mod dataset;
pub mod fif;
pub mod gsa;
pub mod interventions;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod report;

pub use classifier::{Predictor, ThresholdTree, TreeNode};
pub use dataset::{Dataset, GroupKey, Record, Schema};
pub use fif::{FifEntry, FifOptions, FifReport};
pub use gsa::{ComponentModel, SubsetIndex};
pub use metrics::{MetricKind, MetricResult};
