//! Set-additive surrogates of a group-conditioned classifier.
//!
//! Within one sensitive group the classifier output `g(x)` is approximated
//! as `f0 + Σ_S f_S(x_S)` over all feature subsets `S` with `|S| ≤ λ`.
//! Components are tensor-product cubic B-splines (or indicators for
//! features with few levels) fit by backfitting, and each component's
//! share of the output variance is its covariance with `g`.

mod backfit;
mod bspline;
mod component;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::ClassifierError;

pub use backfit::{
    backfit, backfit_targets, component_covariance, variance_shares, variance_shares_for_targets, BackfitOptions,
    ComponentModel, VarianceShare,
};
pub use bspline::{bspline_basis, KnotVector, MarginalBasis, CUBIC, MAX_INDICATOR_LEVELS};
pub use component::{evaluate_component, fit_spline_component, SplineComponent};

/// Largest supported component order.
pub const MAX_ORDER: usize = 3;

#[derive(Debug, Error)]
pub enum GsaError {
    #[error("order {lambda} is out of range for {k} features (1..={max})", max = MAX_ORDER)]
    LambdaOutOfRange { lambda: usize, k: usize },
    #[error("backfitting needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("normal equations for {subset} are singular; use a positive ridge")]
    Singular { subset: SubsetIndex },
    #[error("no targets to fit")]
    NoTargets,
    #[error("subset {0} is not part of the model")]
    UnknownSubset(SubsetIndex),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// A non-empty, strictly increasing set of 0-based feature indices.
/// Displayed 1-based, e.g. `{1,3}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetIndex(Vec<usize>);

impl SubsetIndex {
    /// `None` unless `indices` is non-empty and strictly increasing.
    pub fn new(indices: Vec<usize>) -> Option<Self> {
        if indices.is_empty() || indices.windows(2).any(|w| w[0] >= w[1]) {
            None
        } else {
            Some(SubsetIndex(indices))
        }
    }

    pub fn single(j: usize) -> Self {
        SubsetIndex(vec![j])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    /// Whether every index of `self` also belongs to `other`.
    pub fn is_subset_of(&self, other: &SubsetIndex) -> bool {
        self.0.iter().all(|&j| other.contains(j))
    }

    /// The chosen coordinates of a full feature vector.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&j| x[j]).collect()
    }

    pub fn names(&self, feature_names: &[String]) -> Vec<String> {
        self.0.iter().map(|&j| feature_names[j].clone()).collect()
    }
}

impl fmt::Display for SubsetIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        f.write_str("}")
    }
}

/// All subsets of `0..k` with `1 ≤ |S| ≤ lambda`, by size then
/// lexicographically.
pub fn enumerate_subsets(k: usize, lambda: usize) -> Result<Vec<SubsetIndex>, GsaError> {
    if lambda == 0 || lambda > k || lambda > MAX_ORDER {
        return Err(GsaError::LambdaOutOfRange { lambda, k });
    }
    let mut out = Vec::new();
    for size in 1..=lambda {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            out.push(SubsetIndex(combo.clone()));
            // Advance to the next combination in lexicographic order.
            let mut i = size;
            while i > 0 && combo[i - 1] == k - size + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for t in i..size {
                combo[t] = combo[t - 1] + 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shown(v: &[SubsetIndex]) -> Vec<String> {
        v.iter().map(ToString::to_string).collect()
    }

    fn binomial(n: usize, r: usize) -> usize {
        (0..r).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn enumerates_in_size_then_lexicographic_order() {
        assert_eq!(shown(&enumerate_subsets(3, 1).unwrap()), ["{1}", "{2}", "{3}"]);
        assert_eq!(
            shown(&enumerate_subsets(3, 2).unwrap()),
            ["{1}", "{2}", "{3}", "{1,2}", "{1,3}", "{2,3}"]
        );
        assert_eq!(shown(&enumerate_subsets(3, 3).unwrap()).last().unwrap(), "{1,2,3}");
    }

    #[test]
    fn subset_counts_are_binomial_sums() {
        for k in 1..=12 {
            for lambda in 1..=k.min(MAX_ORDER) {
                let got = enumerate_subsets(k, lambda).unwrap();
                let expected: usize = (1..=lambda).map(|j| binomial(k, j)).sum();
                assert_eq!(got.len(), expected);
                let mut sorted = got.clone();
                sorted.dedup();
                assert_eq!(sorted.len(), got.len());
                assert!(got.iter().all(|s| s.indices().iter().all(|&j| j < k)));
            }
        }
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(enumerate_subsets(3, 0).is_err());
        assert!(enumerate_subsets(2, 3).is_err());
        assert!(enumerate_subsets(6, 4).is_err());
    }

    #[test]
    fn subset_index_validation() {
        assert!(SubsetIndex::new(vec![]).is_none());
        assert!(SubsetIndex::new(vec![2, 1]).is_none());
        assert!(SubsetIndex::new(vec![1, 1]).is_none());
        let s = SubsetIndex::new(vec![0, 2]).unwrap();
        assert_eq!(s.project(&[5.0, 6.0, 7.0]), vec![5.0, 7.0]);
        assert!(SubsetIndex::single(2).is_subset_of(&s));
        assert!(!SubsetIndex::single(1).is_subset_of(&s));
    }
}
