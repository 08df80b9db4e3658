//! Group-fairness metrics computed exactly by (weighted) counting.
//!
//! Groups with no mass in a stratum drop out of that stratum's max/min.
//! Ties at an extremum go to the first group in `group_keys` order; ties
//! between strata go to class 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, Predictor};
use crate::dataset::{Dataset, DatasetError, GroupKey};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("need at least two sensitive groups, found {0}")]
    SingleGroup(usize),
    #[error("group {0} has no rows")]
    EmptyGroup(GroupKey),
    #[error("no stratum has two or more groups")]
    NoUsableStratum,
    #[error("predictions: {0}")]
    Classifier(#[from] ClassifierError),
    #[error("dataset: {0}")]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    StatisticalParity,
    EqualizedOdds,
    PredictiveParity,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [
        MetricKind::StatisticalParity,
        MetricKind::EqualizedOdds,
        MetricKind::PredictiveParity,
    ];

    pub fn short(&self) -> &'static str {
        match self {
            MetricKind::StatisticalParity => "sp",
            MetricKind::EqualizedOdds => "eo",
            MetricKind::PredictiveParity => "pp",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MetricKind::StatisticalParity => "statistical parity",
            MetricKind::EqualizedOdds => "equalized odds",
            MetricKind::PredictiveParity => "predictive parity",
        };
        f.write_str(s)
    }
}

impl FromStr for MetricKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sp" | "statistical-parity" | "statisticalparity" => Ok(MetricKind::StatisticalParity),
            "eo" | "equalized-odds" | "equalizedodds" => Ok(MetricKind::EqualizedOdds),
            "pp" | "predictive-parity" | "predictiveparity" => Ok(MetricKind::PredictiveParity),
            other => Err(format!("unknown metric '{other}' (expected sp, eo or pp)")),
        }
    }
}

/// One conditional rate. `class` is the conditioning stratum (Y for
/// equalized odds, the prediction for predictive parity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRate {
    pub group: GroupKey,
    pub class: Option<u8>,
    pub rate: f64,
    /// Total weight of the group within the stratum.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub kind: MetricKind,
    pub value: f64,
    pub a_max: GroupKey,
    pub a_min: GroupKey,
    pub rates: Vec<GroupRate>,
    pub conditioning_class: Option<u8>,
}

impl MetricResult {
    /// Rate of `g` in the realized stratum.
    pub fn rate_of(&self, g: &GroupKey) -> Option<f64> {
        self.rates
            .iter()
            .find(|r| &r.group == g && r.class == self.conditioning_class)
            .map(|r| r.rate)
    }

    pub fn p_max(&self) -> f64 {
        self.rate_of(&self.a_max).unwrap_or(f64::NAN)
    }

    pub fn p_min(&self) -> f64 {
        self.rate_of(&self.a_min).unwrap_or(f64::NAN)
    }
}

/// Weighted fraction of group-`g` rows predicted positive.
pub fn positive_rate<P: Predictor + ?Sized>(m: &P, d: &Dataset, g: &GroupKey) -> Result<f64, MetricError> {
    let (mut pos, mut total) = (0.0, 0.0);
    for (i, r) in d.records().iter().enumerate() {
        if &r.a != g {
            continue;
        }
        let w = d.weight(i);
        total += w;
        if m.predict(r)? == 1 {
            pos += w;
        }
    }
    if total > 0.0 {
        Ok(pos / total)
    } else {
        Err(MetricError::EmptyGroup(g.clone()))
    }
}

/// Rates of `outcome` per group over rows accepted by `in_stratum`.
fn stratum_rates(
    d: &Dataset,
    keys: &[GroupKey],
    class: Option<u8>,
    mut in_stratum: impl FnMut(usize) -> bool,
    outcome: &[u8],
) -> Vec<GroupRate> {
    let mut pos = vec![0.0; keys.len()];
    let mut mass = vec![0.0; keys.len()];
    for (i, r) in d.records().iter().enumerate() {
        if !in_stratum(i) {
            continue;
        }
        let g = keys.iter().position(|k| k == &r.a).expect("key of an observed row");
        let w = d.weight(i);
        mass[g] += w;
        if outcome[i] == 1 {
            pos[g] += w;
        }
    }
    keys.iter()
        .enumerate()
        .filter(|(g, _)| mass[*g] > 0.0)
        .map(|(g, k)| GroupRate {
            group: k.clone(),
            class,
            rate: pos[g] / mass[g],
            mass: mass[g],
        })
        .collect()
}

/// Max-minus-min over one stratum's rates, first-occurrence tie-breaking.
fn extremes(rates: &[GroupRate]) -> Option<(f64, usize, usize)> {
    if rates.len() < 2 {
        return None;
    }
    let (mut hi, mut lo) = (0, 0);
    for (i, r) in rates.iter().enumerate() {
        if r.rate > rates[hi].rate {
            hi = i;
        }
        if r.rate < rates[lo].rate {
            lo = i;
        }
    }
    Some(((rates[hi].rate - rates[lo].rate).max(0.0), hi, lo))
}

pub fn statistical_parity<P: Predictor + ?Sized>(m: &P, d: &Dataset) -> Result<MetricResult, MetricError> {
    let preds = m.predict_all(d)?;
    statistical_parity_from(d, &preds)
}

pub fn statistical_parity_from(d: &Dataset, preds: &[u8]) -> Result<MetricResult, MetricError> {
    let keys = d.group_keys();
    let rates = stratum_rates(d, &keys, None, |_| true, preds);
    let (value, hi, lo) = extremes(&rates).ok_or(MetricError::SingleGroup(rates.len()))?;
    Ok(MetricResult {
        kind: MetricKind::StatisticalParity,
        value,
        a_max: rates[hi].group.clone(),
        a_min: rates[lo].group.clone(),
        rates,
        conditioning_class: None,
    })
}

/// Gap over strata `c in {1, 0}` of `Pr[outcome=1 | A, cond=c]`.
fn stratified(kind: MetricKind, d: &Dataset, cond: &[u8], outcome: &[u8]) -> Result<MetricResult, MetricError> {
    let keys = d.group_keys();
    let mut all_rates = Vec::new();
    let mut best: Option<(f64, u8, GroupKey, GroupKey)> = None;
    for c in [1u8, 0u8] {
        let rates = stratum_rates(d, &keys, Some(c), |i| cond[i] == c, outcome);
        if let Some((gap, hi, lo)) = extremes(&rates) {
            if best.as_ref().is_none_or(|(g, ..)| gap > *g) {
                best = Some((gap, c, rates[hi].group.clone(), rates[lo].group.clone()));
            }
        }
        all_rates.extend(rates);
    }
    let (value, class, a_max, a_min) = best.ok_or(MetricError::NoUsableStratum)?;
    Ok(MetricResult {
        kind,
        value,
        a_max,
        a_min,
        rates: all_rates,
        conditioning_class: Some(class),
    })
}

pub fn equalized_odds<P: Predictor + ?Sized>(m: &P, d: &Dataset) -> Result<MetricResult, MetricError> {
    let preds = m.predict_all(d)?;
    equalized_odds_from(d, &preds)
}

pub fn equalized_odds_from(d: &Dataset, preds: &[u8]) -> Result<MetricResult, MetricError> {
    let labels: Vec<u8> = d.records().iter().map(|r| r.y).collect();
    stratified(MetricKind::EqualizedOdds, d, &labels, preds)
}

pub fn predictive_parity<P: Predictor + ?Sized>(m: &P, d: &Dataset) -> Result<MetricResult, MetricError> {
    let preds = m.predict_all(d)?;
    predictive_parity_from(d, &preds)
}

pub fn predictive_parity_from(d: &Dataset, preds: &[u8]) -> Result<MetricResult, MetricError> {
    let labels: Vec<u8> = d.records().iter().map(|r| r.y).collect();
    stratified(MetricKind::PredictiveParity, d, preds, &labels)
}

pub fn compute<P: Predictor + ?Sized>(kind: MetricKind, m: &P, d: &Dataset) -> Result<MetricResult, MetricError> {
    let preds = m.predict_all(d)?;
    compute_from(kind, d, &preds)
}

pub fn compute_from(kind: MetricKind, d: &Dataset, preds: &[u8]) -> Result<MetricResult, MetricError> {
    match kind {
        MetricKind::StatisticalParity => statistical_parity_from(d, preds),
        MetricKind::EqualizedOdds => equalized_odds_from(d, preds),
        MetricKind::PredictiveParity => predictive_parity_from(d, preds),
    }
}
