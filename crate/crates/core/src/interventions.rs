//! Data-level interventions and their before/after FIF footprint.
//!
//! [`reweigh`] is the usual group-label reweighing pre-processing step.
//! [`poison_labels`] is a targeted label-flipping attack: a simple lever that
//! raises bias, standing in for optimization-based poisoning.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{train_logistic, train_tree, ClassifierError, LogisticOptions, Predictor, TreeOptions};
use crate::dataset::{Dataset, DatasetError, GroupKey};
use crate::fif::{fif, FifError, FifOptions, FifReport};
use crate::gsa::SubsetIndex;
use crate::metrics::{self, MetricError, MetricKind, MetricResult};

#[derive(Debug, Error)]
pub enum InterventionError {
    #[error("reweighing needs both label classes and two groups")]
    Unbalanced,
    #[error("poisoning fraction must lie in (0, 1], got {0}")]
    Fraction(f64),
    #[error("least favored group {0} has no positive labels to flip")]
    NothingToFlip(GroupKey),
    #[error("reports differ in {0}")]
    Mismatch(&'static str),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Fif(#[from] FifError),
}

/// Group-label cell with no rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmptyCell {
    pub group: GroupKey,
    pub y: u8,
}

/// Weights each row by `P(A=a) P(Y=y) / P(A=a, Y=y)` (empirical, using any
/// existing weights as frequencies), multiplied into existing weights.
/// Also returns the `(a, y)` cells that have no rows; they get no weight.
pub fn reweigh(d: &Dataset) -> Result<(Dataset, Vec<EmptyCell>), InterventionError> {
    let keys = d.group_keys();
    let w = d.weight_vec();
    let total: f64 = w.iter().sum();
    let mut group_mass = vec![0.0; keys.len()];
    let mut label_mass = [0.0; 2];
    let mut cell_mass = vec![[0.0; 2]; keys.len()];
    let group_of: Vec<usize> = d
        .records()
        .iter()
        .map(|r| keys.iter().position(|k| k == &r.a).expect("observed key"))
        .collect();
    for (i, r) in d.records().iter().enumerate() {
        let g = group_of[i];
        group_mass[g] += w[i];
        label_mass[r.y as usize] += w[i];
        cell_mass[g][r.y as usize] += w[i];
    }
    if keys.len() < 2 || label_mass.contains(&0.0) {
        return Err(InterventionError::Unbalanced);
    }
    let mut empty = Vec::new();
    for (g, key) in keys.iter().enumerate() {
        for y in 0..2u8 {
            if cell_mass[g][y as usize] == 0.0 {
                empty.push(EmptyCell { group: key.clone(), y });
            }
        }
    }
    let weights: Vec<f64> = d
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let g = group_of[i];
            let cell = cell_mass[g][r.y as usize];
            if cell == 0.0 {
                0.0
            } else {
                w[i] * (group_mass[g] / total) * (label_mass[r.y as usize] / total) / (cell / total)
            }
        })
        .collect();
    Ok((d.with_weights(Some(weights))?, empty))
}

/// What [`poison_labels`] changed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoisonSummary {
    pub group: GroupKey,
    /// Record ids whose label went from 1 to 0, ascending.
    pub flipped: Vec<usize>,
}

/// Flips `ceil(fraction * count)` positive labels of the group with the
/// lowest base rate of `Y` (first such group on ties), chosen by seed.
pub fn poison_labels(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, PoisonSummary), InterventionError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(InterventionError::Fraction(fraction));
    }
    let labels: Vec<u8> = d.records().iter().map(|r| r.y).collect();
    let base = metrics::statistical_parity_from(d, &labels)?;
    let target = base.a_min.clone();
    let candidates: Vec<usize> = (0..d.len())
        .filter(|&i| d.records()[i].a == target && d.records()[i].y == 1)
        .collect();
    if candidates.is_empty() {
        return Err(InterventionError::NothingToFlip(target));
    }
    let count = ((fraction * candidates.len() as f64).ceil() as usize).min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|j| candidates[j])
        .collect();
    chosen.sort_unstable();
    let mut records = d.records().to_vec();
    for &i in &chosen {
        records[i].y = 0;
    }
    let flipped = chosen.iter().map(|&i| records[i].id).collect();
    Ok((d.with_records(records)?, PoisonSummary { group: target, flipped }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FifDelta {
    pub subset: SubsetIndex,
    pub features: Vec<String>,
    pub before: f64,
    pub after: f64,
    /// `after - before`.
    pub delta: f64,
}

/// Per-subset `w_after - w_before`, largest `|Δ|` first.
pub fn compare_fifs(before: &FifReport, after: &FifReport) -> Result<Vec<FifDelta>, InterventionError> {
    if before.metric != after.metric {
        return Err(InterventionError::Mismatch("metric"));
    }
    if before.lambda != after.lambda {
        return Err(InterventionError::Mismatch("order"));
    }
    if before.entries.len() != after.entries.len()
        || before
            .entries
            .iter()
            .zip(&after.entries)
            .any(|(a, b)| a.subset != b.subset || a.features != b.features)
    {
        return Err(InterventionError::Mismatch("subsets"));
    }
    let mut out: Vec<FifDelta> = before
        .entries
        .iter()
        .zip(&after.entries)
        .map(|(b, a)| FifDelta {
            subset: b.subset.clone(),
            features: b.features.clone(),
            before: b.w,
            after: a.w,
            delta: a.w - b.w,
        })
        .collect();
    out.sort_by(|x, y| y.delta.abs().total_cmp(&x.delta.abs()));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Intervention {
    Reweigh,
    Poison { fraction: f64, seed: u64 },
}

/// Model family retrained before and after the intervention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trainer {
    Logistic(LogisticOptions),
    Tree(TreeOptions),
}

impl Trainer {
    pub fn train(&self, d: &Dataset) -> Result<Box<dyn Predictor>, ClassifierError> {
        Ok(match self {
            Trainer::Logistic(o) => Box::new(train_logistic(d, o)?.model),
            Trainer::Tree(o) => Box::new(train_tree(d, o)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub intervention: Intervention,
    pub trainer: Trainer,
    pub before: MetricResult,
    pub after: MetricResult,
    pub fif_before: FifReport,
    pub fif_after: FifReport,
    pub deltas: Vec<FifDelta>,
    pub empty_cells: Vec<EmptyCell>,
    pub poisoned: Option<PoisonSummary>,
}

/// Train on `d`, audit; intervene, retrain, audit again. Both audits use the
/// original `d` (labels and weights) so only the model differs.
pub fn simulate(
    d: &Dataset,
    intervention: Intervention,
    trainer: Trainer,
    metric: MetricKind,
    lambda: usize,
    opts: &FifOptions,
) -> Result<InterventionRecord, InterventionError> {
    let clean = trainer.train(d)?;
    let before = metrics::compute(metric, &clean, d)?;
    let fif_before = fif(metric, &clean, d, lambda, opts)?;
    let (modified, empty_cells, poisoned) = match intervention {
        Intervention::Reweigh => {
            let (r, empty) = reweigh(d)?;
            (r, empty, None)
        }
        Intervention::Poison { fraction, seed } => {
            let (p, summary) = poison_labels(d, fraction, seed)?;
            (p, Vec::new(), Some(summary))
        }
    };
    let retrained = trainer.train(&modified)?;
    let after = metrics::compute(metric, &retrained, d)?;
    let fif_after = fif(metric, &retrained, d, lambda, opts)?;
    let deltas = compare_fifs(&fif_before, &fif_after)?;
    Ok(InterventionRecord {
        intervention,
        trainer,
        before,
        after,
        fif_before,
        fif_after,
        deltas,
        empty_cells,
        poisoned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Record, Schema};

    fn cells(counts: &[(&str, u8, usize)]) -> Dataset {
        let schema = Schema::new(vec!["x".into()], vec!["a".into()], "y", None).unwrap();
        let mut records = Vec::new();
        for &(g, y, n) in counts {
            for _ in 0..n {
                records.push(Record {
                    id: records.len(),
                    x: vec![records.len() as f64],
                    a: GroupKey::new([g]),
                    y,
                    y_hat: None,
                });
            }
        }
        Dataset::new(schema, records, None).unwrap()
    }

    #[test]
    fn independent_labels_keep_unit_weights() {
        let d = cells(&[("a", 1, 10), ("a", 0, 30), ("b", 1, 5), ("b", 0, 15)]);
        let (r, empty) = reweigh(&d).unwrap();
        assert!(empty.is_empty());
        assert!(r.weights().unwrap().iter().all(|&w| (w - 1.0).abs() < 1e-12));
    }

    #[test]
    fn reweigh_by_hand() {
        let d = cells(&[("a1", 1, 30), ("a1", 0, 20), ("a2", 1, 10), ("a2", 0, 40)]);
        let (r, _) = reweigh(&d).unwrap();
        let w = r.weights().unwrap();
        // P(a1)=0.5, P(y=1)=0.4, P(a1,1)=0.3 and so on.
        let expect = [
            (0, 0.5 * 0.4 / 0.3),
            (30, 0.5 * 0.6 / 0.2),
            (50, 0.5 * 0.4 / 0.1),
            (60, 0.5 * 0.6 / 0.4),
        ];
        for (i, e) in expect {
            assert!((w[i] - e).abs() < 1e-12, "row {i}: {} vs {e}", w[i]);
        }
        assert_eq!(r.len(), d.len());
        assert!(r.records().iter().zip(d.records()).all(|(a, b)| a == b));
        // Weighted labels are now independent of the group.
        let labels: Vec<u8> = r.records().iter().map(|x| x.y).collect();
        assert!(metrics::statistical_parity_from(&r, &labels).unwrap().value < 1e-12);
    }

    #[test]
    fn reweigh_reports_empty_cells() {
        let d = cells(&[("a", 1, 3), ("a", 0, 2), ("b", 0, 4)]);
        let (_, empty) = reweigh(&d).unwrap();
        assert_eq!(
            empty,
            vec![EmptyCell {
                group: GroupKey::new(["b"]),
                y: 1
            }]
        );
        let single = cells(&[("a", 1, 3), ("b", 1, 2)]);
        assert!(matches!(reweigh(&single), Err(InterventionError::Unbalanced)));
    }

    #[test]
    fn poison_flips_declared_count() {
        let d = cells(&[("a", 1, 30), ("a", 0, 20), ("b", 1, 10), ("b", 0, 40)]);
        let (p, s) = poison_labels(&d, 0.5, 3).unwrap();
        assert_eq!(s.group, GroupKey::new(["b"]));
        assert_eq!(s.flipped.len(), 5);
        let changed: Vec<usize> = p
            .records()
            .iter()
            .zip(d.records())
            .filter(|(a, b)| a != b)
            .map(|(a, _)| a.id)
            .collect();
        assert_eq!(changed, s.flipped);
        assert!(p
            .records()
            .iter()
            .zip(d.records())
            .all(|(a, b)| a.x == b.x && a.a == b.a));
        let (_, again) = poison_labels(&d, 0.5, 3).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn full_poison_zeroes_the_base_rate() {
        let d = cells(&[("a", 1, 30), ("a", 0, 20), ("b", 1, 10), ("b", 0, 40)]);
        let (p, _) = poison_labels(&d, 1.0, 0).unwrap();
        let b = p.filter_group(&GroupKey::new(["b"])).unwrap();
        assert!(b.records().iter().all(|r| r.y == 0));
        assert!(matches!(poison_labels(&d, 0.0, 0), Err(InterventionError::Fraction(_))));
        assert!(matches!(
            poison_labels(&p, 0.5, 0),
            Err(InterventionError::NothingToFlip(_))
        ));
    }
}
