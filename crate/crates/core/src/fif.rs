//! Fairness influence functions.
//!
//! For a binary outcome `B` (the prediction, or the label for predictive
//! parity) the group variance is `p_a (1 - p_a)`, and
//! `(p_max(1-p_max) - p_min(1-p_min)) / (1 - (p_max + p_min)) = p_max - p_min`.
//! Splitting each group variance into component shares `V_{a,S}` therefore
//! splits the rate gap into `w_S = (V_{max,S} - V_{min,S}) / (1 - (p_max + p_min))`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierError, OverridePredictor, Predictor};
use crate::dataset::{Dataset, DatasetError, GroupKey};
use crate::gsa::{
    backfit_targets, enumerate_subsets, variance_shares_for_targets, BackfitOptions, ComponentModel, GsaError,
    SubsetIndex,
};
use crate::metrics::{self, MetricError, MetricKind, MetricResult};

/// Smallest denominator magnitude used when `p_max + p_min` is near one.
pub const EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FifError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Gsa(#[from] GsaError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("group {0} has a single row and a constant outcome; it cannot be perturbed")]
    SingletonGroup(GroupKey),
    #[error("neither conditioning stratum has two or more groups")]
    NoUsableStratum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FifOptions {
    pub knot_count: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub ridge: f64,
    pub smoothing: f64,
    /// Seeds the choice of row flipped in a degenerate group.
    pub seed: u64,
    /// Worker threads; with two or more the two group fits run concurrently.
    pub threads: usize,
}

impl Default for FifOptions {
    fn default() -> Self {
        let b = BackfitOptions::default();
        FifOptions {
            knot_count: b.knot_count,
            tol: b.tol,
            max_iter: b.max_iter,
            ridge: b.ridge,
            smoothing: b.smoothing,
            seed: 0,
            threads: 2,
        }
    }
}

impl FifOptions {
    fn backfit(&self, lambda: usize) -> BackfitOptions {
        BackfitOptions {
            lambda,
            knot_count: self.knot_count,
            tol: self.tol,
            max_iter: self.max_iter,
            ridge: self.ridge,
            smoothing: self.smoothing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FifEntry {
    pub subset: SubsetIndex,
    /// Feature names of `subset`.
    pub features: Vec<String>,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FifReport {
    pub metric: MetricKind,
    /// Exact metric value.
    pub bias: f64,
    pub a_max: GroupKey,
    pub a_min: GroupKey,
    pub p_max: f64,
    pub p_min: f64,
    pub lambda: usize,
    /// Every subset with `|S| ≤ lambda`, in enumeration order.
    pub entries: Vec<FifEntry>,
    /// Sum of all `w`.
    pub estimated_bias: f64,
    /// `|bias - estimated_bias|`.
    pub estimation_error: f64,
    pub epsilon_applied: bool,
    pub degenerate_perturbed: bool,
    /// Stratum the entries come from (equalized odds, predictive parity).
    pub conditioning_class: Option<u8>,
    /// Surrogate mean squared residuals for `a_max` and `a_min`.
    pub delta: [f64; 2],
    /// Whether both backfits converged.
    pub converged: bool,
}

impl FifReport {
    pub fn entry(&self, s: &SubsetIndex) -> Option<&FifEntry> {
        self.entries.iter().find(|e| &e.subset == s)
    }

    /// `w` of the subset with exactly these feature names (in any order).
    pub fn w_of(&self, names: &[&str]) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.features.len() == names.len() && names.iter().all(|n| e.features.iter().any(|f| f == n)))
            .map(|e| e.w)
    }
}

/// Ranked view of a report: the `top_n` largest `|w|`, the rest summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFifs {
    pub kept: Vec<FifEntry>,
    pub residual: f64,
    pub residual_count: usize,
}

pub fn rank_and_residual(r: &FifReport, top_n: usize) -> RankedFifs {
    let mut order: Vec<usize> = (0..r.entries.len()).collect();
    // Stable sort keeps subset order on ties.
    order.sort_by(|&a, &b| r.entries[b].w.abs().total_cmp(&r.entries[a].w.abs()));
    let keep = top_n.max(1).min(order.len());
    let kept = order[..keep].iter().map(|&i| r.entries[i].clone()).collect();
    let residual = order[keep..].iter().map(|&i| r.entries[i].w).fold(0.0, |s, w| s + w);
    RankedFifs {
        kept,
        residual,
        residual_count: order.len() - keep,
    }
}

/// Rows of a degenerate group (all outcomes equal) get one seeded row
/// flipped so the group rate lies strictly inside (0, 1). Returns the
/// overriding predictor and whether a flip happened.
pub fn resolve_degenerate<P: Predictor>(
    d_group: &Dataset,
    m: P,
    seed: u64,
) -> Result<(OverridePredictor<P>, bool), FifError> {
    let preds = m.predict_all(d_group)?;
    let mut outcome: Vec<f64> = preds.iter().map(|&p| f64::from(p)).collect();
    let flipped = perturb_if_degenerate(d_group, &mut outcome, seed)?;
    let overrides: HashMap<usize, u8> = flipped
        .map(|i| (d_group.records()[i].id, 1 - preds[i]))
        .into_iter()
        .collect();
    let changed = !overrides.is_empty();
    Ok((OverridePredictor { inner: m, overrides }, changed))
}

/// Flips one seeded positive-weight row when all weighted outcomes agree.
/// Returns the flipped row position.
fn perturb_if_degenerate(d_group: &Dataset, outcome: &mut [f64], seed: u64) -> Result<Option<usize>, FifError> {
    let w = d_group.weight_vec();
    let live: Vec<usize> = (0..outcome.len()).filter(|&i| w[i] > 0.0).collect();
    let first = outcome[live[0]];
    if live.iter().any(|&i| outcome[i] != first) {
        return Ok(None);
    }
    if live.len() < 2 {
        return Err(FifError::SingletonGroup(d_group.records()[0].a.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let i = live[rng.random_range(0..live.len())];
    outcome[i] = 1.0 - outcome[i];
    Ok(Some(i))
}

/// Result of the two-group computation on one dataset (or stratum).
struct Split {
    entries: Vec<FifEntry>,
    a_max: GroupKey,
    a_min: GroupKey,
    p_max: f64,
    p_min: f64,
    epsilon_applied: bool,
    degenerate_perturbed: bool,
    delta: [f64; 2],
    converged: bool,
}

impl Split {
    fn estimated(&self) -> f64 {
        self.entries.iter().map(|e| e.w).sum()
    }
}

fn zero_entries(subsets: &[SubsetIndex], names: &[String]) -> Vec<FifEntry> {
    subsets
        .iter()
        .map(|s| FifEntry {
            subset: s.clone(),
            features: s.names(names),
            w: 0.0,
        })
        .collect()
}

/// Backfit one group's outcomes, perturbing a degenerate group first.
fn fit_group(
    d: &Dataset,
    group: &GroupKey,
    outcome_all: &[u8],
    lambda: usize,
    opts: &FifOptions,
    seed: u64,
) -> Result<(ComponentModel, Vec<f64>, f64, bool, Dataset), FifError> {
    let positions: Vec<usize> = (0..d.len()).filter(|&i| &d.records()[i].a == group).collect();
    let d_group = d.filter_group(group)?;
    let mut outcome: Vec<f64> = positions.iter().map(|&i| f64::from(outcome_all[i])).collect();
    let perturbed = perturb_if_degenerate(&d_group, &mut outcome, seed)?.is_some();
    let w = d_group.weight_vec();
    let total: f64 = w.iter().sum();
    let rate = outcome.iter().zip(&w).map(|(o, w)| o * w).sum::<f64>() / total;
    let model = backfit_targets(&d_group, &outcome, &opts.backfit(lambda))?;
    Ok((model, outcome, rate, perturbed, d_group))
}

/// Two-group decomposition of the gap in `Pr[outcome = 1 | A]` on `d`.
fn split_gap(
    d: &Dataset,
    rates: &MetricResult,
    outcome: &[u8],
    lambda: usize,
    opts: &FifOptions,
) -> Result<Split, FifError> {
    let names = d.schema().features.clone();
    let subsets = enumerate_subsets(d.k(), lambda)?;
    let (a_max, a_min) = (rates.a_max.clone(), rates.a_min.clone());
    let (p_max, p_min) = (rates.p_max(), rates.p_min());
    if a_max == a_min || p_max == p_min {
        return Ok(Split {
            entries: zero_entries(&subsets, &names),
            a_max,
            a_min,
            p_max,
            p_min,
            epsilon_applied: false,
            degenerate_perturbed: false,
            delta: [0.0; 2],
            converged: true,
        });
    }
    let seeds = [opts.seed, opts.seed.wrapping_add(0x9E37_79B9_7F4A_7C15)];
    let (hi, lo) = if opts.threads >= 2 {
        std::thread::scope(|scope| {
            let worker = scope.spawn(|| fit_group(d, &a_min, outcome, lambda, opts, seeds[1]));
            let hi = fit_group(d, &a_max, outcome, lambda, opts, seeds[0]);
            let lo = worker.join().expect("group fit panicked");
            (hi, lo)
        })
    } else {
        (
            fit_group(d, &a_max, outcome, lambda, opts, seeds[0]),
            fit_group(d, &a_min, outcome, lambda, opts, seeds[1]),
        )
    };
    let (m_hi, g_hi, r_hi, pert_hi, d_hi) = hi?;
    let (m_lo, g_lo, r_lo, pert_lo, d_lo) = lo?;
    let v_hi = variance_shares_for_targets(&m_hi, &d_hi, &g_hi);
    let v_lo = variance_shares_for_targets(&m_lo, &d_lo, &g_lo);

    let mut den = 1.0 - (r_hi + r_lo);
    let mut epsilon_applied = false;
    if den.abs() < EPSILON {
        den = if den < 0.0 { -EPSILON } else { EPSILON };
        epsilon_applied = true;
    }
    let entries = subsets
        .iter()
        .zip(v_hi.iter().zip(&v_lo))
        .map(|(s, (h, l))| FifEntry {
            subset: s.clone(),
            features: s.names(&names),
            w: (h.value - l.value) / den,
        })
        .collect();
    Ok(Split {
        entries,
        a_max,
        a_min,
        p_max,
        p_min,
        epsilon_applied,
        degenerate_perturbed: pert_hi || pert_lo,
        delta: [m_hi.delta, m_lo.delta],
        converged: m_hi.converged && m_lo.converged,
    })
}

fn assemble(metric: MetricKind, bias: f64, lambda: usize, class: Option<u8>, s: Split) -> FifReport {
    let estimated_bias = s.estimated();
    FifReport {
        metric,
        bias,
        a_max: s.a_max,
        a_min: s.a_min,
        p_max: s.p_max,
        p_min: s.p_min,
        lambda,
        entries: s.entries,
        estimated_bias,
        estimation_error: (bias - estimated_bias).abs(),
        epsilon_applied: s.epsilon_applied,
        degenerate_perturbed: s.degenerate_perturbed,
        conditioning_class: class,
        delta: s.delta,
        converged: s.converged,
    }
}

pub fn fif_statistical_parity<P: Predictor + ?Sized>(
    m: &P,
    d: &Dataset,
    lambda: usize,
    opts: &FifOptions,
) -> Result<FifReport, FifError> {
    enumerate_subsets(d.k(), lambda)?;
    let preds = m.predict_all(d)?;
    let sp = metrics::statistical_parity_from(d, &preds)?;
    let split = split_gap(d, &sp, &preds, lambda, opts)?;
    Ok(assemble(MetricKind::StatisticalParity, sp.value, lambda, None, split))
}

/// Runs the two-group decomposition within each stratum `cond == c` on
/// `outcome`, keeping the stratum whose FIFs sum highest (class 1 on ties).
fn stratified_fif(
    kind: MetricKind,
    d: &Dataset,
    cond: &[u8],
    outcome: &[u8],
    lambda: usize,
    opts: &FifOptions,
) -> Result<FifReport, FifError> {
    enumerate_subsets(d.k(), lambda)?;
    let overall = metrics::compute_from(
        kind,
        d,
        if kind == MetricKind::EqualizedOdds {
            outcome
        } else {
            cond
        },
    )?;
    let mut best: Option<(f64, u8, Split)> = None;
    for c in [1u8, 0u8] {
        let keep: Vec<bool> = cond.iter().map(|&v| v == c).collect();
        let mut pos = 0;
        let Some(stratum) = d.filter(|_| {
            pos += 1;
            keep[pos - 1]
        }) else {
            continue;
        };
        let sub_outcome: Vec<u8> = outcome.iter().zip(&keep).filter(|(_, &k)| k).map(|(&o, _)| o).collect();
        let rates = match metrics::statistical_parity_from(&stratum, &sub_outcome) {
            Ok(r) => r,
            Err(MetricError::SingleGroup(_)) => continue,
            Err(e) => return Err(e.into()),
        };
        let split = split_gap(&stratum, &rates, &sub_outcome, lambda, opts)?;
        let total = split.estimated();
        if best.as_ref().is_none_or(|(b, ..)| total > *b) {
            best = Some((total, c, split));
        }
    }
    let (_, class, split) = best.ok_or(FifError::NoUsableStratum)?;
    Ok(assemble(kind, overall.value, lambda, Some(class), split))
}

/// Decomposes the prediction-rate gap separately among `Y = 1` and `Y = 0`
/// rows and reports the stratum with the larger total.
pub fn fif_equalized_odds<P: Predictor + ?Sized>(
    m: &P,
    d: &Dataset,
    lambda: usize,
    opts: &FifOptions,
) -> Result<FifReport, FifError> {
    let preds = m.predict_all(d)?;
    let labels: Vec<u8> = d.records().iter().map(|r| r.y).collect();
    stratified_fif(MetricKind::EqualizedOdds, d, &labels, &preds, lambda, opts)
}

/// Within each predicted class, decomposes the gap in `Pr[Y = 1 | A]` by
/// backfitting the labels themselves.
pub fn fif_predictive_parity<P: Predictor + ?Sized>(
    m: &P,
    d: &Dataset,
    lambda: usize,
    opts: &FifOptions,
) -> Result<FifReport, FifError> {
    let preds = m.predict_all(d)?;
    let labels: Vec<u8> = d.records().iter().map(|r| r.y).collect();
    stratified_fif(MetricKind::PredictiveParity, d, &preds, &labels, lambda, opts)
}

pub fn fif<P: Predictor + ?Sized>(
    kind: MetricKind,
    m: &P,
    d: &Dataset,
    lambda: usize,
    opts: &FifOptions,
) -> Result<FifReport, FifError> {
    match kind {
        MetricKind::StatisticalParity => fif_statistical_parity(m, d, lambda, opts),
        MetricKind::EqualizedOdds => fif_equalized_odds(m, d, lambda, opts),
        MetricKind::PredictiveParity => fif_predictive_parity(m, d, lambda, opts),
    }
}
