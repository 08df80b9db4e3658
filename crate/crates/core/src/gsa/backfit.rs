//! Backfitting of set-additive models and covariance variance shares.

use serde::{Deserialize, Serialize};

use super::bspline::MarginalBasis;
use super::component::{Smoother, SplineComponent};
use super::{enumerate_subsets, GsaError, SubsetIndex};
use crate::classifier::Predictor;
use crate::dataset::{Dataset, GroupKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackfitOptions {
    /// Maximum component order λ.
    pub lambda: usize,
    /// Interior knots per spline dimension.
    pub knot_count: usize,
    /// Stop when no component moves by more than this (weighted RMS).
    pub tol: f64,
    pub max_iter: usize,
    /// Ridge added to the normalized normal equations.
    pub ridge: f64,
    /// Weight of the second-difference roughness penalty on spline
    /// coefficients. Indicator dimensions are never smoothed.
    pub smoothing: f64,
}

impl Default for BackfitOptions {
    fn default() -> Self {
        BackfitOptions {
            lambda: 2,
            knot_count: 6,
            tol: 1e-9,
            max_iter: 300,
            ridge: 1e-10,
            smoothing: 1e-4,
        }
    }
}

/// Fitted surrogate `f0 + Σ_S f_S(x_S)` of one group's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentModel {
    pub group: GroupKey,
    pub feature_names: Vec<String>,
    /// Weighted group mean of the decomposed output.
    pub f0: f64,
    /// Every subset with `|S| ≤ lambda`, in enumeration order.
    pub components: Vec<SplineComponent>,
    pub lambda: usize,
    /// Weighted mean squared residual of the surrogate.
    pub delta: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ComponentModel {
    pub fn component(&self, s: &SubsetIndex) -> Option<&SplineComponent> {
        self.components.iter().find(|c| &c.subset == s)
    }

    pub fn subsets(&self) -> Vec<SubsetIndex> {
        self.components.iter().map(|c| c.subset.clone()).collect()
    }

    /// Surrogate value at a full feature vector.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.f0 + self.components.iter().map(|c| c.evaluate_full(x)).sum::<f64>()
    }
}

/// `V_{a,S}`: covariance of one component with the group output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceShare {
    pub group: GroupKey,
    pub subset: SubsetIndex,
    pub value: f64,
}

/// Backfit the outputs of `m` on one group's rows.
pub fn backfit<P: Predictor + ?Sized>(
    m: &P,
    d_group: &Dataset,
    opts: &BackfitOptions,
) -> Result<ComponentModel, GsaError> {
    let g: Vec<f64> = m.predict_all(d_group)?.into_iter().map(f64::from).collect();
    backfit_targets(d_group, &g, opts)
}

fn normalized_weights(d: &Dataset) -> Vec<f64> {
    let total = d.total_weight();
    d.weight_vec().into_iter().map(|w| w / total).collect()
}

/// Backfit arbitrary real targets (one per row) on one group's rows.
pub fn backfit_targets(d_group: &Dataset, targets: &[f64], opts: &BackfitOptions) -> Result<ComponentModel, GsaError> {
    let n = d_group.len();
    if n < 2 {
        return Err(GsaError::TooFewRows(n));
    }
    if targets.len() != n {
        return Err(GsaError::DimensionMismatch {
            expected: n,
            found: targets.len(),
        });
    }
    let subsets = enumerate_subsets(d_group.k(), opts.lambda)?;
    let w = normalized_weights(d_group);
    let f0: f64 = targets
        .iter()
        .zip(d_group.weight_vec())
        .map(|(t, w)| t * w)
        .sum::<f64>()
        / d_group.total_weight();

    let marginals: Vec<MarginalBasis> = (0..d_group.k())
        .map(|j| MarginalBasis::for_column(&d_group.feature_column(j), opts.knot_count))
        .collect();
    let mut components = Vec::with_capacity(subsets.len());
    let mut smoothers = Vec::with_capacity(subsets.len());
    for s in &subsets {
        let bases: Vec<MarginalBasis> = s.indices().iter().map(|&j| marginals[j].clone()).collect();
        let rows: Vec<Vec<f64>> = d_group.records().iter().map(|r| s.project(&r.x)).collect();
        smoothers.push(Smoother::new(s, &bases, &rows, &w, opts.ridge, opts.smoothing, true)?);
        components.push(SplineComponent::zeros(s.clone(), bases));
    }

    let mut values = vec![vec![0.0; n]; subsets.len()];
    let mut total = vec![0.0; n];
    let mut partial = vec![0.0; n];
    let mut fresh = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        // Rebuild the running sum each sweep so rounding does not accumulate.
        total.iter_mut().for_each(|t| *t = 0.0);
        for v in &values {
            for (t, x) in total.iter_mut().zip(v) {
                *t += x;
            }
        }
        let mut max_change: f64 = 0.0;
        for (si, smoother) in smoothers.iter().enumerate() {
            let old = &values[si];
            for i in 0..n {
                partial[i] = targets[i] - f0 - (total[i] - old[i]);
            }
            components[si].coefficients = smoother.fit(&partial, &w);
            smoother.values(&components[si].coefficients, &mut fresh);
            let mean: f64 = fresh.iter().zip(&w).map(|(v, w)| v * w).sum();
            components[si].shift(mean);
            let mut change = 0.0;
            for i in 0..n {
                fresh[i] -= mean;
                let diff = fresh[i] - old[i];
                change += w[i] * diff * diff;
                total[i] += diff;
            }
            max_change = max_change.max(change.sqrt());
            std::mem::swap(&mut values[si], &mut fresh);
        }
        if max_change <= opts.tol {
            converged = true;
            break;
        }
    }

    let delta: f64 = (0..n)
        .map(|i| {
            let r = targets[i] - f0 - values.iter().map(|v| v[i]).sum::<f64>();
            w[i] * r * r
        })
        .sum();
    Ok(ComponentModel {
        group: d_group.records()[0].a.clone(),
        feature_names: d_group.schema().features.clone(),
        f0,
        components,
        lambda: opts.lambda,
        delta,
        converged,
        iterations,
    })
}

fn share(model: &ComponentModel, c: &SplineComponent, d_group: &Dataset, targets: &[f64], w: &[f64]) -> VarianceShare {
    let value = d_group
        .records()
        .iter()
        .zip(targets)
        .zip(w)
        .map(|((r, t), w)| w * c.evaluate_full(&r.x) * (t - model.f0))
        .sum();
    VarianceShare {
        group: model.group.clone(),
        subset: c.subset.clone(),
        value,
    }
}

/// `V_{a,S} = E_w[f_S(x_S) (g(x) - f0)]` over the group's rows, with
/// weights normalized to sum to one (so unit weights divide by `n_a`).
pub fn component_covariance<P: Predictor + ?Sized>(
    model: &ComponentModel,
    m: &P,
    d_group: &Dataset,
    subset: &SubsetIndex,
) -> Result<VarianceShare, GsaError> {
    let c = model
        .component(subset)
        .ok_or_else(|| GsaError::UnknownSubset(subset.clone()))?;
    let g: Vec<f64> = m.predict_all(d_group)?.into_iter().map(f64::from).collect();
    Ok(share(model, c, d_group, &g, &normalized_weights(d_group)))
}

/// Shares of every component against the outputs of `m`.
pub fn variance_shares<P: Predictor + ?Sized>(
    model: &ComponentModel,
    m: &P,
    d_group: &Dataset,
) -> Result<Vec<VarianceShare>, GsaError> {
    let g: Vec<f64> = m.predict_all(d_group)?.into_iter().map(f64::from).collect();
    Ok(variance_shares_for_targets(model, d_group, &g))
}

/// Shares of every component against explicit per-row targets.
pub fn variance_shares_for_targets(model: &ComponentModel, d_group: &Dataset, targets: &[f64]) -> Vec<VarianceShare> {
    let w = normalized_weights(d_group);
    model
        .components
        .iter()
        .map(|c| share(model, c, d_group, targets, &w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::FnPredictor;
    use crate::dataset::{Record, Schema};

    fn grid_dataset(side: usize, k: usize) -> Dataset {
        let names = (0..k).map(|j| format!("x{j}")).collect();
        let schema = Schema::new(names, vec!["g".into()], "y", None).unwrap();
        let mut records = Vec::new();
        let total = side.pow(k as u32);
        for i in 0..total {
            let mut rest = i;
            let x: Vec<f64> = (0..k)
                .map(|_| {
                    let c = rest % side;
                    rest /= side;
                    (c as f64 + 0.5) / side as f64
                })
                .collect();
            records.push(Record {
                id: i,
                x,
                a: GroupKey::new(["only"]),
                y: 0,
                y_hat: None,
            });
        }
        Dataset::new(schema, records, None).unwrap()
    }

    fn weighted_var(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n
    }

    fn outputs(m: &impl Predictor, d: &Dataset) -> Vec<f64> {
        m.predict_all(d).unwrap().into_iter().map(f64::from).collect()
    }

    #[test]
    fn constant_predictor_has_no_components() {
        let d = grid_dataset(10, 2);
        let m = FnPredictor(|_: &[f64], _: &GroupKey| 1);
        let model = backfit(&m, &d, &BackfitOptions::default()).unwrap();
        assert_eq!(model.f0, 1.0);
        assert_eq!(model.delta, 0.0);
        assert!(model.converged);
        for c in &model.components {
            assert!(c.coefficients.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn step_in_first_feature_is_attributed_to_it() {
        let d = grid_dataset(40, 2);
        let m = FnPredictor(|x: &[f64], _: &GroupKey| u8::from(x[0] >= 0.5));
        let opts = BackfitOptions {
            lambda: 1,
            ..Default::default()
        };
        let model = backfit(&m, &d, &opts).unwrap();
        let var = weighted_var(&outputs(&m, &d));
        let shares = variance_shares(&model, &m, &d).unwrap();
        assert!(shares[0].value >= 0.95 * var, "{} vs {var}", shares[0].value);
        assert!(shares[1].value.abs() <= 0.01 * var);
    }

    #[test]
    fn additive_predictor_recovers_its_parts() {
        let d = grid_dataset(30, 2);
        let g1 = |x: f64| (3.0 * x).sin();
        let g2 = |y: f64| y * y - 0.5 * y;
        let targets: Vec<f64> = d.records().iter().map(|r| g1(r.x[0]) + g2(r.x[1])).collect();
        let model = backfit_targets(&d, &targets, &BackfitOptions::default()).unwrap();
        let c1: Vec<f64> = d.records().iter().map(|r| g1(r.x[0])).collect();
        let c2: Vec<f64> = d.records().iter().map(|r| g2(r.x[1])).collect();
        let (m1, m2) = (c1.iter().sum::<f64>() / 900.0, c2.iter().sum::<f64>() / 900.0);
        let mut rms = [0.0; 2];
        for (i, r) in d.records().iter().enumerate() {
            rms[0] += (model.components[0].evaluate(&[r.x[0]]) - (c1[i] - m1)).powi(2) / 900.0;
            rms[1] += (model.components[1].evaluate(&[r.x[1]]) - (c2[i] - m2)).powi(2) / 900.0;
        }
        assert!(rms[0].sqrt() < 0.05 && rms[1].sqrt() < 0.05, "{rms:?}");
        let inter: Vec<f64> = d.records().iter().map(|r| model.components[2].evaluate(&r.x)).collect();
        assert!(weighted_var(&inter) <= 0.05 * weighted_var(&targets));
    }

    #[test]
    fn components_are_mean_centered_and_shares_close() {
        let d = grid_dataset(25, 2);
        let m = FnPredictor(|x: &[f64], _: &GroupKey| u8::from(x[0] + 0.7 * x[1] * x[1] > 0.8));
        let model = backfit(&m, &d, &BackfitOptions::default()).unwrap();
        for c in &model.components {
            let mean: f64 = d.records().iter().map(|r| c.evaluate_full(&r.x)).sum::<f64>() / d.len() as f64;
            assert!(mean.abs() <= 1e-8, "{} mean {mean}", c.subset);
        }
        let var = weighted_var(&outputs(&m, &d));
        let total: f64 = variance_shares(&model, &m, &d).unwrap().iter().map(|s| s.value).sum();
        assert!((total - var).abs() <= 0.02f64.max(3.0 * model.delta));
    }

    #[test]
    fn covariance_identity_under_surrogate() {
        let d = grid_dataset(20, 3);
        let m = FnPredictor(|x: &[f64], _: &GroupKey| u8::from(x[0] * x[1] + 0.3 * x[2] > 0.4));
        let model = backfit(&m, &d, &BackfitOptions::default()).unwrap();
        let n = d.len() as f64;
        let vals: Vec<Vec<f64>> = model
            .components
            .iter()
            .map(|c| d.records().iter().map(|r| c.evaluate_full(&r.x)).collect())
            .collect();
        let surrogate: Vec<f64> = d.records().iter().map(|r| model.predict(&r.x)).collect();
        let cov = |a: &[f64], b: &[f64]| {
            let ma = a.iter().sum::<f64>() / n;
            let mb = b.iter().sum::<f64>() / n;
            a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n
        };
        for (s, v) in vals.iter().enumerate() {
            let others: Vec<f64> = (0..d.len())
                .map(|i| (0..vals.len()).filter(|&t| t != s).map(|t| vals[t][i]).sum())
                .collect();
            let lhs = cov(v, &surrogate);
            let rhs = cov(v, v) + cov(v, &others);
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn component_covariance_matches_bulk_shares() {
        let d = grid_dataset(15, 2);
        let m = FnPredictor(|x: &[f64], _: &GroupKey| u8::from(x[1] > x[0]));
        let model = backfit(&m, &d, &BackfitOptions::default()).unwrap();
        let all = variance_shares(&model, &m, &d).unwrap();
        for s in &all {
            let one = component_covariance(&model, &m, &d, &s.subset).unwrap();
            assert_eq!(one, *s);
        }
        let missing = SubsetIndex::new(vec![0, 1, 2]).unwrap();
        assert!(component_covariance(&model, &m, &d, &missing).is_err());
    }

    #[test]
    fn backfit_is_deterministic() {
        let d = grid_dataset(12, 3);
        let m = FnPredictor(|x: &[f64], _: &GroupKey| u8::from(x[0] > x[2] * x[1]));
        let opts = BackfitOptions {
            lambda: 3,
            ..Default::default()
        };
        let a = backfit(&m, &d, &opts).unwrap();
        let b = backfit(&m, &d, &opts).unwrap();
        assert_eq!(a, b);
        let json = serde_json::to_string(&a).unwrap();
        let back: ComponentModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn rejects_tiny_groups_and_bad_orders() {
        let d = grid_dataset(1, 2);
        let m = FnPredictor(|_: &[f64], _: &GroupKey| 0);
        assert!(matches!(
            backfit(&m, &d, &BackfitOptions::default()),
            Err(GsaError::TooFewRows(1))
        ));
        let d = grid_dataset(3, 2);
        let opts = BackfitOptions {
            lambda: 3,
            ..Default::default()
        };
        assert!(matches!(backfit(&m, &d, &opts), Err(GsaError::LambdaOutOfRange { .. })));
    }

    #[test]
    fn decomposition_does_not_drift_with_iteration_cap() {
        // Interaction plus main effects: main effects and the pairwise term
        // live in disjoint centered spaces, so shares settle once converged.
        let d = grid_dataset(20, 2);
        let m = FnPredictor(|x: &[f64], _: &GroupKey| u8::from(x[0] + 0.5 * x[1] * x[0] >= 0.6));
        let shares_at = |max_iter| {
            let opts = BackfitOptions {
                max_iter,
                ..Default::default()
            };
            let model = backfit(&m, &d, &opts).unwrap();
            assert!(model.converged);
            variance_shares(&model, &m, &d).unwrap()
        };
        let (a, b) = (shares_at(300), shares_at(3000));
        for (x, y) in a.iter().zip(&b) {
            assert!((x.value - y.value).abs() < 1e-9);
        }
    }
}
