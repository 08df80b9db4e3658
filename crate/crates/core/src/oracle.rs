//! Brute-force references for testing the decomposition.
//!
//! Small discrete instances are enumerated exhaustively: the functional
//! ANOVA is computed from conditional expectations with Möbius subtraction,
//! and fitted surrogates are re-evaluated with a dense basis evaluator that
//! shares no code path with the fitting routines.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, GroupKey, Record, Schema};
use crate::gsa::{bspline_basis, ComponentModel, MarginalBasis, SplineComponent, SubsetIndex, CUBIC};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("probabilities must be non-negative and sum to 1 (sum = {0})")]
    BadProbabilities(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("support of {0} tuples exceeds the enumeration limit")]
    SupportTooLarge(usize),
    #[error("joint distribution is not a product of its marginals")]
    NotProduct,
    #[error("identity undefined when p1 + p2 = 1")]
    IdentityUndefined,
    #[error("instance json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Largest support enumerated.
pub const MAX_SUPPORT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    /// Independent features: one probability vector per feature.
    Product(Vec<Vec<f64>>),
    /// Full table over tuples, row-major (last feature fastest).
    Joint(Vec<f64>),
}

/// Finite feature domains, a distribution over them and a function `g`
/// tabulated row-major over the tuples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteInstance {
    pub values: Vec<Vec<f64>>,
    pub distribution: Distribution,
    pub g: Vec<f64>,
}

impl DiscreteInstance {
    pub fn new(values: Vec<Vec<f64>>, distribution: Distribution, g: Vec<f64>) -> Result<Self, OracleError> {
        let inst = DiscreteInstance {
            values,
            distribution,
            g,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Uniform independent features.
    pub fn uniform(values: Vec<Vec<f64>>, g: Vec<f64>) -> Result<Self, OracleError> {
        let probs = values.iter().map(|v| vec![1.0 / v.len() as f64; v.len()]).collect();
        Self::new(values, Distribution::Product(probs), g)
    }

    /// Tabulate `g` over the product of `values`.
    pub fn tabulate(
        values: Vec<Vec<f64>>,
        distribution: Distribution,
        g: impl Fn(&[f64]) -> f64,
    ) -> Result<Self, OracleError> {
        let size: usize = values.iter().map(Vec::len).product();
        let shell = DiscreteInstance {
            values,
            distribution,
            g: Vec::new(),
        };
        let table = (0..size).map(|t| g(&shell.tuple(t))).collect();
        Self::new(shell.values, shell.distribution, table)
    }

    pub fn from_json(s: &str) -> Result<Self, OracleError> {
        let inst: DiscreteInstance = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn support_size(&self) -> usize {
        self.values.iter().map(Vec::len).product()
    }

    fn validate(&self) -> Result<(), OracleError> {
        if self.values.is_empty() || self.values.iter().any(Vec::is_empty) {
            return Err(OracleError::Shape("every feature needs at least one value".into()));
        }
        let size = self
            .values
            .iter()
            .try_fold(1usize, |acc, v| acc.checked_mul(v.len()))
            .filter(|&s| s <= MAX_SUPPORT)
            .ok_or(OracleError::SupportTooLarge(usize::MAX))?;
        if self.g.len() != size {
            return Err(OracleError::Shape(format!(
                "g has {} entries for {size} tuples",
                self.g.len()
            )));
        }
        if self.g.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::Shape("g must be finite".into()));
        }
        let check = |p: &[f64]| -> Result<(), OracleError> {
            let s: f64 = p.iter().sum();
            if p.iter().any(|&v| v.is_nan() || v < 0.0) || (s - 1.0).abs() > 1e-12 {
                return Err(OracleError::BadProbabilities(s));
            }
            Ok(())
        };
        match &self.distribution {
            Distribution::Product(ps) => {
                if ps.len() != self.k() || ps.iter().zip(&self.values).any(|(p, v)| p.len() != v.len()) {
                    return Err(OracleError::Shape("marginal lengths must match value sets".into()));
                }
                ps.iter().try_for_each(|p| check(p))
            }
            Distribution::Joint(p) => {
                if p.len() != size {
                    return Err(OracleError::Shape(format!(
                        "joint has {} entries for {size} tuples",
                        p.len()
                    )));
                }
                check(p)
            }
        }
    }

    /// Per-feature value positions of tuple `t`.
    fn digits(&self, mut t: usize) -> Vec<usize> {
        let mut d = vec![0; self.k()];
        for j in (0..self.k()).rev() {
            let n = self.values[j].len();
            d[j] = t % n;
            t /= n;
        }
        d
    }

    pub fn tuple(&self, t: usize) -> Vec<f64> {
        self.digits(t)
            .iter()
            .enumerate()
            .map(|(j, &i)| self.values[j][i])
            .collect()
    }

    pub fn prob(&self, t: usize) -> f64 {
        match &self.distribution {
            Distribution::Product(ps) => self.digits(t).iter().enumerate().map(|(j, &i)| ps[j][i]).product(),
            Distribution::Joint(p) => p[t],
        }
    }

    /// Marginal of feature `j`.
    pub fn marginal(&self, j: usize) -> Vec<f64> {
        match &self.distribution {
            Distribution::Product(ps) => ps[j].clone(),
            Distribution::Joint(_) => {
                let mut m = vec![0.0; self.values[j].len()];
                for t in 0..self.support_size() {
                    m[self.digits(t)[j]] += self.prob(t);
                }
                m
            }
        }
    }

    /// Whether the distribution factorizes (a joint table is checked
    /// against the product of its marginals to 1e-12).
    pub fn is_product(&self) -> bool {
        match &self.distribution {
            Distribution::Product(_) => true,
            Distribution::Joint(p) => {
                let margins: Vec<Vec<f64>> = (0..self.k()).map(|j| self.marginal(j)).collect();
                (0..self.support_size()).all(|t| {
                    let q: f64 = self.digits(t).iter().enumerate().map(|(j, &i)| margins[j][i]).product();
                    (p[t] - q).abs() <= 1e-12
                })
            }
        }
    }

    pub fn mean(&self) -> f64 {
        (0..self.support_size()).map(|t| self.prob(t) * self.g[t]).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (0..self.support_size())
            .map(|t| self.prob(t) * (self.g[t] - m).powi(2))
            .sum()
    }

    /// One row per positive-probability tuple, weighted by its probability,
    /// all in one group. Features are named `z1..zk`.
    pub fn to_weighted_dataset(&self, group: &str) -> Dataset {
        let names = (1..=self.k()).map(|j| format!("z{j}")).collect();
        let schema = Schema::new(names, vec!["group".into()], "y", None).expect("valid schema");
        let mut records = Vec::new();
        let mut weights = Vec::new();
        for t in 0..self.support_size() {
            let p = self.prob(t);
            if p > 0.0 {
                records.push(Record {
                    id: records.len(),
                    x: self.tuple(t),
                    a: GroupKey::new([group]),
                    y: 0,
                    y_hat: None,
                });
                weights.push(p);
            }
        }
        Dataset::new(schema, records, Some(weights)).expect("well-formed instance rows")
    }

    /// The tabulated `g` on the rows of [`Self::to_weighted_dataset`].
    pub fn targets(&self) -> Vec<f64> {
        (0..self.support_size())
            .filter(|&t| self.prob(t) > 0.0)
            .map(|t| self.g[t])
            .collect()
    }
}

/// Every non-empty subset of `0..k`, by size then lexicographically.
fn all_subsets(k: usize) -> Vec<SubsetIndex> {
    let mut masks: Vec<u32> = (1..(1u32 << k)).collect();
    masks.sort_by_key(|&m| {
        (
            m.count_ones(),
            (0..k).filter(|&j| m & (1 << j) != 0).collect::<Vec<_>>(),
        )
    });
    masks
        .into_iter()
        .map(|m| SubsetIndex::new((0..k).filter(|&j| m & (1 << j) != 0).collect()).expect("non-empty mask"))
        .collect()
}

/// Exact functional ANOVA: `V_S = Var[E[g | Z_S]] - Σ_{∅≠S'⊊S} V_{S'}` for
/// every non-empty `S`. Only factorized distributions are accepted.
pub fn anova_exhaustive(inst: &DiscreteInstance) -> Result<BTreeMap<SubsetIndex, f64>, OracleError> {
    if !inst.is_product() {
        return Err(OracleError::NotProduct);
    }
    let k = inst.k();
    if k > 20 {
        return Err(OracleError::SupportTooLarge(inst.support_size()));
    }
    let mean = inst.mean();
    let size = inst.support_size();
    let digits: Vec<Vec<usize>> = (0..size).map(|t| inst.digits(t)).collect();
    let probs: Vec<f64> = (0..size).map(|t| inst.prob(t)).collect();
    let mut out: BTreeMap<SubsetIndex, f64> = BTreeMap::new();
    for s in all_subsets(k) {
        // Accumulate E[g | z_S] over cells of the projection.
        let mut cell_mass: BTreeMap<Vec<usize>, (f64, f64)> = BTreeMap::new();
        for t in 0..size {
            let key: Vec<usize> = s.indices().iter().map(|&j| digits[t][j]).collect();
            let e = cell_mass.entry(key).or_insert((0.0, 0.0));
            e.0 += probs[t];
            e.1 += probs[t] * inst.g[t];
        }
        let closed: f64 = cell_mass
            .values()
            .filter(|(p, _)| *p > 0.0)
            .map(|(p, pg)| p * (pg / p - mean).powi(2))
            .sum();
        let lower: f64 = out
            .iter()
            .filter(|(t, _)| t.len() < s.len() && t.is_subset_of(&s))
            .map(|(_, v)| v)
            .sum();
        out.insert(s, closed - lower);
    }
    Ok(out)
}

/// Dense value of one marginal basis function, from the recursive
/// definition. The upper boundary takes the left limit.
fn dense_basis(b: &MarginalBasis, j: usize, x: f64) -> f64 {
    match b {
        MarginalBasis::Spline { knots } => {
            let nb = knots.basis_count(CUBIC);
            if x >= knots.hi() {
                return f64::from(u8::from(j == nb - 1));
            }
            bspline_basis(j, CUBIC, knots, x.max(knots.lo()))
        }
        MarginalBasis::Indicator { values } => {
            let nearest = values.iter().enumerate().fold(0, |best, (i, v)| {
                if (x - v).abs() < (x - values[best]).abs() {
                    i
                } else {
                    best
                }
            });
            f64::from(u8::from(j == nearest))
        }
    }
}

/// Full tensor sum over every coefficient.
fn dense_component(c: &SplineComponent, x: &[f64]) -> f64 {
    let shape: Vec<usize> = c.bases.iter().map(MarginalBasis::size).collect();
    let mut sum = 0.0;
    for (flat, coef) in c.coefficients.iter().enumerate() {
        let mut rest = flat;
        let mut v = *coef;
        for d in (0..shape.len()).rev() {
            let jd = rest % shape[d];
            rest /= shape[d];
            v *= dense_basis(&c.bases[d], jd, x[c.subset.indices()[d]]);
        }
        sum += v;
    }
    sum
}

/// `Σ_z p(z) f_S(z_S) (g(z) - f0)` for every component of `model`, with
/// components evaluated densely.
pub fn empirical_covariance_decomposition(
    inst: &DiscreteInstance,
    model: &ComponentModel,
) -> BTreeMap<SubsetIndex, f64> {
    let tuples: Vec<(f64, Vec<f64>, f64)> = (0..inst.support_size())
        .map(|t| (inst.prob(t), inst.tuple(t), inst.g[t]))
        .filter(|(p, ..)| *p > 0.0)
        .collect();
    model
        .components
        .iter()
        .map(|c| {
            let v = tuples
                .iter()
                .map(|(p, z, g)| p * dense_component(c, z) * (g - model.f0))
                .sum();
            (c.subset.clone(), v)
        })
        .collect()
}

/// `|(p1(1-p1) - p2(1-p2)) / (1 - (p1+p2)) - (p1 - p2)|`.
pub fn scaled_variance_identity(p1: f64, p2: f64) -> Result<f64, OracleError> {
    Ok((scaled_variance_quotient(p1, p2)? - (p1 - p2)).abs())
}

/// `(p1(1-p1) - p2(1-p2)) / (1 - (p1+p2))`.
pub fn scaled_variance_quotient(p1: f64, p2: f64) -> Result<f64, OracleError> {
    let den = 1.0 - (p1 + p2);
    if den == 0.0 {
        return Err(OracleError::IdentityUndefined);
    }
    Ok((p1 * (1.0 - p1) - p2 * (1.0 - p2)) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsa::{backfit_targets, variance_shares_for_targets, BackfitOptions};

    fn binary2(g: impl Fn(&[f64]) -> f64) -> DiscreteInstance {
        DiscreteInstance::tabulate(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            Distribution::Product(vec![vec![0.5, 0.5], vec![0.5, 0.5]]),
            g,
        )
        .unwrap()
    }

    fn v(map: &BTreeMap<SubsetIndex, f64>, idx: &[usize]) -> f64 {
        map[&SubsetIndex::new(idx.to_vec()).unwrap()]
    }

    #[test]
    fn constant_function_has_no_variance() {
        let a = anova_exhaustive(&binary2(|_| 3.0)).unwrap();
        assert!(a.values().all(|&x| x == 0.0));
    }

    #[test]
    fn projection_and_xor_by_hand() {
        let a = anova_exhaustive(&binary2(|z| z[0])).unwrap();
        assert!((v(&a, &[0]) - 0.25).abs() < 1e-15);
        assert!(v(&a, &[1]).abs() < 1e-15 && v(&a, &[0, 1]).abs() < 1e-15);
        let x = anova_exhaustive(&binary2(|z| f64::from(u8::from(z[0] != z[1])))).unwrap();
        assert!(v(&x, &[0]).abs() < 1e-15 && v(&x, &[1]).abs() < 1e-15);
        assert!((v(&x, &[0, 1]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn anova_closes_on_variance() {
        let inst = DiscreteInstance::tabulate(
            vec![vec![0.0, 1.0, 2.0], vec![0.0, 1.0], vec![-1.0, 0.5, 2.0, 3.0]],
            Distribution::Product(vec![vec![0.2, 0.3, 0.5], vec![0.9, 0.1], vec![0.25, 0.25, 0.4, 0.1]]),
            |z| (z[0] * z[1] - z[2]).sin() + z[0] * z[2],
        )
        .unwrap();
        let a = anova_exhaustive(&inst).unwrap();
        assert_eq!(a.len(), 7);
        let total: f64 = a.values().sum();
        assert!((total - inst.variance()).abs() < 1e-10);
    }

    #[test]
    fn non_product_joint_is_rejected() {
        let inst = DiscreteInstance::new(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            Distribution::Joint(vec![0.4, 0.1, 0.1, 0.4]),
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        assert!(matches!(anova_exhaustive(&inst), Err(OracleError::NotProduct)));
        let product = DiscreteInstance::new(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            Distribution::Joint(vec![0.06, 0.54, 0.04, 0.36]),
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        assert!(anova_exhaustive(&product).is_ok());
    }

    #[test]
    fn bad_probabilities_rejected() {
        let r = DiscreteInstance::new(
            vec![vec![0.0, 1.0]],
            Distribution::Product(vec![vec![0.5, 0.6]]),
            vec![0.0, 1.0],
        );
        assert!(matches!(r, Err(OracleError::BadProbabilities(_))));
    }

    #[test]
    fn json_fixture_round_trip() {
        let inst = binary2(|z| z[0] + 2.0 * z[1]);
        let json = serde_json::to_string(&inst).unwrap();
        assert_eq!(DiscreteInstance::from_json(&json).unwrap(), inst);
    }

    #[test]
    fn dense_evaluation_matches_fitted_shares() {
        let inst = DiscreteInstance::tabulate(
            vec![vec![0.0, 1.0], (0..9).map(|i| i as f64 / 8.0).collect()],
            Distribution::Product(vec![vec![0.3, 0.7], vec![1.0 / 9.0; 9]]),
            |z| f64::from(u8::from(z[1] > 0.4 + 0.3 * z[0])),
        )
        .unwrap();
        let d = inst.to_weighted_dataset("g");
        let targets = inst.targets();
        let model = backfit_targets(&d, &targets, &BackfitOptions::default()).unwrap();
        let shares = variance_shares_for_targets(&model, &d, &targets);
        let dense = empirical_covariance_decomposition(&inst, &model);
        for s in shares {
            assert!((dense[&s.subset] - s.value).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_examples() {
        assert!((scaled_variance_quotient(0.704, 0.172).unwrap() - 0.532).abs() < 1e-12);
        assert!(scaled_variance_identity(0.704, 0.172).unwrap() <= 1e-12);
        assert_eq!(scaled_variance_quotient(0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(
            scaled_variance_identity(0.25, 0.75),
            Err(OracleError::IdentityUndefined)
        ));
    }
}
