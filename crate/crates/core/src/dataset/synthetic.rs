//! Seeded synthetic datasets.
//!
//! [`generate_insurance_example`] builds the two-group health-insurance data
//! (income, fitness, age) whose group-conditional feature distributions make
//! a fixed decision tree unfair to the elderly. [`generate_population`]
//! builds a wider, intersectional (race x sex) population used for
//! benchmarks and runtime envelopes.
//!
//! Both use stratified (Latin hypercube) uniforms per feature and group, so
//! empirical marginals track the population ones closely for every seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{Dataset, GroupKey, Record, Schema};

/// Gaussian with the given mean and sd, truncated to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
}

impl TruncatedNormal {
    pub const fn new(mean: f64, sd: f64) -> Self {
        TruncatedNormal { mean, sd }
    }

    fn bounds(&self) -> (f64, f64) {
        let n = Normal::standard();
        (n.cdf((0.0 - self.mean) / self.sd), n.cdf((1.0 - self.mean) / self.sd))
    }

    /// Inverse CDF on `[0, 1]`.
    pub fn quantile(&self, u: f64) -> f64 {
        let n = Normal::standard();
        let (lo, hi) = self.bounds();
        let p = (lo + u * (hi - lo)).clamp(1e-300, 1.0 - 1e-16);
        (self.mean + self.sd * n.inverse_cdf(p)).clamp(0.0, 1.0)
    }

    /// `Pr[X >= t]`.
    pub fn survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        if t >= 1.0 {
            return 0.0;
        }
        let n = Normal::standard();
        let (lo, hi) = self.bounds();
        (hi - n.cdf((t - self.mean) / self.sd)) / (hi - lo)
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let n = Normal::standard();
        let (lo, hi) = self.bounds();
        n.pdf((x - self.mean) / self.sd) / (self.sd * (hi - lo))
    }
}

/// Ground-truth label model: `Pr[Y=1] = sigmoid(intercept + b_income*income
/// + b_fitness*fitness + young_bonus*[young])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelModel {
    pub intercept: f64,
    pub income: f64,
    pub fitness: f64,
    pub young_bonus: f64,
}

/// Seed of the reference insurance sample (500 rows per group).
pub const EXAMPLE_SEED: u64 = 2024;

/// Parameters of the insurance generator. The defaults are calibrated so the
/// fixed tree `DT1` has a positive-rate gap near 0.53 between young and
/// elderly, the affirmative tree `DT2` nearly closes it, and the FIFs of
/// `DT1` come out near 0.74 for fitness and -0.33 for income.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InsuranceParams {
    pub young_income: TruncatedNormal,
    pub young_fitness: TruncatedNormal,
    pub elderly_income: TruncatedNormal,
    pub elderly_fitness: TruncatedNormal,
    pub label: LabelModel,
}

impl InsuranceParams {
    pub const YOUNG_INCOME: TruncatedNormal = TruncatedNormal::new(0.4068, 0.0775);
    pub const YOUNG_FITNESS: TruncatedNormal = TruncatedNormal::new(0.6752, 0.0986);
    pub const ELDERLY_INCOME: TruncatedNormal = TruncatedNormal::new(0.5955, 0.0786);
    pub const ELDERLY_FITNESS: TruncatedNormal = TruncatedNormal::new(0.2756, 0.2);
    pub const LABEL: LabelModel = LabelModel {
        intercept: -4.0,
        income: 3.0,
        fitness: 4.0,
        young_bonus: 1.0,
    };
}

impl Default for InsuranceParams {
    fn default() -> Self {
        InsuranceParams {
            young_income: Self::YOUNG_INCOME,
            young_fitness: Self::YOUNG_FITNESS,
            elderly_income: Self::ELDERLY_INCOME,
            elderly_fitness: Self::ELDERLY_FITNESS,
            label: Self::LABEL,
        }
    }
}

pub fn insurance_schema() -> Schema {
    Schema {
        features: vec!["income".into(), "fitness".into()],
        sensitive: vec!["age".into()],
        label: "Y".into(),
        prediction: None,
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Stratified uniforms: one draw per stratum `[i/n, (i+1)/n)`, shuffled.
fn stratified_uniforms(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut strata: Vec<usize> = (0..n).collect();
    strata.shuffle(rng);
    strata
        .into_iter()
        .map(|s| (s as f64 + rng.random::<f64>()) / n as f64)
        .collect()
}

/// `n_per_group` young rows followed by `n_per_group` elderly rows.
pub fn generate_insurance_example(n_per_group: usize, params: &InsuranceParams, seed: u64) -> Dataset {
    assert!(n_per_group >= 1, "n_per_group must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(2 * n_per_group);
    let groups = [
        ("young", params.young_income, params.young_fitness, 1.0),
        ("elderly", params.elderly_income, params.elderly_fitness, 0.0),
    ];
    for (name, income, fitness, young) in groups {
        let ui = stratified_uniforms(&mut rng, n_per_group);
        let uf = stratified_uniforms(&mut rng, n_per_group);
        for (u_inc, u_fit) in ui.into_iter().zip(uf) {
            let x_inc = income.quantile(u_inc);
            let x_fit = fitness.quantile(u_fit);
            let l = params.label;
            let p = sigmoid(l.intercept + l.income * x_inc + l.fitness * x_fit + l.young_bonus * young);
            let y = u8::from(rng.random::<f64>() < p);
            records.push(Record {
                id: records.len(),
                x: vec![x_inc, x_fit],
                a: GroupKey::new([name]),
                y,
                y_hat: None,
            });
        }
    }
    Dataset::new(insurance_schema(), records, None).expect("generator output conforms to schema")
}

/// A COMPAS-like population: two binary sensitive features (race, sex),
/// `k` standardized features with a shared latent factor, group-dependent
/// shifts on the first half of the features, and logistic labels with one
/// pairwise interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationParams {
    pub n: usize,
    pub k: usize,
    /// Mean shift applied to shifted features for the disadvantaged race.
    pub shift: f64,
    /// Latent-factor loading in [0, 1); 0 gives independent features.
    pub correlation: f64,
    /// Direct label advantage for the advantaged race.
    pub label_bias: f64,
    pub seed: u64,
}

impl Default for PopulationParams {
    fn default() -> Self {
        PopulationParams {
            n: 2000,
            k: 6,
            shift: 0.8,
            correlation: 0.3,
            label_bias: 0.8,
            seed: 7,
        }
    }
}

pub fn generate_population(params: &PopulationParams) -> Dataset {
    assert!(params.n >= 1 && params.k >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let std_normal = Normal::standard();
    let features: Vec<String> = (0..params.k).map(|j| format!("x{}", j + 1)).collect();
    let schema = Schema {
        features,
        sensitive: vec!["race".into(), "sex".into()],
        label: "label".into(),
        prediction: None,
    };
    let rho = params.correlation.clamp(0.0, 0.99);
    let mut records = Vec::with_capacity(params.n);
    // One stratified column per feature plus the latent factor.
    let columns: Vec<Vec<f64>> = (0..=params.k)
        .map(|_| stratified_uniforms(&mut rng, params.n))
        .collect();
    for i in 0..params.n {
        let disadvantaged = rng.random::<f64>() < 0.4;
        let female = rng.random::<f64>() < 0.5;
        let latent = std_normal.inverse_cdf(columns[params.k][i].clamp(1e-12, 1.0 - 1e-12));
        let mut x = Vec::with_capacity(params.k);
        for (j, col) in columns.iter().take(params.k).enumerate() {
            let e = std_normal.inverse_cdf(col[i].clamp(1e-12, 1.0 - 1e-12));
            let mut v = rho.sqrt() * latent + (1.0 - rho).sqrt() * e;
            if j < params.k.div_ceil(2) && disadvantaged {
                v -= params.shift * if j % 2 == 0 { 1.0 } else { -0.5 };
            }
            if j == 1 && female {
                v += 0.3;
            }
            x.push(v);
        }
        let mut z = -0.2 + 0.9 * x[0];
        if params.k > 1 {
            z += 0.5 * x[1];
        }
        if params.k > 2 {
            z -= 0.4 * x[2] + 0.5 * x[0] * x[2];
        }
        if params.k > 3 {
            z += 0.3 * x[3];
        }
        if !disadvantaged {
            z += params.label_bias;
        }
        let y = u8::from(rng.random::<f64>() < sigmoid(z));
        records.push(Record {
            id: i,
            x,
            a: GroupKey::new([if disadvantaged { "B" } else { "A" }, if female { "F" } else { "M" }]),
            y,
            y_hat: None,
        });
    }
    Dataset::new(schema, records, None).expect("generator output conforms to schema")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insurance_is_reproducible() {
        let p = InsuranceParams::default();
        let a = generate_insurance_example(200, &p, 11);
        let b = generate_insurance_example(200, &p, 11);
        assert_eq!(a, b);
        let c = generate_insurance_example(200, &p, 12);
        assert_ne!(a, c);
    }

    #[test]
    fn insurance_layout() {
        let d = generate_insurance_example(500, &InsuranceParams::default(), 1);
        assert_eq!(d.len(), 1000);
        let keys = d.group_keys();
        assert_eq!(keys, vec![GroupKey::new(["young"]), GroupKey::new(["elderly"])]);
        let young = d.filter_group(&keys[0]).unwrap();
        assert_eq!(young.len(), 500);
        assert!(young.records().iter().all(|r| r.id < 500));
        let elderly = d.filter_group(&keys[1]).unwrap();
        assert_eq!(young.len() + elderly.len(), d.len());
        assert!(d.records().iter().all(|r| r.x.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn truncated_normal_quantile_inverts_survival() {
        let t = TruncatedNormal::new(0.3, 0.2);
        for &u in &[0.05, 0.3, 0.5, 0.9] {
            let x = t.quantile(u);
            assert!((1.0 - t.survival(x) - u).abs() < 1e-9);
        }
        assert_eq!(t.survival(-1.0), 1.0);
        assert_eq!(t.survival(1.5), 0.0);
    }

    #[test]
    fn population_is_reproducible_and_intersectional() {
        let p = PopulationParams::default();
        let a = generate_population(&p);
        assert_eq!(a, generate_population(&p));
        assert_eq!(a.group_keys().len(), 4);
        assert_eq!(a.k(), 6);
    }
}
