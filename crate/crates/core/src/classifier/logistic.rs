use serde::{Deserialize, Serialize};

use super::tree::check_trainable;
use super::{ClassifierError, FeatureEncoder, Predictor, PredictorKind};
use crate::dataset::{Dataset, Record};
use crate::linalg::{Cholesky, SymMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub encoder: FeatureEncoder,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LogisticModel {
    pub fn probability(&self, row: &Record) -> Result<f64, ClassifierError> {
        let v = self.encoder.encode(row)?;
        Ok(sigmoid(self.linear(&v)))
    }

    fn linear(&self, v: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(v).map(|(c, x)| c * x).sum::<f64>()
    }
}

impl Predictor for LogisticModel {
    fn predict(&self, row: &Record) -> Result<u8, ClassifierError> {
        Ok(u8::from(self.probability(row)? >= 0.5))
    }
    fn kind(&self) -> PredictorKind {
        PredictorKind::Logistic
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    /// Ridge penalty on the coefficients (not the intercept), on the
    /// weight-normalized log-likelihood.
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub include_sensitive: bool,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            l2: 1e-4,
            max_iter: 100,
            tol: 1e-10,
            include_sensitive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub model: LogisticModel,
    pub converged: bool,
    pub iterations: usize,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Weighted maximum likelihood by damped Newton steps from the zero vector.
/// A non-converged fit still returns its best iterate.
pub fn train_logistic(d: &Dataset, opts: &LogisticOptions) -> Result<LogisticFit, ClassifierError> {
    check_trainable(d)?;
    let encoder = FeatureEncoder::new(d, opts.include_sensitive);
    // Design rows with a leading 1 for the intercept.
    let design: Vec<Vec<f64>> = d
        .records()
        .iter()
        .map(|r| {
            let mut v = vec![1.0];
            v.extend(encoder.encode(r)?);
            Ok(v)
        })
        .collect::<Result<_, ClassifierError>>()?;
    let y: Vec<f64> = d.records().iter().map(|r| f64::from(r.y)).collect();
    let w = d.weight_vec();
    let total: f64 = w.iter().sum();
    let p = encoder.dim() + 1;

    let objective = |beta: &[f64]| -> f64 {
        let mut nll = 0.0;
        for ((xi, yi), wi) in design.iter().zip(&y).zip(&w) {
            if *wi == 0.0 {
                continue;
            }
            let z: f64 = xi.iter().zip(beta).map(|(a, b)| a * b).sum();
            nll += wi * (softplus(z) - yi * z);
        }
        nll / total + 0.5 * opts.l2 * beta[1..].iter().map(|b| b * b).sum::<f64>()
    };

    let mut beta = vec![0.0; p];
    let mut current = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut grad = vec![0.0; p];
        let mut hess = SymMatrix::zeros(p);
        for ((xi, yi), wi) in design.iter().zip(&y).zip(&w) {
            if *wi == 0.0 {
                continue;
            }
            let z: f64 = xi.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let mu = sigmoid(z);
            let r = wi * (mu - yi) / total;
            let s = wi * mu * (1.0 - mu) / total;
            for a in 0..p {
                grad[a] += r * xi[a];
                for b in 0..=a {
                    hess.add_lower(a, b, s * xi[a] * xi[b]);
                }
            }
        }
        for a in 1..p {
            grad[a] += opts.l2 * beta[a];
            hess.add_lower(a, a, opts.l2);
        }
        hess.add_diagonal(1e-10);
        let Ok(chol) = Cholesky::factor(&hess) else {
            break;
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - t * s).collect();
            let val = objective(&cand);
            if val <= current {
                let moved = step.iter().map(|s| (t * s).abs()).fold(0.0, f64::max);
                beta = cand;
                current = val;
                accepted = true;
                if moved < opts.tol {
                    converged = true;
                }
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No descent direction left: at the optimum up to rounding.
            converged = grad.iter().map(|g| g.abs()).fold(0.0, f64::max) < 1e-8;
            break;
        }
        if converged {
            break;
        }
    }
    Ok(LogisticFit {
        model: LogisticModel {
            encoder,
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        },
        converged,
        iterations,
    })
}
