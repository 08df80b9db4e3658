//! Tensor-product spline components and their least-squares fits.

use serde::{Deserialize, Serialize};

use super::bspline::{MarginalBasis, CUBIC};
use super::{GsaError, SubsetIndex, MAX_ORDER};
use crate::linalg::{Cholesky, SymMatrix};

/// One component `f_S`: a coefficient tensor over the product of the
/// per-dimension bases of `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineComponent {
    pub subset: SubsetIndex,
    /// One basis per feature of `subset`, in the same order.
    pub bases: Vec<MarginalBasis>,
    /// Row-major coefficient tensor (last dimension fastest), of length
    /// `Π bases[d].size()`.
    pub coefficients: Vec<f64>,
}

impl SplineComponent {
    pub fn zeros(subset: SubsetIndex, bases: Vec<MarginalBasis>) -> Self {
        assert_eq!(subset.len(), bases.len());
        let size = bases.iter().map(MarginalBasis::size).product();
        SplineComponent {
            subset,
            bases,
            coefficients: vec![0.0; size],
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.bases.iter().map(MarginalBasis::size).collect()
    }

    /// Value at the subset coordinates `x_s` (length `|S|`, unchecked).
    pub fn evaluate(&self, x_s: &[f64]) -> f64 {
        let mut sum = 0.0;
        for_each_product(&self.bases, x_s, |j, v| sum += self.coefficients[j] * v);
        sum
    }

    /// Value at a full feature vector.
    pub fn evaluate_full(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0; MAX_ORDER];
        for (d, &j) in self.subset.indices().iter().enumerate() {
            buf[d] = x[j];
        }
        self.evaluate(&buf[..self.subset.len()])
    }

    /// Subtract a constant from the function. Every product basis is a
    /// partition of unity on its range, so shifting all coefficients
    /// shifts the function.
    pub(crate) fn shift(&mut self, c: f64) {
        for v in &mut self.coefficients {
            *v -= c;
        }
    }
}

/// Checked evaluation of a component at subset coordinates.
pub fn evaluate_component(c: &SplineComponent, x_s: &[f64]) -> Result<f64, GsaError> {
    if x_s.len() != c.subset.len() {
        return Err(GsaError::DimensionMismatch {
            expected: c.subset.len(),
            found: x_s.len(),
        });
    }
    Ok(c.evaluate(x_s))
}

/// Calls `f(flat_index, value)` for every product basis function that can
/// be non-zero at `x_s`.
fn for_each_product(bases: &[MarginalBasis], x_s: &[f64], mut f: impl FnMut(usize, f64)) {
    let dims = bases.len();
    let mut starts = [0usize; MAX_ORDER];
    let mut vals = [[0.0; CUBIC]; MAX_ORDER];
    let mut lens = [0usize; MAX_ORDER];
    let mut strides = [0usize; MAX_ORDER];
    let mut stride = 1;
    for d in (0..dims).rev() {
        let (s, v, l) = bases[d].nonzero(x_s[d]);
        starts[d] = s;
        vals[d] = v;
        lens[d] = l;
        strides[d] = stride;
        stride *= bases[d].size();
    }
    let mut counter = [0usize; MAX_ORDER];
    loop {
        let mut idx = 0;
        let mut v = 1.0;
        for d in 0..dims {
            idx += (starts[d] + counter[d]) * strides[d];
            v *= vals[d][counter[d]];
        }
        f(idx, v);
        // Odometer increment, last dimension fastest.
        let mut d = dims;
        loop {
            if d == 0 {
                return;
            }
            d -= 1;
            counter[d] += 1;
            if counter[d] < lens[d] {
                break;
            }
            counter[d] = 0;
        }
    }
}

/// Applies `f` to every fiber along `axis` of a row-major tensor, producing
/// fibers of length `out_len`.
fn map_fibers(data: &[f64], shape: &[usize], axis: usize, out_len: usize, f: impl Fn(&[f64], &mut [f64])) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let len = shape[axis];
    let mut out = vec![0.0; outer * out_len * inner];
    let mut fiber = vec![0.0; len];
    let mut mapped = vec![0.0; out_len];
    for o in 0..outer {
        for i in 0..inner {
            for (j, v) in fiber.iter_mut().enumerate() {
                *v = data[(o * len + j) * inner + i];
            }
            f(&fiber, &mut mapped);
            for (j, v) in mapped.iter().enumerate() {
                out[(o * out_len + j) * inner + i] = *v;
            }
        }
    }
    out
}

/// Adds `smoothing · Σ_d |Δ²_d c|²`, the tensor-product second-difference
/// penalty along every spline dimension of the coefficient tensor.
fn add_roughness_penalty(gram: &mut SymMatrix, bases: &[MarginalBasis], smoothing: f64) {
    let shape: Vec<usize> = bases.iter().map(MarginalBasis::size).collect();
    let mut stride = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        stride[d] = stride[d + 1] * shape[d + 1];
    }
    for (d, b) in bases.iter().enumerate() {
        let m = shape[d];
        if !matches!(b, MarginalBasis::Spline { .. }) || m < 3 {
            continue;
        }
        // D^T D for second differences along one axis, as a banded matrix.
        let dtd = |a: usize, b: usize| -> f64 {
            let rows = a.max(b).saturating_sub(2)..=a.min(b).min(m - 3);
            rows.map(|r| {
                let coef = |i: usize| match i as isize - r as isize {
                    0 | 2 => 1.0,
                    1 => -2.0,
                    _ => 0.0,
                };
                coef(a) * coef(b)
            })
            .sum()
        };
        let total: usize = shape.iter().product();
        for flat in 0..total {
            let ja = (flat / stride[d]) % m;
            for jb in ja.saturating_sub(2)..=ja {
                let v = dtd(ja, jb);
                if v != 0.0 {
                    let other = flat - (ja - jb) * stride[d];
                    gram.add_lower(flat, other, smoothing * v);
                }
            }
        }
    }
}

/// Change of basis between full tensor coefficients and coefficients over
/// the centered marginals `B_j - mean(B_j)`, `j < m - 1`.
///
/// Every marginal basis sums to one, so `B_j - mu_j` equals the full basis
/// combination `e_j - mu_j * 1`; that matrix is `T` (`m x (m - 1)`) and the
/// tensor map is the Kronecker product of the per-dimension `T`s.
#[derive(Debug, Clone)]
struct Centering {
    means: Vec<Vec<f64>>,
}

impl Centering {
    fn full_shape(&self) -> Vec<usize> {
        self.means.iter().map(Vec::len).collect()
    }

    fn reduced_size(&self) -> usize {
        self.means.iter().map(|m| m.len() - 1).product()
    }

    /// `T^T v` for a full-size tensor `v`.
    fn restrict(&self, v: &[f64]) -> Vec<f64> {
        let mut shape = self.full_shape();
        let mut cur = v.to_vec();
        for (axis, mu) in self.means.iter().enumerate() {
            let m = mu.len();
            cur = map_fibers(&cur, &shape, axis, m - 1, |x, out| {
                let total: f64 = x.iter().sum();
                for k in 0..m - 1 {
                    out[k] = x[k] - mu[k] * total;
                }
            });
            shape[axis] = m - 1;
        }
        cur
    }

    /// `T c` for a reduced tensor `c`.
    fn extend(&self, c: &[f64]) -> Vec<f64> {
        let mut shape: Vec<usize> = self.means.iter().map(|m| m.len() - 1).collect();
        let mut cur = c.to_vec();
        for (axis, mu) in self.means.iter().enumerate() {
            let m = mu.len();
            cur = map_fibers(&cur, &shape, axis, m, |x, out| {
                let s: f64 = x.iter().zip(mu).map(|(a, b)| a * b).sum();
                for j in 0..m {
                    out[j] = if j < m - 1 { x[j] } else { 0.0 } - s;
                }
            });
            shape[axis] = m;
        }
        cur
    }
}

/// Sparse design matrix of one subset over a fixed set of rows, with the
/// factored normal equations. Built once per subset and reused by every
/// backfitting sweep.
///
/// A centered smoother fits in the span of products of mean-centered
/// marginals, which excludes constants and every lower-order function of
/// the same features. Nested components then no longer share a subspace,
/// so the split between a main effect and its interactions is identified.
pub(crate) struct Smoother {
    size: usize,
    nnz: usize,
    idx: Vec<u32>,
    val: Vec<f64>,
    centering: Option<Centering>,
    /// `None` when the centered space is empty (a single-level feature).
    chol: Option<Cholesky>,
}

impl Smoother {
    /// `rows[i]` are the subset coordinates of row `i`; `weights` must sum
    /// to one.
    pub(crate) fn new(
        subset: &SubsetIndex,
        bases: &[MarginalBasis],
        rows: &[Vec<f64>],
        weights: &[f64],
        ridge: f64,
        smoothing: f64,
        centered: bool,
    ) -> Result<Self, GsaError> {
        let size: usize = bases.iter().map(MarginalBasis::size).product();
        let mut idx = Vec::new();
        let mut val = Vec::new();
        let mut nnz = 0;
        for (i, x_s) in rows.iter().enumerate() {
            let before = idx.len();
            for_each_product(bases, x_s, |j, v| {
                idx.push(j as u32);
                val.push(v);
            });
            if i == 0 {
                nnz = idx.len();
            }
            debug_assert_eq!(idx.len() - before, nnz);
        }
        let mut gram = SymMatrix::zeros(size);
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let ri = &idx[i * nnz..(i + 1) * nnz];
            let rv = &val[i * nnz..(i + 1) * nnz];
            for a in 0..nnz {
                let wa = w * rv[a];
                if wa == 0.0 {
                    continue;
                }
                for b in 0..nnz {
                    let (p, q) = (ri[a] as usize, ri[b] as usize);
                    if q <= p {
                        gram.add_lower(p, q, wa * rv[b]);
                    }
                }
            }
        }
        if smoothing > 0.0 {
            add_roughness_penalty(&mut gram, bases, smoothing);
        }
        let centering = centered.then(|| {
            let means = bases
                .iter()
                .enumerate()
                .map(|(d, b)| {
                    let mut mu = vec![0.0; b.size()];
                    for (x_s, &w) in rows.iter().zip(weights) {
                        let (start, v, len) = b.nonzero(x_s[d]);
                        for (r, v) in v[..len].iter().enumerate() {
                            mu[start + r] += w * v;
                        }
                    }
                    mu
                })
                .collect();
            Centering { means }
        });
        let system = match &centering {
            None => gram,
            Some(c) => {
                let p = c.reduced_size();
                if p == 0 {
                    return Ok(Smoother {
                        size,
                        nnz,
                        idx,
                        val,
                        centering,
                        chol: None,
                    });
                }
                // T^T G T: restrict every column, then every row. The last
                // unknown is an intercept, so that centering the fit after
                // solving gives the projection onto the centered space.
                let mut half = vec![0.0; p * size];
                let mut col = vec![0.0; size];
                let mut row_sums = vec![0.0; size];
                for j in 0..size {
                    for (i, v) in col.iter_mut().enumerate() {
                        *v = gram.get(i, j);
                        row_sums[i] += *v;
                    }
                    for (a, v) in c.restrict(&col).into_iter().enumerate() {
                        half[a * size + j] = v;
                    }
                }
                let mut reduced = SymMatrix::zeros(p + 1);
                for a in 0..p {
                    let row = c.restrict(&half[a * size..(a + 1) * size]);
                    for (b, v) in row.into_iter().enumerate().take(a + 1) {
                        reduced.add_lower(a, b, v);
                    }
                }
                for (b, v) in c.restrict(&row_sums).into_iter().enumerate() {
                    reduced.add_lower(p, b, v);
                }
                reduced.add_lower(p, p, row_sums.iter().sum());
                reduced
            }
        };
        let mut system = system;
        system.add_diagonal(ridge);
        let chol = Cholesky::factor(&system).map_err(|_| GsaError::Singular { subset: subset.clone() })?;
        Ok(Smoother {
            size,
            nnz,
            idx,
            val,
            centering,
            chol: Some(chol),
        })
    }

    /// Full tensor coefficients minimizing `Σ w_i (t_i - f(x_i))² + ridge·|c|²`,
    /// with `c` the coefficients in the fitting space.
    pub(crate) fn fit(&self, targets: &[f64], weights: &[f64]) -> Vec<f64> {
        let Some(chol) = &self.chol else {
            return vec![0.0; self.size];
        };
        let mut rhs = vec![0.0; self.size];
        for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            let wt = w * t;
            if wt == 0.0 {
                continue;
            }
            let base = i * self.nnz;
            for a in base..base + self.nnz {
                rhs[self.idx[a] as usize] += wt * self.val[a];
            }
        }
        match &self.centering {
            None => {
                chol.solve_in_place(&mut rhs);
                rhs
            }
            Some(c) => {
                let mut reduced = c.restrict(&rhs);
                reduced.push(rhs.iter().sum());
                chol.solve_in_place(&mut reduced);
                let intercept = reduced.pop().unwrap_or(0.0);
                let mut full = c.extend(&reduced);
                for v in &mut full {
                    *v += intercept;
                }
                full
            }
        }
    }

    /// Fitted values of `coefficients` on the design rows.
    pub(crate) fn values(&self, coefficients: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let base = i * self.nnz;
            let mut s = 0.0;
            for a in base..base + self.nnz {
                s += coefficients[self.idx[a] as usize] * self.val[a];
            }
            *o = s;
        }
    }
}

/// Ridge least-squares fit of a tensor-product component to `(x_S, t)`
/// pairs with equal weights. With `ridge = 0` a rank-deficient system is
/// reported as [`GsaError::Singular`].
pub fn fit_spline_component(
    targets: &[(Vec<f64>, f64)],
    subset: &SubsetIndex,
    bases: &[MarginalBasis],
    ridge: f64,
) -> Result<SplineComponent, GsaError> {
    if targets.is_empty() {
        return Err(GsaError::NoTargets);
    }
    if bases.len() != subset.len() || subset.len() > MAX_ORDER {
        return Err(GsaError::DimensionMismatch {
            expected: subset.len(),
            found: bases.len(),
        });
    }
    if let Some((x, _)) = targets.iter().find(|(x, _)| x.len() != subset.len()) {
        return Err(GsaError::DimensionMismatch {
            expected: subset.len(),
            found: x.len(),
        });
    }
    let rows: Vec<Vec<f64>> = targets.iter().map(|(x, _)| x.clone()).collect();
    let t: Vec<f64> = targets.iter().map(|(_, t)| *t).collect();
    let w = vec![1.0 / targets.len() as f64; targets.len()];
    let smoother = Smoother::new(subset, bases, &rows, &w, ridge, 0.0, false)?;
    let mut c = SplineComponent::zeros(subset.clone(), bases.to_vec());
    c.coefficients = smoother.fit(&t, &w);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gsa::bspline::{bspline_basis, KnotVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_knots(interior: usize) -> KnotVector {
        let knots: Vec<f64> = (1..=interior).map(|i| i as f64 / (interior + 1) as f64).collect();
        KnotVector::clamped(0.0, 1.0, &knots)
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn zero_targets_give_zero_component() {
        let b = vec![MarginalBasis::Spline { knots: unit_knots(6) }];
        let t: Vec<(Vec<f64>, f64)> = grid(50).into_iter().map(|x| (vec![x], 0.0)).collect();
        let c = fit_spline_component(&t, &SubsetIndex::single(0), &b, 1e-8).unwrap();
        assert!(c.coefficients.iter().all(|&v| v == 0.0));
        assert_eq!(c.evaluate(&[0.3]), 0.0);
    }

    #[test]
    fn recovers_single_basis_function() {
        let knots = unit_knots(6);
        let t: Vec<(Vec<f64>, f64)> = grid(200)
            .into_iter()
            .map(|x| (vec![x], bspline_basis(3, 4, &knots, x.min(1.0 - 1e-15))))
            .collect();
        let b = vec![MarginalBasis::Spline { knots }];
        let c = fit_spline_component(&t, &SubsetIndex::single(0), &b, 0.0).unwrap();
        for (j, &v) in c.coefficients.iter().enumerate() {
            let e = if j == 3 { 1.0 } else { 0.0 };
            assert!((v - e).abs() < 1e-6, "coef {j} = {v}");
        }
    }

    #[test]
    fn reproduces_linear_function() {
        let b = vec![MarginalBasis::Spline { knots: unit_knots(8) }];
        let t: Vec<(Vec<f64>, f64)> = grid(101).into_iter().map(|x| (vec![x], x)).collect();
        let c = fit_spline_component(&t, &SubsetIndex::single(0), &b, 0.0).unwrap();
        for x in grid(1001) {
            assert!((c.evaluate(&[x]) - x).abs() <= 1e-3);
        }
    }

    #[test]
    fn rank_deficient_without_ridge_is_reported() {
        // Only two distinct abscissae for ten basis functions.
        let b = vec![MarginalBasis::Spline { knots: unit_knots(6) }];
        let t = vec![(vec![0.1], 1.0), (vec![0.9], 0.0), (vec![0.1], 1.0)];
        let s = SubsetIndex::single(0);
        assert!(matches!(
            fit_spline_component(&t, &s, &b, 0.0),
            Err(GsaError::Singular { .. })
        ));
        assert!(fit_spline_component(&t, &s, &b, 1e-8).is_ok());
    }

    #[test]
    fn unit_coefficient_gives_basis_product() {
        let k1 = unit_knots(3);
        let k2 = unit_knots(4);
        let s = SubsetIndex::new(vec![0, 1]).unwrap();
        let mut c = SplineComponent::zeros(
            s,
            vec![
                MarginalBasis::Spline { knots: k1.clone() },
                MarginalBasis::Spline { knots: k2.clone() },
            ],
        );
        let n2 = k2.basis_count(4);
        c.coefficients[2 * n2 + 5] = 1.0;
        let (x, y) = (0.37, 0.81);
        let expected = bspline_basis(2, 4, &k1, x) * bspline_basis(5, 4, &k2, y);
        assert!((c.evaluate(&[x, y]) - expected).abs() < 1e-15);
    }

    #[test]
    fn random_tensor_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bases = vec![
            MarginalBasis::Spline { knots: unit_knots(4) },
            MarginalBasis::Indicator {
                values: vec![0.0, 1.0, 2.0],
            },
            MarginalBasis::Spline { knots: unit_knots(2) },
        ];
        let s = SubsetIndex::new(vec![0, 3, 5]).unwrap();
        let mut c = SplineComponent::zeros(s, bases.clone());
        for v in &mut c.coefficients {
            *v = rng.random_range(-1.0..1.0);
        }
        let shape = c.shape();
        for _ in 0..50 {
            let x = [
                rng.random::<f64>(),
                f64::from(rng.random_range(0..3u8)),
                rng.random::<f64>(),
            ];
            let mut direct = 0.0;
            for i in 0..shape[0] {
                for j in 0..shape[1] {
                    for l in 0..shape[2] {
                        direct += c.coefficients[(i * shape[1] + j) * shape[2] + l]
                            * bases[0].value(i, x[0])
                            * bases[1].value(j, x[1])
                            * bases[2].value(l, x[2]);
                    }
                }
            }
            assert!((c.evaluate(&x) - direct).abs() < 1e-12);
        }
        assert!(evaluate_component(&c, &[0.1]).is_err());
    }

    #[test]
    fn component_json_round_trip() {
        let s = SubsetIndex::single(1);
        let mut c = SplineComponent::zeros(s, vec![MarginalBasis::Spline { knots: unit_knots(3) }]);
        c.coefficients[2] = 0.125;
        let back: SplineComponent = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn centering_maps_are_adjoint() {
        let c = Centering {
            means: vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.1, 0.4, 0.4]],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs: f64 = c.restrict(&v).iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = c.extend(&r).iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn roughness_penalty_ignores_linear_coefficients() {
        let bases = vec![
            MarginalBasis::Spline { knots: unit_knots(3) },
            MarginalBasis::Indicator { values: vec![0.0, 1.0] },
        ];
        let size = 7 * 2;
        let mut p = SymMatrix::zeros(size);
        add_roughness_penalty(&mut p, &bases, 1.0);
        let quad = |c: &[f64]| -> f64 {
            (0..size)
                .flat_map(|i| (0..size).map(move |j| (i, j)))
                .map(|(i, j)| c[i] * p.get(i, j) * c[j])
                .sum()
        };
        // Linear along the spline axis, arbitrary along the indicator axis.
        let linear: Vec<f64> = (0..size)
            .map(|f| (f / 2) as f64 * if f % 2 == 0 { 1.0 } else { -3.0 })
            .collect();
        assert!(quad(&linear).abs() < 1e-12);
        let mut bump = vec![0.0; size];
        bump[6] = 1.0;
        assert!((quad(&bump) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn centered_fit_spans_constants_and_centered_functions() {
        // y = 2 + x on a skewed design: the centered smoother plus its
        // intercept reproduces it; the centered part has weighted mean zero.
        let bases = vec![MarginalBasis::Spline { knots: unit_knots(3) }];
        let xs: Vec<f64> = (0..60).map(|i| (i as f64 / 59.0).powi(2)).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let w = vec![1.0 / 60.0; 60];
        let t: Vec<f64> = xs.iter().map(|x| 2.0 + x).collect();
        let sm = Smoother::new(&SubsetIndex::single(0), &bases, &rows, &w, 1e-12, 0.0, true).unwrap();
        let coef = sm.fit(&t, &w);
        let mut fitted = vec![0.0; 60];
        sm.values(&coef, &mut fitted);
        for (f, y) in fitted.iter().zip(&t) {
            assert!((f - y).abs() < 1e-6, "{f} vs {y}");
        }
    }
}
