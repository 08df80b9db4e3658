//! B-spline bases over clamped knot vectors.
//!
//! [`bspline_basis`] is the textbook de Boor recursion, one function at a
//! time. [`KnotVector::nonzero`] evaluates all basis functions that are
//! non-zero at a point in one triangular pass and is what fitting uses.

use serde::{Deserialize, Serialize};

/// Spline order used for smoothing (cubic).
pub const CUBIC: usize = 4;

/// Clamped knot vector for cubic splines: the lower boundary repeated
/// `CUBIC` times, strictly increasing interior knots, the upper boundary
/// repeated `CUBIC` times. Breakpoints `lo < interior.. < hi` split the
/// range into `m` spans and carry `m + 3` cubic basis functions (indices
/// `0..m+3`, i.e. the `-1..=m+1` range shifted by one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    knots: Vec<f64>,
}

impl KnotVector {
    /// Clamped cubic knots over `[lo, hi]` with the given interior knots.
    /// Interior knots outside `(lo, hi)` or not strictly increasing are
    /// dropped.
    pub fn clamped(lo: f64, hi: f64, interior: &[f64]) -> Self {
        assert!(hi > lo, "knot range must be non-degenerate");
        let mut knots = vec![lo; CUBIC];
        let mut last = lo;
        for &t in interior {
            if t > last && t < hi {
                knots.push(t);
                last = t;
            }
        }
        knots.extend(std::iter::repeat_n(hi, CUBIC));
        KnotVector { knots }
    }

    /// Interior knots at the `j/(count+1)` empirical quantiles of `values`.
    pub fn from_quantiles(values: &[f64], count: usize) -> Self {
        let mut sorted: Vec<f64> = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let n = sorted.len();
        let interior: Vec<f64> = (1..=count)
            .map(|j| {
                let q = j as f64 / (count + 1) as f64;
                let pos = q * (n - 1) as f64;
                let i = pos.floor() as usize;
                let frac = pos - i as f64;
                if i + 1 < n {
                    sorted[i] + frac * (sorted[i + 1] - sorted[i])
                } else {
                    sorted[n - 1]
                }
            })
            .collect();
        KnotVector::clamped(lo, hi, &interior)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn lo(&self) -> f64 {
        self.knots[0]
    }

    pub fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Number of spans `m` between distinct breakpoints.
    pub fn span_count(&self) -> usize {
        self.knots.len() - 2 * CUBIC + 1
    }

    /// Number of basis functions of the given order.
    pub fn basis_count(&self, order: usize) -> usize {
        self.knots.len() - order
    }

    /// Cubic basis functions that can be non-zero at `x`: returns the index
    /// of the first one and the `CUBIC` values. `x` is clamped to the knot
    /// range and the upper boundary belongs to the last span, so the values
    /// always sum to one.
    pub fn nonzero(&self, x: f64) -> (usize, [f64; CUBIC]) {
        let t = &self.knots;
        let p = CUBIC - 1;
        let nb = self.basis_count(CUBIC);
        let x = x.clamp(self.lo(), self.hi());
        // Largest span index s in [p, nb-1] with t[s] <= x.
        let span = if x >= t[nb] {
            nb - 1
        } else {
            let mut lo = p;
            let mut hi = nb;
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if x >= t[mid] {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let mut n = [0.0; CUBIC];
        let mut left = [0.0; CUBIC];
        let mut right = [0.0; CUBIC];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (span - p, n)
    }
}

/// `B_{r,order}(x)` by the de Boor recursion: order 1 is the indicator of
/// `[t_r, t_{r+1})`, and
/// `B_{r,n+1} = p_{r,n} B_{r,n} + (1 - p_{r+1,n}) B_{r+1,n}` with
/// `p_{r,n}(x) = (x - t_r) / (t_{r+n} - t_r)`, or 0 when those knots
/// coincide. Indices outside the knot vector give 0.
pub fn bspline_basis(r: usize, order: usize, knots: &KnotVector, x: f64) -> f64 {
    let t = knots.knots();
    if order == 0 || r + order >= t.len() {
        return 0.0;
    }
    if order == 1 {
        return if t[r] <= x && x < t[r + 1] { 1.0 } else { 0.0 };
    }
    let n = order - 1;
    let ratio = |i: usize| {
        let den = t[i + n] - t[i];
        if den != 0.0 {
            (x - t[i]) / den
        } else {
            0.0
        }
    };
    ratio(r) * bspline_basis(r, n, knots, x) + (1.0 - ratio(r + 1)) * bspline_basis(r + 1, n, knots, x)
}

/// Per-dimension basis of a component: cubic splines, or indicators on a
/// small set of observed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MarginalBasis {
    Spline { knots: KnotVector },
    Indicator { values: Vec<f64> },
}

/// Features with at most this many distinct values use indicator bases.
pub const MAX_INDICATOR_LEVELS: usize = 4;

impl MarginalBasis {
    /// Indicators when the column has at most four distinct values,
    /// otherwise cubic splines with `knot_count` quantile interior knots.
    pub fn for_column(values: &[f64], knot_count: usize) -> Self {
        let mut distinct: Vec<f64> = values.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() <= MAX_INDICATOR_LEVELS {
            MarginalBasis::Indicator { values: distinct }
        } else {
            MarginalBasis::Spline {
                knots: KnotVector::from_quantiles(values, knot_count),
            }
        }
    }

    pub fn size(&self) -> usize {
        match self {
            MarginalBasis::Spline { knots } => knots.basis_count(CUBIC),
            MarginalBasis::Indicator { values } => values.len(),
        }
    }

    /// First non-zero index, values, and how many of them are meaningful.
    pub fn nonzero(&self, x: f64) -> (usize, [f64; CUBIC], usize) {
        match self {
            MarginalBasis::Spline { knots } => {
                let (start, v) = knots.nonzero(x);
                (start, v, CUBIC)
            }
            MarginalBasis::Indicator { values } => {
                // Exact match, else the nearest level (lower one on ties).
                let mut best = 0;
                for (i, v) in values.iter().enumerate() {
                    if (x - v).abs() < (x - values[best]).abs() {
                        best = i;
                    }
                }
                let mut out = [0.0; CUBIC];
                out[0] = 1.0;
                (best, out, 1)
            }
        }
    }

    /// Dense value of basis function `j` at `x`.
    pub fn value(&self, j: usize, x: f64) -> f64 {
        let (start, v, len) = self.nonzero(x);
        if j >= start && j < start + len {
            v[j - start]
        } else {
            0.0
        }
    }
}
