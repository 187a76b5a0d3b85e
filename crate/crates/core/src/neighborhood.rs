//! Exact K-nearest-neighbor structure and two measures of how well a
//! low-dimensional layout keeps the neighborhoods of the original space:
//! neighborhood agreement and trustworthiness, each swept over K.

use std::io::Write;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper end of the K sweep.
pub const DEFAULT_K_MAX: usize = 100;

/// Every point's neighbors by ascending Euclidean distance, ties broken by
/// ascending index. The point itself is excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborIndex {
    orderings: Vec<Vec<usize>>,
}

impl NeighborIndex {
    pub fn build(points: ArrayView2<'_, f64>) -> Result<Self> {
        let n = points.nrows();
        if n < 2 {
            return Err(Error::Param("neighbor index needs at least 2 points".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite coordinates in neighbor index".into()));
        }
        let orderings = (0..n)
            .into_par_iter()
            .map(|i| {
                let pi = points.row(i);
                let mut d: Vec<(f64, usize)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let s: f64 = pi.iter().zip(points.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                        (s, j)
                    })
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                d.into_iter().map(|(_, j)| j).collect()
            })
            .collect();
        Ok(Self { orderings })
    }

    pub fn n(&self) -> usize {
        self.orderings.len()
    }

    /// Neighbors of `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.orderings[i]
    }

    /// The `k` nearest neighbors of `i`.
    pub fn knn(&self, i: usize, k: usize) -> &[usize] {
        &self.orderings[i][..k]
    }

    /// `ranks[i][j]`: 1-based position of `j` in `i`'s ordering (0 for `j = i`).
    pub fn rank_table(&self) -> Vec<Vec<u32>> {
        self.orderings
            .par_iter()
            .enumerate()
            .map(|(i, order)| {
                let mut r = vec![0u32; self.n()];
                for (pos, &j) in order.iter().enumerate() {
                    r[j] = pos as u32 + 1;
                }
                debug_assert_eq!(r[i], 0);
                r
            })
            .collect()
    }
}

fn check_pair(x: &NeighborIndex, y: &NeighborIndex) -> Result<usize> {
    if x.n() != y.n() {
        return Err(Error::Shape(format!("indices cover {} and {} points", x.n(), y.n())));
    }
    Ok(x.n())
}

/// Mean over points of `|kNN_X(i) ∩ kNN_Y(i)| / K`, as a percentage.
pub fn agreement_at_k(x: &NeighborIndex, y: &NeighborIndex, k: usize) -> Result<f64> {
    let n = check_pair(x, y)?;
    if k == 0 || k >= n {
        return Err(Error::Param(format!("K must lie in 1..={} (got {k})", n - 1)));
    }
    let mut mark = vec![usize::MAX; n];
    let mut shared = 0usize;
    for i in 0..n {
        for &j in x.knn(i, k) {
            mark[j] = i;
        }
        shared += y.knn(i, k).iter().filter(|&&j| mark[j] == i).count();
    }
    Ok(100.0 * shared as f64 / (n * k) as f64)
}

/// Agreement for every K in `1..=k_max`, computed incrementally.
pub fn agreement_curve(x: &NeighborIndex, y: &NeighborIndex, k_max: usize) -> Result<Vec<f64>> {
    let n = check_pair(x, y)?;
    let k_max = k_max.min(n - 1);
    let per_point: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (xo, yo) = (x.neighbors(i), y.neighbors(i));
            let mut in_x = vec![false; n];
            let mut in_y = vec![false; n];
            let mut overlap = 0usize;
            let mut out = Vec::with_capacity(k_max);
            for k in 0..k_max {
                let (a, b) = (xo[k], yo[k]);
                in_x[a] = true;
                if in_y[a] {
                    overlap += 1;
                }
                in_y[b] = true;
                if in_x[b] {
                    overlap += 1;
                }
                out.push(overlap);
            }
            out
        })
        .collect();
    Ok((0..k_max)
        .map(|k| {
            let shared: usize = per_point.iter().map(|v| v[k]).sum();
            100.0 * shared as f64 / (n * (k + 1)) as f64
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustFormula {
    /// `1 − 2/(nK(2n−3K−1)) Σ_i Σ_{j ∈ kNN_Y(i) \ kNN_X(i)} (r_X(i,j) − K)`;
    /// requires `K < n/2`.
    #[default]
    Standard,
    /// `1 − 2/(n(n−1)) Σ_i Σ_{j=1..K} (r_X(i, y_j(i)) − K)` summed over all K
    /// embedded neighbors regardless of membership; may leave [0, 1].
    Paper,
}

/// Largest K accepted by `formula` for `n` points.
pub fn max_valid_k(formula: TrustFormula, n: usize) -> usize {
    match formula {
        TrustFormula::Standard => (n.saturating_sub(1)) / 2,
        TrustFormula::Paper => n.saturating_sub(1),
    }
}

fn trust_with_ranks(ranks: &[Vec<u32>], y: &NeighborIndex, k: usize, formula: TrustFormula) -> f64 {
    let n = y.n();
    let kf = k as f64;
    let nf = n as f64;
    match formula {
        TrustFormula::Standard => {
            let penalty: u64 = (0..n)
                .map(|i| {
                    y.knn(i, k)
                        .iter()
                        .map(|&j| (ranks[i][j] as u64).saturating_sub(k as u64))
                        .sum::<u64>()
                })
                .sum();
            1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * penalty as f64
        }
        TrustFormula::Paper => {
            let total: i64 = (0..n)
                .map(|i| {
                    y.knn(i, k)
                        .iter()
                        .map(|&j| ranks[i][j] as i64 - k as i64)
                        .sum::<i64>()
                })
                .sum();
            1.0 - 2.0 / (nf * (nf - 1.0)) * total as f64
        }
    }
}

fn check_trust_k(n: usize, k: usize, formula: TrustFormula) -> Result<()> {
    let max = max_valid_k(formula, n);
    if k == 0 || k > max {
        return Err(Error::Param(format!(
            "K must lie in 1..={max} for {formula:?} trustworthiness with n={n} (got {k})"
        )));
    }
    Ok(())
}

pub fn trustworthiness_at_k(x: &NeighborIndex, y: &NeighborIndex, k: usize, formula: TrustFormula) -> Result<f64> {
    let n = check_pair(x, y)?;
    check_trust_k(n, k, formula)?;
    Ok(trust_with_ranks(&x.rank_table(), y, k, formula))
}

/// Trustworthiness for every K in `1..=k_max` (capped at the formula's
/// valid range).
pub fn trustworthiness_curve(
    x: &NeighborIndex,
    y: &NeighborIndex,
    k_max: usize,
    formula: TrustFormula,
) -> Result<Vec<f64>> {
    let n = check_pair(x, y)?;
    let k_max = k_max.min(max_valid_k(formula, n));
    let ranks = x.rank_table();
    Ok((1..=k_max)
        .into_par_iter()
        .map(|k| trust_with_ranks(&ranks, y, k, formula))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMetric {
    Agreement,
    Trustworthiness(TrustFormula),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Min-max normalize the curve, then average. A flat curve reduces to its
    /// value divided by 100.
    MinMaxMean,
    Mean,
}

/// Values below this spread count as a flat agreement curve.
pub const FLAT_CURVE_EPS: f64 = 1e-12;

impl Reduction {
    pub fn apply(self, values: &[f64]) -> f64 {
        if values.is_empty() {
            return f64::NAN;
        }
        let mean = |v: &mut dyn Iterator<Item = f64>| v.sum::<f64>() / values.len() as f64;
        match self {
            Reduction::Mean => mean(&mut values.iter().copied()),
            Reduction::MinMaxMean => {
                let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi - lo < FLAT_CURVE_EPS {
                    values[0] / 100.0
                } else {
                    mean(&mut values.iter().map(|v| (v - lo) / (hi - lo)))
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub metric: SweepMetric,
    /// Value at K = 1, 2, ...
    pub values: Vec<f64>,
    pub scalar: f64,
    pub reduction: Reduction,
}

impl SweepResult {
    pub fn from_values(metric: SweepMetric, values: Vec<f64>) -> Self {
        let reduction = match metric {
            SweepMetric::Agreement => Reduction::MinMaxMean,
            SweepMetric::Trustworthiness(_) => Reduction::Mean,
        };
        let scalar = reduction.apply(&values);
        Self {
            metric,
            values,
            scalar,
            reduction,
        }
    }

    pub fn k_max(&self) -> usize {
        self.values.len()
    }

    /// CSV `K,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "K,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", k + 1, v)?;
        }
        Ok(())
    }
}

/// Sweeps a metric over K = 1..=k_max (capped by `n − 1` and, for the
/// standard trustworthiness, by `K < n/2`) and reduces the curve to a scalar.
pub fn sweep(metric: SweepMetric, x: &NeighborIndex, y: &NeighborIndex, k_max: usize) -> Result<SweepResult> {
    if k_max == 0 {
        return Err(Error::Param("K_max must be at least 1".into()));
    }
    let values = match metric {
        SweepMetric::Agreement => agreement_curve(x, y, k_max)?,
        SweepMetric::Trustworthiness(f) => trustworthiness_curve(x, y, k_max, f)?,
    };
    if values.is_empty() {
        return Err(Error::Param(format!("no valid K for {} points", x.n())));
    }
    Ok(SweepResult::from_values(metric, values))
}
