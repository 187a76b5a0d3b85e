//! Exact t-SNE.
//!
//! Input affinities come from a Gaussian kernel whose per-point precision is
//! calibrated by bisection to a target perplexity; output affinities use the
//! Student-t kernel. The layout is optimized with momentum gradient descent
//! and an early-exaggeration phase. Everything is O(n²) per iteration.

use std::io::Write;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to affinities before taking logarithms.
pub const AFFINITY_FLOOR: f64 = 1e-12;
const PERPLEXITY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 100;

/// Which expression drives the layout update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientForm {
    /// `4 Σ_j (P_ij − Q_ij) (1 + ‖y_i − y_j‖²)⁻¹ (y_i − y_j)`, the exact
    /// gradient of KL(P‖Q) under the Student-t kernel.
    #[default]
    Standard,
    /// `4 Σ_j (P_ij − Q_ij) (y_i − y_j)`, without the kernel factor.
    Paper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch_iter: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub output_dim: usize,
    pub gradient: GradientForm,
    /// Per-coordinate step gains (+0.2 when the gradient flips sign against
    /// the running update, ×0.8 otherwise, floored at `min_gain`).
    pub adaptive_gains: bool,
    pub min_gain: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch_iter: 250,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            output_dim: 2,
            gradient: GradientForm::Standard,
            adaptive_gains: true,
            min_gain: 0.01,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let fail = |m: String| Err(Error::Param(m));
        if !(self.perplexity > 1.0) {
            return fail(format!("perplexity must exceed 1, got {}", self.perplexity));
        }
        if self.perplexity >= n as f64 {
            return fail(format!("perplexity {} must be below the point count {n}", self.perplexity));
        }
        if self.iterations == 0 {
            return fail("iterations must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive".into());
        }
        if self.momentum_switch_iter > self.iterations || self.exaggeration_iters > self.iterations {
            return fail("momentum switch and exaggeration duration must not exceed iterations".into());
        }
        if self.output_dim == 0 {
            return fail("output_dim must be positive".into());
        }
        if !(self.min_gain > 0.0) {
            return fail("min_gain must be positive".into());
        }
        if !(self.exaggeration > 0.0) {
            return fail("exaggeration factor must be positive".into());
        }
        Ok(())
    }
}

/// Squared Euclidean distances, exactly symmetric with a zero diagonal.
pub fn pairwise_sq_distances(x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Param("need at least 2 points".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input coordinates".into()));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = x.row(i);
            (0..n)
                .map(|j| {
                    if j <= i {
                        return 0.0;
                    }
                    xi.iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum()
                })
                .collect()
        })
        .collect();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            d[[i, j]] = rows[i][j];
            d[[j, i]] = rows[i][j];
        }
    }
    Ok(d)
}

/// Conditional distribution `p_{·|i}` of one point.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedRow {
    /// Probabilities over all `n` points; zero at the point itself.
    pub probabilities: Vec<f64>,
    /// Gaussian precision `β_i` of `exp(−β_i d²)`.
    pub beta: f64,
    /// Achieved `2^H`.
    pub perplexity: f64,
    pub converged: bool,
}

fn row_distribution(sq: &[f64], self_index: usize, min: f64, beta: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for (j, (&d, p)) in sq.iter().zip(out.iter_mut()).enumerate() {
        *p = if j == self_index { 0.0 } else { (-beta * (d - min)).exp() };
        sum += *p;
    }
    let mut h = 0.0;
    for p in out.iter_mut() {
        *p /= sum;
        if *p > 0.0 {
            h -= *p * p.log2();
        }
    }
    h
}

/// Calibrates the Gaussian precision of one row of squared distances so the
/// conditional distribution has the target perplexity.
pub fn calibrate_row(sq_distances: ArrayView1<'_, f64>, self_index: usize, perplexity: f64) -> Result<CalibratedRow> {
    let n = sq_distances.len();
    if n < 3 {
        return Err(Error::Param("perplexity calibration needs at least 2 neighbors".into()));
    }
    let sq: Vec<f64> = sq_distances.to_vec();
    let others = sq.iter().enumerate().filter(|&(j, _)| j != self_index).map(|(_, &d)| d);
    let (min, max) = others.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    let mut probs = vec![0.0; n];

    if max - min <= f64::EPSILON * max.abs().max(1.0) {
        // Any precision yields the uniform distribution.
        let u = 1.0 / (n - 1) as f64;
        for (j, p) in probs.iter_mut().enumerate() {
            *p = if j == self_index { 0.0 } else { u };
        }
        let achieved = (n - 1) as f64;
        let converged = ((achieved - perplexity) / perplexity).abs() < PERPLEXITY_TOL;
        if !converged {
            log::warn!("equidistant row {self_index}: perplexity fixed at {achieved}, target {perplexity}");
        }
        return Ok(CalibratedRow {
            probabilities: probs,
            beta: 1.0,
            perplexity: achieved,
            converged,
        });
    }

    let target = perplexity.log2();
    let spread = {
        let (sum, cnt) = sq
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != self_index)
            .fold((0.0, 0usize), |(s, c), (_, &d)| (s + d - min, c + 1));
        sum / cnt as f64
    };
    let mut beta = 1.0 / spread;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut h = row_distribution(&sq, self_index, min, beta, &mut probs);
    let mut converged = false;
    for _ in 0..MAX_BISECTIONS {
        let achieved = h.exp2();
        if ((achieved - perplexity) / perplexity).abs() < PERPLEXITY_TOL {
            converged = true;
            break;
        }
        if h > target {
            lo = beta;
            beta = if hi.is_infinite() { beta * 2.0 } else { 0.5 * (beta + hi) };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        h = row_distribution(&sq, self_index, min, beta, &mut probs);
    }
    if !converged {
        converged = ((h.exp2() - perplexity) / perplexity).abs() < PERPLEXITY_TOL;
    }
    if !converged {
        log::warn!(
            "perplexity bisection for row {self_index} stopped at {} (target {perplexity})",
            h.exp2()
        );
    }
    Ok(CalibratedRow {
        probabilities: probs,
        beta,
        perplexity: h.exp2(),
        converged,
    })
}

/// Row-wise conditional probabilities `p_{j|i}` for a matrix of squared
/// distances.
pub fn conditional_probabilities(sq_distances: ArrayView2<'_, f64>, perplexity: f64) -> Result<Array2<f64>> {
    let n = sq_distances.nrows();
    if sq_distances.ncols() != n {
        return Err(Error::Shape("distance matrix must be square".into()));
    }
    let rows: Vec<CalibratedRow> = (0..n)
        .into_par_iter()
        .map(|i| calibrate_row(sq_distances.row(i), i, perplexity))
        .collect::<Result<_>>()?;
    let mut p = Array2::zeros((n, n));
    for (mut dst, row) in p.rows_mut().into_iter().zip(rows) {
        dst.assign(&ArrayView1::from(&row.probabilities[..]));
    }
    Ok(p)
}

/// `P_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn symmetrize(conditional: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = conditional.nrows() as f64;
    (&conditional + &conditional.t()) / (2.0 * n)
}

/// Joint input affinities: symmetrized, off-diagonal entries floored at
/// [`AFFINITY_FLOOR`], renormalized to sum to 1.
pub fn joint_probabilities(sq_distances: ArrayView2<'_, f64>, perplexity: f64) -> Result<Array2<f64>> {
    let cond = conditional_probabilities(sq_distances, perplexity)?;
    let mut p = symmetrize(cond.view());
    for ((i, j), v) in p.indexed_iter_mut() {
        if i != j && *v < AFFINITY_FLOOR {
            *v = AFFINITY_FLOOR;
        }
    }
    let total = p.sum();
    p /= total;
    Ok(p)
}

/// Student-t output affinities: `(Q, numerators)` with
/// `numerators_ij = 1 / (1 + ‖y_i − y_j‖²)` and `Q = numerators / Σ numerators`.
pub fn q_matrix(y: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = y.nrows();
    if n < 2 {
        return Err(Error::Param("need at least 2 points".into()));
    }
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            (0..n)
                .map(|j| {
                    if i == j {
                        0.0
                    } else {
                        let d2: f64 = yi.iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                        1.0 / (1.0 + d2)
                    }
                })
                .collect()
        })
        .collect();
    let mut num = Array2::zeros((n, n));
    for (mut dst, row) in num.rows_mut().into_iter().zip(&rows) {
        dst.assign(&ArrayView1::from(&row[..]));
    }
    let total: f64 = rows.iter().map(|r| r.iter().sum::<f64>()).sum();
    let q = &num / total;
    Ok((q, num))
}

/// `KL(P‖Q) = Σ_{i≠j} P_ij ln(P_ij / Q_ij)`, with `Q` floored.
pub fn kl_divergence(p: ArrayView2<'_, f64>, q: ArrayView2<'_, f64>) -> f64 {
    let mut kl = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if i != j && pij > 0.0 {
            kl += pij * (pij / q[[i, j]].max(AFFINITY_FLOOR)).ln();
        }
    }
    kl
}

/// Gradient of the layout objective with respect to `y`, scaled by the
/// exaggeration already folded into `p`.
pub fn gradient(
    p: ArrayView2<'_, f64>,
    q: ArrayView2<'_, f64>,
    numerators: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    form: GradientForm,
) -> Result<Array2<f64>> {
    let n = y.nrows();
    if p.dim() != (n, n) || q.dim() != (n, n) || numerators.dim() != (n, n) {
        return Err(Error::Shape("P, Q and numerators must be n × n".into()));
    }
    let dim = y.ncols();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = vec![0.0; dim];
            let yi = y.row(i);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut w = p[[i, j]] - q[[i, j]];
                if form == GradientForm::Standard {
                    w *= numerators[[i, j]];
                }
                for (gk, (a, b)) in g.iter_mut().zip(yi.iter().zip(y.row(j))) {
                    *gk += w * (a - b);
                }
            }
            g.iter_mut().for_each(|v| *v *= 4.0);
            g
        })
        .collect();
    let mut out = Array2::zeros((n, dim));
    for (mut dst, row) in out.rows_mut().into_iter().zip(&rows) {
        dst.assign(&ArrayView1::from(&row[..]));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowDimEmbedding {
    /// `n × output_dim`, rows in input order.
    #[serde(skip)]
    pub points: Array2<f64>,
    pub config: TsneConfig,
    pub final_kl: f64,
    /// KL at the first iteration after early exaggeration ends.
    pub kl_after_exaggeration: f64,
    pub n: usize,
}

impl LowDimEmbedding {
    /// CSV `id,x,y` (or `id,y0,...` for other output dimensions).
    pub fn write_csv<W: Write>(&self, ids: &[String], mut w: W) -> Result<()> {
        if ids.len() != self.points.nrows() {
            return Err(Error::Shape("id count differs from point count".into()));
        }
        let io = |e| Error::io("<tsne csv>", e);
        if self.points.ncols() == 2 {
            writeln!(w, "id,x,y").map_err(io)?;
        } else {
            let cols: Vec<String> = (0..self.points.ncols()).map(|j| format!("y{j}")).collect();
            writeln!(w, "id,{}", cols.join(",")).map_err(io)?;
        }
        for (id, row) in ids.iter().zip(self.points.rows()) {
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{id},{}", vals.join(",")).map_err(io)?;
        }
        Ok(())
    }

    /// JSON sidecar: config, KL values, point count.
    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs t-SNE on the rows of `x`.
pub fn run_tsne(x: ArrayView2<'_, f64>, config: &TsneConfig) -> Result<LowDimEmbedding> {
    let d2 = pairwise_sq_distances(x)?;
    run_tsne_from_sq_distances(d2.view(), config)
}

/// Runs t-SNE from a precomputed matrix of squared distances.
pub fn run_tsne_from_sq_distances(sq_distances: ArrayView2<'_, f64>, config: &TsneConfig) -> Result<LowDimEmbedding> {
    let n = sq_distances.nrows();
    if n < 4 {
        return Err(Error::Param(format!("t-SNE needs at least 4 points, got {n}")));
    }
    config.validate(n)?;
    let p = joint_probabilities(sq_distances, config.perplexity)?;
    let exaggerated = &p * config.exaggeration;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid sigma");
    let mut y = Array2::from_shape_simple_fn((n, config.output_dim), || normal.sample(&mut rng));
    let mut update = Array2::<f64>::zeros(y.dim());
    let mut gains = Array2::<f64>::ones(y.dim());

    let mut kl_after_exaggeration = f64::NAN;
    for it in 0..config.iterations {
        let (q, num) = q_matrix(y.view())?;
        if it == config.exaggeration_iters {
            kl_after_exaggeration = kl_divergence(p.view(), q.view());
        }
        let p_it = if it < config.exaggeration_iters { exaggerated.view() } else { p.view() };
        let grad = gradient(p_it, q.view(), num.view(), y.view(), config.gradient)?;
        let momentum = if it < config.momentum_switch_iter {
            config.initial_momentum
        } else {
            config.final_momentum
        };
        if config.adaptive_gains {
            ndarray::Zip::from(&mut gains).and(&grad).and(&update).for_each(|g, &dg, &u| {
                *g = if (dg > 0.0) != (u > 0.0) { *g + 0.2 } else { *g * 0.8 };
                *g = g.max(config.min_gain);
            });
            update = &update * momentum - &(&grad * &gains) * config.learning_rate;
        } else {
            update = &update * momentum - &grad * config.learning_rate;
        }
        y += &update;
        let mean = y.mean_axis(Axis(0)).expect("n > 0");
        y -= &mean;
        if y.iter().any(|v| !v.is_finite()) {
            let hint = if config.gradient == GradientForm::Paper {
                "; gradient = \"paper\" has no kernel damping, try a smaller tsne.learning_rate"
            } else {
                ""
            };
            return Err(Error::Numerical(format!(
                "non-finite t-SNE coordinates at iteration {}{hint}",
                it + 1
            )));
        }
    }
    let (q, _) = q_matrix(y.view())?;
    let final_kl = kl_divergence(p.view(), q.view());
    if kl_after_exaggeration.is_nan() {
        kl_after_exaggeration = final_kl;
    }
    Ok(LowDimEmbedding {
        points: y,
        config: config.clone(),
        final_kl,
        kl_after_exaggeration,
        n,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    use super::*;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    fn assert_affinity_invariants(m: &Array2<f64>) {
        let n = m.nrows();
        assert_abs_diff_eq!(m.sum(), 1.0, epsilon = 1e-9);
        for i in 0..n {
            assert_eq!(m[[i, i]], 0.0);
            for j in 0..n {
                assert!(m[[i, j]] >= 0.0);
                assert_abs_diff_eq!(m[[i, j]], m[[j, i]], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn three_four_five() {
        let d = pairwise_sq_distances(array![[0.0, 0.0], [3.0, 4.0]].view()).unwrap();
        assert_eq!(d, array![[0.0, 25.0], [25.0, 0.0]]);
        let d = pairwise_sq_distances(array![[1.0, 2.0], [1.0, 2.0]].view()).unwrap();
        assert_eq!(d[[0, 1]], 0.0);
    }

    #[test]
    fn distances_match_double_loop() {
        let x = random(20, 5, 1);
        let d = pairwise_sq_distances(x.view()).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += (x[[i, k]] - x[[j, k]]).powi(2);
                }
                assert_abs_diff_eq!(d[[i, j]], s, epsilon = 1e-10);
            }
        }
        assert!(pairwise_sq_distances(array![[f64::NAN, 0.0], [0.0, 0.0]].view()).is_err());
        assert!(pairwise_sq_distances(array![[0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn equidistant_row_is_uniform() {
        let row = array![0.0, 4.0, 4.0, 4.0, 4.0];
        let r = calibrate_row(row.view(), 0, 4.0).unwrap();
        assert!(r.converged);
        assert_eq!(r.probabilities, vec![0.0, 0.25, 0.25, 0.25, 0.25]);
        let r = calibrate_row(row.view(), 0, 2.5).unwrap();
        assert!(!r.converged);
        assert_eq!(r.probabilities[1], 0.25);
    }

    #[test]
    fn perplexity_two_over_two_neighbors_is_uniform() {
        let row = array![1.0, 0.0, 2.0];
        let r = calibrate_row(row.view(), 1, 2.0).unwrap();
        assert!(r.converged);
        assert_eq!(r.probabilities[1], 0.0);
        assert_abs_diff_eq!(r.probabilities[0], 0.5, epsilon = 5e-3);
        assert_abs_diff_eq!(r.probabilities[2], 0.5, epsilon = 5e-3);
    }

    #[test]
    fn calibration_hits_target_perplexity() {
        let x = random(100, 10, 3);
        let d = pairwise_sq_distances(x.view()).unwrap();
        for i in [0, 17, 99] {
            let r = calibrate_row(d.row(i), i, 30.0).unwrap();
            let h: f64 = r.probabilities.iter().filter(|&&p| p > 0.0).map(|p| -p * p.log2()).sum();
            assert_abs_diff_eq!(h.exp2(), 30.0, epsilon = 1e-3);
            assert_abs_diff_eq!(r.probabilities.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetrize_hand_example() {
        let c = array![[0.0, 0.75, 0.25], [0.5, 0.0, 0.5], [0.1, 0.9, 0.0]];
        let p = symmetrize(c.view());
        assert_abs_diff_eq!(p[[0, 1]], (0.75 + 0.5) / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[[0, 2]], (0.25 + 0.1) / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[[1, 2]], (0.5 + 0.9) / 6.0, epsilon = 1e-15);
        assert_affinity_invariants(&p);

        let s = array![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        assert_eq!(symmetrize(s.view()), &s / 3.0);
    }

    #[test]
    fn joint_probabilities_are_valid() {
        let x = random(30, 4, 5);
        let d = pairwise_sq_distances(x.view()).unwrap();
        assert_affinity_invariants(&joint_probabilities(d.view(), 10.0).unwrap());
    }

    #[test]
    fn q_matrix_cases() {
        let (q, _) = q_matrix(array![[0.0, 0.0], [1.0, 1.0]].view()).unwrap();
        assert_eq!(q, array![[0.0, 0.5], [0.5, 0.0]]);
        let h = 3f64.sqrt() / 2.0;
        let (q, _) = q_matrix(array![[0.0, 0.0], [1.0, 0.0], [0.5, h]].view()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_abs_diff_eq!(q[[i, j]], 1.0 / 6.0, epsilon = 1e-12);
                }
            }
        }
        let (q, _) = q_matrix(random(10, 2, 8).view()).unwrap();
        assert_affinity_invariants(&q);
    }

    #[test]
    fn gradient_vanishes_when_p_equals_q() {
        let y = random(12, 2, 4);
        let (q, num) = q_matrix(y.view()).unwrap();
        let g = gradient(q.view(), q.view(), num.view(), y.view(), GradientForm::Standard).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn kl_is_rotation_invariant() {
        let x = random(15, 6, 9);
        let d = pairwise_sq_distances(x.view()).unwrap();
        let p = joint_probabilities(d.view(), 5.0).unwrap();
        let y = random(15, 2, 10);
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        let rot = array![[c, -s], [s, c]];
        let yr = y.dot(&rot);
        let kl = kl_divergence(p.view(), q_matrix(y.view()).unwrap().0.view());
        let klr = kl_divergence(p.view(), q_matrix(yr.view()).unwrap().0.view());
        assert_abs_diff_eq!(kl, klr, epsilon = 1e-9);
    }

    #[test]
    fn config_validation() {
        let c = TsneConfig::default();
        assert!(c.validate(31).is_ok());
        assert!(c.validate(30).is_err());
        let c = TsneConfig {
            momentum_switch_iter: 2000,
            ..TsneConfig::default()
        };
        assert!(c.validate(100).is_err());
        let x = random(3, 2, 0);
        assert!(run_tsne(x.view(), &TsneConfig::default()).is_err());
    }

    #[test]
    fn run_is_deterministic_and_descends() {
        let x = random(25, 5, 6);
        let cfg = TsneConfig {
            perplexity: 5.0,
            iterations: 300,
            exaggeration_iters: 100,
            momentum_switch_iter: 100,
            seed: 3,
            ..TsneConfig::default()
        };
        let a = run_tsne(x.view(), &cfg).unwrap();
        let b = run_tsne(x.view(), &cfg).unwrap();
        assert_eq!(a.points, b.points);
        assert!(a.final_kl.is_finite());
        assert!(a.final_kl < a.kl_after_exaggeration + 1e-9);
        assert!(a.points.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn writes_csv_and_sidecar() {
        let x = random(8, 3, 2);
        let cfg = TsneConfig {
            perplexity: 3.0,
            iterations: 20,
            exaggeration_iters: 5,
            momentum_switch_iter: 5,
            ..TsneConfig::default()
        };
        let e = run_tsne(x.view(), &cfg).unwrap();
        let ids: Vec<String> = (0..8).map(|i| format!("s{i}")).collect();
        let mut buf = Vec::new();
        e.write_csv(&ids, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("id,x,y\ns0,"));
        assert_eq!(text.lines().count(), 9);
        let json: serde_json::Value = serde_json::from_str(&e.sidecar_json().unwrap()).unwrap();
        assert_eq!(json["config"]["perplexity"], 3.0);
        assert!(json["final_kl"].is_number());
    }
}
