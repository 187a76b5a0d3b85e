//! Supervised and clustering evaluation of an embedding: stratified split,
//! multinomial logistic regression, k-means++ and the silhouette score.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Standardizer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            stratified: true,
            seed: 0,
        }
    }
}

/// Splits sample indices into sorted, disjoint train and test sets. With
/// stratification each class contributes `round(fraction · size)` training
/// samples, clamped so both sides keep at least one member.
pub fn stratified_split(labels: &[usize], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Param(format!(
            "train_fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            g[l].push(i);
        }
        g.into_iter().filter(|m| !m.is_empty()).collect()
    } else {
        vec![(0..labels.len()).collect()]
    };
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in groups {
        if members.len() < 2 {
            return Err(Error::Dataset(format!(
                "class {} has fewer than 2 members",
                labels[members[0]]
            )));
        }
        members.shuffle(&mut rng);
        let n_train = ((spec.train_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            epochs: 500,
            learning_rate: 0.1,
        }
    }
}

/// Softmax regression weights, `(d + 1) × C` with the bias in the last row.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel {
    pub weights: Array2<f64>,
    /// Objective after each accepted epoch, starting with the initial value.
    pub loss_history: Vec<f64>,
}

impl LogRegModel {
    pub fn n_features(&self) -> usize {
        self.weights.nrows() - 1
    }

    pub fn n_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Shape(format!(
                "{} features, model expects {}",
                x.ncols(),
                self.n_features()
            )));
        }
        let d = self.n_features();
        let w = self.weights.slice(ndarray::s![..d, ..]);
        let b = self.weights.row(d);
        Ok(x.dot(&w) + &b)
    }

    pub fn predict_proba(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut z = self.logits(x)?;
        softmax_rows(&mut z);
        Ok(z)
    }
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row /= s;
    }
}

/// Mean cross-entropy plus `l2/2 · ‖W‖²` over the non-bias rows, and its
/// gradient.
pub fn logreg_objective(
    weights: ArrayView2<'_, f64>,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    l2: f64,
) -> (f64, Array2<f64>) {
    let (m, d) = x.dim();
    let w = weights.slice(ndarray::s![..d, ..]);
    let b = weights.row(d);
    let mut p = x.dot(&w) + &b;
    softmax_rows(&mut p);
    let mut ce = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        ce -= p[[i, yi]].max(1e-300).ln();
        p[[i, yi]] -= 1.0;
    }
    let m_f = m as f64;
    let reg = 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    let mut grad = Array2::zeros(weights.dim());
    let gw = x.t().dot(&p) / m_f + &w * l2;
    grad.slice_mut(ndarray::s![..d, ..]).assign(&gw);
    grad.row_mut(d).assign(&(p.sum_axis(Axis(0)) / m_f));
    (ce / m_f + reg, grad)
}

/// Full-batch gradient descent on the regularized cross-entropy. A step that
/// raises the objective by more than 1e-9 is rejected and the learning rate
/// halved.
pub fn train_logreg(x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, config: &LogRegConfig) -> Result<LogRegModel> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if y.iter().any(|&c| c >= n_classes) {
        return Err(Error::Param("label index out of range".into()));
    }
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Param("training labels contain fewer than 2 classes".into()));
    }
    let mut weights = Array2::zeros((x.ncols() + 1, n_classes));
    let (mut loss, mut grad) = logreg_objective(weights.view(), x, y, config.l2);
    let mut lr = config.learning_rate;
    let mut history = vec![loss];
    'epochs: for epoch in 0..config.epochs {
        loop {
            let candidate = &weights - &(&grad * lr);
            let (cl, cg) = logreg_objective(candidate.view(), x, y, config.l2);
            if !cl.is_finite() {
                return Err(Error::Numerical(format!("non-finite logistic loss at epoch {}", epoch + 1)));
            }
            if cl <= loss + 1e-9 {
                weights = candidate;
                loss = cl;
                grad = cg;
                history.push(loss);
                break;
            }
            lr *= 0.5;
            if lr < 1e-12 {
                break 'epochs;
            }
        }
    }
    Ok(LogRegModel {
        weights,
        loss_history: history,
    })
}

/// Logistic regression on standardized features (train-set statistics).
#[derive(Clone, Debug)]
pub struct Classifier {
    pub standardizer: Standardizer,
    pub model: LogRegModel,
}

impl Classifier {
    pub fn fit(x: ArrayView2<'_, f64>, y: &[usize], n_classes: usize, config: &LogRegConfig) -> Result<Self> {
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.transform(x);
        let model = train_logreg(xs.view(), y, n_classes, config)?;
        Ok(Self { standardizer, model })
    }

    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.model.logits(self.standardizer.transform(x).view())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Argmax of each row; ties go to the lowest class index.
pub fn argmax_rows(scores: ArrayView2<'_, f64>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                .0
        })
        .collect()
}

/// Scores predictions against the truth. Precision of a never-predicted class
/// and recall of an absent class are reported as 0.
pub fn score_predictions(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<ClassificationResult> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape("prediction and truth lengths differ".into()));
    }
    if truth.is_empty() {
        return Err(Error::Param("no samples to score".into()));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(Error::Param("class index out of range".into()));
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = (0..n_classes)
        .map(|c| ratio(confusion[c][c], (0..n_classes).map(|t| confusion[t][c]).sum()))
        .collect();
    let recall = (0..n_classes)
        .map(|c| ratio(confusion[c][c], confusion[c].iter().sum()))
        .collect();
    Ok(ClassificationResult {
        accuracy: correct as f64 / truth.len() as f64,
        precision,
        recall,
        confusion,
    })
}

pub fn evaluate_classifier(classifier: &Classifier, x: ArrayView2<'_, f64>, y: &[usize]) -> Result<ClassificationResult> {
    let logits = classifier.logits(x)?;
    score_predictions(&argmax_rows(logits.view()), y, classifier.model.n_classes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
            tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    #[serde(skip)]
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squares of the returned solution.
    pub wcss: f64,
    /// WCSS after every Lloyd iteration of the winning restart.
    pub wcss_trace: Vec<f64>,
    pub restart: usize,
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(x: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_plus_plus<R: Rng>(x: ArrayView2<'_, f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    centroids.row_mut(0).assign(&x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn update_centroids(x: ArrayView2<'_, f64>, assignments: &[usize], k: usize, previous: &Array2<f64>) -> (Array2<f64>, Vec<usize>) {
    let mut sums = Array2::<f64>::zeros((k, x.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        let mut row = sums.row_mut(a);
        row += &x.row(i);
        counts[a] += 1;
    }
    let mut centroids = previous.clone();
    for c in 0..k {
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
    (centroids, counts)
}

fn wcss(x: ArrayView2<'_, f64>, assignments: &[usize], centroids: &Array2<f64>) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(x.row(i), centroids.row(a)))
        .sum()
}

fn lloyd(x: ArrayView2<'_, f64>, k: usize, config: &KMeansConfig, seed: u64) -> (Vec<usize>, Array2<f64>, Vec<f64>) {
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(x, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut trace = Vec::new();
    for _ in 0..config.max_iter.max(1) {
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, d) = nearest(x.row(i), &centroids);
            assignments[i] = c;
            dists[i] = d;
        }
        let (mut next, counts) = update_centroids(x, &assignments, k, &centroids);
        let empty: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empty.is_empty() {
            // Re-seed each empty cluster with the point farthest from its
            // current centroid, then recompute the means.
            let mut taken = vec![false; n];
            for c in empty {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| {
                        let da = sq_dist(x.row(a), next.row(assignments[a]));
                        let db = sq_dist(x.row(b), next.row(assignments[b]));
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("k <= n");
                taken[far] = true;
                assignments[far] = c;
                next.row_mut(c).assign(&x.row(far));
            }
            next = update_centroids(x, &assignments, k, &next).0;
        }
        let shift = centroids
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        trace.push(wcss(x, &assignments, &centroids));
        if shift < config.tol {
            break;
        }
    }
    (assignments, centroids, trace)
}

/// k-means with k-means++ seeding; the best of `restarts` Lloyd runs by WCSS
/// (ties to the lowest restart index).
pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, config: &KMeansConfig) -> Result<ClusteringResult> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::Param(format!("k-means needs 1 <= k <= n (k={k}, n={n})")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite input to k-means".into()));
    }
    let runs: Vec<(Vec<usize>, Array2<f64>, Vec<f64>)> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let seed = config.seed ^ (r as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            lloyd(x, k, config, seed)
        })
        .collect();
    let (restart, (assignments, centroids, trace)) = runs
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| {
            let wa = *a.2.last().expect("one iteration");
            let wb = *b.2.last().expect("one iteration");
            wa.total_cmp(&wb).then(ia.cmp(ib))
        })
        .expect("at least one restart");
    Ok(ClusteringResult {
        wcss: *trace.last().expect("one iteration"),
        assignments,
        centroids,
        wcss_trace: trace,
        restart,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteResult {
    pub score: f64,
    pub per_point: Vec<f64>,
}

/// Mean silhouette over all points with Euclidean distances. Points in
/// singleton clusters score 0.
pub fn silhouette(x: ArrayView2<'_, f64>, assignments: &[usize]) -> Result<SilhouetteResult> {
    let n = x.nrows();
    if assignments.len() != n {
        return Err(Error::Shape("one assignment per point required".into()));
    }
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; k];
    assignments.iter().for_each(|&a| sizes[a] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Param("silhouette needs at least 2 non-empty clusters".into()));
    }
    let per_point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = assignments[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            let xi = x.row(i);
            for j in 0..n {
                if j != i {
                    sums[assignments[j]] += sq_dist(xi, x.row(j)).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    let score = per_point.iter().sum::<f64>() / n as f64;
    Ok(SilhouetteResult { score, per_point })
}

/// Fraction of points whose cluster's majority label matches their own.
pub fn cluster_purity(assignments: &[usize], labels: &[usize]) -> f64 {
    let k = assignments.iter().max().map_or(0, |&m| m + 1);
    let c = labels.iter().max().map_or(0, |&m| m + 1);
    let mut table = vec![vec![0usize; c]; k];
    for (&a, &l) in assignments.iter().zip(labels) {
        table[a][l] += 1;
    }
    let majority: usize = table.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    majority as f64 / labels.len().max(1) as f64
}

/// Standardized-feature accuracy helper used by the pipeline.
pub fn split_and_classify(
    x: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    split: &SplitSpec,
    config: &LogRegConfig,
) -> Result<ClassificationResult> {
    let (train, test) = stratified_split(labels, split)?;
    let xtr = x.select(Axis(0), &train);
    let ytr: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let xte = x.select(Axis(0), &test);
    let yte: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    let clf = Classifier::fit(xtr.view(), &ytr, n_classes, config)?;
    evaluate_classifier(&clf, xte.view(), &yte)
}
