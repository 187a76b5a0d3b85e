//! Tree-structured Parzen Estimator over the 4-metric weight simplex.
//!
//! Raw parameters live in `[0,1]^4` and are normalized by their sum. Each
//! dimension is modelled independently: a truncated-Gaussian mixture over the
//! "good" trials (`l`) and one over the rest (`g`); candidates are drawn from
//! `l` and the one maximizing `l/g` wins.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Raw coordinate sums below this are rejected and redrawn.
pub const MIN_RAW_SUM: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w_class: f64,
    pub w_clust: f64,
    pub w_neighb: f64,
    pub w_trust: f64,
}

impl WeightVector {
    pub fn new(w_class: f64, w_clust: f64, w_neighb: f64, w_trust: f64) -> Self {
        Self {
            w_class,
            w_clust,
            w_neighb,
            w_trust,
        }
    }

    pub fn uniform() -> Self {
        Self::new(0.25, 0.25, 0.25, 0.25)
    }

    pub fn from_raw(raw: [f64; 4]) -> Result<Self> {
        if raw.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Param(format!("raw weights must lie in [0,1]: {raw:?}")));
        }
        let s: f64 = raw.iter().sum();
        if s < MIN_RAW_SUM {
            return Err(Error::Param("raw weights sum to (nearly) zero".into()));
        }
        Ok(Self::from_array(raw.map(|v| v / s)))
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w_class, self.w_clust, self.w_neighb, self.w_trust]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn on_simplex(&self, tol: f64) -> bool {
        self.as_array().iter().all(|v| (0.0..=1.0).contains(v)) && (self.sum() - 1.0).abs() <= tol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub raw: [f64; 4],
    pub weights: WeightVector,
    /// Objective value; non-finite results are stored as `-inf`.
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeConfig {
    pub n_trials: usize,
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
    /// Lower clamp on the nearest-neighbour kernel bandwidth.
    pub min_bandwidth: f64,
    /// Upper clamp on the bandwidth; also used for a lone point.
    pub max_bandwidth: f64,
    /// Mix a uniform component (weight `1/(m+1)`) into both densities.
    pub prior: bool,
    /// How many trials form the good set.
    pub good_set: GoodSetRule,
    /// Trials older than the newest `forget_after` get linearly decaying
    /// kernel weight; 0 keeps every weight at 1.
    pub forget_after: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoodSetRule {
    /// `⌈gamma·√n⌉` trials.
    #[default]
    Sqrt,
    /// `⌈gamma·n⌉` trials.
    Linear,
}

impl GoodSetRule {
    /// Good-set size for `n` trials, at least 1 and at most `n`.
    pub fn good_count(self, gamma: f64, n: usize) -> usize {
        let scale = match self {
            GoodSetRule::Sqrt => (n as f64).sqrt(),
            GoodSetRule::Linear => n as f64,
        };
        ((gamma * scale).ceil() as usize).clamp(1, n.max(1))
    }
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            n_trials: 1000,
            n_startup: 20,
            gamma: 0.25,
            n_candidates: 24,
            min_bandwidth: 0.05,
            max_bandwidth: 1.0,
            prior: true,
            good_set: GoodSetRule::Sqrt,
            forget_after: 25,
            seed: 0,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 || self.n_startup >= self.n_trials {
            return Err(Error::Param(format!(
                "need 0 < n_startup < n_trials (got {} and {})",
                self.n_startup, self.n_trials
            )));
        }
        if self.n_startup < 2 {
            return Err(Error::Param("n_startup must be at least 2".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Param(format!("gamma must lie in (0,1), got {}", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(Error::Param("n_candidates must be positive".into()));
        }
        if !(self.min_bandwidth > 0.0 && self.min_bandwidth <= self.max_bandwidth) {
            return Err(Error::Param("need 0 < min_bandwidth <= max_bandwidth".into()));
        }
        Ok(())
    }
}

/// Independent RNG for trial `index` so every draw is a pure function of
/// (seed, index).
fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn draw_uniform_raw<R: Rng>(rng: &mut R) -> [f64; 4] {
    loop {
        let raw: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>());
        if raw.iter().sum::<f64>() >= MIN_RAW_SUM {
            return raw;
        }
    }
}

/// Uniform raw parameters for trial `index`.
pub fn sample_startup(config: &TpeConfig, index: usize) -> [f64; 4] {
    draw_uniform_raw(&mut trial_rng(config.seed, index))
}

/// Partitions trial positions into the top `⌈gamma·n⌉` by value (ties to the
/// earlier trial) and the rest. Returned index lists refer to `history`.
pub fn split_trials(history: &[Trial], gamma: f64) -> (Vec<usize>, Vec<usize>) {
    split_trials_by(history, gamma, GoodSetRule::Linear)
}

/// `split_trials` with an explicit good-set size rule.
pub fn split_trials_by(history: &[Trial], gamma: f64, rule: GoodSetRule) -> (Vec<usize>, Vec<usize>) {
    let n = history.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        history[b]
            .value
            .total_cmp(&history[a].value)
            .then(history[a].index.cmp(&history[b].index))
    });
    let n_good = rule.good_count(gamma, n);
    let mut good = order[..n_good].to_vec();
    // -inf trials never count as good.
    good.retain(|&i| history[i].value > f64::NEG_INFINITY);
    let bad = order
        .iter()
        .copied()
        .filter(|i| !good.contains(i))
        .collect();
    (good, bad)
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

/// Truncated-Gaussian mixture on `[0,1]`, optionally mixed with a uniform
/// component.
#[derive(Clone, Debug, PartialEq)]
pub struct ParzenDensity {
    pub mus: Vec<f64>,
    pub sigmas: Vec<f64>,
    /// Mixture weight of each kernel; together with `prior_weight` they sum to 1.
    pub weights: Vec<f64>,
    /// Probability mass of each untruncated kernel inside `[0,1]`.
    masses: Vec<f64>,
    pub prior_weight: f64,
}

impl ParzenDensity {
    /// Equally weighted kernels. Bandwidth per point: distance to its nearest
    /// other point, clamped to `[min_bw, max_bw]`; a lone point gets `max_bw`.
    pub fn new(points: &[f64], min_bw: f64, max_bw: f64, prior: bool) -> Self {
        Self::weighted(points, &vec![1.0; points.len()], min_bw, max_bw, prior)
    }

    /// Kernels weighted proportionally to `point_weights`; the uniform
    /// component, if any, counts as one more point of weight 1, i.e. it gets
    /// `1/(Σw+1)`, which is `1/(m+1)` for unit weights.
    pub fn weighted(points: &[f64], point_weights: &[f64], min_bw: f64, max_bw: f64, prior: bool) -> Self {
        let m = points.len();
        assert_eq!(m, point_weights.len(), "one weight per point");
        let mut sorted: Vec<(f64, usize)> = points.iter().copied().zip(0..).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut sigmas = vec![max_bw; m];
        if m > 1 {
            for (pos, &(v, i)) in sorted.iter().enumerate() {
                let left = if pos > 0 { v - sorted[pos - 1].0 } else { f64::INFINITY };
                let right = if pos + 1 < m { sorted[pos + 1].0 - v } else { f64::INFINITY };
                sigmas[i] = left.min(right).clamp(min_bw, max_bw);
            }
        }
        let masses = points
            .iter()
            .zip(&sigmas)
            .map(|(&mu, &s)| std_normal_cdf((1.0 - mu) / s) - std_normal_cdf(-mu / s))
            .collect();
        let prior_raw = if prior || m == 0 { 1.0 } else { 0.0 };
        let total: f64 = point_weights.iter().sum::<f64>() + prior_raw;
        let weights = point_weights.iter().map(|w| w / total).collect();
        let prior_weight = prior_raw / total;
        Self {
            mus: points.to_vec(),
            sigmas,
            weights,
            masses,
            prior_weight,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        let kernels: f64 = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .zip(&self.masses)
            .zip(&self.weights)
            .map(|(((&mu, &s), &z), &w)| {
                let t = (x - mu) / s;
                w * norm * (-0.5 * t * t).exp() / (s * z)
            })
            .sum();
        kernels + self.prior_weight
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let mut u: f64 = rng.random();
        let mut component = None;
        for (i, &w) in self.weights.iter().enumerate() {
            if u < w {
                component = Some(i);
                break;
            }
            u -= w;
        }
        let Some(c) = component else {
            return rng.random();
        };
        let (mu, s) = (self.mus[c], self.sigmas[c]);
        loop {
            let z: f64 = StandardNormal.sample(rng);
            let x = mu + s * z;
            if (0.0..=1.0).contains(&x) {
                return x;
            }
        }
    }
}

/// Kernel weight of every trial: older trials fade linearly once the history
/// exceeds `full`, the newest `full` keep weight 1.
pub fn forgetting_weights(n: usize, full: usize) -> Vec<f64> {
    if n <= full || full == 0 {
        return vec![1.0; n];
    }
    let ramp = n - full;
    (0..n)
        .map(|i| {
            if i >= ramp {
                1.0
            } else if ramp == 1 {
                1.0 / n as f64
            } else {
                1.0 / n as f64 + (1.0 - 1.0 / n as f64) * i as f64 / (ramp - 1) as f64
            }
        })
        .collect()
}

/// TPE proposal for trial `history.len()`, deterministic in (seed, history).
pub fn propose(history: &[Trial], config: &TpeConfig) -> Result<[f64; 4]> {
    if history.len() < config.n_startup.max(2) {
        return Err(Error::Param(format!(
            "TPE proposals need at least {} trials of history",
            config.n_startup.max(2)
        )));
    }
    let mut rng = trial_rng(config.seed, history.len());
    let (good, bad) = split_trials_by(history, config.gamma, config.good_set);
    if good.is_empty() {
        return Ok(draw_uniform_raw(&mut rng));
    }
    let age_w = forgetting_weights(history.len(), config.forget_after);
    let mut raw = [0.0; 4];
    for (d, slot) in raw.iter_mut().enumerate() {
        let pick = |set: &[usize]| set.iter().map(|&i| history[i].raw[d]).collect::<Vec<_>>();
        let wts = |set: &[usize]| set.iter().map(|&i| age_w[i]).collect::<Vec<_>>();
        let l = ParzenDensity::weighted(&pick(&good), &wts(&good), config.min_bandwidth, config.max_bandwidth, config.prior);
        let g = ParzenDensity::weighted(&pick(&bad), &wts(&bad), config.min_bandwidth, config.max_bandwidth, config.prior);
        let mut best = (f64::NEG_INFINITY, 0.0);
        for _ in 0..config.n_candidates {
            let x = l.sample(&mut rng);
            let score = l.pdf(x) / g.pdf(x).max(f64::MIN_POSITIVE);
            if score > best.0 {
                best = (score, x);
            }
        }
        *slot = best.1;
    }
    if raw.iter().sum::<f64>() < MIN_RAW_SUM {
        return Ok(draw_uniform_raw(&mut rng));
    }
    Ok(raw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpeResult {
    pub best: Trial,
    pub history: Vec<Trial>,
}

impl TpeResult {
    /// Best value seen up to and including each trial.
    pub fn running_max(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |m, t| {
                *m = m.max(t.value);
                Some(*m)
            })
            .collect()
    }

    pub fn write_history_csv<W: Write>(&self, w: W) -> Result<()> {
        write_history_csv(&self.history, w)
    }
}

/// CSV `trial,w_class,w_clust,w_neighb,w_trust,objective`.
pub fn write_history_csv<W: Write>(history: &[Trial], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["trial", "w_class", "w_clust", "w_neighb", "w_trust", "objective"])?;
    for t in history {
        let mut row = vec![t.index.to_string()];
        row.extend(t.weights.as_array().iter().map(|v| v.to_string()));
        row.push(t.value.to_string());
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<history>", e))?;
    Ok(())
}

/// Maximizes `objective` over the simplex with exactly `n_trials`
/// evaluations. Ties keep the earliest trial.
pub fn optimize<F>(mut objective: F, config: &TpeConfig) -> Result<TpeResult>
where
    F: FnMut(&WeightVector) -> f64,
{
    config.validate()?;
    let mut history: Vec<Trial> = Vec::with_capacity(config.n_trials);
    let mut best_pos = 0usize;
    for index in 0..config.n_trials {
        let raw = if index < config.n_startup {
            sample_startup(config, index)
        } else {
            propose(&history, config)?
        };
        let weights = WeightVector::from_raw(raw)?;
        let v = objective(&weights);
        let value = if v.is_finite() { v } else { f64::NEG_INFINITY };
        if value > history.get(best_pos).map_or(f64::NEG_INFINITY, |t| t.value) || history.is_empty() {
            best_pos = index;
        }
        history.push(Trial {
            index,
            raw,
            weights,
            value,
        });
    }
    Ok(TpeResult {
        best: history[best_pos].clone(),
        history,
    })
}
