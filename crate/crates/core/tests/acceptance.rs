//! Acceptance checks. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any failed.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use repcap::cli::{run, Command, ConfigArgs, DatasetArgs};
use repcap::dataset::Alphabet;
use repcap::eval::{self, LogRegConfig};
use repcap::kmer;
use repcap::neighborhood::{self, NeighborIndex, TrustFormula};
use repcap::neural::{Activation, AdamConfig, AdamState, MlpAutoencoder};
use repcap::pipeline::{self, CapacityReport, NormalizedBundle, RcMode};
use repcap::tpe::{self, TpeConfig, WeightVector};
use repcap::tsne::{self, GradientForm, TsneConfig};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.1?}, limit {limit:?}"))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.sample(StandardNormal))
}

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------- 1

fn kmer_oracle() -> Outcome {
    let start = Instant::now();
    let dna = Alphabet::dna();
    let symbols = dna.symbols_str().as_bytes().to_vec();
    let mut r = rng(1);
    let mut compared = 0usize;
    for case in 0..1000 {
        let len = r.random_range(9..=60);
        let s: String = (0..len).map(|_| symbols[r.random_range(0..symbols.len())] as char).collect();
        let k = r.random_range(1..=4);
        let g = r.random_range(k + 1..=9);

        let mut counts: HashMap<String, usize> = HashMap::new();
        for i in 0..=len - k {
            *counts.entry(s[i..i + k].to_string()).or_default() += 1;
        }
        let mut spaced: HashMap<String, usize> = HashMap::new();
        for i in 0..=len - g {
            *spaced.entry(s[i..i + k].to_string()).or_default() += 1;
        }

        for (vec, dict, total) in [
            (kmer::spectrum(&s, k, &dna).map_err(|e| e.to_string())?, &counts, len - k + 1),
            (kmer::spaced_spectrum(&s, k, g, &dna).map_err(|e| e.to_string())?, &spaced, len - g + 1),
        ] {
            check(vec.len() == 4usize.pow(k as u32), || format!("case {case}: length {}", vec.len()))?;
            let sum: f64 = vec.sum();
            check((sum - 1.0).abs() <= 1e-9, || format!("case {case}: sum {sum}"))?;
            for (idx, &v) in vec.iter().enumerate() {
                let key = kmer::kmer_from_index(idx, k, &dna);
                let want = dict.get(&key).copied().unwrap_or(0);
                let got = (v * total as f64).round() as usize;
                check(got == want && v == want as f64 / total as f64, || {
                    format!("case {case} ({s}, k={k}, g={g}): {key} count {got} vs {want}")
                })?;
                compared += 1;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("1000 sequences, {compared} entries equal, {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- 2

fn naive_silhouette(x: ArrayView2<f64>, a: &[usize]) -> f64 {
    let n = x.nrows();
    let k = a.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut sizes = vec![0usize; k];
        for j in 0..n {
            sizes[a[j]] += 1;
            if j != i {
                sums[a[j]] += sq_dist(x.row(i), x.row(j)).sqrt();
            }
        }
        if sizes[a[i]] == 1 {
            continue;
        }
        let own = sums[a[i]] / (sizes[a[i]] - 1) as f64;
        let other = (0..k)
            .filter(|&c| c != a[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = own.max(other);
        total += if denom > 0.0 { (other - own) / denom } else { 0.0 };
    }
    total / n as f64
}

fn silhouette_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = r.random_range(4..=200);
        let d = r.random_range(1..=6);
        let k = r.random_range(2..=5.min(n));
        let x = gaussian(n, d, &mut r);
        let mut a: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        a[0] = 0;
        a[1] = 1;
        let got = eval::silhouette(x.view(), &a).map_err(|e| e.to_string())?.score;
        let want = naive_silhouette(x.view(), &a);
        worst = worst.max((got - want).abs());
        check((got - want).abs() <= 1e-9, || format!("case {case}: {got} vs {want}"))?;
    }
    let hand = ndarray::array![[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]];
    let s = eval::silhouette(hand.view(), &[0, 0, 1, 1]).map_err(|e| e.to_string())?.score;
    let by_hand = 1.0 - 1.0 / ((10.0 + 101f64.sqrt()) / 2.0);
    check((s - 0.9003).abs() <= 1e-3 && (s - by_hand).abs() < 1e-12, || format!("hand case {s}"))?;
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("100 instances, max |Δ| {worst:.1e}; hand case {s:.4}"))
}

// ---------------------------------------------------------------- 3

fn kl_oracle(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = y.nrows();
    let mut num = Array2::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                num[[i, j]] = 1.0 / (1.0 + sq_dist(y.row(i), y.row(j)));
                z += num[[i, j]];
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j && p[[i, j]] > 0.0 {
                kl += p[[i, j]] * (p[[i, j]] / (num[[i, j]] / z)).ln();
            }
        }
    }
    kl
}

fn tsne_gradient() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut worst_row = 0.0f64;
    for seed in 0..20 {
        let mut r = rng(300 + seed);
        let x = gaussian(8, 5, &mut r);
        let y = gaussian(8, 2, &mut r);
        let d = tsne::pairwise_sq_distances(x.view()).map_err(|e| e.to_string())?;
        let p = tsne::joint_probabilities(d.view(), 3.0).map_err(|e| e.to_string())?;
        let (q, num) = tsne::q_matrix(y.view()).map_err(|e| e.to_string())?;
        let g = tsne::gradient(p.view(), q.view(), num.view(), y.view(), GradientForm::Standard)
            .map_err(|e| e.to_string())?;
        let h = 1e-6;
        for ((i, c), &gv) in g.indexed_iter() {
            let mut plus = y.clone();
            plus[[i, c]] += h;
            let mut minus = y.clone();
            minus[[i, c]] -= h;
            let fd = (kl_oracle(&p, &plus) - kl_oracle(&p, &minus)) / (2.0 * h);
            let rel = (gv - fd).abs() / gv.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
            check(rel < 1e-4, || format!("seed {seed} [{i},{c}]: {gv} vs {fd}"))?;
        }
        for col in g.columns() {
            worst_row = worst_row.max(col.sum().abs());
        }
        check(worst_row <= 1e-8, || format!("seed {seed}: gradient sums to {worst_row}"))?;
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("20 seeds, max rel err {worst:.1e}, max |Σ grad| {worst_row:.1e}"))
}

// ---------------------------------------------------------------- 4

fn perplexity_calibration() -> Outcome {
    let mut r = rng(4);
    let x = gaussian(100, 10, &mut r);
    let d = tsne::pairwise_sq_distances(x.view()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let row = tsne::calibrate_row(d.row(i), i, 30.0).map_err(|e| e.to_string())?;
        let h: f64 = row.probabilities.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
        let perp = h.exp2();
        worst = worst.max((perp - 30.0).abs());
        check((perp - 30.0).abs() <= 1e-3, || format!("row {i}: perplexity {perp}"))?;
    }
    Ok(format!("100 rows, max |Perp − 30| {worst:.1e}"))
}

// ---------------------------------------------------------------- 5

fn tsne_structure() -> Outcome {
    let start = Instant::now();
    let mut good = 0;
    let mut scores = Vec::new();
    for seed in 0..10u64 {
        let mut r = rng(500 + seed);
        let mut x = gaussian(40, 50, &mut r);
        let mut shift = Array1::<f64>::zeros(50);
        shift[0] = 8.0;
        for i in 20..40 {
            let mut row = x.row_mut(i);
            row += &shift;
        }
        let labels: Vec<usize> = (0..40).map(|i| i / 20).collect();
        let cfg = TsneConfig {
            seed,
            ..TsneConfig::default()
        };
        let y = tsne::run_tsne(x.view(), &cfg).map_err(|e| e.to_string())?.points;
        let mut hits = 0;
        for i in 0..40 {
            let nn = (0..40)
                .filter(|&j| j != i)
                .min_by(|&a, &b| sq_dist(y.row(i), y.row(a)).total_cmp(&sq_dist(y.row(i), y.row(b))))
                .unwrap();
            hits += usize::from(labels[nn] == labels[i]);
        }
        let agree = hits as f64 / 40.0;
        scores.push(agree);
        good += usize::from(agree >= 0.95);
    }
    check(good >= 9, || format!("only {good}/10 seeds ≥ 0.95: {scores:?}"))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("{good}/10 seeds with 1-NN agreement ≥ 0.95, {:.2?}", start.elapsed()))
}

// ---------------------------------------------------------------- 6

fn naive_trust(x: &Array2<f64>, y: &Array2<f64>, k: usize, formula: TrustFormula) -> f64 {
    let n = x.nrows();
    let order = |m: &Array2<f64>, i: usize| {
        let mut js: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        js.sort_by(|&a, &b| sq_dist(m.row(i), m.row(a)).total_cmp(&sq_dist(m.row(i), m.row(b))).then(a.cmp(&b)));
        js
    };
    let (nf, kf) = (n as f64, k as f64);
    let mut total = 0.0;
    for i in 0..n {
        let ox = order(x, i);
        let oy = order(y, i);
        for &j in &oy[..k] {
            let rank = ox.iter().position(|&v| v == j).unwrap() + 1;
            match formula {
                TrustFormula::Standard => {
                    if rank > k {
                        total += (rank - k) as f64;
                    }
                }
                TrustFormula::Paper => total += rank as f64 - kf,
            }
        }
    }
    match formula {
        TrustFormula::Standard => 1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * total,
        TrustFormula::Paper => 1.0 - 2.0 / (nf * (nf - 1.0)) * total,
    }
}

fn random_orthogonal(d: usize, r: &mut ChaCha8Rng) -> Array2<f64> {
    let mut q = gaussian(d, d, r);
    for c in 0..d {
        for prev in 0..c {
            let dot = q.column(c).dot(&q.column(prev));
            let p = q.column(prev).to_owned();
            let mut col = q.column_mut(c);
            col.scaled_add(-dot, &p);
        }
        let norm = q.column(c).dot(&q.column(c)).sqrt();
        q.column_mut(c).mapv_inplace(|v| v / norm);
    }
    q
}

fn neighborhood_identity() -> Outcome {
    let mut r = rng(6);
    let x = gaussian(60, 5, &mut r);
    let rotated = x.dot(&random_orthogonal(5, &mut r)) * 2.5 + 7.0;
    let ix = NeighborIndex::build(x.view()).map_err(|e| e.to_string())?;
    for (name, y) in [("identity", x.clone()), ("rotated/scaled/translated", rotated)] {
        let iy = NeighborIndex::build(y.view()).map_err(|e| e.to_string())?;
        let agree = neighborhood::agreement_curve(&ix, &iy, 59).map_err(|e| e.to_string())?;
        check(agree.len() == 59 && agree.iter().all(|&a| a == 100.0), || format!("{name}: agreement {agree:?}"))?;
        let trust = neighborhood::trustworthiness_curve(&ix, &iy, 59, TrustFormula::Standard).map_err(|e| e.to_string())?;
        check(trust.iter().all(|&t| t == 1.0), || format!("{name}: trustworthiness {trust:?}"))?;
    }

    let mut worst = 0.0f64;
    for case in 0..200 {
        let n = r.random_range(5..=50);
        let hx = gaussian(n, r.random_range(2..=8), &mut r);
        let ly = gaussian(n, 2, &mut r);
        let ix = NeighborIndex::build(hx.view()).map_err(|e| e.to_string())?;
        let iy = NeighborIndex::build(ly.view()).map_err(|e| e.to_string())?;
        for formula in [TrustFormula::Standard, TrustFormula::Paper] {
            let curve = neighborhood::trustworthiness_curve(&ix, &iy, n, formula).map_err(|e| e.to_string())?;
            check(curve.len() == neighborhood::max_valid_k(formula, n), || format!("case {case}: curve length"))?;
            for (k0, &t) in curve.iter().enumerate() {
                let want = naive_trust(&hx, &ly, k0 + 1, formula);
                worst = worst.max((t - want).abs());
                check((t - want).abs() <= 1e-12, || format!("case {case} {formula:?} K={}: {t} vs {want}", k0 + 1))?;
            }
        }
    }
    Ok(format!("identity and isometry exact at n=60; 200 oracle instances, max |Δ| {worst:.1e}"))
}

// ---------------------------------------------------------------- 7

fn naive_ae_loss(model: &MlpAutoencoder, x: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for row in x.rows() {
        let mut a: Vec<f64> = row.to_vec();
        for (l, layer) in model.layers.iter().enumerate() {
            let (din, dout) = layer.weights.dim();
            let mut next = vec![0.0; dout];
            for (o, slot) in next.iter_mut().enumerate() {
                let mut z = layer.bias[o];
                for i in 0..din {
                    z += a[i] * layer.weights[[i, o]];
                }
                *slot = if l % 2 == 0 { z.tanh() } else { z };
            }
            a = next;
        }
        total += a.iter().zip(row.iter()).map(|(p, t)| (p - t) * (p - t)).sum::<f64>();
    }
    total / x.len() as f64
}

fn autoencoder_gradients() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut r = rng(700 + seed);
        let model = MlpAutoencoder::xavier(6, 4, 2, Activation::Tanh, &mut r);
        check(model.dims() == [6, 4, 2, 4, 6], || format!("dims {:?}", model.dims()))?;
        let x = gaussian(10, 6, &mut r);
        let (loss, grads) = model.backward(x.view()).map_err(|e| e.to_string())?;
        check((loss - naive_ae_loss(&model, &x)).abs() < 1e-12, || "loss differs from oracle".into())?;
        let h = 1e-6;
        for (li, gl) in grads.layers.iter().enumerate() {
            let params = gl.weights.iter().copied().chain(gl.bias.iter().copied()).enumerate();
            for (pi, g) in params {
                let bump = |delta: f64| {
                    let mut m = model.clone();
                    let nw = m.layers[li].weights.len();
                    if pi < nw {
                        let cols = m.layers[li].weights.ncols();
                        m.layers[li].weights[[pi / cols, pi % cols]] += delta;
                    } else {
                        m.layers[li].bias[pi - nw] += delta;
                    }
                    naive_ae_loss(&m, &x)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
                worst = worst.max(rel);
                check(rel < 1e-4, || format!("seed {seed} layer {li} param {pi}: {g} vs {fd}"))?;
            }
        }
    }

    let mut x = [0.0f64];
    let mut adam = AdamState::new(
        &[1],
        AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        },
    );
    let mut steps = 0;
    while (x[0] - 3.0).abs() >= 1e-2 && steps < 2000 {
        let g = [2.0 * (x[0] - 3.0)];
        adam.step(&mut [&mut x[..]], &[&g[..]]).map_err(|e| e.to_string())?;
        steps += 1;
    }
    check((x[0] - 3.0).abs() < 1e-2, || format!("ADAM ended at {} after {steps} steps", x[0]))?;
    Ok(format!("6-4-2-4-6 max rel err {worst:.1e}; ADAM |x−3| < 1e-2 after {steps} steps"))
}

// ---------------------------------------------------------------- 8

fn naive_ce(w: &Array2<f64>, x: &Array2<f64>, y: &[usize], l2: f64) -> f64 {
    let (m, d) = x.dim();
    let c = w.ncols();
    let mut total = 0.0;
    for i in 0..m {
        let logits: Vec<f64> = (0..c)
            .map(|k| w[[d, k]] + (0..d).map(|j| x[[i, j]] * w[[j, k]]).sum::<f64>())
            .collect();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
        total += lse - logits[y[i]];
    }
    let reg: f64 = (0..d).flat_map(|j| (0..c).map(move |k| (j, k))).map(|(j, k)| w[[j, k]] * w[[j, k]]).sum();
    total / m as f64 + 0.5 * l2 * reg
}

fn logistic_regression() -> Outcome {
    let mut r = rng(8);
    let centers = [[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]];
    let mut x = Array2::zeros((150, 2));
    let mut y = Vec::new();
    for i in 0..150 {
        let c = i % 3;
        x[[i, 0]] = centers[c][0] + r.sample::<f64, _>(StandardNormal) * 0.5;
        x[[i, 1]] = centers[c][1] + r.sample::<f64, _>(StandardNormal) * 0.5;
        y.push(c);
    }
    let cfg = LogRegConfig::default();
    let clf = eval::Classifier::fit(x.view(), &y, 3, &cfg).map_err(|e| e.to_string())?;
    let acc = eval::evaluate_classifier(&clf, x.view(), &y).map_err(|e| e.to_string())?.accuracy;
    check(acc >= 0.99, || format!("training accuracy {acc}"))?;

    let yc: Vec<usize> = (0..100).map(|i| if i < 50 { 0 } else if i < 80 { 1 } else { 2 }).collect();
    let xc = Array2::from_elem((100, 3), 1.0);
    let model = eval::train_logreg(xc.view(), &yc, 3, &cfg).map_err(|e| e.to_string())?;
    let p = model.predict_proba(xc.view()).map_err(|e| e.to_string())?;
    let priors = [0.5, 0.3, 0.2];
    let worst_prior = p
        .rows()
        .into_iter()
        .flat_map(|row| row.iter().zip(priors).map(|(a, b)| (a - b).abs()).collect::<Vec<_>>())
        .fold(0.0f64, f64::max);
    check(worst_prior <= 1e-3, || format!("constant input: prior error {worst_prior}"))?;

    let w = gaussian(3, 3, &mut r) * 0.3;
    let (loss, grad) = eval::logreg_objective(w.view(), x.view(), &y, 0.01);
    check((loss - naive_ce(&w, &x, &y, 0.01)).abs() < 1e-10, || "objective differs from oracle".into())?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for ((a, b), &g) in grad.indexed_iter() {
        let mut plus = w.clone();
        plus[[a, b]] += h;
        let mut minus = w.clone();
        minus[[a, b]] -= h;
        let fd = (naive_ce(&plus, &x, &y, 0.01) - naive_ce(&minus, &x, &y, 0.01)) / (2.0 * h);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
        check(rel < 1e-4, || format!("grad [{a},{b}]: {g} vs {fd}"))?;
    }
    Ok(format!("accuracy {acc:.3}; prior error {worst_prior:.1e}; gradient rel err {worst:.1e}"))
}

// ---------------------------------------------------------------- 9

fn tpe_optimizer() -> Outcome {
    let start = Instant::now();
    let linear = |w: &WeightVector| w.w_class;
    let center = |w: &WeightVector| -w.as_array().iter().map(|v| (v - 0.25) * (v - 0.25)).sum::<f64>();
    let mut lin_min = f64::INFINITY;
    let mut cen_min = f64::INFINITY;
    for seed in 0..10 {
        let cfg = TpeConfig {
            seed,
            ..TpeConfig::default()
        };
        let a = tpe::optimize(linear, &cfg).map_err(|e| e.to_string())?;
        let b = tpe::optimize(center, &cfg).map_err(|e| e.to_string())?;
        check(a.history.len() == 1000, || format!("{} trials", a.history.len()))?;
        lin_min = lin_min.min(a.best.value);
        cen_min = cen_min.min(b.best.value);
        check(a.best.value >= 0.95, || format!("seed {seed}: linear best {}", a.best.value))?;
        check(b.best.value >= -1e-3, || format!("seed {seed}: centre best {}", b.best.value))?;
        for res in [&a, &b] {
            let rm = res.running_max();
            check(rm.windows(2).all(|p| p[1] >= p[0]), || format!("seed {seed}: running max decreases"))?;
            check(*rm.last().unwrap() == res.best.value, || format!("seed {seed}: best is not the running max"))?;
        }
        let again = tpe::optimize(linear, &cfg).map_err(|e| e.to_string())?;
        let bits = |h: &[tpe::Trial]| {
            h.iter()
                .flat_map(|t| t.raw.iter().chain(t.weights.as_array().iter()).chain([t.value].iter()).map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        check(bits(&again.history) == bits(&a.history), || format!("seed {seed}: history not reproducible"))?;
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "10/10 seeds: linear min best {lin_min:.4}, centre min best {cen_min:.1e}, {:.2?}",
        start.elapsed()
    ))
}

// ---------------------------------------------------------------- 10, 11

fn capacity_run(out: &Path) -> Result<CapacityReport, String> {
    run(Command::Capacity {
        aggregation: None,
        methods: Vec::new(),
        gradient: None,
        out: Some(out.to_path_buf()),
        data: DatasetArgs {
            synthetic: true,
            ..DatasetArgs::default()
        },
        cfg: ConfigArgs::default(),
    })
    .map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn as_written_collapse(e2e: Option<&CapacityReport>) -> Outcome {
    let mut worst = 0.0f64;
    let mut runs = 0;
    if let Some(report) = e2e {
        check(report.mode == RcMode::AsWritten, || "end-to-end report is not as-written".into())?;
        for row in &report.rows {
            let s = row.weights.w_neighb + row.weights.w_trust;
            worst = worst.max(s);
            runs += 1;
            check(s < 0.05, || format!("{}: w_neighb + w_trust = {s}", row.method))?;
        }
    }
    let mut r = rng(10);
    for seed in 0..10 {
        let v: [f64; 4] = std::array::from_fn(|_| r.random_range(0.05..=1.0));
        let nb = NormalizedBundle {
            n_acc: v[0],
            n_clust: v[1],
            n_agree: v[2],
            n_trust: v[3],
        };
        let cfg = TpeConfig {
            seed,
            ..TpeConfig::default()
        };
        let res = pipeline::optimize_weights(&nb, RcMode::AsWritten, &cfg).map_err(|e| e.to_string())?;
        let s = res.best.weights.w_neighb + res.best.weights.w_trust;
        worst = worst.max(s);
        runs += 1;
        check(s < 0.05, || format!("synthetic bundle {v:?}: w_neighb + w_trust = {s}"))?;
    }

    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/published_tables.csv");
    let f = std::fs::File::open(&fixture).map_err(|e| e.to_string())?;
    let rows = pipeline::read_table_rows(std::io::BufReader::new(f)).map_err(|e| e.to_string())?;
    let audit = pipeline::audit_rows(&rows).map_err(|e| e.to_string())?;
    let row = audit
        .iter()
        .find(|a| a.row.table == "Spike7k" && a.row.method == "Spike2Vec")
        .ok_or("Spike7k/Spike2Vec row missing")?;
    let literal = 0.3329 * 0.8533 + 0.3326 * 0.5447 - 0.0074 * 0.8623 - 0.3270 * 0.9325;
    let additive = 0.3329 * 0.8533 + 0.3326 * 0.5447 + 0.0074 * 0.8623 + 0.3270 * 0.9325;
    check(row.row.printed_rc == 0.7638, || format!("printed {}", row.row.printed_rc))?;
    check((row.literal_raw - literal).abs() < 1e-12 && (literal - 0.154).abs() < 1e-3, || {
        format!("literal {}", row.literal_raw)
    })?;
    check((row.additive_raw - additive).abs() < 1e-12 && (additive - 0.777).abs() < 1e-3, || {
        format!("additive {}", row.additive_raw)
    })?;
    let printed = pipeline::format_audit(&audit);
    let line = printed
        .lines()
        .find(|l| l.starts_with("Spike7k") && l.contains("Spike2Vec"))
        .ok_or("audit output lacks the row")?;
    check(line.contains("0.7638") && line.contains("0.1539") && line.contains("0.7765"), || line.to_string())?;
    Ok(format!(
        "{runs} as-written runs, max w_neighb + w_trust {worst:.1e}; audit Spike2Vec literal {:.4}, additive {:.4} vs printed 0.7638",
        row.literal_raw, row.additive_raw
    ))
}

fn end_to_end(first: &Result<(CapacityReport, Duration), String>, dir: &Path) -> Outcome {
    let (report, elapsed) = first.as_ref().map_err(Clone::clone)?;
    within(*elapsed, Duration::from_secs(300))?;
    check(report.rows.len() == 4, || format!("{} rows", report.rows.len()))?;
    for row in &report.rows {
        row.raw.check_ranges().map_err(|e| format!("{}: {e}", row.method))?;
        let w = row.weights.as_array();
        let v = [row.normalized.n_acc, row.normalized.n_clust, row.normalized.n_agree, row.normalized.n_trust];
        let recomputed = w[0] * v[0] + w[1] * v[1] - (w[2] * v[2] + w[3] * v[3]);
        check((recomputed - row.rc).abs() <= 1e-12, || format!("{}: rc {} vs {recomputed}", row.method, row.rc))?;
    }
    check(report.max_rc_inconsistency() <= 1e-12, || "stored RC not recomputable".into())?;
    let again = capacity_run(&dir.join("second"))?;
    let a = std::fs::read(dir.join("first/report.json")).map_err(|e| e.to_string())?;
    let b = std::fs::read(dir.join("second/report.json")).map_err(|e| e.to_string())?;
    check(a == b && &again == report, || "reruns differ".into())?;
    Ok(format!("4 rows in {elapsed:.1?}, rerun identical, RC recomputed exactly"))
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let t = Instant::now();
    let e2e = capacity_run(&dir.path().join("first")).map(|r| (r, t.elapsed()));

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("k-mer spectra match dictionary counting", Box::new(kmer_oracle)),
        ("silhouette matches naive oracle", Box::new(silhouette_oracle)),
        ("t-SNE gradient matches finite differences", Box::new(tsne_gradient)),
        ("perplexity calibration", Box::new(perplexity_calibration)),
        ("t-SNE preserves two-cluster structure", Box::new(tsne_structure)),
        ("neighborhood identity, isometry and trust oracle", Box::new(neighborhood_identity)),
        ("autoencoder gradients and ADAM", Box::new(autoencoder_gradients)),
        ("logistic regression", Box::new(logistic_regression)),
        ("TPE optimizer", Box::new(tpe_optimizer)),
        (
            "as-written weights collapse; table audit",
            Box::new(|| as_written_collapse(e2e.as_ref().ok().map(|(r, _)| r))),
        ),
        ("end-to-end capacity run", Box::new(|| end_to_end(&e2e, dir.path()))),
    ];

    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
