//! Full representation-capacity run: embed, project with t-SNE, compute the
//! four metrics, max-normalize across methods, search weights with TPE and
//! aggregate into one RC score per method.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::embedding::{embed_dataset, EmbeddingMatrix, EmbeddingParams, Method};
use crate::error::{Error, Result, StageExt};
use crate::eval::{kmeans, silhouette, split_and_classify, ClassificationResult, KMeansConfig, LogRegConfig, SplitSpec};
use crate::neighborhood::{sweep, NeighborIndex, SweepMetric, SweepResult, TrustFormula, DEFAULT_K_MAX};
use crate::tpe::{optimize, TpeConfig, TpeResult, Trial, WeightVector};
use crate::tsne::{run_tsne, LowDimEmbedding, TsneConfig};

/// The four raw metrics of one embedding.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub acc_class: f64,
    pub score_clust: f64,
    pub agree_neighbor: f64,
    pub trust_neighbor: f64,
}

impl MetricBundle {
    pub fn as_array(&self) -> [f64; 4] {
        [self.acc_class, self.score_clust, self.agree_neighbor, self.trust_neighbor]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            acc_class: a[0],
            score_clust: a[1],
            agree_neighbor: a[2],
            trust_neighbor: a[3],
        }
    }

    /// Checks finiteness and the declared ranges: accuracy, agreement and
    /// trustworthiness in [0,1], silhouette in [−1,1].
    pub fn check_ranges(&self) -> Result<()> {
        let ranges = [(0.0, 1.0), (-1.0, 1.0), (0.0, 1.0), (0.0, 1.0)];
        for ((v, (lo, hi)), name) in self.as_array().iter().zip(ranges).zip(METRIC_NAMES) {
            if !v.is_finite() || *v < lo || *v > hi {
                return Err(Error::Numerical(format!("{name} = {v} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

pub const METRIC_NAMES: [&str; 4] = ["acc_class", "score_clust", "agree_neighbor", "trust_neighbor"];
const METRIC_TITLES: [&str; 4] = [
    "Classification",
    "Clustering",
    "Neighborhood Agreement",
    "Trustworthiness",
];

/// Metrics divided by the per-metric maximum across compared methods.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedBundle {
    pub n_acc: f64,
    pub n_clust: f64,
    pub n_agree: f64,
    pub n_trust: f64,
}

impl NormalizedBundle {
    pub fn as_array(&self) -> [f64; 4] {
        [self.n_acc, self.n_clust, self.n_agree, self.n_trust]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            n_acc: a[0],
            n_clust: a[1],
            n_agree: a[2],
            n_trust: a[3],
        }
    }
}

/// Per-metric statistics used by `normalize`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    /// Maximum after any shift.
    pub max: [f64; 4],
    /// Shift added before dividing; non-zero only when the raw maximum was
    /// not positive.
    pub shift: [f64; 4],
}

/// Max-normalizes each metric across `bundles`. A metric whose maximum is
/// `<= 0` is first shifted by `1 + |min|`.
pub fn normalize(bundles: &[MetricBundle]) -> Result<(Vec<NormalizedBundle>, Normalization)> {
    if bundles.is_empty() {
        return Err(Error::Param("nothing to normalize".into()));
    }
    let mut max = [0.0; 4];
    let mut shift = [0.0; 4];
    for m in 0..4 {
        let col = bundles.iter().map(|b| b.as_array()[m]);
        let hi = col.clone().fold(f64::NEG_INFINITY, f64::max);
        let lo = col.fold(f64::INFINITY, f64::min);
        if !hi.is_finite() || !lo.is_finite() {
            return Err(Error::Numerical(format!("non-finite {}", METRIC_NAMES[m])));
        }
        if hi <= 0.0 {
            shift[m] = 1.0 + lo.abs();
        }
        max[m] = hi + shift[m];
    }
    let out = bundles
        .iter()
        .map(|b| {
            let a = b.as_array();
            NormalizedBundle::from_array(std::array::from_fn(|m| (a[m] + shift[m]) / max[m]))
        })
        .collect();
    Ok((out, Normalization { max, shift }))
}

/// How the four weighted terms are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RcMode {
    /// `(w_c·acc + w_s·clust) − (w_n·agree + w_t·trust)`.
    #[default]
    AsWritten,
    /// Sum of all four weighted terms.
    Additive,
}

impl RcMode {
    pub fn name(self) -> &'static str {
        match self {
            RcMode::AsWritten => "as-written",
            RcMode::Additive => "additive",
        }
    }
}

impl std::str::FromStr for RcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as-written" | "literal" => Ok(RcMode::AsWritten),
            "additive" => Ok(RcMode::Additive),
            _ => Err(Error::Param(format!("unknown aggregation `{s}` (as-written, additive)"))),
        }
    }
}

impl std::fmt::Display for RcMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn rc_from_arrays(w: [f64; 4], v: [f64; 4], mode: RcMode) -> f64 {
    let plus = w[0] * v[0] + w[1] * v[1];
    let rest = w[2] * v[2] + w[3] * v[3];
    match mode {
        RcMode::AsWritten => plus - rest,
        RcMode::Additive => plus + rest,
    }
}

pub fn rc_score(weights: &WeightVector, normalized: &NormalizedBundle, mode: RcMode) -> f64 {
    rc_from_arrays(weights.as_array(), normalized.as_array(), mode)
}

/// Everything that feeds the four metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub split: SplitSpec,
    pub logreg: LogRegConfig,
    pub kmeans: KMeansConfig,
    pub tsne: TsneConfig,
    /// Largest K in the neighborhood sweeps.
    pub k_max: usize,
    pub trust_formula: TrustFormula,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            split: SplitSpec::default(),
            logreg: LogRegConfig::default(),
            kmeans: KMeansConfig::default(),
            tsne: TsneConfig::default(),
            k_max: DEFAULT_K_MAX,
            trust_formula: TrustFormula::Standard,
        }
    }
}

/// Bundle plus the intermediate results behind it.
#[derive(Clone, Debug)]
pub struct BundleDetail {
    pub bundle: MetricBundle,
    pub classification: ClassificationResult,
    pub silhouette_per_point: Vec<f64>,
    pub cluster_assignments: Vec<usize>,
    pub tsne: LowDimEmbedding,
    pub agreement: SweepResult,
    pub trust: SweepResult,
}

pub fn compute_bundle(dataset: &LabeledDataset, embedding: &EmbeddingMatrix, config: &MetricConfig) -> Result<MetricBundle> {
    compute_bundle_detailed(dataset, embedding, config).map(|d| d.bundle)
}

pub fn compute_bundle_detailed(
    dataset: &LabeledDataset,
    embedding: &EmbeddingMatrix,
    config: &MetricConfig,
) -> Result<BundleDetail> {
    if embedding.row_ids != dataset.ids() {
        return Err(Error::Shape("embedding rows do not match dataset records".into()));
    }
    let compact = drop_zero_columns(embedding.values.view());
    let x = match &compact {
        Some(c) => c.view(),
        None => embedding.values.view(),
    };
    let labels = dataset.label_indices();
    let n_classes = dataset.classes().len();

    let classification =
        split_and_classify(x, &labels, n_classes, &config.split, &config.logreg).stage("classification")?;
    let (silhouette_per_point, cluster_assignments, score_clust) = cluster_score(x, n_classes, &config.kmeans)?;
    let tsne = run_tsne(x, &config.tsne).stage("tsne")?;
    let (agreement, trust) = neighborhood_sweeps(x, tsne.points.view(), config.k_max, config.trust_formula)?;

    let bundle = MetricBundle {
        acc_class: classification.accuracy,
        score_clust,
        agree_neighbor: agreement.scalar,
        trust_neighbor: trust.scalar,
    };
    Ok(BundleDetail {
        bundle,
        classification,
        silhouette_per_point,
        cluster_assignments,
        tsne,
        agreement,
        trust,
    })
}

/// Count vectors over large alphabets are mostly empty columns. Removing
/// columns that are zero in every row changes no distance, and the
/// classifier never moves their (zero-initialized) weights, so the metrics
/// are unchanged while the work shrinks. `None` when nothing can be dropped.
pub fn drop_zero_columns(x: ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    let keep: Vec<usize> = (0..x.ncols())
        .filter(|&j| x.column(j).iter().any(|&v| v != 0.0))
        .collect();
    if keep.len() == x.ncols() || keep.is_empty() {
        return None;
    }
    Some(x.select(Axis(1), &keep))
}

fn cluster_score(x: ArrayView2<'_, f64>, k: usize, config: &KMeansConfig) -> Result<(Vec<f64>, Vec<usize>, f64)> {
    let clusters = kmeans(x, k, config).stage("clustering")?;
    let s = silhouette(x, &clusters.assignments).stage("clustering")?;
    Ok((s.per_point, clusters.assignments, s.score))
}

/// Agreement and trustworthiness sweeps between the original embedding and
/// its low-dimensional layout.
pub fn neighborhood_sweeps(
    high: ArrayView2<'_, f64>,
    low: ArrayView2<'_, f64>,
    k_max: usize,
    formula: TrustFormula,
) -> Result<(SweepResult, SweepResult)> {
    let ix = NeighborIndex::build(high).stage("neighborhood")?;
    let iy = NeighborIndex::build(low).stage("neighborhood")?;
    let agreement = sweep(SweepMetric::Agreement, &ix, &iy, k_max).stage("neighborhood")?;
    let trust = sweep(SweepMetric::Trustworthiness(formula), &ix, &iy, k_max).stage("trustworthiness")?;
    Ok((agreement, trust))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    pub metrics: MetricConfig,
    pub tpe: TpeConfig,
    pub mode: RcMode,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            metrics: MetricConfig::default(),
            tpe: TpeConfig::default(),
            mode: RcMode::AsWritten,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub method: Method,
    pub params: EmbeddingParams,
    pub dimension: usize,
    pub weights: WeightVector,
    pub raw: MetricBundle,
    pub normalized: NormalizedBundle,
    pub rc: f64,
    /// Trial index at which the optimal weights were found.
    pub best_trial: usize,
}

impl CapacityRow {
    /// RC recomputed from the stored weights and normalized metrics.
    pub fn recompute_rc(&self, mode: RcMode) -> f64 {
        rc_score(&self.weights, &self.normalized, mode)
    }
}

const AS_WRITTEN_NOTE: &str = "as-written aggregation subtracts the neighborhood agreement and \
trustworthiness terms, so optimal weights collapse onto classification and clustering; \
published RC values are closer to the additive form (see `audit-tables`)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub mode: RcMode,
    pub master_seed: Option<u64>,
    pub seeds: BTreeMap<String, u64>,
    pub config: CapacityConfig,
    pub normalization: Normalization,
    /// Sorted by method name.
    pub rows: Vec<CapacityRow>,
    pub note: Option<String>,
}

impl CapacityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Largest deviation between stored and recomputed RC values.
    pub fn max_rc_inconsistency(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.rc - r.recompute_rc(self.mode)).abs())
            .fold(0.0, f64::max)
    }

    /// One row per method: `method,rc` then `weight (value)` cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["method", "rc", "classification", "clustering", "neighborhood_agreement", "trustworthiness"])?;
        for r in &self.rows {
            let mut rec = vec![r.method.name().to_string(), format!("{:.4}", r.rc)];
            rec.extend(cells(&r.weights, &r.raw));
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<report csv>", e))?;
        Ok(())
    }

    /// Human-readable table, one line per method.
    pub fn console_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Representation capacity (aggregation: {})", self.mode);
        let _ = writeln!(
            s,
            "{:<16} {:>8}  {:<18} {:<18} {:<22} {:<18}",
            "Method", "RC", METRIC_TITLES[0], METRIC_TITLES[1], METRIC_TITLES[2], METRIC_TITLES[3]
        );
        for r in &self.rows {
            let c = cells(&r.weights, &r.raw);
            let _ = writeln!(
                s,
                "{:<16} {:>8.4}  {:<18} {:<18} {:<22} {:<18}",
                r.method.title(),
                r.rc,
                c[0],
                c[1],
                c[2],
                c[3]
            );
        }
        if let Some(note) = &self.note {
            let _ = writeln!(s, "note: {note}");
        }
        s
    }
}

fn cells(w: &WeightVector, v: &MetricBundle) -> Vec<String> {
    w.as_array()
        .iter()
        .zip(v.as_array())
        .map(|(w, v)| format!("{w:.4} ({v:.4})"))
        .collect()
}

/// Weight search for one method's normalized bundle.
pub fn optimize_weights(normalized: &NormalizedBundle, mode: RcMode, tpe: &TpeConfig) -> Result<TpeResult> {
    optimize(|w| rc_score(w, normalized, mode), tpe).stage("weight search")
}

/// Turns already computed bundles into a report: normalization, one TPE
/// search per method, RC scores, rows sorted by method name.
pub fn assemble_report(
    entries: Vec<(EmbeddingParams, usize, MetricBundle)>,
    config: &CapacityConfig,
) -> Result<CapacityReport> {
    assemble_with_histories(entries, config).map(|(r, _)| r)
}

fn assemble_with_histories(
    entries: Vec<(EmbeddingParams, usize, MetricBundle)>,
    config: &CapacityConfig,
) -> Result<(CapacityReport, Vec<(Method, Vec<Trial>)>)> {
    let raws: Vec<MetricBundle> = entries.iter().map(|e| e.2).collect();
    let (normalized, normalization) = normalize(&raws).stage("normalization")?;
    let mut rows = Vec::with_capacity(entries.len());
    let mut histories = Vec::with_capacity(entries.len());
    for ((params, dimension, raw), norm) in entries.into_iter().zip(normalized) {
        let method = params.method();
        let search = optimize_weights(&norm, config.mode, &config.tpe).map_err(|e| e.at_stage(method.name()))?;
        let best = search.best;
        histories.push((method, search.history));
        rows.push(CapacityRow {
            method,
            params,
            dimension,
            weights: best.weights,
            raw,
            normalized: norm,
            rc: best.value,
            best_trial: best.index,
        });
    }
    rows.sort_by(|a, b| a.method.name().cmp(b.method.name()));
    histories.sort_by(|a, b| a.0.name().cmp(b.0.name()));
    let mut seeds = BTreeMap::new();
    seeds.insert("split".to_string(), config.metrics.split.seed);
    seeds.insert("kmeans".to_string(), config.metrics.kmeans.seed);
    seeds.insert("tsne".to_string(), config.metrics.tsne.seed);
    seeds.insert("tpe".to_string(), config.tpe.seed);
    for r in &rows {
        if let EmbeddingParams::Autoencoder { config, .. } = &r.params {
            seeds.insert("autoencoder".to_string(), config.seed);
        }
    }
    let report = CapacityReport {
        mode: config.mode,
        master_seed: None,
        seeds,
        config: config.clone(),
        normalization,
        rows,
        note: (config.mode == RcMode::AsWritten).then(|| AS_WRITTEN_NOTE.to_string()),
    };
    Ok((report, histories))
}

/// A capacity report plus the per-method intermediates behind it.
pub struct CapacityRun {
    pub report: CapacityReport,
    /// Sorted by method name, like the report rows.
    pub details: Vec<(Method, BundleDetail)>,
    pub histories: Vec<(Method, Vec<Trial>)>,
}


/// Embeds the dataset with every method, computes all bundles (in parallel),
/// then assembles the report.
pub fn evaluate_all(dataset: &LabeledDataset, methods: &[EmbeddingParams], config: &CapacityConfig) -> Result<CapacityReport> {
    run_capacity(dataset, methods, config).map(|r| r.report)
}

/// `evaluate_all`, keeping t-SNE layouts, sweep curves and TPE histories.
pub fn run_capacity(dataset: &LabeledDataset, methods: &[EmbeddingParams], config: &CapacityConfig) -> Result<CapacityRun> {
    if methods.is_empty() {
        return Err(Error::Param("at least one embedding method is required".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = methods.iter().find(|p| !seen.insert(p.method())) {
        return Err(Error::Param(format!("method {} listed twice", dup.method())));
    }
    let computed: Vec<(EmbeddingParams, usize, BundleDetail)> = methods
        .par_iter()
        .map(|params| {
            let tag = |e: Error| e.at_stage(params.method().name());
            let emb = embed_dataset(dataset, params).stage("embedding").map_err(tag)?;
            let detail = compute_bundle_detailed(dataset, &emb, &config.metrics).map_err(tag)?;
            Ok((params.clone(), emb.ncols(), detail))
        })
        .collect::<Result<_>>()?;
    let entries = computed.iter().map(|(p, d, b)| (p.clone(), *d, b.bundle)).collect();
    let (report, histories) = assemble_with_histories(entries, config)?;
    let mut details: Vec<(Method, BundleDetail)> = computed.into_iter().map(|(p, _, b)| (p.method(), b)).collect();
    details.sort_by(|a, b| a.0.name().cmp(b.0.name()));
    Ok(CapacityRun {
        report,
        details,
        histories,
    })
}

/// One printed table row: weights, performance values and RC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub table: String,
    pub method: String,
    pub printed_rc: f64,
    pub w_class: f64,
    pub v_class: f64,
    pub w_clust: f64,
    pub v_clust: f64,
    pub w_neighb: f64,
    pub v_neighb: f64,
    pub w_trust: f64,
    pub v_trust: f64,
}

impl TableRow {
    pub fn weights(&self) -> [f64; 4] {
        [self.w_class, self.w_clust, self.w_neighb, self.w_trust]
    }

    pub fn values(&self) -> [f64; 4] {
        [self.v_class, self.v_clust, self.v_neighb, self.v_trust]
    }
}

/// Weight sums further than this from 1 trigger a warning.
pub const WEIGHT_SUM_TOL: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub row: TableRow,
    pub literal_raw: f64,
    pub additive_raw: f64,
    /// Values max-normalized within the row's table.
    pub literal_normalized: f64,
    pub additive_normalized: f64,
    pub weight_sum: f64,
    pub warning: Option<String>,
}

impl AuditResult {
    pub fn deltas(&self) -> [f64; 4] {
        let p = self.row.printed_rc;
        [
            self.literal_raw - p,
            self.additive_raw - p,
            self.literal_normalized - p,
            self.additive_normalized - p,
        ]
    }
}

/// Reads table rows from CSV with header
/// `table,method,printed_rc,w_class,v_class,...,w_trust,v_trust`.
pub fn read_table_rows<R: std::io::Read>(r: R) -> Result<Vec<TableRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
    let rows = reader.deserialize().collect::<std::result::Result<Vec<TableRow>, _>>()?;
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no table rows".into(),
        });
    }
    Ok(rows)
}

/// Recomputes each printed row's RC under both aggregation modes, on raw
/// and on table-wise max-normalized values.
pub fn audit_rows(rows: &[TableRow]) -> Result<Vec<AuditResult>> {
    let mut by_table: BTreeMap<&str, Vec<MetricBundle>> = BTreeMap::new();
    for r in rows {
        by_table.entry(&r.table).or_default().push(MetricBundle::from_array(r.values()));
    }
    let mut norms = BTreeMap::new();
    for (t, bundles) in &by_table {
        norms.insert(*t, normalize(bundles)?.1);
    }
    Ok(rows
        .iter()
        .map(|r| {
            let w = r.weights();
            let v = r.values();
            let norm = &norms[r.table.as_str()];
            let nv: [f64; 4] = std::array::from_fn(|m| (v[m] + norm.shift[m]) / norm.max[m]);
            let weight_sum: f64 = w.iter().sum();
            let warning = ((weight_sum - 1.0).abs() > WEIGHT_SUM_TOL)
                .then(|| format!("weights sum to {weight_sum:.4}, not 1"));
            AuditResult {
                row: r.clone(),
                literal_raw: rc_from_arrays(w, v, RcMode::AsWritten),
                additive_raw: rc_from_arrays(w, v, RcMode::Additive),
                literal_normalized: rc_from_arrays(w, nv, RcMode::AsWritten),
                additive_normalized: rc_from_arrays(w, nv, RcMode::Additive),
                weight_sum,
                warning,
            }
        })
        .collect())
}

pub fn format_audit(results: &[AuditResult]) -> String {
    let tw = results.iter().map(|a| a.row.table.chars().count()).max().unwrap_or(0).max(5);
    let mw = results.iter().map(|a| a.row.method.chars().count()).max().unwrap_or(0).max(6);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<tw$} {:<mw$} {:>8} | {:>8} {:>8} | {:>8} {:>8} | {:>9} {:>9} | {:>9} {:>9}",
        "table", "method", "printed", "literal", "Δ", "additive", "Δ", "lit/max", "Δ", "add/max", "Δ"
    );
    for a in results {
        let d = a.deltas();
        let _ = writeln!(
            s,
            "{:<tw$} {:<mw$} {:>8.4} | {:>8.4} {:>+8.4} | {:>8.4} {:>+8.4} | {:>9.4} {:>+9.4} | {:>9.4} {:>+9.4}",
            a.row.table,
            a.row.method,
            a.row.printed_rc,
            a.literal_raw,
            d[0],
            a.additive_raw,
            d[1],
            a.literal_normalized,
            d[2],
            a.additive_normalized,
            d[3]
        );
        if let Some(w) = &a.warning {
            let _ = writeln!(s, "  warning: {} / {}: {w}", a.row.table, a.row.method);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use ndarray::Array2;

    use super::*;
    use crate::dataset::{synthesize_dataset, Alphabet, SynthSpec};

    fn bundle(a: [f64; 4]) -> MetricBundle {
        MetricBundle::from_array(a)
    }

    fn small_dataset() -> LabeledDataset {
        synthesize_dataset(&SynthSpec {
            num_classes: 3,
            per_class: 15,
            length: 60,
            alphabet: Alphabet::dna(),
            mutation_rate: 0.1,
            seed: 2,
        })
        .unwrap()
    }

    fn fast_metrics() -> MetricConfig {
        MetricConfig {
            tsne: TsneConfig {
                perplexity: 10.0,
                iterations: 300,
                ..TsneConfig::default()
            },
            logreg: LogRegConfig {
                epochs: 100,
                ..LogRegConfig::default()
            },
            ..MetricConfig::default()
        }
    }

    #[test]
    fn rc_algebra() {
        let ones = NormalizedBundle::from_array([1.0; 4]);
        let w = WeightVector::uniform();
        assert_eq!(rc_score(&w, &ones, RcMode::AsWritten), 0.0);
        assert_eq!(rc_score(&w, &ones, RcMode::Additive), 1.0);
        let nb = NormalizedBundle::from_array([0.7, 0.2, 0.9, 0.4]);
        let first = WeightVector::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(rc_score(&first, &nb, RcMode::AsWritten), 0.7);
        assert_eq!(rc_score(&first, &nb, RcMode::Additive), 0.7);
    }

    #[test]
    fn spike2vec_table_row() {
        let w = [0.3329, 0.3326, 0.0074, 0.3270];
        let v = [0.8533, 0.5447, 0.8623, 0.9325];
        // Hand arithmetic: 0.28406 + 0.18117 ∓ (0.00638 + 0.30493).
        assert!((rc_from_arrays(w, v, RcMode::AsWritten) - 0.15392).abs() < 1e-4);
        assert!((rc_from_arrays(w, v, RcMode::Additive) - 0.77654).abs() < 1e-4);
    }

    #[test]
    fn normalization_self_max_and_scale() {
        let (n, _) = normalize(&[bundle([0.8, 0.3, 0.6, 0.9])]).unwrap();
        assert_eq!(n[0].as_array(), [1.0; 4]);
        let bs = [bundle([0.8, 0.3, 0.6, 0.9]), bundle([0.4, 0.5, 0.6, 0.3])];
        let (n, _) = normalize(&bs).unwrap();
        assert_eq!(n[0].n_acc, 1.0);
        assert_eq!(n[1].n_clust, 1.0);
        assert_eq!((n[0].n_agree, n[1].n_agree), (1.0, 1.0));
        let scaled: Vec<MetricBundle> = bs
            .iter()
            .map(|b| bundle([b.acc_class * 3.0, b.score_clust, b.agree_neighbor, b.trust_neighbor]))
            .collect();
        let (m, _) = normalize(&scaled).unwrap();
        for (a, b) in n.iter().zip(&m) {
            assert!((a.n_acc - b.n_acc).abs() < 1e-15);
        }
    }

    #[test]
    fn negative_silhouettes_are_shifted() {
        let bs = [bundle([0.5, -0.2, 0.5, 0.5]), bundle([0.5, -0.6, 0.5, 0.5])];
        let (n, info) = normalize(&bs).unwrap();
        assert!((info.shift[1] - 1.6).abs() < 1e-12);
        assert_eq!(info.shift[0], 0.0);
        assert_eq!(n[0].n_clust, 1.0);
        assert!((n[1].n_clust - 1.0 / 1.4).abs() < 1e-12);
    }

    #[test]
    fn dominance_survives_optimization() {
        let entries = vec![
            (EmbeddingParams::default_for(Method::Spike2Vec), 64, bundle([0.9, 0.5, 0.8, 0.9])),
            (EmbeddingParams::default_for(Method::OneHot), 100, bundle([0.6, 0.2, 0.5, 0.7])),
        ];
        let cfg = CapacityConfig {
            mode: RcMode::Additive,
            tpe: TpeConfig {
                n_trials: 300,
                ..TpeConfig::default()
            },
            ..CapacityConfig::default()
        };
        let report = assemble_report(entries, &cfg).unwrap();
        assert_eq!(report.rows[0].method, Method::OneHot);
        assert!(report.rows[1].rc >= report.rows[0].rc);
        assert!(report.max_rc_inconsistency() < 1e-12);
        // Shared weights: the dominating method is never behind.
        let w = WeightVector::new(0.1, 0.2, 0.3, 0.4);
        assert!(rc_score(&w, &report.rows[1].normalized, RcMode::Additive) >= rc_score(&w, &report.rows[0].normalized, RcMode::Additive));
    }

    #[test]
    fn as_written_weights_avoid_subtracted_block() {
        let entries = vec![(EmbeddingParams::default_for(Method::Spike2Vec), 64, bundle([0.9, 0.5, 0.8, 0.9]))];
        let report = assemble_report(entries, &CapacityConfig::default()).unwrap();
        let w = report.rows[0].weights;
        assert!(w.w_neighb + w.w_trust < 0.05, "{w:?}");
        assert!(report.note.is_some());
    }

    #[test]
    fn bundle_is_in_range_and_deterministic() {
        let ds = small_dataset();
        let emb = embed_dataset(&ds, &EmbeddingParams::default_for(Method::Spike2Vec)).unwrap();
        let a = compute_bundle(&ds, &emb, &fast_metrics()).unwrap();
        a.check_ranges().unwrap();
        assert_eq!(a, compute_bundle(&ds, &emb, &fast_metrics()).unwrap());
    }

    #[test]
    fn empty_columns_do_not_change_metrics() {
        let ds = small_dataset();
        let emb = embed_dataset(&ds, &EmbeddingParams::default_for(Method::Pwm2Vec)).unwrap();
        let base = compute_bundle(&ds, &emb, &fast_metrics()).unwrap();
        let (n, d) = emb.values.dim();
        let mut padded = Array2::zeros((n, d + 7));
        padded.slice_mut(ndarray::s![.., 3..3 + d]).assign(&emb.values);
        let wide = EmbeddingMatrix::new(padded, ds.ids(), Method::Pwm2Vec, BTreeMap::new()).unwrap();
        let b = compute_bundle(&ds, &wide, &fast_metrics()).unwrap();
        for (x, y) in base.as_array().iter().zip(b.as_array()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        assert!(drop_zero_columns(emb.values.view()).is_none());
    }

    #[test]
    fn identical_rows_predict_the_majority() {
        let ds = small_dataset();
        let values = Array2::from_elem((ds.len(), 5), 0.5);
        let emb = EmbeddingMatrix::new(values, ds.ids(), Method::OneHot, BTreeMap::new()).unwrap();
        let acc = compute_bundle(&ds, &emb, &fast_metrics()).unwrap().acc_class;
        assert!((acc - 1.0 / 3.0).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn audit_reads_and_warns() {
        let csv = "table,method,printed_rc,w_class,v_class,w_clust,v_clust,w_neighb,v_neighb,w_trust,v_trust\n\
                   t1,Spike2Vec,0.7638,0.3329,0.8533,0.3326,0.5447,0.0074,0.8623,0.3270,0.9325\n\
                   t1,Other,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5,0.5\n";
        let rows = read_table_rows(csv.as_bytes()).unwrap();
        let audit = audit_rows(&rows).unwrap();
        assert!((audit[0].literal_raw - 0.1539).abs() < 1e-3);
        assert!((audit[0].additive_raw - 0.7765).abs() < 1e-3);
        assert!(audit[0].warning.is_none());
        assert!(audit[1].warning.is_some());
        let text = format_audit(&audit);
        assert!(text.contains("0.7638") && text.contains("0.1539") && text.contains("warning"));
        assert!(read_table_rows("table,method,printed_rc,w_class,v_class,w_clust,v_clust,w_neighb,v_neighb,w_trust,v_trust\n".as_bytes()).is_err());
        assert!(read_table_rows("".as_bytes()).is_err());
    }
}
