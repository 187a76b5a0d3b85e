//! Run configuration: one TOML file with a section per stage, dotted-key
//! overrides on top, and a master seed that fans out to per-stage seeds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset_with, synthesize_dataset, Alphabet, InvalidResidues, LabeledDataset, SynthSpec};
use crate::embedding::{EmbeddingParams, Method};
use crate::error::{Error, Result};
use crate::eval::{KMeansConfig, LogRegConfig, SplitSpec};
use crate::neighborhood::{TrustFormula, DEFAULT_K_MAX};
use crate::neural::AutoencoderConfig;
use crate::pipeline::{CapacityConfig, MetricConfig, RcMode};
use crate::tpe::TpeConfig;
use crate::tsne::TsneConfig;

/// Where sequences come from. There is deliberately no default source.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub fasta: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Generate the dataset from the `[synth]` section instead of reading files.
    pub synthetic: bool,
    pub alphabet: String,
    /// Drop records with residues outside the alphabet instead of failing.
    pub drop_invalid: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub length: usize,
    pub mutation_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 3,
            per_class: 100,
            length: 120,
            mutation_rate: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KmerSection {
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpacedSection {
    pub k: usize,
    pub g: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PwmSection {
    pub k: usize,
    pub pseudocount: f64,
    /// 0 = median length − k + 1.
    pub target_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSection {
    /// One-hot length; 0 = median length.
    pub target_len: usize,
    pub z: usize,
    /// 0 = max(2z, 32).
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub standardize: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OneHotSection {
    /// 0 = median length.
    pub target_len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub k_max: usize,
    pub trust_formula: TrustFormula,
}

macro_rules! defaults {
    ($($t:ty => $e:expr;)*) => {$(
        impl Default for $t {
            fn default() -> Self {
                $e
            }
        }
    )*};
}

defaults! {
    KmerSection => Self { k: 3 };
    SpacedSection => Self { k: 4, g: 9 };
    PwmSection => Self { k: 9, pseudocount: 0.1, target_len: 0 };
    SweepSection => Self { k_max: DEFAULT_K_MAX, trust_formula: TrustFormula::Standard };
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let c = AutoencoderConfig::default();
        Self {
            target_len: 0,
            z: c.z,
            hidden: c.hidden,
            epochs: c.epochs,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            standardize: c.standardize,
        }
    }
}

/// Everything a run needs. Per-stage `seed` fields inside sections are
/// replaced by seeds derived from the master `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub aggregation: RcMode,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub synth: SynthConfig,
    pub spike2vec: KmerSection,
    pub spaced_kmers: SpacedSection,
    pub pwm2vec: PwmSection,
    pub autoencoder: AutoencoderSection,
    pub one_hot: OneHotSection,
    pub split: SplitSpec,
    pub logreg: LogRegConfig,
    pub kmeans: KMeansConfig,
    pub tsne: TsneConfig,
    pub sweep: SweepSection,
    pub tpe: TpeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            methods: vec![Method::Spike2Vec, Method::SpacedKmers, Method::Pwm2Vec, Method::AutoEncoder],
            aggregation: RcMode::AsWritten,
            output_dir: PathBuf::from("out"),
            dataset: DatasetConfig {
                alphabet: "protein".into(),
                ..DatasetConfig::default()
            },
            synth: SynthConfig::default(),
            spike2vec: KmerSection::default(),
            spaced_kmers: SpacedSection::default(),
            pwm2vec: PwmSection::default(),
            autoencoder: AutoencoderSection::default(),
            one_hot: OneHotSection::default(),
            split: SplitSpec::default(),
            logreg: LogRegConfig::default(),
            kmeans: KMeansConfig::default(),
            tsne: TsneConfig::default(),
            sweep: SweepSection::default(),
            tpe: TpeConfig::default(),
        }
    }
}

/// Stages that receive their own seed.
pub const SEEDED_STAGES: [&str; 6] = ["synth", "split", "kmeans", "tsne", "tpe", "autoencoder"];

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for `stage`: splitmix64 of the master seed xor the FNV-1a hash of
/// the stage name.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    splitmix64(master ^ fnv1a(stage))
}

pub fn stage_seeds(master: u64) -> BTreeMap<String, u64> {
    SEEDED_STAGES
        .iter()
        .map(|s| (s.to_string(), derive_seed(master, s)))
        .collect()
}

/// Parses `text` as a TOML value, falling back to a plain string.
fn parse_scalar(text: &str) -> toml::Value {
    let doc = format!("v = {text}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(text.to_string())),
        Err(_) => toml::Value::String(text.to_string()),
    }
}

fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `section.key=value` overrides; values are TOML literals, bare
    /// words are taken as strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            set_dotted(&mut table, key.trim(), parse_scalar(value.trim()))?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Every field of the default configuration as `(dotted key, default)`,
    /// in file order. Optional dataset paths, which have no default, are
    /// listed with an empty value.
    pub fn documented_fields() -> Vec<(String, String)> {
        let mut out = Vec::new();
        let table = toml::Table::try_from(RunConfig::default()).expect("serializable default");
        flatten("", &table, &mut out);
        for key in ["dataset.fasta", "dataset.labels"] {
            out.push((key.to_string(), String::new()));
        }
        out
    }

    pub fn alphabet(&self) -> Result<Alphabet> {
        Alphabet::from_name(&self.dataset.alphabet)
    }

    /// Loads or synthesizes the dataset.
    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        let alphabet = self.alphabet()?;
        let d = &self.dataset;
        if d.synthetic {
            let s = &self.synth;
            return synthesize_dataset(&SynthSpec {
                num_classes: s.num_classes,
                per_class: s.per_class,
                length: s.length,
                alphabet,
                mutation_rate: s.mutation_rate,
                seed: derive_seed(self.seed, "synth"),
            });
        }
        match (&d.fasta, &d.labels) {
            (Some(f), Some(l)) => {
                let policy = if d.drop_invalid {
                    InvalidResidues::DropRecord
                } else {
                    InvalidResidues::Error
                };
                load_dataset_with(f, l, alphabet, policy)
            }
            _ => Err(Error::Config(
                "no dataset source: set dataset.fasta and dataset.labels, or dataset.synthetic = true".into(),
            )),
        }
    }

    fn or_auto(v: usize) -> Option<usize> {
        (v > 0).then_some(v)
    }

    /// Embedding parameters for `method` from its section.
    pub fn params_for(&self, method: Method) -> EmbeddingParams {
        match method {
            Method::Spike2Vec => EmbeddingParams::Spike2vec { k: self.spike2vec.k },
            Method::SpacedKmers => EmbeddingParams::SpacedKmers {
                k: self.spaced_kmers.k,
                g: self.spaced_kmers.g,
            },
            Method::Pwm2Vec => EmbeddingParams::Pwm2vec {
                k: self.pwm2vec.k,
                pseudocount: self.pwm2vec.pseudocount,
                target_len: Self::or_auto(self.pwm2vec.target_len),
            },
            Method::AutoEncoder => {
                let a = &self.autoencoder;
                EmbeddingParams::Autoencoder {
                    target_len: Self::or_auto(a.target_len),
                    config: AutoencoderConfig {
                        z: a.z,
                        hidden: a.hidden,
                        epochs: a.epochs,
                        batch_size: a.batch_size,
                        learning_rate: a.learning_rate,
                        standardize: a.standardize,
                        seed: derive_seed(self.seed, "autoencoder"),
                        ..AutoencoderConfig::default()
                    },
                }
            }
            Method::OneHot => EmbeddingParams::OneHot {
                target_len: Self::or_auto(self.one_hot.target_len),
            },
        }
    }

    pub fn method_params(&self) -> Vec<EmbeddingParams> {
        self.methods.iter().map(|&m| self.params_for(m)).collect()
    }

    pub fn metric_config(&self) -> MetricConfig {
        MetricConfig {
            split: SplitSpec {
                seed: derive_seed(self.seed, "split"),
                ..self.split.clone()
            },
            logreg: self.logreg.clone(),
            kmeans: KMeansConfig {
                seed: derive_seed(self.seed, "kmeans"),
                ..self.kmeans.clone()
            },
            tsne: TsneConfig {
                seed: derive_seed(self.seed, "tsne"),
                ..self.tsne.clone()
            },
            k_max: self.sweep.k_max,
            trust_formula: self.sweep.trust_formula,
        }
    }

    pub fn capacity_config(&self) -> CapacityConfig {
        CapacityConfig {
            metrics: self.metric_config(),
            tpe: TpeConfig {
                seed: derive_seed(self.seed, "tpe"),
                ..self.tpe.clone()
            },
            mode: self.aggregation,
        }
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.to_string())),
        }
    }
}
