//! Dataset-level embeddings and their on-disk formats.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::kmer;
use crate::neural::{self, AutoencoderConfig, TrainedAutoencoder};

const BINARY_MAGIC: &[u8; 8] = b"RCEMBED1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "spike2vec")]
    Spike2Vec,
    #[serde(rename = "spaced-kmers")]
    SpacedKmers,
    #[serde(rename = "pwm2vec")]
    Pwm2Vec,
    #[serde(rename = "autoencoder")]
    AutoEncoder,
    #[serde(rename = "one-hot")]
    OneHot,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Spike2Vec,
        Method::SpacedKmers,
        Method::Pwm2Vec,
        Method::AutoEncoder,
        Method::OneHot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Spike2Vec => "spike2vec",
            Method::SpacedKmers => "spaced-kmers",
            Method::Pwm2Vec => "pwm2vec",
            Method::AutoEncoder => "autoencoder",
            Method::OneHot => "one-hot",
        }
    }

    /// Display name used in report tables.
    pub fn title(self) -> &'static str {
        match self {
            Method::Spike2Vec => "Spike2Vec",
            Method::SpacedKmers => "Spaced k-mers",
            Method::Pwm2Vec => "PWM2Vec",
            Method::AutoEncoder => "AutoEncoder",
            Method::OneHot => "One-hot",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                let valid: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Param(format!("unknown method `{s}`; valid methods: {}", valid.join(", ")))
            })
    }
}

/// Method plus its generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum EmbeddingParams {
    Spike2vec {
        k: usize,
    },
    SpacedKmers {
        k: usize,
        g: usize,
    },
    Pwm2vec {
        k: usize,
        pseudocount: f64,
        /// `None` uses `median length - k + 1` over the dataset.
        target_len: Option<usize>,
    },
    Autoencoder {
        /// One-hot length in positions; `None` uses the median length.
        target_len: Option<usize>,
        #[serde(flatten)]
        config: AutoencoderConfig,
    },
    OneHot {
        target_len: Option<usize>,
    },
}

impl EmbeddingParams {
    pub fn method(&self) -> Method {
        match self {
            EmbeddingParams::Spike2vec { .. } => Method::Spike2Vec,
            EmbeddingParams::SpacedKmers { .. } => Method::SpacedKmers,
            EmbeddingParams::Pwm2vec { .. } => Method::Pwm2Vec,
            EmbeddingParams::Autoencoder { .. } => Method::AutoEncoder,
            EmbeddingParams::OneHot { .. } => Method::OneHot,
        }
    }

    /// Default parameters per method: spectrum k=3, spaced k=4 g=9, PWM k=9
    /// with pseudocount 0.1, autoencoder z=64.
    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Spike2Vec => EmbeddingParams::Spike2vec { k: 3 },
            Method::SpacedKmers => EmbeddingParams::SpacedKmers { k: 4, g: 9 },
            Method::Pwm2Vec => EmbeddingParams::Pwm2vec {
                k: 9,
                pseudocount: 0.1,
                target_len: None,
            },
            Method::AutoEncoder => EmbeddingParams::Autoencoder {
                target_len: None,
                config: AutoencoderConfig::default(),
            },
            Method::OneHot => EmbeddingParams::OneHot { target_len: None },
        }
    }

    fn describe(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        match self {
            EmbeddingParams::Spike2vec { k } => put("k", k.to_string()),
            EmbeddingParams::SpacedKmers { k, g } => {
                put("k", k.to_string());
                put("g", g.to_string());
            }
            EmbeddingParams::Pwm2vec { k, pseudocount, .. } => {
                put("k", k.to_string());
                put("pseudocount", pseudocount.to_string());
            }
            EmbeddingParams::Autoencoder { config, .. } => {
                put("z", config.z.to_string());
                put("hidden", config.hidden_width().to_string());
                put("epochs", config.epochs.to_string());
                put("batch_size", config.batch_size.to_string());
                put("learning_rate", config.learning_rate.to_string());
                put("seed", config.seed.to_string());
            }
            EmbeddingParams::OneHot { .. } => {}
        }
        m
    }
}

/// `n × d` embedding, row `i` belonging to `row_ids[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub values: Array2<f64>,
    pub row_ids: Vec<String>,
    pub method: Method,
    pub params: BTreeMap<String, String>,
}

impl EmbeddingMatrix {
    pub fn new(
        values: Array2<f64>,
        row_ids: Vec<String>,
        method: Method,
        params: BTreeMap<String, String>,
    ) -> Result<Self> {
        if values.nrows() != row_ids.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} ids",
                values.nrows(),
                row_ids.len()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite value {v} at row `{}` column {j}",
                row_ids[i]
            )));
        }
        Ok(Self {
            values,
            row_ids,
            method,
            params,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// CSV: a `# method=<name> key=value ...` comment line, a header
    /// `id,v0,...,v{d-1}`, then one row per record.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "# method={}", self.method.name())?;
        for (k, v) in &self.params {
            write!(w, " {k}={v}")?;
        }
        writeln!(w)?;
        write!(w, "id")?;
        for j in 0..self.ncols() {
            write!(w, ",v{j}")?;
        }
        writeln!(w)?;
        for (id, row) in self.row_ids.iter().zip(self.values.rows()) {
            write!(w, "{id}")?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut r: R) -> Result<Self> {
        let mut first = String::new();
        r.read_line(&mut first).map_err(|e| Error::io("<embedding csv>", e))?;
        let comment = first
            .trim_end()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: "expected `# method=...` line".into(),
            })?;
        let mut method = None;
        let mut params = BTreeMap::new();
        for tok in comment.split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("malformed parameter `{tok}`"),
            })?;
            if k == "method" {
                method = Some(v.parse::<Method>()?);
            } else {
                params.insert(k.to_string(), v.to_string());
            }
        }
        let method = method.ok_or_else(|| Error::Parse {
            line: 1,
            msg: "missing method".into(),
        })?;
        let mut rdr = csv::ReaderBuilder::new().from_reader(r);
        let d = rdr.headers()?.len().saturating_sub(1);
        let mut ids = Vec::new();
        let mut flat = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::Parse {
                    line: i + 3,
                    msg: format!("expected {} fields, found {}", d + 1, rec.len()),
                });
            }
            ids.push(rec[0].to_string());
            for f in rec.iter().skip(1) {
                flat.push(f.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 3,
                    msg: format!("bad number `{f}`: {e}"),
                })?);
            }
        }
        let values = Array2::from_shape_vec((ids.len(), d), flat).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(values, ids, method, params)
    }

    /// Binary: magic `RCEMBED1`, `n` and `d` as little-endian u64, then the
    /// matrix row-major as little-endian f64. Ids are not stored.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.nrows() as u64).to_le_bytes())?;
        w.write_all(&(self.ncols() as u64).to_le_bytes())?;
        for v in self.values.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary_values<R: Read>(mut r: R) -> Result<Array2<f64>> {
        let bad = |m: &str| Error::Parse {
            line: 0,
            msg: format!("binary embedding: {m}"),
        };
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
        if &buf != BINARY_MAGIC {
            return Err(bad("bad magic"));
        }
        r.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
        let n = u64::from_le_bytes(buf) as usize;
        r.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
        let d = u64::from_le_bytes(buf) as usize;
        let mut flat = Vec::with_capacity(n.saturating_mul(d));
        for _ in 0..n * d {
            r.read_exact(&mut buf).map_err(|_| bad("truncated data"))?;
            flat.push(f64::from_le_bytes(buf));
        }
        Array2::from_shape_vec((n, d), flat).map_err(|e| Error::Shape(e.to_string()))
    }
}

fn stack_rows(rows: Vec<Array1<f64>>, d: usize) -> Array2<f64> {
    let n = rows.len();
    let mut out = Array2::zeros((n, d));
    for (mut dst, src) in out.rows_mut().into_iter().zip(rows) {
        dst.assign(&src);
    }
    out
}

fn per_record<F>(dataset: &LabeledDataset, d: usize, f: F) -> Result<Array2<f64>>
where
    F: Fn(&str) -> Result<Array1<f64>> + Sync,
{
    let rows: Vec<Array1<f64>> = dataset
        .records()
        .par_iter()
        .map(|r| f(&r.residues).map_err(|e| e.for_record(&r.id)))
        .collect::<Result<_>>()?;
    Ok(stack_rows(rows, d))
}

/// One-hot matrix of the dataset at `target_len` positions.
pub fn one_hot_matrix(dataset: &LabeledDataset, target_len: usize) -> Result<Array2<f64>> {
    let alphabet = dataset.alphabet();
    per_record(dataset, target_len * alphabet.len(), |s| kmer::one_hot(s, alphabet, target_len))
}

fn check_min_len(dataset: &LabeledDataset, need: usize, what: &str) -> Result<()> {
    if let Some(r) = dataset.shortest() {
        if r.residues.len() < need {
            return Err(Error::Param(format!(
                "shortest record `{}` has length {} < {what} = {need}",
                r.id,
                r.residues.len()
            )));
        }
    }
    Ok(())
}

/// Embeds every record. Row `i` is record `i`.
pub fn embed_dataset(dataset: &LabeledDataset, params: &EmbeddingParams) -> Result<EmbeddingMatrix> {
    match params {
        EmbeddingParams::Autoencoder { .. } => embed_autoencoder(dataset, params).map(|(m, _)| m),
        _ => {
            let (values, described) = embed_values(dataset, params)?;
            EmbeddingMatrix::new(values, dataset.ids(), params.method(), described)
        }
    }
}

fn embed_values(
    dataset: &LabeledDataset,
    params: &EmbeddingParams,
) -> Result<(Array2<f64>, BTreeMap<String, String>)> {
    let alphabet = dataset.alphabet();
    let mut described = params.describe();
    let values = match *params {
        EmbeddingParams::Spike2vec { k } => {
            check_min_len(dataset, k, "k")?;
            let d = kmer::spectrum_len(alphabet, k)?;
            per_record(dataset, d, |s| kmer::spectrum(s, k, alphabet))?
        }
        EmbeddingParams::SpacedKmers { k, g } => {
            if k == 0 || k >= g {
                return Err(Error::Param(format!("spaced k-mers need 1 <= k < g (k={k}, g={g})")));
            }
            check_min_len(dataset, g, "g")?;
            let d = kmer::spectrum_len(alphabet, k)?;
            per_record(dataset, d, |s| kmer::spaced_spectrum(s, k, g, alphabet))?
        }
        EmbeddingParams::Pwm2vec {
            k,
            pseudocount,
            target_len,
        } => {
            check_min_len(dataset, k, "k")?;
            let len = target_len.unwrap_or_else(|| dataset.median_len() - k + 1);
            described.insert("target_len".into(), len.to_string());
            per_record(dataset, len, |s| kmer::pwm2vec(s, k, alphabet, pseudocount, len))?
        }
        EmbeddingParams::OneHot { target_len } => {
            let len = target_len.unwrap_or_else(|| dataset.median_len());
            described.insert("target_len".into(), len.to_string());
            one_hot_matrix(dataset, len)?
        }
        EmbeddingParams::Autoencoder { .. } => unreachable!("handled by embed_autoencoder"),
    };
    Ok((values, described))
}

/// Autoencoder embedding plus the trained model and its loss log.
pub fn embed_autoencoder(
    dataset: &LabeledDataset,
    params: &EmbeddingParams,
) -> Result<(EmbeddingMatrix, TrainedAutoencoder)> {
    let EmbeddingParams::Autoencoder { target_len, config } = params else {
        return Err(Error::Param("embed_autoencoder needs autoencoder parameters".into()));
    };
    let len = target_len.unwrap_or_else(|| dataset.median_len());
    let x = one_hot_matrix(dataset, len)?;
    let trained = neural::train_autoencoder(x.view(), config)?;
    let mut described = params.describe();
    described.insert("target_len".into(), len.to_string());
    let m = EmbeddingMatrix::new(trained.embedding.clone(), dataset.ids(), Method::AutoEncoder, described)?;
    Ok((m, trained))
}
