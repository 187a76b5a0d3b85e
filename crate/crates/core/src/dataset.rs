//! Labeled sequence datasets: alphabets, FASTA + labels CSV parsing, and a
//! seeded generator of synthetic class-structured datasets.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROTEIN_SYMBOLS: &str = "ACDEFGHIKLMNPQRSTVWXY";
const DNA_SYMBOLS: &str = "ACGT";
const NO_INDEX: u8 = u8::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphabetKind {
    Protein,
    Dna,
    Custom,
}

/// Ordered residue alphabet. The order defines the canonical index of every
/// symbol and therefore of every k-mer.
#[derive(Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<u8>,
    kind: AlphabetKind,
    index: [u8; 256],
}

impl Alphabet {
    pub fn protein() -> Self {
        Self::build(PROTEIN_SYMBOLS.as_bytes(), AlphabetKind::Protein)
    }

    pub fn dna() -> Self {
        Self::build(DNA_SYMBOLS.as_bytes(), AlphabetKind::Dna)
    }

    /// Custom alphabet from the given symbols, in the given order. Symbols are
    /// upper-cased; they must be distinct ASCII graphic characters.
    pub fn custom(symbols: &str) -> Result<Self> {
        let upper: Vec<u8> = symbols.bytes().map(|b| b.to_ascii_uppercase()).collect();
        if upper.is_empty() {
            return Err(Error::Param("alphabet must have at least one symbol".into()));
        }
        let mut seen = HashSet::new();
        for &b in &upper {
            if !b.is_ascii_graphic() || b == b'>' {
                return Err(Error::Param(format!(
                    "alphabet symbol {:?} is not a printable residue character",
                    b as char
                )));
            }
            if !seen.insert(b) {
                return Err(Error::Param(format!("duplicate alphabet symbol '{}'", b as char)));
            }
        }
        if upper.len() >= NO_INDEX as usize {
            return Err(Error::Param("alphabet too large".into()));
        }
        Ok(Self::build(&upper, AlphabetKind::Custom))
    }

    /// Parses `protein`, `dna`, or `custom:<symbols>`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "protein" => Ok(Self::protein()),
            "dna" => Ok(Self::dna()),
            _ => match name.split_once(':') {
                Some((kind, symbols)) if kind.eq_ignore_ascii_case("custom") => Self::custom(symbols),
                _ => Err(Error::Param(format!(
                    "unknown alphabet `{name}` (expected protein, dna, or custom:<symbols>)"
                ))),
            },
        }
    }

    /// Inverse of [`Alphabet::from_name`].
    pub fn name(&self) -> String {
        match self.kind {
            AlphabetKind::Protein => "protein".into(),
            AlphabetKind::Dna => "dna".into(),
            AlphabetKind::Custom => format!("custom:{}", self.symbols_str()),
        }
    }

    fn build(symbols: &[u8], kind: AlphabetKind) -> Self {
        let mut index = [NO_INDEX; 256];
        for (i, &b) in symbols.iter().enumerate() {
            index[b as usize] = i as u8;
        }
        Self {
            symbols: symbols.to_vec(),
            kind,
            index,
        }
    }

    pub fn kind(&self) -> AlphabetKind {
        self.kind
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn symbols_str(&self) -> &str {
        std::str::from_utf8(&self.symbols).expect("alphabet symbols are ASCII")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    #[inline]
    pub fn index_of(&self, symbol: u8) -> Option<usize> {
        match self.index[symbol as usize] {
            NO_INDEX => None,
            i => Some(i as usize),
        }
    }

    #[inline]
    pub fn contains(&self, symbol: u8) -> bool {
        self.index[symbol as usize] != NO_INDEX
    }

    /// First byte of `residues` outside the alphabet, with its offset.
    pub fn first_invalid(&self, residues: &[u8]) -> Option<(usize, u8)> {
        residues
            .iter()
            .enumerate()
            .find(|(_, &b)| !self.contains(b))
            .map(|(i, &b)| (i, b))
    }
}

impl fmt::Debug for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Alphabet")
            .field("kind", &self.kind)
            .field("symbols", &self.symbols_str())
            .finish()
    }
}

impl Serialize for Alphabet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Alphabet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Alphabet::from_name(&name).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub residues: String,
    pub label: String,
}

/// What to do with a FASTA record that contains a residue outside the
/// alphabet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InvalidResidues {
    #[default]
    Error,
    /// Drop the whole offending record.
    DropRecord,
}

/// Output of [`parse_fasta_with`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParsedFasta {
    pub records: Vec<(String, String)>,
    /// Ids of records dropped under [`InvalidResidues::DropRecord`].
    pub dropped: Vec<String>,
}

/// Parses FASTA text, failing on any residue outside `alphabet`.
pub fn parse_fasta(text: &str, alphabet: &Alphabet) -> Result<Vec<(String, String)>> {
    parse_fasta_with(text, alphabet, InvalidResidues::Error).map(|p| p.records)
}

/// Parses FASTA text. Sequence lines are concatenated with whitespace removed
/// and upper-cased. Record ids are the first whitespace-delimited token of the
/// header.
pub fn parse_fasta_with(
    text: &str,
    alphabet: &Alphabet,
    policy: InvalidResidues,
) -> Result<ParsedFasta> {
    struct Pending {
        id: String,
        header_line: usize,
        residues: String,
        invalid: bool,
    }

    let mut out = ParsedFasta::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut current: Option<Pending> = None;

    let finish = |p: Pending, out: &mut ParsedFasta| -> Result<()> {
        if p.residues.is_empty() && !p.invalid {
            return Err(Error::Parse {
                line: p.header_line,
                msg: format!("header `{}` has no sequence", p.id),
            });
        }
        if p.invalid {
            out.dropped.push(p.id);
        } else {
            out.records.push((p.id, p.residues));
        }
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(header) = line.strip_prefix('>') {
            if let Some(p) = current.take() {
                finish(p, &mut out)?;
            }
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            if id.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "empty record id".into(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate id `{id}`"),
                });
            }
            current = Some(Pending {
                id,
                header_line: line_no,
                residues: String::new(),
                invalid: false,
            });
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let Some(p) = current.as_mut() else {
            return Err(Error::Parse {
                line: line_no,
                msg: "sequence data before the first header".into(),
            });
        };
        for c in line.chars().filter(|c| !c.is_whitespace()) {
            let up = c.to_ascii_uppercase();
            if up.is_ascii() && alphabet.contains(up as u8) {
                p.residues.push(up);
            } else {
                match policy {
                    InvalidResidues::Error => {
                        return Err(Error::Parse {
                            line: line_no,
                            msg: format!(
                                "invalid residue '{c}' in `{}` (alphabet {})",
                                p.id,
                                alphabet.name()
                            ),
                        })
                    }
                    InvalidResidues::DropRecord => p.invalid = true,
                }
            }
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut out)?;
    }
    if out.records.is_empty() {
        return Err(if out.dropped.is_empty() {
            Error::Parse {
                line: 0,
                msg: "empty FASTA input".into(),
            }
        } else {
            Error::Dataset("every record was dropped for invalid residues".into())
        });
    }
    Ok(out)
}

/// Reads a labels CSV with mandatory `id,label` header.
pub fn parse_labels<R: std::io::Read>(reader: R) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "id" || &headers[1] != "label" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("labels header must be `id,label`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (id, label) = (rec.get(0).unwrap_or(""), rec.get(1).unwrap_or(""));
        if id.is_empty() || label.is_empty() {
            return Err(Error::Parse {
                line: i + 2,
                msg: "empty id or label".into(),
            });
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::Parse {
                line: i + 2,
                msg: format!("duplicate id `{id}` in labels"),
            });
        }
        rows.push((id.to_string(), label.to_string()));
    }
    Ok(rows)
}

/// Immutable set of labeled sequences over one alphabet.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LabeledDataset {
    records: Vec<SequenceRecord>,
    alphabet: Alphabet,
    classes: Vec<String>,
}

impl LabeledDataset {
    /// Validates and builds a dataset: non-empty residues within the alphabet,
    /// unique ids, at least two classes.
    pub fn new(records: Vec<SequenceRecord>, alphabet: Alphabet) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        for r in &records {
            if r.id.is_empty() {
                return Err(Error::Dataset("empty record id".into()));
            }
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate id `{}`", r.id)));
            }
            if r.residues.is_empty() {
                return Err(Error::Dataset(format!("record `{}` has no residues", r.id)));
            }
            if let Some((pos, b)) = alphabet.first_invalid(r.residues.as_bytes()) {
                return Err(Error::Dataset(format!(
                    "record `{}` has residue '{}' at position {} outside alphabet {}",
                    r.id,
                    b as char,
                    pos + 1,
                    alphabet.name()
                )));
            }
        }
        let classes: Vec<String> = records
            .iter()
            .map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if classes.len() < 2 {
            return Err(Error::Dataset(format!(
                "fewer than 2 classes (found {})",
                classes.len()
            )));
        }
        Ok(Self {
            records,
            alphabet,
            classes,
        })
    }

    pub fn records(&self) -> &[SequenceRecord] {
        &self.records
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    /// Class index (into [`LabeledDataset::classes`]) of every record.
    pub fn label_indices(&self) -> Vec<usize> {
        let lookup: HashMap<&str, usize> = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        self.records.iter().map(|r| lookup[r.label.as_str()]).collect()
    }

    pub fn min_len(&self) -> usize {
        self.records.iter().map(|r| r.residues.len()).min().unwrap_or(0)
    }

    /// Shortest record (first in dataset order on ties).
    pub fn shortest(&self) -> Option<&SequenceRecord> {
        self.records.iter().min_by_key(|r| r.residues.len())
    }

    /// Median residue count; the lower median for even counts.
    pub fn median_len(&self) -> usize {
        let mut lens: Vec<usize> = self.records.iter().map(|r| r.residues.len()).collect();
        lens.sort_unstable();
        lens[(lens.len() - 1) / 2]
    }

    /// Dataset whose record `i` is `self.records[order[i]]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::Param("permutation length differs from dataset size".into()));
        }
        let records = order.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(records, self.alphabet.clone())
    }

    /// Writes the residues as FASTA, wrapping sequence lines at 60 columns.
    pub fn write_fasta<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            writeln!(w, ">{}", r.id)?;
            for chunk in r.residues.as_bytes().chunks(60) {
                w.write_all(chunk)?;
                w.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn write_labels<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["id", "label"])?;
        for r in &self.records {
            wtr.write_record([r.id.as_str(), r.label.as_str()])?;
        }
        wtr.flush().map_err(|e| Error::io("<labels>", e))?;
        Ok(())
    }

    /// Writes `<stem>.fasta` and `<stem>.labels.csv` into `dir`; returns both paths.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let fasta = dir.join(format!("{stem}.fasta"));
        let labels = dir.join(format!("{stem}.labels.csv"));
        let f = std::fs::File::create(&fasta).map_err(|e| Error::io(&fasta, e))?;
        self.write_fasta(std::io::BufWriter::new(f)).map_err(|e| Error::io(&fasta, e))?;
        let f = std::fs::File::create(&labels).map_err(|e| Error::io(&labels, e))?;
        self.write_labels(std::io::BufWriter::new(f))?;
        Ok((fasta, labels))
    }
}

/// Joins parsed FASTA records with their labels.
pub fn join_labels(
    parsed: ParsedFasta,
    labels: Vec<(String, String)>,
    alphabet: Alphabet,
) -> Result<LabeledDataset> {
    let mut by_id: HashMap<String, String> = labels.into_iter().collect();
    let missing: Vec<&str> = parsed
        .records
        .iter()
        .filter(|(id, _)| !by_id.contains_key(id))
        .map(|(id, _)| id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Dataset(format!(
            "ids missing from labels: {}",
            missing.join(", ")
        )));
    }
    for id in &parsed.dropped {
        by_id.remove(id);
    }
    let fasta_ids: HashSet<&str> = parsed.records.iter().map(|(id, _)| id.as_str()).collect();
    let mut extra: Vec<&str> = by_id
        .keys()
        .map(String::as_str)
        .filter(|id| !fasta_ids.contains(id))
        .collect();
    if !extra.is_empty() {
        extra.sort_unstable();
        return Err(Error::Dataset(format!(
            "ids in labels missing from FASTA: {}",
            extra.join(", ")
        )));
    }
    let records = parsed
        .records
        .into_iter()
        .map(|(id, residues)| {
            let label = by_id.remove(&id).expect("checked above");
            SequenceRecord { id, residues, label }
        })
        .collect();
    LabeledDataset::new(records, alphabet)
}

pub fn load_dataset(fasta_path: &Path, labels_path: &Path, alphabet: Alphabet) -> Result<LabeledDataset> {
    load_dataset_with(fasta_path, labels_path, alphabet, InvalidResidues::Error)
}

pub fn load_dataset_with(
    fasta_path: &Path,
    labels_path: &Path,
    alphabet: Alphabet,
    policy: InvalidResidues,
) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(fasta_path).map_err(|e| Error::io(fasta_path, e))?;
    let parsed = parse_fasta_with(&text, &alphabet, policy)?;
    let f = std::fs::File::open(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let labels = parse_labels(std::io::BufReader::new(f))?;
    join_labels(parsed, labels, alphabet)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub length: usize,
    pub alphabet: Alphabet,
    pub mutation_rate: f64,
    pub seed: u64,
}

/// Generates `num_classes` random ancestors and derives `per_class` members
/// from each by independent per-position substitutions at `mutation_rate`.
/// A substituted position always receives a different symbol. Labels are
/// `c0, c1, ...`, ids `c<class>_<member>`.
pub fn synthesize_dataset(spec: &SynthSpec) -> Result<LabeledDataset> {
    if spec.per_class < 1 {
        return Err(Error::Param("per_class must be at least 1".into()));
    }
    if spec.length < 1 {
        return Err(Error::Param("length must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&spec.mutation_rate) {
        return Err(Error::Param(format!(
            "mutation_rate {} outside [0, 1]",
            spec.mutation_rate
        )));
    }
    let symbols = spec.alphabet.symbols();
    let sigma = symbols.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.num_classes * spec.per_class);
    for c in 0..spec.num_classes {
        let ancestor: Vec<u8> = (0..spec.length).map(|_| symbols[rng.random_range(0..sigma)]).collect();
        for m in 0..spec.per_class {
            let residues: Vec<u8> = ancestor
                .iter()
                .map(|&a| {
                    if sigma > 1 && rng.random_bool(spec.mutation_rate) {
                        let ai = spec.alphabet.index_of(a).expect("ancestor symbol");
                        let shift = rng.random_range(1..sigma);
                        symbols[(ai + shift) % sigma]
                    } else {
                        a
                    }
                })
                .collect();
            records.push(SequenceRecord {
                id: format!("c{c}_{m}"),
                residues: String::from_utf8(residues).expect("ASCII alphabet"),
                label: format!("c{c}"),
            });
        }
    }
    LabeledDataset::new(records, spec.alphabet.clone())
}
