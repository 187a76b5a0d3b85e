//! k-mer level sequence features.
//!
//! Every k-mer maps to a canonical index: the base-|Σ| number whose digits
//! are the alphabet positions of its symbols, most significant first. A
//! spectrum is the vector of normalized counts at those indices.

use ndarray::{Array1, Array2};

use crate::dataset::Alphabet;
use crate::error::{Error, Result};

/// Overlapping k-mers of `s`, left to right. There are `|s| - k + 1` of them.
pub fn enumerate_kmers(s: &str, k: usize) -> Result<Vec<&str>> {
    if k == 0 {
        return Err(Error::Param("k must be at least 1".into()));
    }
    if s.len() < k {
        return Err(Error::Param(format!(
            "sequence shorter than k ({} < {k})",
            s.len()
        )));
    }
    Ok((0..=s.len() - k).map(|i| &s[i..i + k]).collect())
}

/// Number of spectrum bins, `|Σ|^k`, or an error on overflow.
pub fn spectrum_len(alphabet: &Alphabet, k: usize) -> Result<usize> {
    u32::try_from(k)
        .ok()
        .and_then(|k| alphabet.len().checked_pow(k))
        .ok_or_else(|| Error::Param(format!("|Σ|^k overflows for k={k}")))
}

/// Canonical index of a k-mer. Symbols must belong to the alphabet.
pub fn kmer_index(kmer: &[u8], alphabet: &Alphabet) -> Result<usize> {
    let base = alphabet.len();
    kmer.iter().try_fold(0usize, |acc, &b| {
        alphabet
            .index_of(b)
            .map(|d| acc * base + d)
            .ok_or_else(|| Error::Param(format!("symbol '{}' not in alphabet", b as char)))
    })
}

/// Inverse of [`kmer_index`].
pub fn kmer_from_index(mut index: usize, k: usize, alphabet: &Alphabet) -> String {
    let base = alphabet.len();
    let mut out = vec![0u8; k];
    for slot in out.iter_mut().rev() {
        *slot = alphabet.symbols()[index % base];
        index /= base;
    }
    String::from_utf8(out).expect("ASCII alphabet")
}

fn normalized_counts<'a>(
    kmers: impl Iterator<Item = &'a [u8]>,
    alphabet: &Alphabet,
    len: usize,
) -> Result<Array1<f64>> {
    let mut counts = vec![0u64; len];
    let mut total = 0u64;
    for kmer in kmers {
        counts[kmer_index(kmer, alphabet)?] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::Param("sequence yielded no k-mers".into()));
    }
    let total = total as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// Normalized k-mer spectrum of length `|Σ|^k`.
pub fn spectrum(s: &str, k: usize, alphabet: &Alphabet) -> Result<Array1<f64>> {
    let len = spectrum_len(alphabet, k)?;
    let kmers = enumerate_kmers(s, k)?;
    normalized_counts(kmers.into_iter().map(str::as_bytes), alphabet, len)
}

/// Spaced k-mer spectrum: a window of length `g` slides with step 1 and the
/// first `k` symbols of each window form the counted k-mer; the trailing
/// `g - k` symbols are the gap.
pub fn spaced_spectrum(s: &str, k: usize, g: usize, alphabet: &Alphabet) -> Result<Array1<f64>> {
    if k == 0 || k >= g {
        return Err(Error::Param(format!("spaced k-mers need 1 <= k < g (k={k}, g={g})")));
    }
    if s.len() < g {
        return Err(Error::Param(format!(
            "sequence shorter than g ({} < {g})",
            s.len()
        )));
    }
    let len = spectrum_len(alphabet, k)?;
    let bytes = s.as_bytes();
    let gmers = bytes.windows(g);
    normalized_counts(gmers.map(|w| &w[..k]), alphabet, len)
}

/// Position weight matrix: `k × |Σ|` log-odds scores.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionWeightMatrix {
    /// Per-position symbol probabilities (rows sum to 1).
    pub probabilities: Array2<f64>,
    /// Natural-log odds against `background`.
    pub entries: Array2<f64>,
    pub pseudocount: f64,
    pub background: Vec<f64>,
}

impl PositionWeightMatrix {
    pub fn k(&self) -> usize {
        self.entries.nrows()
    }

    /// Sum over positions of the log-odds entry of the symbol at that position.
    pub fn score(&self, kmer: &[u8], alphabet: &Alphabet) -> Result<f64> {
        if kmer.len() != self.k() {
            return Err(Error::Shape(format!(
                "k-mer length {} differs from PWM width {}",
                kmer.len(),
                self.k()
            )));
        }
        kmer.iter().enumerate().try_fold(0.0, |acc, (j, &b)| {
            let col = alphabet
                .index_of(b)
                .ok_or_else(|| Error::Param(format!("symbol '{}' not in alphabet", b as char)))?;
            Ok(acc + self.entries[[j, col]])
        })
    }
}

/// Builds a PWM with a uniform background.
pub fn build_pwm(kmers: &[&str], alphabet: &Alphabet, pseudocount: f64) -> Result<PositionWeightMatrix> {
    let sigma = alphabet.len();
    build_pwm_with_background(kmers, alphabet, pseudocount, &vec![1.0 / sigma as f64; sigma])
}

/// Position-frequency counts plus `pseudocount` in every cell, normalized per
/// position, then `ln(p / background)`.
pub fn build_pwm_with_background(
    kmers: &[&str],
    alphabet: &Alphabet,
    pseudocount: f64,
    background: &[f64],
) -> Result<PositionWeightMatrix> {
    let first = kmers.first().ok_or_else(|| Error::Param("no k-mers to build a PWM from".into()))?;
    let k = first.len();
    if k == 0 {
        return Err(Error::Param("k-mers must be non-empty".into()));
    }
    if !(pseudocount > 0.0 && pseudocount.is_finite()) {
        return Err(Error::Param(format!("pseudocount must be positive, got {pseudocount}")));
    }
    let sigma = alphabet.len();
    if background.len() != sigma || background.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::Param("background must have one positive entry per symbol".into()));
    }
    let mut counts = Array2::<f64>::from_elem((k, sigma), pseudocount);
    for kmer in kmers {
        if kmer.len() != k {
            return Err(Error::Param(format!(
                "mixed k-mer lengths ({} and {})",
                k,
                kmer.len()
            )));
        }
        for (j, b) in kmer.bytes().enumerate() {
            let col = alphabet
                .index_of(b)
                .ok_or_else(|| Error::Param(format!("symbol '{}' not in alphabet", b as char)))?;
            counts[[j, col]] += 1.0;
        }
    }
    let mut probabilities = counts;
    for mut row in probabilities.rows_mut() {
        let total: f64 = row.sum();
        row.mapv_inplace(|c| c / total);
    }
    let mut entries = probabilities.clone();
    for mut row in entries.rows_mut() {
        for (v, &bg) in row.iter_mut().zip(background) {
            *v = (*v / bg).ln();
        }
    }
    Ok(PositionWeightMatrix {
        probabilities,
        entries,
        pseudocount,
        background: background.to_vec(),
    })
}

/// Scores every k-mer of `s` against the PWM built from `s`'s own k-mers, in
/// sequence order, then right-pads with zeros or truncates to `target_len`.
pub fn pwm2vec(
    s: &str,
    k: usize,
    alphabet: &Alphabet,
    pseudocount: f64,
    target_len: usize,
) -> Result<Array1<f64>> {
    let kmers = enumerate_kmers(s, k)?;
    let pwm = build_pwm(&kmers, alphabet, pseudocount)?;
    let mut out = Array1::<f64>::zeros(target_len);
    for (slot, kmer) in out.iter_mut().zip(&kmers) {
        *slot = pwm.score(kmer.as_bytes(), alphabet)?;
    }
    Ok(out)
}

/// One-hot encoding: one `|Σ|`-wide indicator block per position, zero blocks
/// past the end of `s`, positions past `target_len` dropped.
pub fn one_hot(s: &str, alphabet: &Alphabet, target_len: usize) -> Result<Array1<f64>> {
    if s.is_empty() {
        return Err(Error::Param("cannot one-hot encode an empty sequence".into()));
    }
    let sigma = alphabet.len();
    let mut out = Array1::<f64>::zeros(target_len * sigma);
    for (pos, b) in s.bytes().take(target_len).enumerate() {
        let col = alphabet
            .index_of(b)
            .ok_or_else(|| Error::Param(format!("symbol '{}' not in alphabet", b as char)))?;
        out[pos * sigma + col] = 1.0;
    }
    Ok(out)
}
