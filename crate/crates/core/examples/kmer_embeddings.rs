//! k-mer spectrum, spaced k-mers, PWM2Vec and one-hot vectors for one
//! sequence, then a whole dataset embedded with each method.

use repcap::dataset::{synthesize_dataset, Alphabet, SynthSpec};
use repcap::embedding::{embed_dataset, EmbeddingParams, Method};
use repcap::kmer;

fn main() -> repcap::Result<()> {
    let dna = Alphabet::dna();
    let s = "ACGTTGCAACGTAGCT";

    let spec = kmer::spectrum(s, 2, &dna)?;
    let top: Vec<_> = spec
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(i, v)| format!("{}={v:.3}", kmer::kmer_from_index(i, 2, &dna)))
        .collect();
    println!("2-mer spectrum of {s}: {}", top.join(" "));

    let spaced = kmer::spaced_spectrum(s, 2, 4, &dna)?;
    println!("spaced (k=2, g=4): {} non-zero of {}", spaced.iter().filter(|&&v| v > 0.0).count(), spaced.len());

    let kmers = kmer::enumerate_kmers(s, 3)?;
    let pwm = kmer::build_pwm(&kmers, &dna, 0.1)?;
    println!("PWM score of ACG: {:.3}", pwm.score(b"ACG", &dna)?);
    println!("one-hot length 8: {}", kmer::one_hot(s, &dna, 8)?.len());

    let ds = synthesize_dataset(&SynthSpec {
        num_classes: 2,
        per_class: 10,
        length: 60,
        alphabet: Alphabet::protein(),
        mutation_rate: 0.05,
        seed: 1,
    })?;
    for method in [Method::Spike2Vec, Method::SpacedKmers, Method::Pwm2Vec, Method::OneHot] {
        let emb = embed_dataset(&ds, &EmbeddingParams::default_for(method))?;
        println!("{:<14} {} x {}", method.title(), emb.nrows(), emb.ncols());
    }
    Ok(())
}
