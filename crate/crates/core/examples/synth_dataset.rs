//! Generate a small labelled protein dataset and write it as FASTA + CSV.
//!
//! cargo run --example synth_dataset -- [out_dir]

use repcap::dataset::{synthesize_dataset, Alphabet, SynthSpec};

fn main() -> repcap::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data".into());
    let ds = synthesize_dataset(&SynthSpec {
        num_classes: 3,
        per_class: 20,
        length: 80,
        alphabet: Alphabet::protein(),
        mutation_rate: 0.1,
        seed: 7,
    })?;
    let (fasta, labels) = ds.save(out.as_ref(), "example")?;
    println!("{} records, classes {:?}", ds.len(), ds.classes());
    println!("first: {} {}", ds.records()[0].id, &ds.records()[0].residues[..30]);
    println!("wrote {} and {}", fasta.display(), labels.display());
    Ok(())
}
