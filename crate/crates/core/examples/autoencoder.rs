//! Train the MLP autoencoder on one-hot sequences and check that the codes
//! still separate the classes.

use repcap::dataset::{synthesize_dataset, Alphabet, SynthSpec};
use repcap::embedding::{embed_autoencoder, EmbeddingParams, Method};
use repcap::eval::{cluster_purity, kmeans, KMeansConfig};

fn main() -> repcap::Result<()> {
    let ds = synthesize_dataset(&SynthSpec {
        num_classes: 3,
        per_class: 30,
        length: 60,
        alphabet: Alphabet::protein(),
        mutation_rate: 0.1,
        seed: 3,
    })?;
    let mut params = EmbeddingParams::default_for(Method::AutoEncoder);
    if let EmbeddingParams::Autoencoder { config, .. } = &mut params {
        config.z = 16;
        config.epochs = 60;
    }
    let (emb, trained) = embed_autoencoder(&ds, &params)?;
    for (epoch, loss) in trained.epoch_losses.iter().enumerate().step_by(10) {
        println!("epoch {:>3}  loss {loss:.5}", epoch + 1);
    }
    let clusters = kmeans(emb.values.view(), 3, &KMeansConfig::default())?;
    println!(
        "{}-d codes, k-means purity {:.3}",
        emb.ncols(),
        cluster_purity(&clusters.assignments, &ds.label_indices())
    );
    Ok(())
}
