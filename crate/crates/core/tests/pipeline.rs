use std::io::BufReader;

use repcap::config::RunConfig;
use repcap::dataset::{load_dataset, synthesize_dataset, Alphabet, SynthSpec};
use repcap::embedding::{embed_autoencoder, embed_dataset, EmbeddingMatrix, EmbeddingParams, Method};
use repcap::eval::{cluster_purity, kmeans, KMeansConfig};
use repcap::pipeline::{evaluate_all, CapacityConfig, RcMode};
use repcap::tpe::TpeConfig;

fn synth(per_class: usize, seed: u64) -> repcap::dataset::LabeledDataset {
    synthesize_dataset(&SynthSpec {
        num_classes: 3,
        per_class,
        length: 60,
        alphabet: Alphabet::protein(),
        mutation_rate: 0.1,
        seed,
    })
    .unwrap()
}

#[test]
fn dataset_round_trips_through_files() {
    let ds = synth(5, 1);
    let dir = tempfile::tempdir().unwrap();
    let (fasta, labels) = ds.save(dir.path(), "x").unwrap();
    let back = load_dataset(&fasta, &labels, Alphabet::protein()).unwrap();
    assert_eq!(back.ids(), ds.ids());
    assert_eq!(back.label_indices(), ds.label_indices());
    assert_eq!(back.records(), ds.records());
}

#[test]
fn embeddings_round_trip_through_csv_and_binary() {
    let ds = synth(4, 2);
    for method in [Method::Spike2Vec, Method::Pwm2Vec, Method::OneHot] {
        let emb = embed_dataset(&ds, &EmbeddingParams::default_for(method)).unwrap();
        let mut csv = Vec::new();
        emb.write_csv(&mut csv).unwrap();
        let back = EmbeddingMatrix::read_csv(BufReader::new(&csv[..])).unwrap();
        assert_eq!(back.row_ids, emb.row_ids);
        assert_eq!(back.method, method);
        assert_eq!(back.values, emb.values);
        let mut bin = Vec::new();
        emb.write_binary(&mut bin).unwrap();
        assert_eq!(EmbeddingMatrix::read_binary_values(&bin[..]).unwrap(), emb.values);
    }
}

#[test]
fn autoencoder_codes_keep_the_classes_apart() {
    let ds = synth(20, 3);
    let mut params = EmbeddingParams::default_for(Method::AutoEncoder);
    if let EmbeddingParams::Autoencoder { config, .. } = &mut params {
        config.z = 8;
        config.epochs = 40;
        config.learning_rate = 3e-3;
    }
    let (emb, trained) = embed_autoencoder(&ds, &params).unwrap();
    assert_eq!(emb.ncols(), 8);
    let first = trained.epoch_losses[0];
    let last = *trained.epoch_losses.last().unwrap();
    assert!(last < first, "loss {first} -> {last}");
    let clusters = kmeans(emb.values.view(), 3, &KMeansConfig::default()).unwrap();
    let purity = cluster_purity(&clusters.assignments, &ds.label_indices());
    assert!(purity >= 0.9, "purity {purity}");
}

#[test]
fn additive_report_from_config() {
    let cfg = RunConfig::default()
        .with_overrides(&[
            "dataset.synthetic=true",
            "synth.per_class=15",
            "synth.length=50",
            "methods=[\"spike2vec\", \"one-hot\"]",
            "aggregation=\"additive\"",
            "tpe.n_trials=150",
            "tsne.perplexity=10.0",
            "tsne.iterations=400",
        ])
        .unwrap();
    let ds = cfg.load_dataset().unwrap();
    let capacity = cfg.capacity_config();
    assert_eq!(capacity.mode, RcMode::Additive);
    let report = evaluate_all(&ds, &cfg.method_params(), &capacity).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.note.is_none());
    assert!(report.max_rc_inconsistency() <= 1e-12);
    for row in &report.rows {
        row.raw.check_ranges().unwrap();
        assert!(row.weights.on_simplex(1e-9));
        // Additive RC on a normalized bundle never exceeds the best metric.
        let best = row.normalized.as_array().into_iter().fold(f64::MIN, f64::max);
        assert!(row.rc <= best + 1e-12);
    }
}

#[test]
fn duplicate_methods_are_rejected() {
    let ds = synth(3, 4);
    let params = vec![EmbeddingParams::default_for(Method::Spike2Vec); 2];
    let cfg = CapacityConfig {
        tpe: TpeConfig {
            n_trials: 30,
            ..TpeConfig::default()
        },
        ..CapacityConfig::default()
    };
    let err = evaluate_all(&ds, &params, &cfg).unwrap_err().to_string();
    assert!(err.contains("spike2vec"), "{err}");
}
