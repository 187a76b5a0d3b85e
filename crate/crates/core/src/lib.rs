//! Representation-capacity scoring for biological sequence embeddings.
//!
//! The crate turns labeled sequences into fixed-length vectors (k-mer
//! spectra, spaced k-mer spectra, PWM scores, autoencoder bottlenecks),
//! measures each embedding four ways (classification accuracy, k-means
//! silhouette, t-SNE neighborhood agreement, t-SNE trustworthiness), and
//! folds the four numbers into one capacity score whose metric weights are
//! found with a Tree-structured Parzen Estimator.
//!
//! ## Layout
//!
//! ```text
//! dataset       FASTA + labels CSV, alphabets, synthetic datasets
//! kmer          k-mer enumeration, spectra, PWMs, one-hot encoding
//! embedding     EmbeddingMatrix, embed_dataset, CSV/binary formats
//! neural        MLP autoencoder, backprop, ADAM
//! tsne          exact t-SNE
//! eval          stratified split, logistic regression, k-means, silhouette
//! neighborhood  K-NN index, neighborhood agreement, trustworthiness
//! tpe           TPE search over the metric-weight simplex
//! pipeline      MetricBundle, RC score, CapacityReport, table audit
//! config        RunConfig and seed fan-out
//! cli           the `repcap` command-line front end
//! ```
//!
//! Each capability has a runnable program under `examples/`:
//!
//! ```bash
//! cargo run --release --example capacity_report
//! ```

pub mod cli;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod kmer;
pub mod neighborhood;
pub mod neural;
pub mod pipeline;
pub mod tpe;
pub mod tsne;

pub use dataset::{Alphabet, AlphabetKind, LabeledDataset, SequenceRecord};
pub use embedding::{embed_dataset, EmbeddingMatrix, EmbeddingParams, Method};
pub use error::{Error, Result};
pub use pipeline::{CapacityReport, MetricBundle, RcMode};
