//! Command-line front end. Every subcommand resolves a [`RunConfig`] from
//! defaults, an optional TOML file, `--set key=value` overrides and its own
//! flags (in that order), then runs one stage of the pipeline.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::{stage_seeds, RunConfig};
use crate::dataset::{join_labels, parse_fasta_with, parse_labels, InvalidResidues, LabeledDataset};
use crate::embedding::{embed_autoencoder, embed_dataset, EmbeddingMatrix, EmbeddingParams, Method};
use crate::error::{Error, Result, StageExt};
use crate::pipeline::{audit_rows, compute_bundle_detailed, format_audit, read_table_rows, run_capacity};
use crate::tsne::run_tsne;

#[derive(Debug, Parser)]
#[command(name = "repcap", version, about = "Sequence embeddings and representation-capacity scoring")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one config field, e.g. `--set tsne.perplexity=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed; every stage seed is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DatasetArgs {
    #[arg(long, value_name = "FILE")]
    pub fasta: Option<PathBuf>,
    /// CSV with header `id,label`.
    #[arg(long, value_name = "FILE")]
    pub labels: Option<PathBuf>,
    /// protein, dna or an explicit symbol string.
    #[arg(long)]
    pub alphabet: Option<String>,
    /// Drop records containing residues outside the alphabet.
    #[arg(long)]
    pub drop_invalid: bool,
    /// Generate the dataset from the `[synth]` config section.
    #[arg(long)]
    pub synthetic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset (FASTA + labels CSV).
    Synth {
        #[arg(long, default_value = "data")]
        out: PathBuf,
        #[arg(long, default_value = "synth")]
        stem: String,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
        #[arg(long)]
        mutation_rate: Option<f64>,
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Check a FASTA + labels pair and print a summary.
    Validate {
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Embed every sequence with one method.
    Embed {
        /// spike2vec, spaced-kmers, pwm2vec, autoencoder or one-hot.
        #[arg(long)]
        method: String,
        /// k-mer length for k-mer based methods.
        #[arg(long)]
        k: Option<usize>,
        /// Window length for spaced k-mers.
        #[arg(long)]
        g: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Project an embedding CSV to 2-D with exact t-SNE.
    Tsne {
        /// Embedding CSV written by `embed`.
        #[arg(long, value_name = "FILE")]
        embedding: PathBuf,
        #[arg(long)]
        perplexity: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        /// standard or paper.
        #[arg(long)]
        gradient: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Compute the four metrics for one embedding.
    Metrics {
        #[arg(long, value_name = "FILE")]
        embedding: PathBuf,
        /// standard or paper.
        #[arg(long)]
        gradient: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Full run: all methods, metrics, normalization, weight search, RC.
    Capacity {
        /// as-written or additive.
        #[arg(long)]
        aggregation: Option<String>,
        /// Comma-separated method list.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        /// standard or paper.
        #[arg(long)]
        gradient: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        data: DatasetArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Recompute printed RC values from table rows under both aggregations.
    AuditTables {
        /// CSV: table,method,printed_rc,w_class,v_class,w_clust,v_clust,w_neighb,v_neighb,w_trust,v_trust
        csv: PathBuf,
        /// Also write the audit as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
}

const CONFIG_COMMANDS: [&str; 6] = ["synth", "validate", "embed", "tsne", "metrics", "capacity"];

/// Help text listing every configuration field and its default.
pub fn config_help() -> String {
    let mut s = String::from("Config fields (TOML `[section] key`, or `--set section.key=value`):\n");
    for (k, v) in RunConfig::documented_fields() {
        if v.is_empty() {
            s.push_str(&format!("  {k}  [no default]\n"));
        } else {
            s.push_str(&format!("  {k}  [default: {v}]\n"));
        }
    }
    s.push_str("Per-section `seed` fields are replaced by seeds derived from `seed`.\n");
    s
}

pub fn command() -> clap::Command {
    let help = config_help();
    let mut cmd = Cli::command();
    for name in CONFIG_COMMANDS {
        let h = help.clone();
        cmd = cmd.mut_subcommand(name, move |c| c.after_long_help(h));
    }
    cmd
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 1;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve(cfg: &ConfigArgs, data: Option<&DatasetArgs>, extra: Vec<String>) -> Result<RunConfig> {
    let base = match &cfg.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut overrides = cfg.set.clone();
    if let Some(d) = data {
        let quoted = |p: &Path| format!("{:?}", p.to_string_lossy());
        if let Some(p) = &d.fasta {
            overrides.push(format!("dataset.fasta={}", quoted(p)));
        }
        if let Some(p) = &d.labels {
            overrides.push(format!("dataset.labels={}", quoted(p)));
        }
        if let Some(a) = &d.alphabet {
            overrides.push(format!("dataset.alphabet={a:?}"));
        }
        if d.drop_invalid {
            overrides.push("dataset.drop_invalid=true".into());
        }
        if d.synthetic {
            overrides.push("dataset.synthetic=true".into());
        }
    }
    overrides.extend(extra);
    if let Some(s) = cfg.seed {
        overrides.push(format!("seed={s}"));
    }
    base.with_overrides(&overrides).stage("config")
}

fn push_opt<T: std::fmt::Display>(out: &mut Vec<String>, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        out.push(format!("{key}={v}"));
    }
}

fn gradient_override(out: &mut Vec<String>, g: &Option<String>) -> Result<()> {
    if let Some(g) = g {
        match g.as_str() {
            "standard" | "paper" => out.push(format!("tsne.gradient={g:?}")),
            _ => return Err(Error::Param(format!("unknown gradient form `{g}` (standard, paper)")).at_stage("config")),
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

fn read_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::read_csv(BufReader::new(f))
}

/// Reorders the dataset to the embedding's row order.
fn align(dataset: &LabeledDataset, emb: &EmbeddingMatrix) -> Result<LabeledDataset> {
    let ids = dataset.ids();
    if ids == emb.row_ids {
        return Ok(dataset.clone());
    }
    let pos: std::collections::HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let order = emb
        .row_ids
        .iter()
        .map(|id| {
            pos.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Shape(format!("embedding row `{id}` has no labelled sequence")))
        })
        .collect::<Result<Vec<_>>>()?;
    if order.len() != ids.len() {
        return Err(Error::Shape(format!(
            "embedding has {} rows, dataset {} records",
            order.len(),
            ids.len()
        )));
    }
    dataset.reordered(&order)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            stem,
            classes,
            per_class,
            length,
            mutation_rate,
            data,
            cfg,
        } => {
            let mut extra = vec!["dataset.synthetic=true".to_string()];
            push_opt(&mut extra, "synth.num_classes", &classes);
            push_opt(&mut extra, "synth.per_class", &per_class);
            push_opt(&mut extra, "synth.length", &length);
            push_opt(&mut extra, "synth.mutation_rate", &mutation_rate);
            let config = resolve(&cfg, Some(&data), extra)?;
            let ds = config.load_dataset().stage("synth")?;
            let (fasta, labels) = ds.save(&out, &stem).stage("synth")?;
            println!(
                "wrote {} sequences in {} classes to {} and {}",
                ds.len(),
                ds.classes().len(),
                fasta.display(),
                labels.display()
            );
            Ok(())
        }
        Command::Validate { data, cfg } => {
            let config = resolve(&cfg, Some(&data), Vec::new())?;
            validate(&config).stage("validate")
        }
        Command::Embed {
            method,
            k,
            g,
            out,
            data,
            cfg,
        } => {
            let method: Method = method.parse().stage("config")?;
            let section = match method {
                Method::Spike2Vec => "spike2vec",
                Method::SpacedKmers => "spaced_kmers",
                Method::Pwm2Vec => "pwm2vec",
                Method::AutoEncoder | Method::OneHot => {
                    if k.is_some() || g.is_some() {
                        return Err(Error::Param(format!("--k/--g do not apply to {method}")).at_stage("config"));
                    }
                    ""
                }
            };
            let mut extra = Vec::new();
            push_opt(&mut extra, &format!("{section}.k"), &k);
            if g.is_some() && method != Method::SpacedKmers {
                return Err(Error::Param("--g only applies to spaced-kmers".into()).at_stage("config"));
            }
            push_opt(&mut extra, "spaced_kmers.g", &g);
            let config = resolve(&cfg, Some(&data), extra)?;
            let out = out.unwrap_or_else(|| config.output_dir.clone());
            let ds = config.load_dataset().stage("load")?;
            embed_command(&ds, &config.params_for(method), &out)
        }
        Command::Tsne {
            embedding,
            perplexity,
            iterations,
            gradient,
            out,
            cfg,
        } => {
            let mut extra = Vec::new();
            push_opt(&mut extra, "tsne.perplexity", &perplexity.map(|p| format!("{p:?}")));
            push_opt(&mut extra, "tsne.iterations", &iterations);
            gradient_override(&mut extra, &gradient)?;
            let config = resolve(&cfg, None, extra)?;
            let out = out.unwrap_or_else(|| config.output_dir.clone());
            let emb = read_embedding(&embedding).stage("load")?;
            let tsne_cfg = config.metric_config().tsne;
            let low = run_tsne(emb.values.view(), &tsne_cfg).stage("tsne")?;
            low.write_csv(&emb.row_ids, create(&out.join("tsne.csv"))?).stage("tsne")?;
            write_text(&out.join("tsne.json"), &low.sidecar_json()?)?;
            println!(
                "t-SNE on {} points: KL after exaggeration {:.4}, final KL {:.4}; wrote {}",
                low.n,
                low.kl_after_exaggeration,
                low.final_kl,
                out.join("tsne.csv").display()
            );
            Ok(())
        }
        Command::Metrics {
            embedding,
            gradient,
            out,
            data,
            cfg,
        } => {
            let mut extra = Vec::new();
            gradient_override(&mut extra, &gradient)?;
            let config = resolve(&cfg, Some(&data), extra)?;
            let out = out.unwrap_or_else(|| config.output_dir.clone());
            let emb = read_embedding(&embedding).stage("load")?;
            let ds = config.load_dataset().stage("load")?;
            let ds = align(&ds, &emb).stage("load")?;
            let detail = compute_bundle_detailed(&ds, &emb, &config.metric_config())?;
            detail.bundle.check_ranges().stage("metrics")?;
            write_detail(&out, &emb.row_ids, &detail)?;
            let json = serde_json::json!({
                "method": emb.method,
                "bundle": detail.bundle,
                "classification": detail.classification,
                "tsne": detail.tsne,
                "seeds": stage_seeds(config.seed),
                "master_seed": config.seed,
            });
            write_text(&out.join("metrics.json"), &serde_json::to_string_pretty(&json)?)?;
            let b = detail.bundle;
            println!(
                "acc_class {:.4}  score_clust {:.4}  agree_neighbor {:.4}  trust_neighbor {:.4}",
                b.acc_class, b.score_clust, b.agree_neighbor, b.trust_neighbor
            );
            Ok(())
        }
        Command::Capacity {
            aggregation,
            methods,
            gradient,
            out,
            data,
            cfg,
        } => {
            let mut extra = Vec::new();
            if let Some(a) = aggregation {
                let mode: crate::pipeline::RcMode = a.parse().stage("config")?;
                extra.push(format!("aggregation={:?}", mode.name()));
            }
            if !methods.is_empty() {
                let parsed = methods
                    .iter()
                    .map(|m| m.parse::<Method>().map(|m| format!("{:?}", m.name())))
                    .collect::<Result<Vec<_>>>()
                    .stage("config")?;
                extra.push(format!("methods=[{}]", parsed.join(",")));
            }
            gradient_override(&mut extra, &gradient)?;
            let config = resolve(&cfg, Some(&data), extra)?;
            let out = out.unwrap_or_else(|| config.output_dir.clone());
            capacity_command(&config, &out)
        }
        Command::AuditTables { csv, json } => {
            let f = File::open(&csv).map_err(|e| Error::io(&csv, e)).stage("audit")?;
            let rows = read_table_rows(BufReader::new(f)).stage("audit")?;
            let audit = audit_rows(&rows).stage("audit")?;
            print!("{}", format_audit(&audit));
            for a in audit.iter().filter(|a| a.warning.is_some()) {
                log::warn!("{} / {}: {}", a.row.table, a.row.method, a.warning.as_deref().unwrap_or(""));
            }
            if let Some(path) = json {
                write_text(&path, &serde_json::to_string_pretty(&audit)?)?;
            }
            Ok(())
        }
    }
}

fn validate(config: &RunConfig) -> Result<()> {
    if config.dataset.synthetic {
        let ds = config.load_dataset()?;
        print_summary(&ds, 0);
        return Ok(());
    }
    let (Some(fasta), Some(labels)) = (&config.dataset.fasta, &config.dataset.labels) else {
        return Err(Error::Config("validate needs --fasta and --labels".into()));
    };
    let alphabet = config.alphabet()?;
    let text = std::fs::read_to_string(fasta).map_err(|e| Error::io(fasta, e))?;
    let policy = if config.dataset.drop_invalid {
        InvalidResidues::DropRecord
    } else {
        InvalidResidues::Error
    };
    let parsed = parse_fasta_with(&text, &alphabet, policy)?;
    let dropped = parsed.dropped.len();
    for id in &parsed.dropped {
        log::warn!("dropped `{id}`: residues outside the {} alphabet", alphabet.name());
    }
    let lf = File::open(labels).map_err(|e| Error::io(labels, e))?;
    let ds = join_labels(parsed, parse_labels(BufReader::new(lf))?, alphabet)?;
    print_summary(&ds, dropped);
    Ok(())
}

fn print_summary(ds: &LabeledDataset, dropped: usize) {
    let lens: Vec<usize> = ds.records().iter().map(|r| r.residues.len()).collect();
    println!(
        "{} sequences, {} classes, alphabet {}",
        ds.len(),
        ds.classes().len(),
        ds.alphabet().name()
    );
    println!(
        "length min {} / median {} / max {}",
        ds.min_len(),
        ds.median_len(),
        lens.iter().max().copied().unwrap_or(0)
    );
    let labels = ds.label_indices();
    for (c, name) in ds.classes().iter().enumerate() {
        println!("  {name}: {}", labels.iter().filter(|&&l| l == c).count());
    }
    if dropped > 0 {
        println!("dropped {dropped} records with invalid residues");
    }
}

fn embed_command(ds: &LabeledDataset, params: &EmbeddingParams, out: &Path) -> Result<()> {
    let name = params.method().name();
    let emb = if matches!(params, EmbeddingParams::Autoencoder { .. }) {
        let (emb, trained) = embed_autoencoder(ds, params).stage("embedding")?;
        let p = out.join("autoencoder_loss.csv");
        trained.write_log(create(&p)?).map_err(|e| Error::io(&p, e))?;
        emb
    } else {
        embed_dataset(ds, params).stage("embedding")?
    };
    let csv_path = out.join(format!("{name}.csv"));
    emb.write_csv(create(&csv_path)?).map_err(|e| Error::io(&csv_path, e))?;
    let bin_path = out.join(format!("{name}.bin"));
    emb.write_binary(create(&bin_path)?).map_err(|e| Error::io(&bin_path, e))?;
    let sidecar = serde_json::json!({
        "method": emb.method,
        "params": params,
        "resolved": emb.params,
        "rows": emb.nrows(),
        "dimension": emb.ncols(),
    });
    write_text(&out.join(format!("{name}.json")), &serde_json::to_string_pretty(&sidecar)?)?;
    println!("{name}: {} x {} written to {}", emb.nrows(), emb.ncols(), csv_path.display());
    Ok(())
}

fn write_detail(dir: &Path, ids: &[String], detail: &crate::pipeline::BundleDetail) -> Result<()> {
    let p = dir.join("agreement.csv");
    detail.agreement.write_csv(create(&p)?).map_err(|e| Error::io(&p, e))?;
    let p = dir.join("trustworthiness.csv");
    detail.trust.write_csv(create(&p)?).map_err(|e| Error::io(&p, e))?;
    detail.tsne.write_csv(ids, create(&dir.join("tsne.csv"))?)?;
    Ok(())
}

fn capacity_command(config: &RunConfig, out: &Path) -> Result<()> {
    let ds = config.load_dataset().stage("load")?;
    let methods = config.method_params();
    let run = run_capacity(&ds, &methods, &config.capacity_config())?;
    let mut report = run.report;
    report.master_seed = Some(config.seed);
    report.seeds = stage_seeds(config.seed);

    write_text(&out.join("report.json"), &report.to_json()?)?;
    report.write_csv(create(&out.join("report.csv"))?)?;
    let table = report.console_table();
    write_text(&out.join("report.txt"), &table)?;
    write_text(&out.join("config.toml"), &config.to_toml_string()?)?;
    let ids = ds.ids();
    for (method, detail) in &run.details {
        write_detail(&out.join(method.name()), &ids, detail)?;
    }
    for (method, history) in &run.histories {
        crate::tpe::write_history_csv(history, create(&out.join(method.name()).join("tpe_history.csv"))?)?;
    }
    print!("{table}");
    println!("report written to {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_lists_every_config_field() {
        let mut cmd = command();
        let capacity = cmd.find_subcommand_mut("capacity").unwrap();
        let help = capacity.render_long_help().to_string();
        for (key, default) in RunConfig::documented_fields() {
            let line = if default.is_empty() {
                format!("  {key}  [no default]")
            } else {
                format!("  {key}  [default: {default}]")
            };
            assert!(help.contains(&line), "missing `{line}`");
        }
    }

    #[test]
    fn cli_definition_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn unknown_method_lists_valid_ones() {
        let cli = Cli::try_parse_from(["repcap", "embed", "--method", "word2vec", "--synthetic"]).unwrap();
        let e = run(cli.command).unwrap_err().to_string();
        assert!(e.contains("[config]") && e.contains("spike2vec") && e.contains("one-hot"), "{e}");
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\n[tsne]\nperplexity = 12.0\niterations = 400\n").unwrap();
        let cfg = ConfigArgs {
            config: Some(path),
            set: vec!["tsne.iterations=250".into()],
            seed: Some(9),
        };
        let c = resolve(&cfg, None, vec!["tsne.perplexity=15.0".into()]).unwrap();
        assert_eq!((c.seed, c.tsne.perplexity, c.tsne.iterations), (9, 15.0, 250));
    }
}
