//! Full representation-capacity run on a synthetic dataset with a reduced
//! budget; prints the report table.
//!
//! cargo run --release --example capacity_report

use repcap::config::RunConfig;

fn main() -> repcap::Result<()> {
    let cfg = RunConfig::default().with_overrides(&[
        "dataset.synthetic=true",
        "synth.per_class=40",
        "synth.length=80",
        "tpe.n_trials=300",
        "autoencoder.epochs=20",
    ])?;
    let ds = cfg.load_dataset()?;
    let report = repcap::pipeline::evaluate_all(&ds, &cfg.method_params(), &cfg.capacity_config())?;
    print!("{}", report.console_table());
    println!("max |rc - recomputed| = {:.1e}", report.max_rc_inconsistency());
    Ok(())
}
