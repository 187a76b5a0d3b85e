//! Recompute published RC values from their printed weights and metric
//! values under the literal and additive aggregations.
//!
//! cargo run --example audit_tables -- [tables.csv]

use std::fs::File;
use std::io::BufReader;

use repcap::pipeline::{audit_rows, format_audit, read_table_rows};

fn main() -> repcap::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/published_tables.csv").into());
    let file = File::open(&path).map_err(|e| repcap::Error::io(&path, e))?;
    let rows = read_table_rows(BufReader::new(file))?;
    print!("{}", format_audit(&audit_rows(&rows)?));
    Ok(())
}
