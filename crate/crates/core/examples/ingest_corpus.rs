//! Load a JSONL corpus, report rejected records and show context windows.
//!
//! cargo run --example ingest_corpus -- [path.jsonl] [n_ctx]

use combex::corpus::{load_corpus, validate_instance, window, CorpusFormat, WindowConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let path = args
        .get(1)
        .cloned()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/fixtures.jsonl").to_string());
    let n_ctx: usize = args.get(2).map_or(Ok(1), |s| s.parse())?;
    let report = load_corpus(&path, CorpusFormat::Jsonl)?;
    println!(
        "{} valid, {} rejected",
        report.instances.len(),
        report.diagnostics.len()
    );
    for d in &report.diagnostics {
        println!("  rejected: {d}");
    }
    for inst in &report.instances {
        assert!(validate_instance(inst).is_empty());
        println!(
            "{:<14} {} drugs, {} relations",
            inst.doc_id,
            inst.drugs.len(),
            inst.gold.len()
        );
        println!("  {}", window(inst, WindowConfig::new(n_ctx)));
    }
    Ok(())
}
