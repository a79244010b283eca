//! Print the target sequence of each fixture under every schema, then parse
//! it back.
//!
//! cargo run --example linearize_fixtures

use combex::corpus::{load_corpus, CorpusFormat};
use combex::linearizer::{delinearize, linearize_gold, to_line, EntitySep, Mode, Ordering, Schema};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = load_corpus(
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/fixtures.jsonl"),
        CorpusFormat::Jsonl,
    )?;
    for inst in &corpus.instances {
        println!("{}", inst.doc_id);
        for mode in Mode::ALL {
            for sep in [EntitySep::Drug, EntitySep::Semicolon] {
                if mode == Mode::NerExtended && sep == EntitySep::Drug {
                    continue;
                }
                let schema = Schema::new(mode, sep, Ordering::Dataset);
                let seq = linearize_gold(inst, &schema)?;
                let back = delinearize(&seq, inst, &schema);
                println!("  {:<13} {:<9} {}", mode.name(), sep.name(), to_line(&seq));
                for r in &back.relations {
                    let drugs: Vec<&str> = r.drugs.iter().map(String::as_str).collect();
                    println!("      {} {{{}}}", r.label, drugs.join(", "));
                }
            }
        }
    }
    Ok(())
}
