//! Show the copy mask of one input and walk the output grammar over a
//! well-formed and a malformed sequence.
//!
//! cargo run --example constrained_vocabulary

use combex::constraints::{copy_mask, validate_sequence, GrammarState};
use combex::corpus::{load_corpus, CorpusFormat, WindowConfig};
use combex::linearizer::{from_line, Schema};
use combex::tokenizer::{build_vocab, window_tokens};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = load_corpus(
        concat!(env!("CARGO_MANIFEST_DIR"), "/data/fixtures.jsonl"),
        CorpusFormat::Jsonl,
    )?;
    let vocab = build_vocab(&corpus.instances[1..])?;
    let inst = &corpus.instances[0];
    let schema = Schema::three_way();
    let input = window_tokens(inst, WindowConfig::new(0));
    let mask = copy_mask(&input, &schema, &vocab);
    println!(
        "input: {}",
        input
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!("{} allowed ids:", mask.allowed.len());
    for &id in &mask.allowed {
        let kind = if mask.is_extended(id) {
            "oov copy"
        } else if mask.is_copyable(id) {
            "copy"
        } else {
            "special"
        };
        println!(
            "  {id:>5} {:<12} {kind}",
            mask.surface_of(id, &vocab).unwrap_or("?")
        );
    }
    let mut gs = GrammarState::start(&schema);
    println!("legal at start: {:?}", gs.legal(&schema));
    for tok in from_line("sorafenib @DRUG@ curcumin @DRUG@ @POS@", &schema) {
        gs = gs
            .advance(
                combex::constraints::classify(&tok.surface, &schema),
                &schema,
            )
            .ok_or("grammar rejected a well-formed sequence")?;
    }
    println!("accepting after the gold sequence: {}", gs.accepting());
    for line in [
        "sorafenib @DRUG@ curcumin @DRUG@ @POS@",
        "sorafenib @DRUG@ @POS@ aspirin",
        "@DRUG@ @POS@",
    ] {
        println!(
            "{line:?}: {:?}",
            validate_sequence(&from_line(line, &schema), &input, &schema)
        );
    }
    Ok(())
}
