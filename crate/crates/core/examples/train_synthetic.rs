//! Train the toy model on a synthetic corpus and score the held-out split.
//!
//! cargo run --release --example train_synthetic -- [three_way|ner_extended] [epochs]

use std::time::Instant;

use combex::eval::{evaluate, score_ner};
use combex::linearizer::{entity_names, named_relations, Mode, Schema};
use combex::model::{predict, train_with, ModelConfig, Task};
use combex::synthgen::{generate, SynthConfig};
use combex::tokenizer::build_vocab;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let mode: Mode = args.get(1).map_or("three_way", String::as_str).parse()?;
    let mut cfg = ModelConfig::toy();
    if let Some(e) = args.get(2) {
        cfg.epochs = e.parse()?;
    }
    let (train, test) = generate(&SynthConfig::default())?;
    let vocab = build_vocab(&train)?;
    let schema = if mode == Mode::NerExtended {
        Schema::ner_extended()
    } else {
        Schema::three_way()
    };
    let task = Task::new(schema, 0);
    let t0 = Instant::now();
    let out = train_with(&train, &vocab, &task, &cfg, |epoch, loss| {
        println!(
            "epoch {epoch:>3}  loss {loss:.4}  {:.1}s",
            t0.elapsed().as_secs_f64()
        );
    })?;
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    let mut ents_p = Vec::new();
    let mut ents_g = Vec::new();
    for inst in &test {
        let p = predict(inst, &out.checkpoint, &vocab, false)?;
        preds.push(p.parsed.relations);
        golds.push(named_relations(inst, &inst.gold, mode));
        ents_p.push(p.parsed.entities.unwrap_or_default());
        ents_g.push(entity_names(inst));
    }
    let report = evaluate(&preds, &golds, mode)?;
    println!("{}", report.to_json());
    if mode == Mode::NerExtended {
        println!("{}", score_ner(&ents_p, &ents_g)?.to_json());
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
