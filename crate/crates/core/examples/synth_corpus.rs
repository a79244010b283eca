//! Generate a synthetic corpus and summarize its composition.
//!
//! cargo run --example synth_corpus -- [n_train] [seed]

use std::collections::BTreeMap;

use combex::synthgen::{generate, instance_class, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = SynthConfig::default();
    if let Some(n) = args.get(1) {
        cfg.n_train = n.parse()?;
    }
    if let Some(s) = args.get(2) {
        cfg.seed = s.parse()?;
    }
    let (train, test) = generate(&cfg)?;
    for (name, split) in [("train", &train), ("test", &test)] {
        let mut classes: BTreeMap<String, usize> = BTreeMap::new();
        let mut arity: BTreeMap<usize, usize> = BTreeMap::new();
        for inst in split.iter() {
            let c = instance_class(inst).map_or("?".to_string(), |l| l.to_string());
            *classes.entry(c).or_default() += 1;
            for r in &inst.gold {
                *arity.entry(r.drugs.len()).or_default() += 1;
            }
        }
        let hyphens = split
            .iter()
            .flat_map(|i| &i.drugs)
            .filter(|d| d.text.contains('-'))
            .count();
        println!("{name}: {} instances, classes {classes:?}, arity {arity:?}, hyphenated mentions {hyphens}", split.len());
    }
    println!("sample: {}", train[0].to_json_line());
    Ok(())
}
