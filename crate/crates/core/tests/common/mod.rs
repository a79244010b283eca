#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use combex::corpus::{load_corpus, CorpusFormat, Instance, Label, Relation, RelationSet};
use combex::linearizer::{EntitySep, Mode, NamedRelation, NamedRelations, Ordering, Schema};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

pub fn fixtures() -> Vec<Instance> {
    let report = load_corpus(data_path("fixtures.jsonl"), CorpusFormat::Jsonl).unwrap();
    assert!(report.diagnostics.is_empty(), "{:?}", report.diagnostics);
    report.instances
}

pub fn fixture(id: &str) -> Instance {
    fixtures().into_iter().find(|i| i.doc_id == id).unwrap()
}

const WORDS: &[&str] = &[
    "the",
    "patients",
    "received",
    "with",
    "and",
    "in",
    "of",
    "trial",
    "dose",
    "was",
    "effective",
    ",",
    ".",
    "(",
    ")",
    "mg",
    "daily",
    "plus",
    "cohort",
    "response",
];
const SYL: &[&str] = &[
    "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "ve", "zu", "ba", "do",
];

fn drug_name(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(2..4);
    let stem: String = (0..n).map(|_| *SYL.choose(rng).unwrap()).collect();
    match rng.random_range(0..10) {
        0 => format!("{}-{stem}", rng.random_range(1..10)),
        1 => format!("anti-{stem}"),
        2 => stem.to_uppercase(),
        _ => stem,
    }
}

/// A random valid instance with distinct drug names, a valid gold relation
/// set and a random schema.
pub fn random_triple(rng: &mut ChaCha8Rng) -> (Instance, RelationSet, Schema) {
    let n_drugs = rng.random_range(2..7);
    let mut names = BTreeSet::new();
    while names.len() < n_drugs {
        names.insert(drug_name(rng));
    }
    let mut names: Vec<String> = names.into_iter().collect();
    names.shuffle(rng);
    let mut pieces: Vec<String> = Vec::new();
    for name in &names {
        for _ in 0..rng.random_range(0..3) {
            pieces.push(WORDS.choose(rng).unwrap().to_string());
        }
        pieces.push(name.clone());
    }
    pieces.push(".".into());
    let sentence = pieces.join(" ");
    let drug_refs: Vec<&str> = names.iter().map(String::as_str).collect();

    let gold: RelationSet = if rng.random_bool(0.3) {
        vec![Relation::new(
            (0..n_drugs).collect::<Vec<_>>(),
            Label::Nocomb,
        )]
    } else {
        let mut seen = BTreeSet::new();
        let mut rels = Vec::new();
        for _ in 0..rng.random_range(1..4) {
            let k = rng.random_range(2..=n_drugs);
            let mut idx: Vec<usize> = (0..n_drugs).collect();
            idx.shuffle(rng);
            idx.truncate(k);
            let set: BTreeSet<usize> = idx.iter().copied().collect();
            if seen.insert(set) {
                let label = if rng.random_bool(0.5) {
                    Label::Pos
                } else {
                    Label::Comb
                };
                rels.push(Relation::new(idx, label));
            }
        }
        rels
    };
    let mode = *Mode::ALL.choose(rng).unwrap();
    let sep = if rng.random_bool(0.5) {
        EntitySep::Drug
    } else {
        EntitySep::Semicolon
    };
    let ordering = if rng.random_bool(0.5) {
        Ordering::Dataset
    } else {
        Ordering::LeftToRight
    };
    let n_ctx_sentences = rng.random_range(0..3);
    let mut sentences: Vec<String> = (0..n_ctx_sentences)
        .map(|k| format!("Context sentence {k} ."))
        .collect();
    let target_index = rng.random_range(0..=sentences.len());
    sentences.insert(target_index, sentence);
    let inst = Instance::from_mentions(
        "rand",
        sentences,
        target_index + 1,
        &drug_refs,
        gold.clone(),
    )
    .unwrap();
    (inst, gold, Schema::new(mode, sep, ordering))
}

/// Exhaustive maximum matching between predicted and gold relations of one
/// class: every injective assignment of predictions to gold items is tried.
pub fn brute_force_correct(pred: &NamedRelations, gold: &NamedRelations, label: Label) -> usize {
    let p: Vec<&NamedRelation> = pred.iter().filter(|r| r.label == label).collect();
    let g: Vec<&NamedRelation> = gold.iter().filter(|r| r.label == label).collect();
    fn best(i: usize, p: &[&NamedRelation], g: &[&NamedRelation], used: &mut Vec<bool>) -> usize {
        if i == p.len() {
            return 0;
        }
        let mut m = best(i + 1, p, g, used);
        for j in 0..g.len() {
            if !used[j] && p[i].drugs == g[j].drugs && p[i].label == g[j].label {
                used[j] = true;
                m = m.max(1 + best(i + 1, p, g, used));
                used[j] = false;
            }
        }
        m
    }
    best(0, &p, &g, &mut vec![false; g.len()])
}

pub fn random_named(rng: &mut ChaCha8Rng) -> NamedRelations {
    let pool = ["a", "b", "c", "d", "e"];
    let labels = [Label::Pos, Label::Comb, Label::Nocomb];
    let mut out = NamedRelations::new();
    for _ in 0..rng.random_range(0..=5) {
        let k = rng.random_range(2..=3);
        let drugs: Vec<&str> = pool.choose_multiple(rng, k).copied().collect();
        out.insert(NamedRelation::new(drugs, *labels.choose(rng).unwrap()));
    }
    out
}
