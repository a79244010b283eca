//! One test per acceptance criterion. Each prints a single PASS/FAIL line.
//!
//! cargo test --release -p combex --test acceptance -- --nocapture --test-threads=1

mod common;

use std::collections::BTreeSet;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use combex::constraints::{is_copy_source, CopyMask};
use combex::corpus::Label;
use combex::eval::{evaluate, score_ner, score_relations};
use combex::linearizer::{
    delinearize, entity_names, from_line, linearize_gold, named_relations, to_line, Mode,
    NamedRelation, NamedRelations, Schema,
};
use combex::model::{build_example, decode, grad_check, train, Example, ModelConfig, Params, Task};
use combex::synthgen::{generate, SynthConfig};
use combex::tokenizer::{build_vocab, window_tokens, Token, Vocab};
use common::{brute_force_correct, fixture, random_named, random_triple};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: u32, name: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
        Err(detail) => {
            println!("FAIL criterion {n} ({name}): {detail}");
            panic!("criterion {n} failed: {detail}");
        }
    }
}

fn within(limit: Duration, t0: Instant) -> Result<(), String> {
    if t0.elapsed() > limit {
        Err(format!(
            "took {:.1}s, limit {:.0}s",
            t0.elapsed().as_secs_f64(),
            limit.as_secs_f64()
        ))
    } else {
        Ok(())
    }
}

fn check_fixture(id: &str, schema: &Schema, expected: &str) -> Result<(), String> {
    let inst = fixture(id);
    let seq = linearize_gold(&inst, schema).map_err(|e| format!("{id}: {e}"))?;
    let line = to_line(&seq);
    if line != expected {
        return Err(format!("{id}: got {line:?}, want {expected:?}"));
    }
    let back = delinearize(&from_line(&line, schema), &inst, schema);
    if !back.diagnostics.is_empty() {
        return Err(format!("{id}: diagnostics {:?}", back.diagnostics));
    }
    let gold = named_relations(&inst, &inst.gold, schema.mode());
    if back.relations != gold {
        return Err(format!(
            "{id}: relations {:?} != {:?}",
            back.relations, gold
        ));
    }
    if schema.mode() == Mode::NerExtended && back.entities != Some(entity_names(&inst)) {
        return Err(format!("{id}: entities {:?}", back.entities));
    }
    Ok(())
}

#[test]
fn criterion_1_fixture_fidelity() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let three = Schema::three_way();
    let ner = Schema::ner_extended();
    let cases = [
        (
            "sorafenib",
            &three,
            "sorafenib @DRUG@ curcumin @DRUG@ @POS@",
        ),
        (
            "docetaxel",
            &three,
            "docetaxel @DRUG@ irinotecan @DRUG@ @COMB@",
        ),
        (
            "lamotrigine",
            &three,
            "lamotrigine @DRUG@ carbamazepine @DRUG@ @NOCOMB@",
        ),
        (
            "apalutamide",
            &three,
            "apalutamide @DRUG@ ADT @DRUG@ @POS@ enzalutamide @DRUG@ ADT @DRUG@ @POS@",
        ),
        (
            "dexamethasone",
            &ner,
            "Dexamethasone ; piroxicam ; myo - inositol @NER@ Dexamethasone ; piroxicam @POS@",
        ),
        ("lamotrigine", &ner, "lamotrigine ; carbamazepine @NER@"),
    ];
    let result = cases
        .iter()
        .try_for_each(|(id, schema, want)| check_fixture(id, schema, want))
        .and_then(|_| within(Duration::from_secs(1), t0))
        .map(|_| {
            format!(
                "{} fixtures exact, inverted with no diagnostics",
                cases.len()
            )
        });
    report(1, "fixture fidelity", result);
}

#[test]
fn criterion_2_hyphen_repair() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let inst = fixture("nife");
    let schema = Schema::three_way();
    let line = "5 - fluorouracil @DRUG@ leucovorin @DRUG@ @COMB@ gemcitabine @DRUG@ cisplatin @DRUG@ @COMB@";
    let out = delinearize(&from_line(line, &schema), &inst, &schema);
    let want: NamedRelations = [
        NamedRelation::new(["5-fluorouracil", "leucovorin"], Label::Comb),
        NamedRelation::new(["gemcitabine", "cisplatin"], Label::Comb),
    ]
    .into_iter()
    .collect();
    let result = if out.relations == want && out.diagnostics.is_empty() {
        Ok("two COMB relations, 5-fluorouracil repaired".to_string())
    } else {
        Err(format!(
            "got {:?} with {:?}",
            out.relations, out.diagnostics
        ))
    };
    report(2, "hyphen post-processing", result);
}

#[test]
fn criterion_3_round_trip() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failure = None;
    for k in 0..10_000 {
        let (inst, gold, schema) = random_triple(&mut rng);
        let seq = match linearize_gold(&inst, &schema) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(format!("triple {k}: linearize failed: {e}"));
                break;
            }
        };
        let back = delinearize(&seq, &inst, &schema);
        let want = named_relations(&inst, &gold, schema.mode());
        let ents_ok =
            schema.mode() != Mode::NerExtended || back.entities == Some(entity_names(&inst));
        if !back.diagnostics.is_empty() || back.relations != want || !ents_ok {
            failure = Some(format!(
                "triple {k} ({}): {:?} -> {:?} {:?}",
                schema.mode().name(),
                to_line(&seq),
                back.relations,
                back.diagnostics
            ));
            break;
        }
    }
    let result = match failure {
        Some(f) => Err(f),
        None => within(Duration::from_secs(30), t0)
            .map(|_| format!("10000 triples in {:.2}s", t0.elapsed().as_secs_f64())),
    };
    report(3, "round trip", result);
}

#[test]
fn criterion_4_scoring_oracle() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let labels = [Label::Pos, Label::Comb, Label::Nocomb];
    let mut failure = None;
    for k in 0..1000 {
        let pred = random_named(&mut rng);
        let gold = random_named(&mut rng);
        let report = score_relations(
            std::slice::from_ref(&pred),
            std::slice::from_ref(&gold),
            &labels,
        )
        .unwrap();
        for &label in &labels {
            let s = report.class(label.name()).unwrap();
            let oracle = brute_force_correct(&pred, &gold, label);
            let np = pred.iter().filter(|r| r.label == label).count();
            let ng = gold.iter().filter(|r| r.label == label).count();
            if (s.n_correct, s.n_pred, s.n_gold) != (oracle, np, ng) {
                failure = Some(format!("pair {k} {label:?}: {s:?} vs oracle {oracle}"));
            }
        }
    }
    let gold: NamedRelations = [
        NamedRelation::new(["a", "b"], Label::Pos),
        NamedRelation::new(["c", "d"], Label::Pos),
    ]
    .into_iter()
    .collect();
    let pred: NamedRelations = [
        NamedRelation::new(["a", "b"], Label::Pos),
        NamedRelation::new(["c", "d"], Label::Comb),
    ]
    .into_iter()
    .collect();
    let r = evaluate(&[pred], &[gold], Mode::ThreeWay).unwrap();
    // P = 1/1, R = 1/2 gives F1 = 2/3.
    let pos = r.f1(Label::Pos);
    let any = r.f1(Label::AnyComb);
    let result = match failure {
        Some(f) => Err(f),
        None if (pos - 2.0 / 3.0).abs() > 1e-9 || any != 1.0 => {
            Err(format!("hand example POS {pos}, ANY_COMB {any}"))
        }
        None => Ok(format!(
            "1000 pairs agree; hand example POS F1 {pos:.3}, ANY_COMB F1 {any:.1}"
        )),
    };
    report(4, "scoring oracle", result);
}

fn synth_examples(n: usize, schema: Schema) -> (Vocab, Vec<(Example, CopyMask, Vec<Token>)>) {
    let cfg = SynthConfig {
        n_train: n,
        n_test: n,
        ..SynthConfig::default()
    };
    let (train, test) = generate(&cfg).unwrap();
    let vocab = build_vocab(&train).unwrap();
    let task = Task::new(schema, 0);
    let out = train
        .iter()
        .chain(&test)
        .map(|inst| {
            let input = window_tokens(inst, task.window);
            let target = linearize_gold(inst, &schema).unwrap();
            let (ex, mask) = build_example(&vocab, &input, &target, &schema, &inst.doc_id).unwrap();
            (ex, mask, input)
        })
        .collect();
    (vocab, out)
}

#[test]
fn criterion_5_gradient_check() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let t0 = Instant::now();
    let (vocab, data) = synth_examples(2, Schema::three_way());
    let batch: Vec<Example> = data.iter().take(2).map(|d| d.0.clone()).collect();
    let cfg = ModelConfig {
        embed_dim: 8,
        hidden_dim: 10,
        ..ModelConfig::toy()
    };
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for seed in [11u64, 12] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::init(&cfg, vocab.len(), &mut rng);
        let r = grad_check(&params, &batch, 200, seed);
        worst = worst.max(r.max_rel_error);
        checked += r.n_checked;
    }
    let result = if worst < 1e-4 {
        within(Duration::from_secs(60), t0)
            .map(|_| format!("max relative error {worst:.2e} over {checked} coordinates"))
    } else {
        Err(format!("max relative error {worst:.2e}"))
    };
    report(5, "gradient verification", result);
}

#[test]
fn criterion_6_copy_constraint() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let schemas = [Schema::three_way(), Schema::ner_extended()];
    let mut decodes = 0usize;
    let mut emitted = 0usize;
    let mut violations = Vec::new();
    for schema in schemas {
        let (vocab, data) = synth_examples(60, schema);
        let small = ModelConfig {
            embed_dim: 8,
            hidden_dim: 12,
            epochs: 3,
            ..ModelConfig::toy()
        };
        let mut checkpoints = Vec::new();
        for seed in 0..2u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            checkpoints.push(Params::init(&small, vocab.len(), &mut rng));
        }
        let (train_set, _) = generate(&SynthConfig {
            n_train: 60,
            n_test: 60,
            ..SynthConfig::default()
        })
        .unwrap();
        let trained = train(&train_set, &vocab, &Task::new(schema, 0), &small).unwrap();
        checkpoints.push(trained.checkpoint.params);
        for (c, params) in checkpoints.iter().enumerate() {
            for (i, (ex, mask, input)) in data.iter().enumerate() {
                let sources: BTreeSet<&str> = input
                    .iter()
                    .filter(|t| is_copy_source(t, &schema))
                    .map(|t| t.surface.as_str())
                    .collect();
                for strict in [false, true] {
                    if decodes >= 1000 && c < checkpoints.len() - 1 {
                        break;
                    }
                    let q = Example {
                        targets: Vec::new(),
                        prev_rows: Vec::new(),
                        ..ex.clone()
                    };
                    let out = decode(params, &q, mask, &vocab, &schema, strict, 64);
                    decodes += 1;
                    for tok in &out.tokens {
                        emitted += 1;
                        let ok = tok.is_eos()
                            || schema.is_special(&tok.surface)
                            || sources.contains(tok.surface.as_str());
                        if !ok {
                            violations.push(format!("ckpt {c} input {i}: {:?}", tok.surface));
                        }
                    }
                }
            }
        }
    }
    let result = if violations.is_empty() && decodes >= 1000 {
        Ok(format!(
            "{decodes} decodes, {emitted} tokens, all inside the copy mask"
        ))
    } else if decodes < 1000 {
        Err(format!("only {decodes} decodes"))
    } else {
        Err(format!(
            "{} violations, first {}",
            violations.len(),
            violations[0]
        ))
    };
    report(6, "copy constraint", result);
}

fn learn(schema: Schema) -> (combex::eval::ScoreReport, Option<f64>, f64) {
    let t0 = Instant::now();
    let (train_set, test_set) = generate(&SynthConfig::default()).unwrap();
    let vocab = build_vocab(&train_set).unwrap();
    let cfg = ModelConfig::toy();
    let out = train(&train_set, &vocab, &Task::new(schema, 0), &cfg).unwrap();
    let mut preds = Vec::new();
    let mut golds = Vec::new();
    let mut ents = (Vec::new(), Vec::new());
    for inst in &test_set {
        let p = combex::model::predict(inst, &out.checkpoint, &vocab, false).unwrap();
        preds.push(p.parsed.relations);
        golds.push(named_relations(inst, &inst.gold, schema.mode()));
        ents.0.push(p.parsed.entities.unwrap_or_default());
        ents.1.push(entity_names(inst));
    }
    let report = evaluate(&preds, &golds, schema.mode()).unwrap();
    let ner =
        (schema.mode() == Mode::NerExtended).then(|| score_ner(&ents.0, &ents.1).unwrap().micro.f1);
    (report, ner, t0.elapsed().as_secs_f64())
}

#[test]
fn criterion_7_learnability() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let (three, _, t3) = learn(Schema::three_way());
    let (_, ner, tn) = learn(Schema::ner_extended());
    let pos = three.f1(Label::Pos);
    let any = three.f1(Label::AnyComb);
    let ent = ner.unwrap();
    let detail = format!(
        "THREE_WAY POS F1 {pos:.3}, ANY_COMB F1 {any:.3} ({t3:.0}s); NER entity F1 {ent:.3} ({tn:.0}s); {} epochs",
        ModelConfig::toy().epochs
    );
    let result = if pos >= 0.95 && any >= 0.95 && ent >= 0.97 && t3 + tn < 600.0 {
        Ok(detail)
    } else {
        Err(detail)
    };
    report(7, "learnability", result);
}

fn run_bin(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_combex"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn check_ablation(args: &[&str], json: &std::path::Path, settings: &[&str]) -> Result<(), String> {
    let (code, stdout, stderr) = run_bin(args);
    if code != 0 {
        return Err(format!("{args:?} exited {code}: {stderr}"));
    }
    for s in settings {
        if !stdout.lines().any(|l| l.starts_with('|') && l.contains(s)) {
            return Err(format!("{args:?}: no table row for {s}:\n{stdout}"));
        }
    }
    let text = std::fs::read_to_string(json).map_err(|e| e.to_string())?;
    let rows: Vec<serde_json::Value> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if rows.len() != settings.len() {
        return Err(format!("{} JSON rows, want {}", rows.len(), settings.len()));
    }
    for row in &rows {
        let f1 = row["report"]["micro"]["f1"].as_f64();
        if row["setting"].as_str().is_none() || !matches!(f1, Some(x) if (0.0..=1.0).contains(&x)) {
            return Err(format!("malformed row {row}"));
        }
    }
    Ok(())
}

#[test]
fn criterion_8_ablation_plumbing() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let dir = tempfile::tempdir().unwrap();
    let ctx_json = dir.path().join("ctx.json");
    let sep_json = dir.path().join("sep.json");
    let small = [
        "--n-train",
        "60",
        "--n-test",
        "20",
        "--epochs",
        "2",
        "--embed-dim",
        "8",
        "--hidden-dim",
        "8",
    ];
    let mut ctx_args = vec!["ablate-context", "--n", "0", "1", "2", "3", "4"];
    ctx_args.extend(small);
    ctx_args.extend(["--report", ctx_json.to_str().unwrap()]);
    let mut sep_args = vec!["ablate-separator"];
    sep_args.extend(small);
    sep_args.extend(["--report", sep_json.to_str().unwrap()]);
    let result = check_ablation(
        &ctx_args,
        &ctx_json,
        &["n_ctx=0", "n_ctx=1", "n_ctx=2", "n_ctx=3", "n_ctx=4"],
    )
    .and_then(|_| check_ablation(&sep_args, &sep_json, &["sep=drug", "sep=semicolon"]))
    .map(|_| {
        "ablate-context (5 settings) and ablate-separator (2 settings) reports well formed"
            .to_string()
    });
    report(8, "ablation plumbing", result);
}

#[test]
fn criterion_9_non_reproducibility_statement() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let result = std::fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e}", path.display()))
        .and_then(|text| {
            let missing: Vec<&str> = ["66.7", "71.1", "72.7", "94.0", "not reproduc"]
                .into_iter()
                .filter(|s| !text.contains(s))
                .collect();
            if missing.is_empty() {
                Ok("README records the full-scale reference values as not reproduced".to_string())
            } else {
                Err(format!("README lacks {missing:?}"))
            }
        });
    report(9, "non-reproducibility statement", result);
}
