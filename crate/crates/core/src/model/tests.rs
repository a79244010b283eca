use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::{Label, Relation};
use crate::linearizer::{linearize_gold, named_relations, Mode};
use crate::tokenizer::{build_vocab, window_tokens};

fn fixture() -> Vec<Instance> {
    vec![
        Instance::from_mentions(
            "a",
            vec!["Codelivery of sorafenib and curcumin enhances the effect .".into()],
            1,
            &["sorafenib", "curcumin"],
            vec![Relation::new([0, 1], Label::Pos)],
        )
        .unwrap(),
        Instance::from_mentions(
            "b",
            vec![
                "Patients were enrolled .".into(),
                "Tamoxifen was compared with letrozole and anti-estrogen therapy .".into(),
            ],
            2,
            &["Tamoxifen", "letrozole", "anti-estrogen"],
            vec![Relation::new([0, 1, 2], Label::Nocomb)],
        )
        .unwrap(),
    ]
}

fn tiny() -> ModelConfig {
    ModelConfig {
        embed_dim: 4,
        hidden_dim: 5,
        seed: 3,
        ..ModelConfig::default()
    }
}

fn setup() -> (Vec<Instance>, Vocab, Task, Params, Vec<Example>) {
    let corpus = fixture();
    let vocab = build_vocab(&corpus).unwrap();
    let task = Task::new(Schema::three_way(), 1);
    let params = Params::init(&tiny(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(11));
    let examples = build_examples(&corpus, &vocab, &task).unwrap();
    (corpus, vocab, task, params, examples)
}

/// Straight-line re-derivation of the likelihood with scalar loops.
mod oracle {
    use super::super::{Example, Params};

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn matvec(w: &ndarray::Array2<f64>, x: &[f64]) -> Vec<f64> {
        (0..w.nrows())
            .map(|r| (0..w.ncols()).map(|c| w[[r, c]] * x[c]).sum())
            .collect()
    }

    fn lstm(
        wx: &ndarray::Array2<f64>,
        wh: &ndarray::Array2<f64>,
        b: &ndarray::Array1<f64>,
        x: &[f64],
        h: &[f64],
        c: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let n = h.len();
        let a = matvec(wx, x);
        let r = matvec(wh, h);
        let z: Vec<f64> = (0..4 * n).map(|k| a[k] + r[k] + b[k]).collect();
        let mut h2 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for k in 0..n {
            let (i, f, g, o) = (
                sig(z[k]),
                sig(z[n + k]),
                z[2 * n + k].tanh(),
                sig(z[3 * n + k]),
            );
            c2[k] = f * c[k] + i * g;
            h2[k] = o * c2[k].tanh();
        }
        (h2, c2)
    }

    fn additive(
        wk: &ndarray::Array2<f64>,
        q: &[f64],
        b: &ndarray::Array1<f64>,
        v: &ndarray::Array1<f64>,
        key: &[f64],
    ) -> f64 {
        let kk = matvec(wk, key);
        (0..v.len())
            .map(|a| v[a] * (kk[a] + q[a] + b[a]).tanh())
            .sum()
    }

    pub fn nll(p: &Params, ex: &Example) -> f64 {
        let t_len = ex.input_ids.len();
        let h = p.dec_wh.ncols();
        let x: Vec<Vec<f64>> = ex
            .input_ids
            .iter()
            .map(|&i| p.emb.row(i as usize).to_vec())
            .collect();
        let mut fw = vec![vec![0.0; h]; t_len];
        let (mut hh, mut cc) = (vec![0.0; h], vec![0.0; h]);
        for t in 0..t_len {
            (hh, cc) = lstm(&p.enc_f_wx, &p.enc_f_wh, &p.enc_f_b, &x[t], &hh, &cc);
            fw[t] = hh.clone();
        }
        let mut bw = vec![vec![0.0; h]; t_len];
        let (mut hh, mut cc) = (vec![0.0; h], vec![0.0; h]);
        for t in (0..t_len).rev() {
            (hh, cc) = lstm(&p.enc_b_wx, &p.enc_b_wh, &p.enc_b_b, &x[t], &hh, &cc);
            bw[t] = hh.clone();
        }
        let enc: Vec<Vec<f64>> = (0..t_len)
            .map(|t| [fw[t].clone(), bw[t].clone()].concat())
            .collect();
        let mean: Vec<f64> = (0..2 * h)
            .map(|k| enc.iter().map(|e| e[k]).sum::<f64>() / t_len as f64)
            .collect();
        let mut s: Vec<f64> = matvec(&p.init_w, &mean)
            .iter()
            .zip(p.init_b.iter())
            .map(|(a, b)| (a + b).tanh())
            .collect();
        let mut c = vec![0.0; h];
        let mut ctx = vec![0.0; 2 * h];
        let mut total = 0.0;
        for (k, &y) in ex.targets.iter().enumerate() {
            let xin = [p.emb.row(ex.prev_rows[k] as usize).to_vec(), ctx.clone()].concat();
            (s, c) = lstm(&p.dec_wx, &p.dec_wh, &p.dec_b, &xin, &s, &c);
            let qa = matvec(&p.att_wq, &s);
            let e: Vec<f64> = enc
                .iter()
                .map(|key| additive(&p.att_wk, &qa, &p.att_b, &p.att_v, key))
                .collect();
            let z: f64 = e.iter().map(|v| v.exp()).sum();
            ctx = (0..2 * h)
                .map(|d| (0..t_len).map(|j| e[j].exp() / z * enc[j][d]).sum())
                .collect();
            let q = [s.clone(), ctx.clone()].concat();
            let qp = matvec(&p.ptr_wq, &q);
            let o = matvec(&p.out_w, &q);
            let mut num = 0.0;
            let mut den = 0.0;
            for &r in &ex.special_ids {
                let w = (o[r as usize] + p.out_b[r as usize]).exp();
                den += w;
                if r == y {
                    num += w;
                }
            }
            for (i, &j) in ex.copy_pos.iter().enumerate() {
                let w = additive(&p.ptr_wk, &qp, &p.ptr_b, &p.ptr_v, &enc[j]).exp();
                den += w;
                if ex.copy_type[i] == y {
                    num += w;
                }
            }
            total -= (num / den).ln();
        }
        total
    }
}

#[test]
fn loss_matches_scalar_oracle() {
    let (_, _, _, params, examples) = setup();
    let n: usize = examples.iter().map(|e| e.targets.len()).sum();
    let expected = examples
        .iter()
        .map(|e| oracle::nll(&params, e))
        .sum::<f64>()
        / n as f64;
    let got = batch_loss(&params, &examples);
    assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
}

#[test]
fn uniform_logits_give_ln_k() {
    let corpus = vec![Instance::from_mentions(
        "u",
        vec!["alpha beta gamma".into()],
        1,
        &["alpha", "beta"],
        vec![Relation::new([0, 1], Label::Comb)],
    )
    .unwrap()];
    let vocab = build_vocab(&corpus).unwrap();
    let mut params = Params::init(&tiny(), vocab.len(), &mut ChaCha8Rng::seed_from_u64(1));
    params.out_w.fill(0.0);
    params.out_b.fill(0.0);
    params.ptr_v.fill(0.0);
    let ex = build_examples(&corpus, &vocab, &Task::new(Schema::three_way(), 0)).unwrap();
    // EOS, @DRUG@, three labels and three distinct words.
    let k = 8.0_f64;
    assert_eq!(ex[0].special_ids.len() + ex[0].copy_pos.len(), 8);
    assert!((batch_loss(&params, &ex) - k.ln()).abs() < 1e-12);
}

#[test]
fn forward_loss_rejects_target_outside_mask() {
    let (corpus, vocab, task, params, _) = setup();
    let input = window_tokens(&corpus[0], task.window);
    let mut target = linearize_gold(&corpus[0], &task.schema).unwrap();
    target[0] = Token::word("letrozole");
    let err = forward_loss(&[(input, target)], &params, &vocab, &task.schema).unwrap_err();
    assert!(matches!(err, ModelError::TargetOutsideMask { ref token, .. } if token == "letrozole"));
}

#[test]
fn gradients_match_central_differences() {
    let (_, _, _, params, examples) = setup();
    for seed in [1, 2] {
        let r = grad_check(&params, &examples, 300, seed);
        assert_eq!(r.n_checked, 300);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}

#[test]
fn saturated_gradients_stay_finite() {
    let (_, _, _, mut params, examples) = setup();
    params.out_b.fill(60.0);
    params.ptr_v.mapv_inplace(|v| v * 40.0);
    let (loss, g) = batch_loss_and_grad(&params, &examples);
    assert!(loss.is_finite());
    assert!(g.all_finite());
}

fn overfit(inst: &Instance, task: &Task) -> (Vocab, Checkpoint, Vec<f64>) {
    let corpus = vec![inst.clone()];
    let vocab = build_vocab(&corpus).unwrap();
    let cfg = ModelConfig {
        embed_dim: 16,
        hidden_dim: 24,
        encoder_lr: 1.0,
        decoder_lr: 1.0,
        epochs: 200,
        batch_size: 1,
        ..ModelConfig::default()
    };
    let out = train(&corpus, &vocab, task, &cfg).unwrap();
    (vocab, out.checkpoint, out.epoch_losses)
}

#[test]
fn overfits_one_instance_and_decodes_gold() {
    let corpus = fixture();
    for (inst, schema) in [
        (&corpus[0], Schema::three_way()),
        (&corpus[1], Schema::three_way()),
        (&corpus[1], Schema::ner_extended()),
    ] {
        let task = Task::new(schema, 1);
        let (vocab, ckpt, losses) = overfit(inst, &task);
        assert!(*losses.last().unwrap() < 0.01, "{losses:?}");
        let pred = predict(inst, &ckpt, &vocab, false).unwrap();
        let gold = named_relations(inst, &inst.gold, schema.mode());
        if schema.mode() == Mode::NerExtended {
            assert_eq!(
                pred.parsed.entities,
                Some(crate::linearizer::entity_names(inst))
            );
        }
        assert_eq!(pred.parsed.relations, gold);
        assert!(pred.parsed.diagnostics.is_empty());
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let (corpus, vocab, task, _, _) = setup();
    let cfg = ModelConfig {
        epochs: 3,
        ..tiny()
    };
    let a = train(&corpus, &vocab, &task, &cfg).unwrap();
    let b = train(&corpus, &vocab, &task, &cfg).unwrap();
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.epoch_losses, b.epoch_losses);
    let c = train(&corpus, &vocab, &task, &ModelConfig { seed: 4, ..cfg }).unwrap();
    assert_ne!(a.checkpoint.to_bytes(), c.checkpoint.to_bytes());
}

#[test]
fn adam_reduces_loss() {
    let (_, _, _, params, examples) = setup();
    let cfg = ModelConfig {
        optimizer: Optimizer::Adam,
        encoder_lr: 1e-2,
        decoder_lr: 1e-2,
        ..tiny()
    };
    let mut tr = Trainer::from_params(cfg, params);
    let first = tr.step(&examples);
    let mut last = first;
    for _ in 0..30 {
        last = tr.step(&examples);
    }
    assert!(last < first);
}

#[test]
fn decoding_respects_mask_and_normalizes() {
    let (corpus, vocab, task, params, _) = setup();
    let ckpt = Checkpoint {
        config: tiny(),
        vocab_hash: vocab.hash(),
        vocab_len: vocab.len(),
        task,
        step: 0,
        params,
    };
    for inst in &corpus {
        for strict in [false, true] {
            let p = predict(inst, &ckpt, &vocab, strict).unwrap();
            assert!(p.output.truncated || p.output.tokens.last().unwrap().is_eos());
            for st in &p.output.steps {
                let z: f64 = st.distribution.iter().map(|d| d.1).sum();
                assert!((z - 1.0).abs() < 1e-9);
            }
            assert!(p
                .parsed
                .diagnostics
                .iter()
                .all(|d| d.code != crate::linearizer::DiagCode::CopyViolation));
            if strict && !p.output.truncated {
                let diags = crate::constraints::validate_sequence(
                    &p.output.tokens,
                    &window_tokens(inst, task.window),
                    &task.schema,
                );
                assert!(diags.is_empty(), "{diags:?}");
            }
        }
    }
}

#[test]
fn step_cap_truncates() {
    let (corpus, vocab, task, params, _) = setup();
    let ckpt = Checkpoint {
        config: ModelConfig {
            max_decode_steps: 1,
            ..tiny()
        },
        vocab_hash: vocab.hash(),
        vocab_len: vocab.len(),
        task,
        step: 0,
        params,
    };
    let p = predict(&corpus[0], &ckpt, &vocab, true).unwrap();
    assert_eq!(p.output.tokens.len(), 1);
    assert!(p.output.truncated);
}

#[test]
fn checkpoint_reload_predicts_identically() {
    let (corpus, vocab, task, _, _) = setup();
    let out = train(
        &corpus,
        &vocab,
        &task,
        &ModelConfig {
            epochs: 2,
            ..tiny()
        },
    )
    .unwrap();
    let back = Checkpoint::from_bytes(&out.checkpoint.to_bytes()).unwrap();
    for inst in &corpus {
        assert_eq!(
            predict(inst, &out.checkpoint, &vocab, false).unwrap(),
            predict(inst, &back, &vocab, false).unwrap()
        );
    }
}

#[test]
fn vocab_mismatch_is_rejected() {
    let (corpus, vocab, task, params, _) = setup();
    let ckpt = Checkpoint {
        config: tiny(),
        vocab_hash: "0".repeat(64),
        vocab_len: vocab.len(),
        task,
        step: 0,
        params,
    };
    assert!(matches!(
        predict(&corpus[0], &ckpt, &vocab, false),
        Err(ModelError::VocabMismatch { .. })
    ));
}

#[test]
fn config_validation() {
    assert!(ModelConfig::default().validate().is_ok());
    assert!(ModelConfig {
        hidden_dim: 0,
        ..tiny()
    }
    .validate()
    .is_err());
    assert!(ModelConfig {
        encoder_lr: 0.0,
        ..tiny()
    }
    .validate()
    .is_err());
    let cfg: ModelConfig = serde_json::from_str(r#"{"hidden_dim": 7}"#).unwrap();
    assert_eq!(cfg.hidden_dim, 7);
    assert_eq!(cfg.embed_dim, 64);
}
