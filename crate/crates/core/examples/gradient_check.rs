//! Compare backpropagated gradients against central differences.
//!
//! cargo run --release --example gradient_check -- [samples]

use combex::linearizer::{linearize_gold, Schema};
use combex::model::{build_example, grad_check, ModelConfig, Params, Task};
use combex::synthgen::{generate, SynthConfig};
use combex::tokenizer::{build_vocab, window_tokens};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args().nth(1).map_or(Ok(300), |s| s.parse())?;
    let (train, _) = generate(&SynthConfig {
        n_train: 4,
        n_test: 1,
        ..SynthConfig::default()
    })?;
    let vocab = build_vocab(&train)?;
    let schema = Schema::ner_extended();
    let task = Task::new(schema, 1);
    let mut batch = Vec::new();
    for inst in &train {
        let input = window_tokens(inst, task.window);
        let target = linearize_gold(inst, &schema)?;
        batch.push(build_example(&vocab, &input, &target, &schema, &inst.doc_id)?.0);
    }
    let cfg = ModelConfig {
        embed_dim: 6,
        hidden_dim: 8,
        ..ModelConfig::toy()
    };
    let params = Params::init(&cfg, vocab.len(), &mut ChaCha8Rng::seed_from_u64(1));
    let r = grad_check(&params, &batch, n, 1);
    println!(
        "checked {} coordinates ({} near zero)",
        r.n_checked, r.n_floored
    );
    println!("max relative error {:.3e}", r.max_rel_error);
    let (name, idx, a, num) = &r.worst;
    println!("worst: {name}[{idx}] analytic {a:.6e} numeric {num:.6e}");
    Ok(())
}
