use ndarray::Array1;

use super::network::{bos_row, dec_step, encode, Example};
use super::{build_example, Checkpoint, ModelError, Params};
use crate::constraints::{classify, next_allowed, CopyMask, GrammarState, Symbol};
use crate::corpus::Instance;
use crate::linearizer::{delinearize, Delinearized, Schema};
use crate::tokenizer::{window_tokens, Token, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeStep {
    /// Emitted output id.
    pub id: u32,
    pub log_prob: f64,
    /// Distribution the id was chosen from, ids ascending.
    pub distribution: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub tokens: Vec<Token>,
    pub steps: Vec<DecodeStep>,
    /// Whether decoding stopped at the step cap rather than at EOS.
    pub truncated: bool,
}

impl DecodeOutput {
    pub fn log_probs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.log_prob).collect()
    }
}

/// Greedy decoding under the copy mask, and under the grammar when `strict`.
/// Ties go to the smaller id. Panics if an emitted id falls outside the mask.
#[allow(clippy::too_many_arguments)]
pub fn decode(
    params: &Params,
    ex: &Example,
    mask: &CopyMask,
    vocab: &Vocab,
    schema: &Schema,
    strict: bool,
    max_steps: usize,
) -> DecodeOutput {
    let enc = encode(params, &ex.input_ids);
    let h = params.dec_wh.ncols();
    let mut s = enc.s0.clone();
    let mut c = Array1::zeros(h);
    let mut ctx = Array1::zeros(2 * h);
    let mut prev = bos_row();
    let mut gs = GrammarState::start(schema);
    let mut out = DecodeOutput {
        tokens: Vec::new(),
        steps: Vec::new(),
        truncated: true,
    };
    for _ in 0..max_steps {
        let st = dec_step(params, &enc, ex, prev, &ctx, &s, &c);
        let mut dist = st.distribution(ex);
        if strict {
            let legal = next_allowed(gs, mask, schema, vocab, true);
            dist.retain(|(id, _)| legal.contains(id));
            if dist.is_empty() {
                break;
            }
            let z: f64 = dist.iter().map(|d| d.1).sum();
            dist.iter_mut().for_each(|d| d.1 /= z);
        }
        let &(id, p) = dist
            .iter()
            .fold(None, |best: Option<&(u32, f64)>, d| match best {
                Some(b) if b.1 >= d.1 => Some(b),
                _ => Some(d),
            })
            .expect("non-empty distribution");
        assert!(
            mask.allowed.contains(&id),
            "decoder emitted id {id} outside the copy mask"
        );
        let tok = mask.token(id, vocab).expect("masked id has a surface");
        if strict {
            let sym = if mask.is_copyable(id) {
                Symbol::Word
            } else {
                classify(&tok.surface, schema)
            };
            gs = gs
                .advance(sym, schema)
                .expect("strict decoding follows the grammar");
        }
        out.steps.push(DecodeStep {
            id,
            log_prob: p.ln(),
            distribution: dist,
        });
        let done = tok.is_eos();
        out.tokens.push(tok);
        if done {
            out.truncated = false;
            break;
        }
        prev = Example::embedding_row(id, vocab.len());
        s = st.s;
        c = st.c;
        ctx = st.ctx;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub parsed: Delinearized,
    pub output: DecodeOutput,
}

/// Decode one instance with a checkpoint and parse the result. Drug names
/// go through hyphen repair during parsing.
pub fn predict(
    inst: &Instance,
    ckpt: &Checkpoint,
    vocab: &Vocab,
    strict: bool,
) -> Result<Prediction, ModelError> {
    ckpt.check_vocab(vocab)?;
    let schema = ckpt.task.schema;
    let input = window_tokens(inst, ckpt.task.window);
    let (ex, mask) = build_example(vocab, &input, &[], &schema, &inst.doc_id)?;
    let output = decode(
        &ckpt.params,
        &ex,
        &mask,
        vocab,
        &schema,
        strict,
        ckpt.config.max_decode_steps,
    );
    let parsed = delinearize(&output.tokens, inst, &schema);
    Ok(Prediction { parsed, output })
}
