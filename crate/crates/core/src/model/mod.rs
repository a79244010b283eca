//! Desk-scale encoder-decoder with a copy-restricted output layer.
//!
//! [`train`] fits a [`Checkpoint`] with teacher forcing, [`predict`] decodes
//! greedily under the copy mask and parses the result, and [`grad_check`]
//! compares the hand-written backward pass with central differences.

mod checkpoint;
mod decode;
mod gradcheck;
mod lstm;
mod network;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{copy_mask, is_copy_source, CopyMask};
use crate::corpus::{Instance, WindowConfig};
use crate::linearizer::{LinearizeError, Schema};
use crate::tokenizer::{Token, Vocab};

pub use checkpoint::{Checkpoint, CheckpointError, FORMAT_VERSION};
pub use decode::{decode, predict, DecodeOutput, DecodeStep, Prediction};
pub use gradcheck::{grad_check, GradCheckReport};
pub use network::{batch_loss, batch_loss_and_grad, Example};
pub use params::{Params, ENCODER_TENSORS};
pub use train::{train, train_with, TrainOutcome, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Gradient descent with the configured learning rates.
    #[default]
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder_lr: f64,
    pub decoder_lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub max_decode_steps: usize,
    pub optimizer: Optimizer,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            hidden_dim: 128,
            encoder_lr: 0.5,
            decoder_lr: 0.5,
            epochs: 50,
            seed: 0,
            batch_size: 8,
            clip_norm: 5.0,
            max_decode_steps: 128,
            optimizer: Optimizer::Sgd,
        }
    }
}

impl ModelConfig {
    /// A small configuration that trains in seconds on the synthetic corpus.
    pub fn toy() -> Self {
        Self {
            embed_dim: 32,
            hidden_dim: 64,
            epochs: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("dimensions must be positive");
        }
        if !(self.encoder_lr > 0.0 && self.decoder_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.max_decode_steps == 0 {
            return bad("epochs, batch_size and max_decode_steps must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

/// Linearization and input windowing a checkpoint was trained for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Task {
    pub schema: Schema,
    pub window: WindowConfig,
}

impl Task {
    pub fn new(schema: Schema, n_ctx: usize) -> Self {
        Self {
            schema,
            window: WindowConfig::new(n_ctx),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("empty training corpus")]
    EmptyCorpus,
    #[error("{doc_id}: target token '{token}' is outside the copy mask")]
    TargetOutsideMask { doc_id: String, token: String },
    #[error("{doc_id}: {source}")]
    Linearize {
        doc_id: String,
        source: LinearizeError,
    },
    #[error("vocabulary hash {found} does not match checkpoint {expected}")]
    VocabMismatch { expected: String, found: String },
    #[error("vocabulary has {found} entries, checkpoint expects {expected}")]
    VocabSize { expected: usize, found: usize },
    #[error("loss diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<Checkpoint>,
    },
}

/// Encode one input/target pair. `targets` may be empty for decoding.
pub fn build_example(
    vocab: &Vocab,
    input: &[Token],
    targets: &[Token],
    schema: &Schema,
    doc_id: &str,
) -> Result<(Example, CopyMask), ModelError> {
    let mask = copy_mask(input, schema, vocab);
    let vl = vocab.len();
    let mut copy_pos = Vec::new();
    let mut copy_type = Vec::new();
    for (j, tok) in input.iter().enumerate() {
        if is_copy_source(tok, schema) {
            copy_pos.push(j);
            copy_type.push(mask.id_of(&tok.surface).expect("copy source in mask"));
        }
    }
    let mut ids = Vec::with_capacity(targets.len());
    for t in targets {
        match mask.id_of(&t.surface) {
            Some(id) if mask.allowed.contains(&id) => ids.push(id),
            _ => {
                return Err(ModelError::TargetOutsideMask {
                    doc_id: doc_id.to_string(),
                    token: t.surface.clone(),
                })
            }
        }
    }
    let mut prev_rows = Vec::with_capacity(ids.len());
    let mut prev = network::bos_row();
    for &id in &ids {
        prev_rows.push(prev);
        prev = Example::embedding_row(id, vl);
    }
    let ex = Example {
        input_ids: vocab.encode(input),
        copy_pos,
        copy_type,
        special_ids: mask.special_ids().iter().copied().collect(),
        targets: ids,
        prev_rows,
    };
    Ok((ex, mask))
}

/// Teacher-forcing examples for a whole corpus.
pub fn build_examples(
    corpus: &[Instance],
    vocab: &Vocab,
    task: &Task,
) -> Result<Vec<Example>, ModelError> {
    corpus
        .iter()
        .map(|inst| {
            let input = crate::tokenizer::window_tokens(inst, task.window);
            let target =
                crate::linearizer::linearize_gold(inst, &task.schema).map_err(|source| {
                    ModelError::Linearize {
                        doc_id: inst.doc_id.clone(),
                        source,
                    }
                })?;
            build_example(vocab, &input, &target, &task.schema, &inst.doc_id).map(|(ex, _)| ex)
        })
        .collect()
}

/// Mean per-target-token negative log-likelihood of `batch` under `params`.
pub fn forward_loss(
    batch: &[(Vec<Token>, Vec<Token>)],
    params: &Params,
    vocab: &Vocab,
    schema: &Schema,
) -> Result<f64, ModelError> {
    let examples = batch
        .iter()
        .enumerate()
        .map(|(i, (inp, tgt))| {
            build_example(vocab, inp, tgt, schema, &format!("batch[{i}]")).map(|(ex, _)| ex)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(batch_loss(params, &examples))
}

#[cfg(test)]
mod tests;
