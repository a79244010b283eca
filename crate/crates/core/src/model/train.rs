use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{batch_loss_and_grad, Example};
use super::params::{Params, ENCODER_TENSORS};
use super::{build_examples, Checkpoint, ModelConfig, ModelError, Optimizer, Task};
use crate::corpus::Instance;
use crate::tokenizer::Vocab;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Parameter state plus optimizer moments.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: Params,
    pub cfg: ModelConfig,
    pub step: u64,
    m: Option<Params>,
    v: Option<Params>,
}

impl Trainer {
    pub fn new(cfg: ModelConfig, vocab_len: usize) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let params = Params::init(&cfg, vocab_len, &mut rng);
        Ok(Self::from_params(cfg, params))
    }

    pub fn from_params(cfg: ModelConfig, params: Params) -> Self {
        Self {
            params,
            cfg,
            step: 0,
            m: None,
            v: None,
        }
    }

    /// One update on `batch`. Returns the loss before the update.
    pub fn step(&mut self, batch: &[Example]) -> f64 {
        let (loss, mut grad) = batch_loss_and_grad(&self.params, batch);
        if !loss.is_finite() {
            return loss;
        }
        let norm = grad.l2_norm();
        if norm > self.cfg.clip_norm {
            grad.scale(self.cfg.clip_norm / norm);
        }
        self.step += 1;
        match self.cfg.optimizer {
            Optimizer::Sgd => self.sgd(&grad),
            Optimizer::Adam => self.adam(&grad),
        }
        loss
    }

    fn lr(&self, name: &str) -> f64 {
        if ENCODER_TENSORS.contains(&name) {
            self.cfg.encoder_lr
        } else {
            self.cfg.decoder_lr
        }
    }

    fn sgd(&mut self, grad: &Params) {
        let lrs: Vec<f64> = Params::NAMES.iter().map(|n| self.lr(n)).collect();
        for (((_, p), (_, _, g)), lr) in self
            .params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(lrs)
        {
            for (p, g) in p.iter_mut().zip(g) {
                *p -= lr * g;
            }
        }
    }

    fn adam(&mut self, grad: &Params) {
        let lrs: Vec<f64> = Params::NAMES.iter().map(|n| self.lr(n)).collect();
        let m = self.m.get_or_insert_with(|| grad.zeros_like());
        let v = self.v.get_or_insert_with(|| grad.zeros_like());
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        let tensors = self
            .params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(m.tensors_mut())
            .zip(v.tensors_mut())
            .zip(lrs);
        for (((((_, p), (_, _, g)), (_, m)), (_, v)), lr) in tensors {
            for i in 0..p.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Mean per-token training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Fit a model with teacher forcing. The corpus order is reshuffled every
/// epoch from a generator seeded with `cfg.seed`.
pub fn train(
    corpus: &[Instance],
    vocab: &Vocab,
    task: &Task,
    cfg: &ModelConfig,
) -> Result<TrainOutcome, ModelError> {
    train_with(corpus, vocab, task, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, mean loss)` after each epoch.
pub fn train_with(
    corpus: &[Instance],
    vocab: &Vocab,
    task: &Task,
    cfg: &ModelConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let examples = build_examples(corpus, vocab, task)?;
    let mut trainer = Trainer::new(cfg.clone(), vocab.len())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let snapshot = |tr: &Trainer| Checkpoint {
        config: cfg.clone(),
        vocab_hash: vocab.hash(),
        vocab_len: vocab.len(),
        task: *task,
        step: tr.step,
        params: tr.params.clone(),
    };
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let last_good = trainer.params.clone();
        let last_step = trainer.step;
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let n: usize = batch.iter().map(|e| e.targets.len()).sum();
            let loss = trainer.step(&batch);
            if !loss.is_finite() || !trainer.params.all_finite() {
                let mut good = snapshot(&trainer);
                good.params = last_good;
                good.step = last_step;
                return Err(ModelError::Diverged {
                    epoch,
                    last_good: Box::new(good),
                });
            }
            total += loss * n as f64;
            tokens += n;
        }
        let mean = total / tokens.max(1) as f64;
        on_epoch(epoch, mean);
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        checkpoint: snapshot(&trainer),
        epoch_losses,
    })
}
