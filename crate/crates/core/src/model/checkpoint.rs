//! Binary checkpoint container.
//!
//! Layout: magic `CMBX`, format version (u32 LE), header length (u32 LE),
//! JSON header, then one block per tensor: name length (u32 LE), name,
//! rank (u32 LE), dims (u64 LE each), values (f64 LE).

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelConfig, ModelError, Params, Task};
use crate::tokenizer::Vocab;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CMBX";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab_hash: String,
    pub vocab_len: usize,
    pub task: Task,
    pub step: u64,
    pub params: Params,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("bad checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("tensor '{0}' is missing or out of order")]
    Tensor(String),
    #[error("tensor '{name}' has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_hash: String,
    vocab_len: usize,
    task: Task,
    step: u64,
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.0.len() < n {
            return Err(CheckpointError::Truncated);
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<(), ModelError> {
        let found = vocab.hash();
        if found != self.vocab_hash {
            return Err(ModelError::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found,
            });
        }
        if vocab.len() != self.vocab_len {
            return Err(ModelError::VocabSize {
                expected: self.vocab_len,
                found: vocab.len(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            vocab_hash: self.vocab_hash.clone(),
            vocab_len: self.vocab_len,
            task: self.task,
            step: self.step,
        })
        .expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + self.params.n_params() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for (name, shape, data) in self.params.tensors() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut cur = Cursor(bytes);
        if cur.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let hlen = cur.u32()? as usize;
        let header: Header = serde_json::from_slice(cur.take(hlen)?)?;
        header
            .config
            .validate()
            .map_err(|e| CheckpointError::Header(serde::de::Error::custom(e.to_string())))?;
        let mut params = Params::zeros(&header.config, header.vocab_len);
        let expected: Vec<(&str, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        for ((name, dst), (_, shape)) in params.tensors_mut().into_iter().zip(expected) {
            let nlen = cur.u32()? as usize;
            if cur.take(nlen)? != name.as_bytes() {
                return Err(CheckpointError::Tensor(name.to_string()));
            }
            let rank = cur.u32()? as usize;
            let found = (0..rank)
                .map(|_| cur.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            if found != shape {
                return Err(CheckpointError::Shape {
                    name: name.to_string(),
                    expected: shape,
                    found,
                });
            }
            let raw = cur.take(dst.len() * 8)?;
            for (v, chunk) in dst.iter_mut().zip(raw.chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        if !cur.0.is_empty() {
            return Err(CheckpointError::Tensor("<trailing data>".into()));
        }
        Ok(Self {
            config: header.config,
            vocab_hash: header.vocab_hash,
            vocab_len: header.vocab_len,
            task: header.task,
            step: header.step,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let config = ModelConfig {
            embed_dim: 3,
            hidden_dim: 4,
            ..ModelConfig::default()
        };
        let params = Params::init(&config, 17, &mut ChaCha8Rng::seed_from_u64(1));
        Checkpoint {
            config,
            vocab_hash: "abc".into(),
            vocab_len: 17,
            task: Task::default(),
            step: 42,
            params,
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 1]),
            Err(CheckpointError::Truncated)
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::BadMagic)
        ));
        let mut bad = bytes;
        bad[4] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&bad),
            Err(CheckpointError::Version(9))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }
}
