//! Whitespace/punctuation tokenization and the shared id space.
//!
//! Hyphens always become their own token, so `5-fluorouracil` is copied by
//! the decoder as `5 - fluorouracil` and has to be repaired afterwards
//! (see [`crate::linearizer::postprocess_hyphens`]).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{window_bounds, Instance, WindowConfig, SEP};

pub const EOS: &str = "[EOS]";
pub const UNK: &str = "[UNK]";
pub const DRUG_SEP: &str = "@DRUG@";
pub const SEMI_SEP: &str = ";";
pub const NER: &str = "@NER@";

/// Reserved id block, in id order. `;` is reserved because it doubles as a
/// separator under the semicolon schemas, but `tokenize` still yields it as
/// ordinary punctuation.
pub const RESERVED: [&str; 10] = [
    EOS,
    SEP,
    DRUG_SEP,
    SEMI_SEP,
    NER,
    "@POS@",
    "@COMB@",
    "@NOCOMB@",
    "@NON-POS@",
    "@ANY-COMB@",
];

pub const UNK_ID: u32 = RESERVED.len() as u32;

/// Markers that `tokenize` can never produce.
pub fn is_marker(surface: &str) -> bool {
    surface != SEMI_SEP && RESERVED.contains(&surface)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Word,
    Punct,
    Special,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub kind: TokenKind,
}

impl Token {
    pub fn word(s: impl Into<String>) -> Self {
        Self {
            surface: s.into(),
            kind: TokenKind::Word,
        }
    }

    pub fn punct(s: impl Into<String>) -> Self {
        Self {
            surface: s.into(),
            kind: TokenKind::Punct,
        }
    }

    pub fn special(s: impl Into<String>) -> Self {
        Self {
            surface: s.into(),
            kind: TokenKind::Special,
        }
    }

    pub fn eos() -> Self {
        Self::special(EOS)
    }

    pub fn is_eos(&self) -> bool {
        self.kind == TokenKind::Special && self.surface == EOS
    }
}

impl std::fmt::Display for Token {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.surface)
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

fn push_piece(piece: &str, out: &mut Vec<Token>) {
    let chars: Vec<char> = piece.chars().collect();
    let lead = chars.iter().take_while(|c| is_punct(**c)).count();
    if lead == chars.len() {
        out.extend(chars.iter().map(|c| Token::punct(c.to_string())));
        return;
    }
    let trail = chars.iter().rev().take_while(|c| is_punct(**c)).count();
    out.extend(chars[..lead].iter().map(|c| Token::punct(c.to_string())));
    out.push(Token::word(
        chars[lead..chars.len() - trail].iter().collect::<String>(),
    ));
    out.extend(
        chars[chars.len() - trail..]
            .iter()
            .map(|c| Token::punct(c.to_string())),
    );
}

/// Split on whitespace, then split every `-` out as its own token, then peel
/// leading and trailing punctuation off each remaining piece one character at
/// a time. Case is preserved.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut first = true;
        for piece in chunk.split('-') {
            if !first {
                out.push(Token::punct("-"));
            }
            first = false;
            if !piece.is_empty() {
                push_piece(piece, &mut out);
            }
        }
    }
    out
}

pub fn detokenize(tokens: &[Token]) -> String {
    join_surfaces(tokens.iter().map(|t| t.surface.as_str()))
}

pub(crate) fn join_surfaces<'a>(it: impl Iterator<Item = &'a str>) -> String {
    let mut s = String::new();
    for (i, t) in it.enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(t);
    }
    s
}

/// Tokenized model input: the window around the target with `[SEP]` markers
/// injected as special tokens.
pub fn window_tokens(inst: &Instance, cfg: WindowConfig) -> Vec<Token> {
    let (left, t, right) = window_bounds(inst, cfg);
    let mut out = Vec::new();
    for s in &inst.sentences[left] {
        out.extend(tokenize(s));
    }
    out.push(Token::special(SEP));
    out.extend(tokenize(&inst.sentences[t]));
    out.push(Token::special(SEP));
    for s in &inst.sentences[right] {
        out.extend(tokenize(s));
    }
    out
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary file: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary file line {line}: expected reserved token {expected:?}, found {found:?}")]
    BadReserved {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("vocabulary file line {line}: duplicate token {token:?}")]
    Duplicate { line: usize, token: String },
}

/// Bijection between token strings and ids. Ids `0..RESERVED.len()` are the
/// reserved block, followed by `[UNK]`, followed by corpus tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_corpus_tokens(corpus: Vec<String>) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.push(UNK.to_string());
        tokens.extend(corpus);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Encoder-side lookup: unknown tokens map to `[UNK]`.
    pub fn id(&self, token: &str) -> u32 {
        self.get(token).unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(&t.surface)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            writeln!(s, "{t}").unwrap();
        }
        s
    }

    /// Hex SHA-256 of the serialized vocabulary.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let lines: Vec<&str> = text.lines().collect();
        let expected: Vec<&str> = RESERVED.iter().copied().chain([UNK]).collect();
        for (i, exp) in expected.iter().enumerate() {
            let found = lines.get(i).copied().unwrap_or("");
            if found != *exp {
                return Err(VocabError::BadReserved {
                    line: i + 1,
                    expected: exp.to_string(),
                    found: found.to_string(),
                });
            }
        }
        let vocab = Self::from_corpus_tokens(
            lines[expected.len()..]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        );
        if vocab.index.len() != vocab.tokens.len() {
            let mut seen = HashMap::new();
            for (i, t) in vocab.tokens.iter().enumerate() {
                if seen.insert(t.as_str(), i).is_some() {
                    return Err(VocabError::Duplicate {
                        line: i + 1,
                        token: t.clone(),
                    });
                }
            }
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), VocabError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VocabError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Vocabulary over every sentence of every abstract (so any window size is
/// covered). Ids are assigned by descending frequency, ties broken
/// lexicographically.
pub fn build_vocab(corpus: &[Instance]) -> Result<Vocab, VocabError> {
    if corpus.is_empty() {
        return Err(VocabError::EmptyCorpus);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for inst in corpus {
        for s in &inst.sentences {
            for t in tokenize(s) {
                *counts.entry(t.surface).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(t, _)| !RESERVED.contains(&t.as_str()) && t != UNK)
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocab::from_corpus_tokens(
        ranked.into_iter().map(|(t, _)| t).collect(),
    ))
}
