//! Decoding constraints: the copy mask (what may be emitted at all) and an
//! optional grammar automaton (what may be emitted next).
//!
//! Masking works on token types. An input token missing from the vocabulary
//! gets an extended id `vocab.len() + k`, so the decoder can still copy it
//! and `[UNK]` is never an output.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::Label;
use crate::linearizer::{DiagCode, Diagnostic, Mode, Schema};
use crate::tokenizer::{Token, TokenKind, Vocab, EOS, NER, UNK_ID};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyMask {
    /// Every id the decoder may emit.
    pub allowed: BTreeSet<u32>,
    specials: BTreeSet<u32>,
    copyable: BTreeMap<u32, String>,
    by_surface: BTreeMap<String, u32>,
    vocab_len: u32,
}

impl CopyMask {
    pub fn eos_id(&self) -> u32 {
        0
    }

    /// Schema structural ids plus EOS.
    pub fn special_ids(&self) -> &BTreeSet<u32> {
        &self.specials
    }

    /// Ids that can be produced by copying from the input.
    pub fn copy_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.copyable.keys().copied()
    }

    pub fn is_copyable(&self, id: u32) -> bool {
        self.copyable.contains_key(&id)
    }

    pub fn id_of(&self, surface: &str) -> Option<u32> {
        self.by_surface.get(surface).copied()
    }

    pub fn surface_of<'a>(&'a self, id: u32, vocab: &'a Vocab) -> Option<&'a str> {
        if let Some(s) = self.copyable.get(&id) {
            return Some(s);
        }
        if self.specials.contains(&id) {
            return vocab.token(id);
        }
        None
    }

    pub fn is_extended(&self, id: u32) -> bool {
        id >= self.vocab_len
    }

    /// Token for an emitted id.
    pub fn token(&self, id: u32, vocab: &Vocab) -> Option<Token> {
        if self.specials.contains(&id) {
            return vocab.token(id).map(Token::special);
        }
        self.copyable.get(&id).map(|s| {
            if s.chars().any(char::is_alphanumeric) {
                Token::word(s.clone())
            } else {
                Token::punct(s.clone())
            }
        })
    }
}

/// Whether an input token can be copied under `schema`. `[SEP]` and tokens
/// that act as schema separators are not copy targets.
pub fn is_copy_source(tok: &Token, schema: &Schema) -> bool {
    tok.kind != TokenKind::Special && !schema.is_special(&tok.surface)
}

/// Distinct input token types plus the schema's structural tokens and EOS.
pub fn copy_mask(input: &[Token], schema: &Schema, vocab: &Vocab) -> CopyMask {
    let vocab_len = vocab.len() as u32;
    let mut specials = BTreeSet::new();
    specials.insert(vocab.get(EOS).expect("reserved"));
    for s in schema.special_surfaces() {
        specials.insert(vocab.get(s).expect("reserved"));
    }
    let mut copyable = BTreeMap::new();
    let mut by_surface = BTreeMap::new();
    let mut next_ext = vocab_len;
    for tok in input.iter().filter(|t| is_copy_source(t, schema)) {
        if by_surface.contains_key(&tok.surface) {
            continue;
        }
        let id = match vocab.get(&tok.surface) {
            Some(id) if id != UNK_ID => id,
            _ => {
                let id = next_ext;
                next_ext += 1;
                id
            }
        };
        copyable.insert(id, tok.surface.clone());
        by_surface.insert(tok.surface.clone(), id);
    }
    for &id in &specials {
        by_surface.insert(vocab.token(id).unwrap().to_string(), id);
    }
    let allowed = specials
        .iter()
        .copied()
        .chain(copyable.keys().copied())
        .collect();
    CopyMask {
        allowed,
        specials,
        copyable,
        by_surface,
        vocab_len,
    }
}

/// Position in the output grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GrammarState {
    /// Nothing emitted yet (flat schemas).
    Start,
    /// Inside a drug name; `completed` drugs already closed in this relation.
    InDrug {
        completed: usize,
    },
    /// Right after a separator.
    AfterSep {
        completed: usize,
    },
    /// Right after a relation label.
    AfterLabel,
    /// NER schema: inside the entity list.
    EntityStart,
    InEntity,
    AfterEntitySep,
    /// NER schema: after `@NER@` or after a relation label.
    AfterNer,
    Done,
}

/// Coarse class of an output symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symbol {
    Word,
    Sep,
    Ner,
    Label,
    Eos,
    /// A structural token that this schema never allows.
    Foreign,
}

pub fn classify(surface: &str, schema: &Schema) -> Symbol {
    if surface == EOS {
        Symbol::Eos
    } else if surface == schema.entity_sep().surface() {
        Symbol::Sep
    } else if surface == NER {
        if schema.mode() == Mode::NerExtended {
            Symbol::Ner
        } else {
            Symbol::Foreign
        }
    } else if let Some(l) = Label::from_token(surface) {
        if schema.labels().contains(&l) {
            Symbol::Label
        } else {
            Symbol::Foreign
        }
    } else if schema.is_special(surface) {
        Symbol::Foreign
    } else {
        Symbol::Word
    }
}

impl GrammarState {
    pub fn start(schema: &Schema) -> Self {
        if schema.mode() == Mode::NerExtended {
            GrammarState::EntityStart
        } else {
            GrammarState::Start
        }
    }

    /// Symbols legal in this state.
    pub fn legal(self, schema: &Schema) -> &'static [Symbol] {
        use GrammarState::*;
        use Symbol::*;
        let ner = schema.mode() == Mode::NerExtended;
        match self {
            Start | EntityStart | AfterEntitySep => &[Word],
            InEntity => &[Word, Sep, Ner],
            InDrug { completed } if ner => {
                if completed >= 1 {
                    &[Word, Sep, Label]
                } else {
                    &[Word, Sep]
                }
            }
            InDrug { .. } => &[Word, Sep],
            AfterSep { .. } if ner => &[Word],
            AfterSep { .. } => &[Word, Label],
            AfterLabel | AfterNer => &[Word, Eos],
            Done => &[],
        }
    }

    /// Next state, or `None` if `sym` is illegal here.
    pub fn advance(self, sym: Symbol, schema: &Schema) -> Option<Self> {
        use GrammarState::*;
        if !self.legal(schema).contains(&sym) {
            return None;
        }
        let ner = schema.mode() == Mode::NerExtended;
        Some(match (self, sym) {
            (_, Symbol::Eos) => Done,
            (Start | AfterLabel, Symbol::Word) => InDrug { completed: 0 },
            (AfterNer, Symbol::Word) => InDrug { completed: 0 },
            (InDrug { completed }, Symbol::Word) => InDrug { completed },
            (InDrug { completed }, Symbol::Sep) => AfterSep {
                completed: completed + 1,
            },
            (AfterSep { completed }, Symbol::Word) => InDrug { completed },
            (InDrug { .. } | AfterSep { .. }, Symbol::Label) => {
                if ner {
                    AfterNer
                } else {
                    AfterLabel
                }
            }
            (EntityStart | AfterEntitySep | InEntity, Symbol::Word) => InEntity,
            (InEntity, Symbol::Sep) => AfterEntitySep,
            (InEntity, Symbol::Ner) => AfterNer,
            _ => return None,
        })
    }

    /// Whether the sequence may end here.
    pub fn accepting(self) -> bool {
        matches!(
            self,
            GrammarState::AfterLabel | GrammarState::AfterNer | GrammarState::Done
        )
    }
}

/// Ids the decoder may emit next. Without `strict` this is the whole mask.
pub fn next_allowed(
    gs: GrammarState,
    mask: &CopyMask,
    schema: &Schema,
    vocab: &Vocab,
    strict: bool,
) -> BTreeSet<u32> {
    if !strict {
        return mask.allowed.clone();
    }
    let legal = gs.legal(schema);
    mask.allowed
        .iter()
        .copied()
        .filter(|&id| {
            let sym = if mask.is_copyable(id) {
                Symbol::Word
            } else {
                classify(vocab.token(id).unwrap_or(""), schema)
            };
            legal.contains(&sym)
        })
        .collect()
}

/// Check a sequence against the copy contract and the schema grammar.
/// A sequence without a final EOS is read as if it ended in one.
pub fn validate_sequence(seq: &[Token], input: &[Token], schema: &Schema) -> Vec<Diagnostic> {
    let sources: BTreeSet<&str> = input
        .iter()
        .filter(|t| is_copy_source(t, schema))
        .map(|t| t.surface.as_str())
        .collect();
    let mut out = Vec::new();
    let mut state = GrammarState::start(schema);
    let mut fragment_start = 0;
    let mut consumed = 0;
    for (pos, tok) in seq.iter().enumerate() {
        let sym = classify(&tok.surface, schema);
        if sym == Symbol::Word && !sources.contains(tok.surface.as_str()) {
            out.push(Diagnostic::new(DiagCode::CopyViolation, pos));
        }
        match state.advance(sym, schema) {
            Some(next) => {
                if matches!(
                    state,
                    GrammarState::Start
                        | GrammarState::AfterLabel
                        | GrammarState::AfterNer
                        | GrammarState::EntityStart
                ) {
                    fragment_start = pos;
                }
                state = next;
                consumed += 1;
            }
            None => out.push(Diagnostic::new(DiagCode::UnexpectedToken, pos)),
        }
    }
    if consumed == 0 {
        out.push(Diagnostic::new(DiagCode::EmptyOutput, 0));
    } else if !state.accepting() {
        out.push(Diagnostic::new(
            DiagCode::UnterminatedCombination,
            fragment_start,
        ));
    }
    out.sort();
    out
}
