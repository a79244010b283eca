//! Drug-combination relation extraction as sequence generation.
//!
//! Sentences annotated with drug spans and n-ary combination relations are
//! turned into flat target sequences ([`linearizer`]), a small copy-restricted
//! encoder-decoder learns to produce them ([`model`]), and the decoded
//! sequences are parsed back and scored by exact match ([`eval`]).

pub mod cli;
pub mod constraints;
pub mod corpus;
pub mod eval;
pub mod linearizer;
pub mod model;
pub mod synthgen;
pub mod tokenizer;
