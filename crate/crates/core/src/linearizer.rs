//! Relation sets to and from flat token sequences.
//!
//! Flat schemas emit each combination as its drugs, each followed by the
//! entity separator, then the label token:
//!
//! ```text
//! sorafenib @DRUG@ curcumin @DRUG@ @POS@
//! ```
//!
//! The NER-extended schema first lists every drug mentioned in the sentence,
//! `;`-separated and closed by `@NER@`, then the POS/COMB relations:
//!
//! ```text
//! Dexamethasone ; piroxicam ; myo - inositol @NER@ Dexamethasone ; piroxicam @POS@
//! ```

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Instance, Label, Relation, RelationSet};
use crate::tokenizer::{
    detokenize, is_marker, join_surfaces, tokenize, Token, DRUG_SEP, NER, SEMI_SEP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ThreeWay,
    TwoWayPos,
    TwoWayAny,
    NerExtended,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::ThreeWay,
        Mode::TwoWayPos,
        Mode::TwoWayAny,
        Mode::NerExtended,
    ];

    /// Labels that may appear as relation labels in a sequence.
    pub fn labels(self) -> &'static [Label] {
        match self {
            Mode::ThreeWay => &[Label::Pos, Label::Comb, Label::Nocomb],
            Mode::TwoWayPos => &[Label::Pos, Label::NonPos],
            Mode::TwoWayAny => &[Label::AnyComb, Label::Nocomb],
            Mode::NerExtended => &[Label::Pos, Label::Comb],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::ThreeWay => "three_way",
            Mode::TwoWayPos => "two_way_pos",
            Mode::TwoWayAny => "two_way_any",
            Mode::NerExtended => "ner_extended",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown schema '{s}'"))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntitySep {
    /// `@DRUG@`
    Drug,
    /// `;`
    Semicolon,
}

impl EntitySep {
    pub fn surface(self) -> &'static str {
        match self {
            EntitySep::Drug => DRUG_SEP,
            EntitySep::Semicolon => SEMI_SEP,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntitySep::Drug => "drug",
            EntitySep::Semicolon => "semicolon",
        }
    }
}

impl FromStr for EntitySep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drug" => Ok(EntitySep::Drug),
            "semicolon" => Ok(EntitySep::Semicolon),
            other => Err(format!("unknown separator '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    /// Relation and drug order as given by the annotation.
    #[default]
    Dataset,
    /// Drugs by span position, combinations lexicographically by their
    /// sorted span positions.
    LeftToRight,
}

impl Ordering {
    pub fn name(self) -> &'static str {
        match self {
            Ordering::Dataset => "dataset",
            Ordering::LeftToRight => "left_to_right",
        }
    }
}

impl FromStr for Ordering {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dataset" => Ok(Ordering::Dataset),
            "left_to_right" => Ok(Ordering::LeftToRight),
            other => Err(format!("unknown ordering '{other}'")),
        }
    }
}

/// A linearization configuration. The NER-extended mode always uses `;`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Schema {
    mode: Mode,
    sep: EntitySep,
    ordering: Ordering,
}

impl Default for Schema {
    fn default() -> Self {
        Self::new(Mode::ThreeWay, EntitySep::Drug, Ordering::Dataset)
    }
}

impl Schema {
    pub fn new(mode: Mode, sep: EntitySep, ordering: Ordering) -> Self {
        let sep = if mode == Mode::NerExtended {
            EntitySep::Semicolon
        } else {
            sep
        };
        Self {
            mode,
            sep,
            ordering,
        }
    }

    pub fn three_way() -> Self {
        Self::default()
    }

    pub fn ner_extended() -> Self {
        Self::new(Mode::NerExtended, EntitySep::Semicolon, Ordering::Dataset)
    }

    pub fn with_ordering(self, ordering: Ordering) -> Self {
        Self::new(self.mode, self.sep, ordering)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn entity_sep(&self) -> EntitySep {
        self.sep
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    pub fn labels(&self) -> &'static [Label] {
        self.mode.labels()
    }

    /// Structural tokens the decoder may emit under this schema, excluding EOS.
    pub fn special_surfaces(&self) -> Vec<&'static str> {
        let mut v = vec![self.sep.surface()];
        if self.mode == Mode::NerExtended {
            v.push(NER);
        }
        v.extend(self.labels().iter().map(|l| l.token()));
        v
    }

    /// Whether `surface` plays a structural role under this schema.
    pub fn is_special(&self, surface: &str) -> bool {
        is_marker(surface) || surface == self.sep.surface()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiagCode {
    UnterminatedCombination,
    CombinationTooSmall,
    UnknownDrugString,
    DuplicateDrugInCombination,
    DuplicateCombination,
    EmptyOutput,
    CopyViolation,
    /// A token that the schema grammar does not allow at this point.
    UnexpectedToken,
}

/// A problem found while reading a sequence. `position` is a token index;
/// for an empty sequence `EmptyOutput` is reported at 0. Orders by position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Diagnostic {
    pub position: usize,
    pub code: DiagCode,
}

impl Diagnostic {
    pub fn new(code: DiagCode, position: usize) -> Self {
        Self { code, position }
    }
}

/// A relation at the string level: the drug names carry no offsets.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NamedRelation {
    pub drugs: BTreeSet<String>,
    pub label: Label,
}

impl NamedRelation {
    pub fn new<S: Into<String>>(drugs: impl IntoIterator<Item = S>, label: Label) -> Self {
        Self {
            drugs: drugs.into_iter().map(Into::into).collect(),
            label,
        }
    }
}

pub type NamedRelations = BTreeSet<NamedRelation>;

/// Collapse every ` - ` in `s` to `-` when the collapsed form occurs in
/// `sentence`. The fully collapsed string is tried first, then each hyphen
/// on its own using the words directly around it.
pub fn postprocess_hyphens(s: &str, sentence: &str) -> String {
    const SPACED: &str = " - ";
    if !s.contains(SPACED) {
        return s.to_string();
    }
    let collapsed = s.replace(SPACED, "-");
    if sentence.contains(&collapsed) {
        return collapsed;
    }
    let mut parts = s.split(SPACED);
    let mut out = parts.next().unwrap_or("").to_string();
    for next in parts {
        let left = out.rsplit(' ').next().unwrap_or("");
        let right = next.split(' ').next().unwrap_or("");
        let candidate = format!("{left}-{right}");
        if !left.is_empty() && !right.is_empty() && sentence.contains(&candidate) {
            out.push('-');
        } else {
            out.push_str(SPACED);
        }
        out.push_str(next);
    }
    out
}

/// Evaluation-level name of a drug mention: retokenized and hyphen-repaired
/// against the sentence, so gold and generated names compare equal.
pub fn normalize_name(text: &str, sentence: &str) -> String {
    postprocess_hyphens(&detokenize(&tokenize(text)), sentence)
}

pub fn relabel_label(label: Label, mode: Mode) -> Label {
    match (mode, label) {
        (Mode::TwoWayPos, Label::Comb | Label::Nocomb) => Label::NonPos,
        (Mode::TwoWayAny, Label::Pos | Label::Comb) => Label::AnyComb,
        _ => label,
    }
}

/// Map gold labels into `mode`'s label space. Relations that end up with the
/// same drug set and label are merged, keeping the first.
pub fn relabel(rels: &RelationSet, mode: Mode) -> RelationSet {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rels.len());
    for r in rels {
        let label = relabel_label(r.label, mode);
        if seen.insert((r.drug_set(), label)) {
            out.push(Relation::new(r.drugs.clone(), label));
        }
    }
    out
}

/// Gold relations of `inst` at the string level, labels mapped into `mode`.
pub fn named_relations(inst: &Instance, rels: &RelationSet, mode: Mode) -> NamedRelations {
    let sentence = inst.target();
    rels.iter()
        .map(|r| {
            NamedRelation::new(
                r.drugs
                    .iter()
                    .map(|&i| normalize_name(&inst.drugs[i].text, sentence)),
                relabel_label(r.label, mode),
            )
        })
        .collect()
}

/// Every drug name of the instance, normalized.
pub fn entity_names(inst: &Instance) -> BTreeSet<String> {
    let sentence = inst.target();
    inst.drugs
        .iter()
        .map(|d| normalize_name(&d.text, sentence))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinearizeError {
    #[error("label {label} is not part of the {mode} schema")]
    IncompatibleLabel { label: Label, mode: Mode },
    #[error("drug index {index} has no span in instance {doc_id}")]
    MissingSpan { doc_id: String, index: usize },
}

/// Relations in output order for `policy`.
pub fn order_combinations(
    rels: &RelationSet,
    inst: &Instance,
    policy: Ordering,
) -> Result<Vec<Relation>, LinearizeError> {
    match policy {
        Ordering::Dataset => Ok(rels.clone()),
        Ordering::LeftToRight => {
            let span = |i: usize| {
                inst.drugs.get(i).map(|d| (d.start, d.end)).ok_or_else(|| {
                    LinearizeError::MissingSpan {
                        doc_id: inst.doc_id.clone(),
                        index: i,
                    }
                })
            };
            let mut keyed = Vec::with_capacity(rels.len());
            for r in rels {
                let mut drugs = r.drugs.clone();
                let mut keys = Vec::with_capacity(drugs.len());
                for &i in &drugs {
                    keys.push((span(i)?, i));
                }
                keys.sort();
                drugs = keys.iter().map(|k| k.1).collect();
                let key: Vec<(usize, usize)> = keys.iter().map(|k| k.0).collect();
                keyed.push((key, Relation::new(drugs, r.label)));
            }
            keyed.sort_by(|a, b| a.0.cmp(&b.0));
            Ok(keyed.into_iter().map(|(_, r)| r).collect())
        }
    }
}

fn push_drug(out: &mut Vec<Token>, text: &str) {
    out.extend(tokenize(text));
}

/// Names of the drugs of `rel` in order, dropping repeats of the same name.
fn unique_names<'a>(inst: &'a Instance, drugs: &[usize]) -> Vec<(String, &'a str)> {
    let sentence = inst.target();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &i in drugs {
        let text = inst.drugs[i].text.as_str();
        let name = normalize_name(text, sentence);
        if seen.insert(name.clone()) {
            out.push((name, text));
        }
    }
    out
}

/// Serialize `rels` (already in `schema`'s label space) for `inst`. The
/// result ends with EOS.
pub fn linearize(
    rels: &RelationSet,
    inst: &Instance,
    schema: &Schema,
) -> Result<Vec<Token>, LinearizeError> {
    let mode = schema.mode();
    for r in rels {
        let ok = schema.labels().contains(&r.label)
            || (mode == Mode::NerExtended && r.label == Label::Nocomb);
        if !ok {
            return Err(LinearizeError::IncompatibleLabel {
                label: r.label,
                mode,
            });
        }
    }
    let ordered = order_combinations(rels, inst, schema.ordering())?;
    let sep = Token::special(schema.entity_sep().surface());
    let mut out = Vec::new();
    let mut emitted = HashSet::new();

    if mode == Mode::NerExtended {
        let mut all: Vec<usize> = (0..inst.drugs.len()).collect();
        if schema.ordering() == Ordering::LeftToRight {
            all.sort_by_key(|&i| (inst.drugs[i].start, inst.drugs[i].end));
        }
        for (k, (_, text)) in unique_names(inst, &all).into_iter().enumerate() {
            if k > 0 {
                out.push(sep.clone());
            }
            push_drug(&mut out, text);
        }
        out.push(Token::special(NER));
        for r in ordered.iter().filter(|r| r.label != Label::Nocomb) {
            let names = unique_names(inst, &r.drugs);
            let key: BTreeSet<String> = names.iter().map(|n| n.0.clone()).collect();
            if !emitted.insert((key, r.label)) {
                continue;
            }
            for (k, (_, text)) in names.iter().enumerate() {
                if k > 0 {
                    out.push(sep.clone());
                }
                push_drug(&mut out, text);
            }
            out.push(Token::special(r.label.token()));
        }
    } else {
        for r in &ordered {
            let names = unique_names(inst, &r.drugs);
            let key: BTreeSet<String> = names.iter().map(|n| n.0.clone()).collect();
            if !emitted.insert((key, r.label)) {
                continue;
            }
            for (_, text) in &names {
                push_drug(&mut out, text);
                out.push(sep.clone());
            }
            out.push(Token::special(r.label.token()));
        }
    }
    out.push(Token::eos());
    Ok(out)
}

/// Linearize the instance's own gold relations after relabeling them into
/// the schema's label space.
pub fn linearize_gold(inst: &Instance, schema: &Schema) -> Result<Vec<Token>, LinearizeError> {
    linearize(&relabel(&inst.gold, schema.mode()), inst, schema)
}

/// Space-joined surfaces without the trailing EOS.
pub fn to_line(tokens: &[Token]) -> String {
    join_surfaces(
        tokens
            .iter()
            .filter(|t| !t.is_eos())
            .map(|t| t.surface.as_str()),
    )
}

/// Read a stored sequence line back into tokens.
pub fn from_line(line: &str, schema: &Schema) -> Vec<Token> {
    line.split_whitespace()
        .map(|s| {
            if schema.is_special(s) {
                Token::special(s)
            } else if s.chars().any(char::is_alphanumeric) {
                Token::word(s)
            } else {
                Token::punct(s)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Delinearized {
    pub relations: NamedRelations,
    /// Entity list, for the NER-extended schema only.
    pub entities: Option<BTreeSet<String>>,
    pub diagnostics: Vec<Diagnostic>,
}

struct Reader<'a> {
    sentence: &'a str,
    sentence_tokens: Vec<String>,
    out: Delinearized,
}

impl<'a> Reader<'a> {
    fn new(inst: &'a Instance) -> Self {
        let sentence = inst.target();
        Self {
            sentence,
            sentence_tokens: tokenize(sentence).into_iter().map(|t| t.surface).collect(),
            out: Delinearized::default(),
        }
    }

    fn diag(&mut self, code: DiagCode, position: usize) {
        self.out.diagnostics.push(Diagnostic::new(code, position));
    }

    fn occurs(&self, drug: &[&str]) -> bool {
        !drug.is_empty()
            && self
                .sentence_tokens
                .windows(drug.len())
                .any(|w| w.iter().zip(drug).all(|(a, b)| a == b))
    }

    /// Resolve drug token groups to names, reporting unknown strings and
    /// repeats.
    fn names(&mut self, drugs: &[(usize, Vec<&str>)]) -> Vec<String> {
        let mut names = Vec::new();
        for (pos, toks) in drugs {
            if !self.occurs(toks) {
                self.diag(DiagCode::UnknownDrugString, *pos);
                continue;
            }
            let name = postprocess_hyphens(&join_surfaces(toks.iter().copied()), self.sentence);
            if names.contains(&name) {
                self.diag(DiagCode::DuplicateDrugInCombination, *pos);
            } else {
                names.push(name);
            }
        }
        names
    }

    fn close_relation(&mut self, drugs: &[(usize, Vec<&str>)], label: Label, label_pos: usize) {
        let names = self.names(drugs);
        if names.len() < 2 {
            self.diag(DiagCode::CombinationTooSmall, label_pos);
            return;
        }
        if !self.out.relations.insert(NamedRelation::new(names, label)) {
            self.diag(DiagCode::DuplicateCombination, label_pos);
        }
    }
}

/// Parse a generated sequence back into relations. Never fails: anything the
/// grammar does not allow is dropped and reported as a diagnostic. Drug
/// strings must occur as contiguous tokens of the target sentence.
pub fn delinearize(seq: &[Token], inst: &Instance, schema: &Schema) -> Delinearized {
    let mut r = Reader::new(inst);
    let end = seq.iter().position(Token::is_eos).unwrap_or(seq.len());
    if end == 0 {
        r.diag(DiagCode::EmptyOutput, 0);
        if schema.mode() == Mode::NerExtended {
            r.out.entities = Some(BTreeSet::new());
        }
        return r.out;
    }
    if let Some(p) = (end + 1..seq.len()).find(|&i| !seq[i].is_eos()) {
        r.diag(DiagCode::UnexpectedToken, p);
    }
    let body = &seq[..end];
    let sep = schema.entity_sep().surface();
    let ner = schema.mode() == Mode::NerExtended;

    let mut pending: Vec<&str> = Vec::new();
    let mut pending_pos = 0;
    let mut drugs: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut in_entities = ner;
    let mut saw_ner = false;
    let mut saw_label_after_ner = false;
    let mut ner_pos = 0;
    let mut entity_names: Vec<String> = Vec::new();

    for (pos, tok) in body.iter().enumerate() {
        let s = tok.surface.as_str();
        if s == sep {
            if pending.is_empty() {
                r.diag(DiagCode::UnexpectedToken, pos);
            } else {
                drugs.push((pending_pos, std::mem::take(&mut pending)));
            }
        } else if ner && s == NER && in_entities {
            if !pending.is_empty() {
                drugs.push((pending_pos, std::mem::take(&mut pending)));
            }
            entity_names = r.names(&drugs);
            drugs.clear();
            in_entities = false;
            saw_ner = true;
            ner_pos = pos;
        } else if let Some(label) = Label::from_token(s) {
            if in_entities || !schema.labels().contains(&label) {
                r.diag(DiagCode::UnexpectedToken, pos);
                continue;
            }
            saw_label_after_ner = true;
            if !pending.is_empty() {
                drugs.push((pending_pos, std::mem::take(&mut pending)));
            }
            let group = std::mem::take(&mut drugs);
            r.close_relation(&group, label, pos);
        } else if schema.is_special(s) {
            r.diag(DiagCode::UnexpectedToken, pos);
        } else {
            if pending.is_empty() {
                pending_pos = pos;
            }
            pending.push(s);
        }
    }

    let dangling = drugs
        .first()
        .map(|d| d.0)
        .or((!pending.is_empty()).then_some(pending_pos));
    if in_entities {
        // entity list never closed by @NER@
        if !pending.is_empty() {
            drugs.push((pending_pos, std::mem::take(&mut pending)));
        }
        if let Some(p) = dangling {
            r.diag(DiagCode::UnterminatedCombination, p);
        }
        entity_names = r.names(&drugs);
    } else if let Some(p) = dangling {
        r.diag(DiagCode::UnterminatedCombination, p);
    }

    if ner {
        if saw_ner && !saw_label_after_ner {
            if entity_names.len() >= 2 {
                r.out
                    .relations
                    .insert(NamedRelation::new(entity_names.clone(), Label::Nocomb));
            } else {
                r.diag(DiagCode::CombinationTooSmall, ner_pos);
            }
        }
        r.out.entities = Some(entity_names.into_iter().collect());
    }
    r.out.diagnostics.sort();
    r.out
}
