//! Sentence-indexed annotated abstracts: data model, JSONL ingestion,
//! validation and context windowing.
//!
//! An [`Instance`] is one abstract (`sentences`), the 1-based index of the
//! sentence that carries the drug mentions, the drug spans inside that
//! sentence, and the gold relation set over those spans.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marker placed on both sides of the target sentence when context is added.
pub const SEP: &str = "[SEP]";

/// A drug mention inside the target sentence. Offsets count Unicode scalar
/// values, end exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DrugSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl DrugSpan {
    pub fn new(start: usize, end: usize, text: impl Into<String>) -> Self {
        Self {
            start,
            end,
            text: text.into(),
        }
    }

    /// Locate the first occurrence of `text` in `sentence` at or after char
    /// offset `from`.
    pub fn find(sentence: &str, text: &str, from: usize) -> Option<Self> {
        let byte_from = sentence
            .char_indices()
            .nth(from)
            .map(|(b, _)| b)
            .unwrap_or(sentence.len());
        let rel = sentence[byte_from..].find(text)?;
        let start = sentence[..byte_from + rel].chars().count();
        Some(Self::new(start, start + text.chars().count(), text))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "POS")]
    Pos,
    #[serde(rename = "COMB")]
    Comb,
    #[serde(rename = "NOCOMB")]
    Nocomb,
    #[serde(rename = "NON_POS")]
    NonPos,
    #[serde(rename = "ANY_COMB")]
    AnyComb,
}

impl Label {
    pub const ALL: [Label; 5] = [
        Label::Pos,
        Label::Comb,
        Label::Nocomb,
        Label::AnyComb,
        Label::NonPos,
    ];

    /// Labels that may appear in an annotated corpus.
    pub fn is_gold(self) -> bool {
        matches!(self, Label::Pos | Label::Comb | Label::Nocomb)
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Pos => "POS",
            Label::Comb => "COMB",
            Label::Nocomb => "NOCOMB",
            Label::NonPos => "NON_POS",
            Label::AnyComb => "ANY_COMB",
        }
    }

    /// The special token that carries this label in a linearized sequence.
    pub fn token(self) -> &'static str {
        match self {
            Label::Pos => "@POS@",
            Label::Comb => "@COMB@",
            Label::Nocomb => "@NOCOMB@",
            Label::NonPos => "@NON-POS@",
            Label::AnyComb => "@ANY-COMB@",
        }
    }

    pub fn from_token(tok: &str) -> Option<Label> {
        Label::ALL.into_iter().find(|l| l.token() == tok)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One drug combination with its label. `drugs` indexes into the owning
/// instance's drug list and keeps the order given by the annotation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    #[serde(rename = "drug_indices")]
    pub drugs: Vec<usize>,
    pub label: Label,
}

impl Relation {
    pub fn new(drugs: impl Into<Vec<usize>>, label: Label) -> Self {
        Self {
            drugs: drugs.into(),
            label,
        }
    }

    pub fn drug_set(&self) -> BTreeSet<usize> {
        self.drugs.iter().copied().collect()
    }
}

/// Relations in annotation order.
pub type RelationSet = Vec<Relation>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub doc_id: String,
    pub sentences: Vec<String>,
    /// 1-based.
    pub target_index: usize,
    pub drugs: Vec<DrugSpan>,
    #[serde(rename = "relations")]
    pub gold: RelationSet,
}

impl Instance {
    /// The sentence carrying the drug mentions. Panics if `target_index` is
    /// out of range; validated instances never are.
    pub fn target(&self) -> &str {
        &self.sentences[self.target_index - 1]
    }

    pub fn target_checked(&self) -> Option<&str> {
        self.target_index
            .checked_sub(1)
            .and_then(|i| self.sentences.get(i))
            .map(String::as_str)
    }

    pub fn drug_names(&self, rel: &Relation) -> Vec<&str> {
        rel.drugs
            .iter()
            .filter_map(|&i| self.drugs.get(i))
            .map(|d| d.text.as_str())
            .collect()
    }

    /// Build an instance by locating each drug string in the target sentence,
    /// left to right. `None` if a string cannot be found.
    pub fn from_mentions(
        doc_id: impl Into<String>,
        sentences: Vec<String>,
        target_index: usize,
        drugs: &[&str],
        gold: RelationSet,
    ) -> Option<Self> {
        let sentence = sentences.get(target_index.checked_sub(1)?)?;
        let mut spans = Vec::with_capacity(drugs.len());
        let mut from = 0;
        for d in drugs {
            let span = DrugSpan::find(sentence, d, from)?;
            from = span.end;
            spans.push(span);
        }
        Some(Self {
            doc_id: doc_id.into(),
            sentences,
            target_index,
            drugs: spans,
            gold,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusDiagnostic {
    TargetIndexOutOfRange {
        target_index: usize,
        n_sentences: usize,
    },
    TooFewDrugs {
        n_drugs: usize,
    },
    SpanOutOfRange {
        drug: usize,
        start: usize,
        end: usize,
        len: usize,
    },
    SpanTextMismatch {
        drug: usize,
        expected: String,
        found: String,
    },
    EmptyRelationSet,
    DrugIndexOutOfRange {
        relation: usize,
        index: usize,
    },
    DuplicateDrugIndex {
        relation: usize,
        index: usize,
    },
    CombinationTooSmall {
        relation: usize,
        size: usize,
    },
    NonGoldLabel {
        relation: usize,
        label: Label,
    },
    NocombNotSingleton,
    NocombNotFullSet {
        relation: usize,
    },
    DuplicateDrugSet {
        relation: usize,
    },
}

impl fmt::Display for CorpusDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use CorpusDiagnostic::*;
        match self {
            TargetIndexOutOfRange {
                target_index,
                n_sentences,
            } => write!(f, "target_index {target_index} outside 1..={n_sentences}"),
            TooFewDrugs { n_drugs } => write!(f, "{n_drugs} drug(s), need at least 2"),
            SpanOutOfRange {
                drug,
                start,
                end,
                len,
            } => write!(
                f,
                "drug {drug}: span [{start}, {end}) outside sentence of length {len}"
            ),
            SpanTextMismatch {
                drug,
                expected,
                found,
            } => write!(
                f,
                "drug {drug}: text {expected:?} but sentence has {found:?}"
            ),
            EmptyRelationSet => f.write_str("no relations"),
            DrugIndexOutOfRange { relation, index } => {
                write!(f, "relation {relation}: drug index {index} out of range")
            }
            DuplicateDrugIndex { relation, index } => {
                write!(f, "relation {relation}: drug index {index} repeated")
            }
            CombinationTooSmall { relation, size } => {
                write!(f, "relation {relation}: {size} drug(s), need at least 2")
            }
            NonGoldLabel { relation, label } => {
                write!(
                    f,
                    "relation {relation}: label {label} not allowed in gold data"
                )
            }
            NocombNotSingleton => f.write_str("NOCOMB relation must be the only relation"),
            NocombNotFullSet { relation } => {
                write!(f, "relation {relation}: NOCOMB must cover every drug")
            }
            DuplicateDrugSet { relation } => {
                write!(f, "relation {relation}: drug set already used")
            }
        }
    }
}

/// Check every structural invariant of an instance. An empty result means the
/// instance is valid.
pub fn validate_instance(inst: &Instance) -> Vec<CorpusDiagnostic> {
    let mut out = Vec::new();
    let target = match inst.target_checked() {
        Some(t) => Some(t),
        None => {
            out.push(CorpusDiagnostic::TargetIndexOutOfRange {
                target_index: inst.target_index,
                n_sentences: inst.sentences.len(),
            });
            None
        }
    };
    if inst.drugs.len() < 2 {
        out.push(CorpusDiagnostic::TooFewDrugs {
            n_drugs: inst.drugs.len(),
        });
    }
    if let Some(sentence) = target {
        let chars: Vec<char> = sentence.chars().collect();
        for (i, d) in inst.drugs.iter().enumerate() {
            if d.start >= d.end || d.end > chars.len() {
                out.push(CorpusDiagnostic::SpanOutOfRange {
                    drug: i,
                    start: d.start,
                    end: d.end,
                    len: chars.len(),
                });
                continue;
            }
            let found: String = chars[d.start..d.end].iter().collect();
            if found != d.text {
                out.push(CorpusDiagnostic::SpanTextMismatch {
                    drug: i,
                    expected: d.text.clone(),
                    found,
                });
            }
        }
    }

    if inst.gold.is_empty() {
        out.push(CorpusDiagnostic::EmptyRelationSet);
    }
    let mut seen_sets: Vec<BTreeSet<usize>> = Vec::new();
    let has_nocomb = inst.gold.iter().any(|r| r.label == Label::Nocomb);
    if has_nocomb && inst.gold.len() > 1 {
        out.push(CorpusDiagnostic::NocombNotSingleton);
    }
    for (ri, rel) in inst.gold.iter().enumerate() {
        if !rel.label.is_gold() {
            out.push(CorpusDiagnostic::NonGoldLabel {
                relation: ri,
                label: rel.label,
            });
        }
        let mut set = BTreeSet::new();
        for &idx in &rel.drugs {
            if idx >= inst.drugs.len() {
                out.push(CorpusDiagnostic::DrugIndexOutOfRange {
                    relation: ri,
                    index: idx,
                });
            } else if !set.insert(idx) {
                out.push(CorpusDiagnostic::DuplicateDrugIndex {
                    relation: ri,
                    index: idx,
                });
            }
        }
        if set.len() < 2 {
            out.push(CorpusDiagnostic::CombinationTooSmall {
                relation: ri,
                size: set.len(),
            });
        }
        if rel.label == Label::Nocomb && set.len() != inst.drugs.len() {
            out.push(CorpusDiagnostic::NocombNotFullSet { relation: ri });
        }
        if seen_sets.contains(&set) {
            out.push(CorpusDiagnostic::DuplicateDrugSet { relation: ri });
        } else {
            seen_sets.push(set);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Neighbor sentences on each side of the target.
    pub n_ctx: usize,
}

impl WindowConfig {
    pub fn new(n_ctx: usize) -> Self {
        Self { n_ctx }
    }
}

/// Indices (0-based) of the sentences to the left of the target, the target,
/// and the sentences to its right, clipped to the abstract.
pub fn window_bounds(
    inst: &Instance,
    cfg: WindowConfig,
) -> (std::ops::Range<usize>, usize, std::ops::Range<usize>) {
    let t = inst.target_index - 1;
    let left = t.saturating_sub(cfg.n_ctx)..t;
    let right = (t + 1)..(t + 1 + cfg.n_ctx).min(inst.sentences.len());
    (left, t, right)
}

/// The target sentence wrapped in `[SEP]` markers with up to `n_ctx`
/// neighbours on each side, joined by single spaces.
pub fn window(inst: &Instance, cfg: WindowConfig) -> String {
    let (left, t, right) = window_bounds(inst, cfg);
    let mut parts: Vec<&str> = Vec::new();
    parts.extend(inst.sentences[left].iter().map(String::as_str));
    parts.push(SEP);
    parts.push(&inst.sentences[t]);
    parts.push(SEP);
    parts.extend(inst.sentences[right].iter().map(String::as_str));
    parts.join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    Jsonl,
}

impl std::str::FromStr for CorpusFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(format!("unknown corpus format '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecordProblem {
    Json(String),
    Invalid(Vec<CorpusDiagnostic>),
}

/// A rejected record, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineDiagnostic {
    pub line: usize,
    pub doc_id: Option<String>,
    pub problem: RecordProblem,
}

impl fmt::Display for LineDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}", self.line)?;
        if let Some(id) = &self.doc_id {
            write!(f, " ({id})")?;
        }
        match &self.problem {
            RecordProblem::Json(e) => write!(f, ": malformed record: {e}"),
            RecordProblem::Invalid(diags) => {
                let msgs: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
                write!(f, ": {}", msgs.join("; "))
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub instances: Vec<Instance>,
    pub diagnostics: Vec<LineDiagnostic>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn load_corpus(
    path: impl AsRef<Path>,
    format: CorpusFormat,
) -> Result<LoadReport, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    match format {
        CorpusFormat::Jsonl => parse_jsonl(BufReader::new(file)).map_err(io_err),
    }
}

/// Parse JSONL records, keeping valid instances and reporting the rest.
/// Blank lines are skipped.
pub fn parse_jsonl(reader: impl BufRead) -> std::io::Result<LoadReport> {
    let mut report = LoadReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match serde_json::from_str::<Instance>(trimmed) {
            Err(e) => report.diagnostics.push(LineDiagnostic {
                line: i + 1,
                doc_id: None,
                problem: RecordProblem::Json(e.to_string()),
            }),
            Ok(inst) => {
                let diags = validate_instance(&inst);
                if diags.is_empty() {
                    report.instances.push(inst);
                } else {
                    report.diagnostics.push(LineDiagnostic {
                        line: i + 1,
                        doc_id: Some(inst.doc_id),
                        problem: RecordProblem::Invalid(diags),
                    });
                }
            }
        }
    }
    Ok(report)
}

pub fn write_jsonl(mut w: impl Write, instances: &[Instance]) -> std::io::Result<()> {
    for inst in instances {
        writeln!(w, "{}", inst.to_json_line())?;
    }
    Ok(())
}

pub fn save_corpus(path: impl AsRef<Path>, instances: &[Instance]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    write_jsonl(&mut w, instances)?;
    w.flush()
}
