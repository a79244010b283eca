//! Exact-match micro precision, recall and F1 over string-level relation
//! sets, and entity-level scoring for the NER-extended task.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::linearizer::{Mode, NamedRelation, NamedRelations};

/// Class name used by [`score_ner`].
pub const ENTITY: &str = "ENTITY";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScore {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    pub n_pred: usize,
    pub n_gold: usize,
    pub n_correct: usize,
}

impl ClassScore {
    /// Precision is 0 with no predictions, recall 0 with no gold items and F1
    /// 0 when both are 0.
    pub fn from_counts(n_pred: usize, n_gold: usize, n_correct: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(n_correct, n_pred);
        let r = ratio(n_correct, n_gold);
        let f1 = if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        };
        Self {
            p,
            r,
            f1,
            n_pred,
            n_gold,
            n_correct,
        }
    }

    fn add(&mut self, other: &ClassScore) {
        *self = Self::from_counts(
            self.n_pred + other.n_pred,
            self.n_gold + other.n_gold,
            self.n_correct + other.n_correct,
        );
    }
}

/// Per-class scores plus the micro aggregate over the scored classes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(flatten)]
    pub classes: BTreeMap<String, ClassScore>,
    pub micro: ClassScore,
}

impl ScoreReport {
    pub fn class(&self, name: &str) -> Option<&ClassScore> {
        self.classes.get(name)
    }

    pub fn f1(&self, label: Label) -> f64 {
        self.class(label.name()).map_or(0.0, |c| c.f1)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("{preds} predictions for {golds} gold instances")]
    LengthMismatch { preds: usize, golds: usize },
}

fn check_len(preds: usize, golds: usize) -> Result<(), EvalError> {
    if preds == golds {
        Ok(())
    } else {
        Err(EvalError::LengthMismatch { preds, golds })
    }
}

/// Score `classes` over aligned instances. A prediction is correct when a
/// gold relation has the same drug-name set and label; sets hold each
/// (drugs, label) pair once, so every gold relation matches at most one
/// prediction.
pub fn score_relations(
    preds: &[NamedRelations],
    golds: &[NamedRelations],
    classes: &[Label],
) -> Result<ScoreReport, EvalError> {
    check_len(preds.len(), golds.len())?;
    let mut report = ScoreReport::default();
    for &label in classes {
        let (mut np, mut ng, mut nc) = (0, 0, 0);
        for (p, g) in preds.iter().zip(golds) {
            let pl: Vec<&NamedRelation> = p.iter().filter(|r| r.label == label).collect();
            np += pl.len();
            ng += g.iter().filter(|r| r.label == label).count();
            nc += pl.iter().filter(|r| g.contains(r)).count();
        }
        let score = ClassScore::from_counts(np, ng, nc);
        report.micro.add(&score);
        report.classes.insert(label.name().to_string(), score);
    }
    Ok(report)
}

/// POS and COMB become ANY_COMB; everything else is unchanged. Duplicates
/// merge.
pub fn collapse_anycomb(rels: &NamedRelations) -> NamedRelations {
    rels.iter()
        .map(|r| NamedRelation {
            drugs: r.drugs.clone(),
            label: match r.label {
                Label::Pos | Label::Comb => Label::AnyComb,
                l => l,
            },
        })
        .collect()
}

/// Micro scores over exact entity-name matches, reported under [`ENTITY`].
pub fn score_ner(
    preds: &[BTreeSet<String>],
    golds: &[BTreeSet<String>],
) -> Result<ScoreReport, EvalError> {
    check_len(preds.len(), golds.len())?;
    let np = preds.iter().map(BTreeSet::len).sum();
    let ng = golds.iter().map(BTreeSet::len).sum();
    let nc = preds
        .iter()
        .zip(golds)
        .map(|(p, g)| p.intersection(g).count())
        .sum();
    let score = ClassScore::from_counts(np, ng, nc);
    let mut classes = BTreeMap::new();
    classes.insert(ENTITY.to_string(), score);
    Ok(ScoreReport {
        classes,
        micro: score,
    })
}

/// The standard report for a schema mode: its own label classes, plus
/// ANY_COMB computed after [`collapse_anycomb`] for the three-way and
/// NER-extended modes. The micro aggregate covers the mode's own labels only.
pub fn evaluate(
    preds: &[NamedRelations],
    golds: &[NamedRelations],
    mode: Mode,
) -> Result<ScoreReport, EvalError> {
    let mut report = score_relations(preds, golds, mode.labels())?;
    if matches!(mode, Mode::ThreeWay | Mode::NerExtended) {
        let cp: Vec<_> = preds.iter().map(collapse_anycomb).collect();
        let cg: Vec<_> = golds.iter().map(collapse_anycomb).collect();
        let any = score_relations(&cp, &cg, &[Label::AnyComb])?;
        report.classes.extend(any.classes);
    }
    Ok(report)
}
