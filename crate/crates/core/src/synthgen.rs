//! Synthetic abstracts whose gold relations are known by construction.
//!
//! Each target sentence is built from a class-specific template around one
//! or two drug lists. The class is signalled by cue phrases shared by both
//! splits, while the full templates (opening, cue body, closing) used in
//! training and test never coincide. Drug names come from a syllable
//! lexicon; the training split draws from its first 90%, the test split from
//! its last 90%, so some test drugs are unseen.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DrugSpan, Instance, Label, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMix {
    pub pos: f64,
    pub comb: f64,
    pub nocomb: f64,
}

impl Default for ClassMix {
    fn default() -> Self {
        Self {
            pos: 0.5,
            comb: 0.2,
            nocomb: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub lexicon_size: usize,
    /// Upper bound on drug mentions in a target sentence, 2 to 6.
    pub max_drugs: usize,
    pub class_mix: ClassMix,
    /// Share of combination-bearing sentences (POS or COMB) holding two
    /// combinations.
    pub multi_fraction: f64,
    /// Share of lexicon names containing a hyphen.
    pub hyphen_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_train: 500,
            n_test: 100,
            lexicon_size: 300,
            max_drugs: 6,
            class_mix: ClassMix::default(),
            multi_fraction: 0.16,
            hyphen_rate: 0.15,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Invalid(String),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.into()));
        let m = self.class_mix;
        if self.n_train == 0 || self.n_test == 0 {
            return bad("instance counts must be positive");
        }
        if !(2..=6).contains(&self.max_drugs) {
            return bad("max_drugs must be between 2 and 6");
        }
        if self.lexicon_size < 20 {
            return bad("lexicon_size must be at least 20");
        }
        if [m.pos, m.comb, m.nocomb].iter().any(|p| *p < 0.0)
            || (m.pos + m.comb + m.nocomb - 1.0).abs() > 1e-9
        {
            return bad("class mix must be non-negative and sum to 1");
        }
        for (name, v) in [
            ("multi_fraction", self.multi_fraction),
            ("hyphen_rate", self.hyphen_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::Invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Arity distribution of a combination: 2 to 5 drugs.
const ARITY: [(usize, f64); 4] = [(2, 0.70), (3, 0.19), (4, 0.07), (5, 0.04)];

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl", "dr", "pr",
    "tr", "x",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ya", "eo"];
const SUFFIXES: &[&str] = &[
    "mab", "nib", "platin", "stat", "mycin", "zole", "taxel", "rubicin", "parib", "lisib",
    "cillin", "tecan",
];
const PREFIXES: &[&str] = &["anti", "nab", "peg", "neo", "iso", "des", "pro"];

/// Unique pseudo drug names. Hyphenated names take a short prefix
/// (`nab-...`) or a numeric one (`5-...`).
pub fn lexicon(size: usize, hyphen_rate: f64, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e71c0);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(size);
    let n_hyphen = (size as f64 * hyphen_rate).round() as usize;
    while out.len() < size {
        let n_syl = rng.random_range(1..=2);
        let mut stem = String::new();
        for _ in 0..n_syl {
            stem.push_str(ONSETS.choose(&mut rng).unwrap());
            stem.push_str(VOWELS.choose(&mut rng).unwrap());
        }
        stem.push_str(SUFFIXES.choose(&mut rng).unwrap());
        let name = if out.len() < n_hyphen {
            if rng.random_bool(0.5) {
                format!("{}-{stem}", PREFIXES.choose(&mut rng).unwrap())
            } else {
                format!("{}-{stem}", rng.random_range(2..10))
            }
        } else {
            stem
        };
        if seen.insert(name.clone()) {
            out.push(name);
        }
    }
    out.shuffle(&mut rng);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Test,
}

/// Cue bodies per class. `{D}` is the drug list.
fn bodies(label: Label) -> &'static [&'static str] {
    match label {
        Label::Pos => &[
            "{D} improved overall survival",
            "{D} showed synergistic antitumor activity",
            "the combination of {D} was highly effective",
            "{D} produced durable responses",
        ],
        Label::Comb => &[
            "patients received {D}",
            "{D} were given concurrently",
            "the regimen consisted of {D}",
            "{D} were administered every three weeks",
        ],
        _ => &[
            "{D} were compared in separate arms",
            "patients were randomized to {D}",
            "{D} were evaluated as single agents",
            "outcomes did not differ between {D}",
        ],
    }
}

fn joiner(label: Label) -> &'static [&'static str] {
    match label {
        Label::Pos => &["plus", "combined with"],
        Label::Comb => &["and", "together with"],
        _ => &["or", "versus"],
    }
}

const OPENINGS: &[&str] = &[
    "",
    "In this phase II trial ,",
    "In mice ,",
    "Overall ,",
    "In the expansion cohort ,",
];
const CLOSINGS: &[&str] = &[
    ".",
    "in elderly patients .",
    "at the recommended dose .",
    "in this setting .",
];
const DISTRACTOR: &[&str] = &[", unlike {X} alone", ", whereas {X} was not tested"];
const FILLERS: &[&str] = &[
    "The study enrolled {N} patients .",
    "Toxicity was manageable .",
    "Further trials are warranted .",
    "Median follow-up was {N} months .",
    "Patients previously treated with {X} were excluded .",
    "Serum levels of {X} were measured at baseline .",
    "Primary endpoints were response and safety .",
];

/// Template index `(opening, body, closing)` belongs to the training split
/// when this is true and to the test split otherwise.
fn is_train_template(o: usize, b: usize, c: usize) -> bool {
    !(o + b + c).is_multiple_of(3)
}

fn pick_template(rng: &mut ChaCha8Rng, n_bodies: usize, split: Split) -> (usize, usize, usize) {
    loop {
        let t = (
            rng.random_range(0..OPENINGS.len()),
            rng.random_range(0..n_bodies),
            rng.random_range(0..CLOSINGS.len()),
        );
        if is_train_template(t.0, t.1, t.2) == (split == Split::Train) {
            return t;
        }
    }
}

fn sample_arity(rng: &mut ChaCha8Rng, cap: usize) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = 2;
    for (a, p) in ARITY {
        acc += p;
        k = a;
        if x < acc {
            break;
        }
    }
    k.min(cap).max(2)
}

/// Sentence under construction; drug mentions are recorded as they are
/// appended so offsets are exact.
struct Builder {
    text: String,
    spans: Vec<DrugSpan>,
}

impl Builder {
    fn push(&mut self, s: &str) {
        if s.is_empty() {
            return;
        }
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        self.text.push_str(s);
    }

    fn push_drug(&mut self, name: &str) -> usize {
        if !self.text.is_empty() {
            self.text.push(' ');
        }
        let start = self.text.chars().count();
        self.text.push_str(name);
        self.spans
            .push(DrugSpan::new(start, start + name.chars().count(), name));
        self.spans.len() - 1
    }

    /// Append `template`, expanding `{D}` into a joined drug list.
    fn push_template(&mut self, template: &str, drugs: &[&str], join: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        let (before, after) = template.split_once("{D}").unwrap_or((template, ""));
        self.push(before.trim());
        for (k, d) in drugs.iter().enumerate() {
            if k > 0 {
                if k + 1 == drugs.len() {
                    self.push(join);
                } else {
                    self.push(",");
                }
            }
            ids.push(self.push_drug(d));
        }
        self.push(after.trim());
        ids
    }
}

fn capitalize_first(b: &mut Builder) {
    let Some(first) = b.text.chars().next() else {
        return;
    };
    if !first.is_ascii_lowercase() {
        return;
    }
    let upper = first.to_ascii_uppercase().to_string();
    b.text.replace_range(0..1, &upper);
    for s in &mut b.spans {
        if s.start == 0 {
            s.text.replace_range(0..1, &upper);
        }
    }
}

fn choose_class(rng: &mut ChaCha8Rng, mix: ClassMix) -> Label {
    let x: f64 = rng.random();
    if x < mix.pos {
        Label::Pos
    } else if x < mix.pos + mix.comb {
        Label::Comb
    } else {
        Label::Nocomb
    }
}

fn make_instance(
    rng: &mut ChaCha8Rng,
    cfg: &SynthConfig,
    names: &[String],
    split: Split,
    doc_id: String,
) -> Instance {
    let label = choose_class(rng, cfg.class_mix);
    let multi = label != Label::Nocomb && cfg.max_drugs >= 4 && rng.random_bool(cfg.multi_fraction);
    let mut arities = vec![sample_arity(
        rng,
        if multi {
            cfg.max_drugs - 2
        } else {
            cfg.max_drugs
        },
    )];
    if multi {
        arities.push(sample_arity(rng, cfg.max_drugs - arities[0]));
    }
    let used: usize = arities.iter().sum();
    let distractor = label != Label::Nocomb && used < cfg.max_drugs && rng.random_bool(0.2);
    let n_names = used + distractor as usize;
    let picked: Vec<&str> = names
        .choose_multiple(rng, n_names)
        .map(String::as_str)
        .collect();

    let mut b = Builder {
        text: String::new(),
        spans: Vec::new(),
    };
    let mut gold = Vec::new();
    let mut offset = 0;
    let (o, first_body, c) = pick_template(rng, bodies(label).len(), split);
    b.push(OPENINGS[o]);
    for (k, &n) in arities.iter().enumerate() {
        let body = if k == 0 {
            first_body
        } else {
            b.push(", while");
            loop {
                let body = rng.random_range(0..bodies(label).len());
                if is_train_template(o, body, c) == (split == Split::Train) {
                    break body;
                }
            }
        };
        let join = joiner(label).choose(rng).unwrap();
        let ids = b.push_template(bodies(label)[body], &picked[offset..offset + n], join);
        offset += n;
        gold.push(Relation::new(ids, label));
    }
    if distractor {
        let t = DISTRACTOR.choose(rng).unwrap();
        let (before, after) = t.split_once("{X}").unwrap();
        b.push(before.trim());
        b.push_drug(picked[offset]);
        b.push(after.trim());
    }
    b.push(CLOSINGS[c]);
    capitalize_first(&mut b);

    let n_ctx = rng.random_range(1..=4);
    let target_index = rng.random_range(1..=n_ctx + 1);
    let mut sentences = Vec::with_capacity(n_ctx + 1);
    for k in 1..=n_ctx + 1 {
        if k == target_index {
            sentences.push(b.text.clone());
            continue;
        }
        let f = FILLERS.choose(rng).unwrap();
        let x = names.choose(rng).unwrap();
        sentences.push(
            f.replace("{N}", &rng.random_range(12..400).to_string())
                .replace("{X}", x),
        );
    }
    Instance {
        doc_id,
        sentences,
        target_index,
        drugs: b.spans,
        gold,
    }
}

/// Training and test corpora, deterministic in `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> Result<(Vec<Instance>, Vec<Instance>), SynthError> {
    cfg.validate()?;
    let names = lexicon(cfg.lexicon_size, cfg.hyphen_rate, cfg.seed);
    let cut_hi = cfg.lexicon_size * 9 / 10;
    let cut_lo = cfg.lexicon_size / 10;
    let train_names = &names[..cut_hi];
    let test_names = &names[cut_lo..];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train = (0..cfg.n_train)
        .map(|i| {
            make_instance(
                &mut rng,
                cfg,
                train_names,
                Split::Train,
                format!("synth-train-{i}"),
            )
        })
        .collect();
    let test = (0..cfg.n_test)
        .map(|i| {
            make_instance(
                &mut rng,
                cfg,
                test_names,
                Split::Test,
                format!("synth-test-{i}"),
            )
        })
        .collect();
    Ok((train, test))
}

/// The template-independent class of a generated instance.
pub fn instance_class(inst: &Instance) -> Option<Label> {
    inst.gold.first().map(|r| r.label)
}
