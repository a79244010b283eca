//! The `combex` command line.
//!
//! Settings resolve in the order flags, then `--config` TOML file, then the
//! `COMBEX_SEED` environment variable (seed only), then built-in defaults.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_corpus, save_corpus, CorpusFormat, Instance, LoadReport};
use crate::eval::{evaluate, score_ner, ScoreReport, ENTITY};
use crate::linearizer::{
    delinearize, entity_names, from_line, linearize_gold, named_relations, to_line, EntitySep,
    Mode, NamedRelations, Ordering, Schema,
};
use crate::model::{predict, train_with, Checkpoint, ModelConfig, ModelError, Task};
use crate::synthgen::{generate, SynthConfig};
use crate::tokenizer::{build_vocab, Vocab};

pub const SEED_ENV: &str = "COMBEX_SEED";

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const MISMATCH: i32 = 4;
    pub const VALIDATION: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Mismatch(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::Mismatch(_) => exit::MISMATCH,
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Other(_) => exit::OTHER,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::VocabMismatch { .. } | ModelError::VocabSize { .. } => {
                CliError::Mismatch(e.to_string())
            }
            ModelError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            ModelError::TargetOutsideMask { .. } | ModelError::Linearize { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Other(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "combex",
    version,
    about = "Drug-combination relation extraction"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// three_way | two_way_pos | two_way_any | ner_extended
    #[arg(long, global = true)]
    pub schema: Option<Mode>,
    /// drug | semicolon
    #[arg(long, global = true)]
    pub sep: Option<EntitySep>,
    /// dataset | left_to_right
    #[arg(long, global = true)]
    pub order: Option<Ordering>,
    /// Context sentences on each side of the target.
    #[arg(long = "n-ctx", global = true)]
    pub n_ctx: Option<usize>,
    /// Constrain decoding with the output grammar.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with defaults for any of these settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Model hyperparameter flags shared by training subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelOpts {
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub encoder_lr: Option<f64>,
    #[arg(long)]
    pub decoder_lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

/// Where ablations get their data: given files, or a generated corpus.
#[derive(Debug, Clone, Default, Args)]
pub struct DataOpts {
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Size of the generated training split when no files are given.
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Write the comparison reports as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a corpus and write its valid records in canonical form.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic train/test corpus.
    Synth {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        n_train: Option<usize>,
        #[arg(long)]
        n_test: Option<usize>,
        #[arg(long)]
        lexicon_size: Option<usize>,
        #[arg(long)]
        max_drugs: Option<usize>,
        #[arg(long)]
        multi_fraction: Option<f64>,
    },
    /// Print the gold target sequence of every instance, one per line.
    Linearize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build a vocabulary and train a checkpoint.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        model: ModelOpts,
    },
    /// Decode every instance; writes one sequence line per instance.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score predicted sequence lines against a gold corpus.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train and score once per context window size.
    AblateContext {
        #[arg(long, num_args = 1.., default_values_t = [0usize, 1, 2, 3, 4])]
        n: Vec<usize>,
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        model: ModelOpts,
    },
    /// Train and score with `@DRUG@` and with `;` as the entity separator.
    AblateSeparator {
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        model: ModelOpts,
    },
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema: Option<Mode>,
    pub sep: Option<EntitySep>,
    pub order: Option<Ordering>,
    pub n_ctx: Option<usize>,
    pub strict: Option<bool>,
    pub seed: Option<u64>,
    pub model: Option<ModelConfig>,
    pub synth: Option<SynthConfig>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schema: Schema,
    pub n_ctx: usize,
    pub strict: bool,
    pub seed: u64,
    pub model: ModelConfig,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn task(&self) -> Task {
        Task::new(self.schema, self.n_ctx)
    }
}

/// Layer flags over the config file over the environment seed over defaults.
pub fn resolve(
    global: &GlobalOpts,
    file: Option<&FileConfig>,
    env_seed: Option<&str>,
) -> Result<RunConfig, CliError> {
    let file = file.cloned().unwrap_or_default();
    let env_seed = env_seed
        .map(|s| {
            s.trim().parse::<u64>().map_err(|_| {
                CliError::Usage(format!("{SEED_ENV} must be an unsigned integer, got '{s}'"))
            })
        })
        .transpose()?;
    let seed = global.seed.or(file.seed).or(env_seed).unwrap_or(0);
    let mode = global.schema.or(file.schema).unwrap_or(Mode::ThreeWay);
    let sep = global.sep.or(file.sep).unwrap_or(EntitySep::Drug);
    let order = global.order.or(file.order).unwrap_or_default();
    let mut model = file.model.unwrap_or_default();
    model.seed = seed;
    let mut synth = file.synth.unwrap_or_default();
    synth.seed = seed;
    Ok(RunConfig {
        schema: Schema::new(mode, sep, order),
        n_ctx: global.n_ctx.or(file.n_ctx).unwrap_or(0),
        strict: global.strict || file.strict.unwrap_or(false),
        seed,
        model,
        synth,
    })
}

impl ModelOpts {
    fn apply(&self, cfg: &mut ModelConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(embed_dim, hidden_dim, encoder_lr, decoder_lr, epochs, batch_size);
    }
}

/// Parse `argv` and run, writing results to `out` and diagnostics to `err`.
/// Returns the exit status.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV).ok();
    run_with_env(argv, env_seed.as_deref(), out, err)
}

/// [`run`] with the environment seed passed in explicitly.
pub fn run_with_env<I, T>(
    argv: I,
    env_seed: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                exit::USAGE
            } else {
                exit::OK
            };
            let rendered = e.render().to_string();
            if code == exit::OK {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match execute(&cli, env_seed, out, err) {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

fn load(path: &Path, err: &mut dyn Write) -> Result<LoadReport, CliError> {
    let report = load_corpus(path, CorpusFormat::Jsonl).map_err(|e| CliError::io(path, e))?;
    for d in &report.diagnostics {
        let _ = writeln!(err, "{}: {d}", path.display());
    }
    Ok(report)
}

fn load_valid(path: &Path, err: &mut dyn Write) -> Result<Vec<Instance>, CliError> {
    let report = load(path, err)?;
    if report.instances.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no valid instances",
            path.display()
        )));
    }
    Ok(report.instances)
}

fn write_text(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::io(p, e)),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn execute(
    cli: &Cli,
    env_seed: Option<&str>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let file = cli
        .global
        .config
        .as_deref()
        .map(FileConfig::load)
        .transpose()?;
    let rc = resolve(&cli.global, file.as_ref(), env_seed)?;
    match &cli.command {
        Command::Ingest { input, output } => {
            let report = load(input, err)?;
            let mut buf = Vec::new();
            crate::corpus::write_jsonl(&mut buf, &report.instances).expect("in-memory write");
            write_text(
                output.as_deref(),
                &String::from_utf8(buf).expect("utf-8"),
                out,
            )?;
            let _ = writeln!(
                err,
                "{} valid, {} rejected",
                report.instances.len(),
                report.diagnostics.len()
            );
            if report.diagnostics.is_empty() {
                Ok(())
            } else {
                Err(CliError::Validation(format!(
                    "{} record(s) failed validation",
                    report.diagnostics.len()
                )))
            }
        }
        Command::Synth {
            train,
            test,
            n_train,
            n_test,
            lexicon_size,
            max_drugs,
            multi_fraction,
        } => {
            let mut cfg = rc.synth.clone();
            cfg.n_train = n_train.unwrap_or(cfg.n_train);
            cfg.n_test = n_test.unwrap_or(cfg.n_test);
            cfg.lexicon_size = lexicon_size.unwrap_or(cfg.lexicon_size);
            cfg.max_drugs = max_drugs.unwrap_or(cfg.max_drugs);
            cfg.multi_fraction = multi_fraction.unwrap_or(cfg.multi_fraction);
            let (tr, te) = generate(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            save_corpus(train, &tr).map_err(|e| CliError::io(train, e))?;
            save_corpus(test, &te).map_err(|e| CliError::io(test, e))?;
            let _ = writeln!(
                out,
                "wrote {} train and {} test instances",
                tr.len(),
                te.len()
            );
            Ok(())
        }
        Command::Linearize { input, output } => {
            let corpus = load_valid(input, err)?;
            let mut text = String::new();
            for inst in &corpus {
                let seq = linearize_gold(inst, &rc.schema)
                    .map_err(|e| CliError::Validation(format!("{}: {e}", inst.doc_id)))?;
                text.push_str(&to_line(&seq));
                text.push('\n');
            }
            write_text(output.as_deref(), &text, out)
        }
        Command::Train {
            train,
            vocab,
            checkpoint,
            model,
        } => {
            let corpus = load_valid(train, err)?;
            let mut cfg = rc.model.clone();
            model.apply(&mut cfg);
            let voc = build_vocab(&corpus).map_err(|e| CliError::Validation(e.to_string()))?;
            voc.save(vocab).map_err(|e| CliError::io(vocab, e))?;
            let outcome = train_with(&corpus, &voc, &rc.task(), &cfg, |epoch, loss| {
                let _ = writeln!(out, "epoch {epoch} loss {loss:.6}");
            });
            let outcome = match outcome {
                Err(ModelError::Diverged { epoch, last_good }) => {
                    last_good
                        .save(checkpoint)
                        .map_err(|e| CliError::io(checkpoint, e))?;
                    return Err(CliError::Other(format!(
                        "loss diverged at epoch {epoch}; saved the last finite checkpoint"
                    )));
                }
                other => other?,
            };
            outcome
                .checkpoint
                .save(checkpoint)
                .map_err(|e| CliError::io(checkpoint, e))
        }
        Command::Predict {
            input,
            vocab,
            checkpoint,
            output,
        } => {
            let corpus = load_valid(input, err)?;
            let voc = Vocab::load(vocab).map_err(|e| CliError::io(vocab, e))?;
            let ckpt = Checkpoint::load(checkpoint).map_err(|e| CliError::io(checkpoint, e))?;
            let mut text = String::new();
            for inst in &corpus {
                let p = predict(inst, &ckpt, &voc, rc.strict)?;
                text.push_str(&to_line(&p.output.tokens));
                text.push('\n');
            }
            write_text(output.as_deref(), &text, out)
        }
        Command::Score { gold, pred, report } => {
            let corpus = load_valid(gold, err)?;
            let text = fs::read_to_string(pred).map_err(|e| CliError::io(pred, e))?;
            let lines: Vec<&str> = text.lines().collect();
            if lines.len() != corpus.len() {
                return Err(CliError::Mismatch(format!(
                    "{} prediction lines for {} gold instances",
                    lines.len(),
                    corpus.len()
                )));
            }
            let seqs: Vec<_> = lines.iter().map(|l| from_line(l, &rc.schema)).collect();
            let r = score_sequences(&corpus, &seqs, &rc.schema)?;
            let json = r.to_json();
            write_text(report.as_deref(), &(json.clone() + "\n"), out)?;
            if report.is_some() {
                let _ = writeln!(out, "{json}");
            }
            Ok(())
        }
        Command::AblateContext { n, data, model } => {
            let (train, test) = ablation_data(&rc, data, err)?;
            let mut cfg = rc.model.clone();
            model.apply(&mut cfg);
            let mut rows = Vec::new();
            for &k in n {
                let task = Task::new(rc.schema, k);
                rows.push(AblationRow::run(
                    format!("n_ctx={k}"),
                    &train,
                    &test,
                    &task,
                    &cfg,
                    rc.strict,
                )?);
            }
            emit_table("n_ctx", &rows, data.report.as_deref(), out)
        }
        Command::AblateSeparator { data, model } => {
            if rc.schema.mode() == Mode::NerExtended {
                return Err(CliError::Usage(
                    "the separator ablation needs a flat schema; ner_extended always uses ';'"
                        .into(),
                ));
            }
            let (train, test) = ablation_data(&rc, data, err)?;
            let mut cfg = rc.model.clone();
            model.apply(&mut cfg);
            let mut rows = Vec::new();
            for sep in [EntitySep::Drug, EntitySep::Semicolon] {
                let schema = Schema::new(rc.schema.mode(), sep, rc.schema.ordering());
                let task = Task::new(schema, rc.n_ctx);
                rows.push(AblationRow::run(
                    format!("sep={}", sep.name()),
                    &train,
                    &test,
                    &task,
                    &cfg,
                    rc.strict,
                )?);
            }
            emit_table("separator", &rows, data.report.as_deref(), out)
        }
    }
}

/// Parse sequences against their instances and score them under `schema`,
/// adding entity scores for the NER-extended mode.
pub fn score_sequences(
    corpus: &[Instance],
    seqs: &[Vec<crate::tokenizer::Token>],
    schema: &Schema,
) -> Result<ScoreReport, CliError> {
    let mode = schema.mode();
    let mut preds: Vec<NamedRelations> = Vec::with_capacity(corpus.len());
    let mut golds = Vec::with_capacity(corpus.len());
    let mut ents_p = Vec::new();
    let mut ents_g = Vec::new();
    for (inst, seq) in corpus.iter().zip(seqs) {
        let d = delinearize(seq, inst, schema);
        preds.push(d.relations);
        golds.push(named_relations(inst, &inst.gold, mode));
        ents_p.push(d.entities.unwrap_or_default());
        ents_g.push(entity_names(inst));
    }
    let mut r = evaluate(&preds, &golds, mode).map_err(|e| CliError::Mismatch(e.to_string()))?;
    if mode == Mode::NerExtended {
        let ner = score_ner(&ents_p, &ents_g).map_err(|e| CliError::Mismatch(e.to_string()))?;
        r.classes.insert(ENTITY.to_string(), ner.micro);
    }
    Ok(r)
}

fn ablation_data(
    rc: &RunConfig,
    data: &DataOpts,
    err: &mut dyn Write,
) -> Result<(Vec<Instance>, Vec<Instance>), CliError> {
    match (&data.train, &data.test) {
        (Some(tr), Some(te)) => Ok((load_valid(tr, err)?, load_valid(te, err)?)),
        (None, None) => {
            let mut cfg = rc.synth.clone();
            cfg.n_train = data.n_train.unwrap_or(cfg.n_train);
            cfg.n_test = data.n_test.unwrap_or(cfg.n_test);
            generate(&cfg).map_err(|e| CliError::Usage(e.to_string()))
        }
        _ => Err(CliError::Usage(
            "--train and --test must be given together".into(),
        )),
    }
}

/// One configuration of an ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub final_loss: f64,
    pub seconds: f64,
    pub report: ScoreReport,
}

impl AblationRow {
    fn run(
        setting: String,
        train: &[Instance],
        test: &[Instance],
        task: &Task,
        cfg: &ModelConfig,
        strict: bool,
    ) -> Result<Self, CliError> {
        let t0 = Instant::now();
        let vocab = build_vocab(train).map_err(|e| CliError::Validation(e.to_string()))?;
        let outcome = train_with(train, &vocab, task, cfg, |_, _| {})?;
        let mut seqs = Vec::with_capacity(test.len());
        for inst in test {
            seqs.push(
                predict(inst, &outcome.checkpoint, &vocab, strict)?
                    .output
                    .tokens,
            );
        }
        let report = score_sequences(test, &seqs, &task.schema)?;
        Ok(Self {
            setting,
            final_loss: outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
            seconds: t0.elapsed().as_secs_f64(),
            report,
        })
    }
}

fn emit_table(
    key: &str,
    rows: &[AblationRow],
    report: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let classes: Vec<&String> = rows
        .first()
        .map(|r| r.report.classes.keys().collect())
        .unwrap_or_default();
    let mut table = format!("| {key} |");
    for c in &classes {
        table.push_str(&format!(" {c} F1 |"));
    }
    table.push_str(" micro F1 | final loss |\n|---|");
    for _ in 0..classes.len() + 2 {
        table.push_str("---|");
    }
    table.push('\n');
    for r in rows {
        table.push_str(&format!("| {} |", r.setting));
        for c in &classes {
            table.push_str(&format!(" {:.3} |", r.report.classes[*c].f1));
        }
        table.push_str(&format!(
            " {:.3} | {:.4} |\n",
            r.report.micro.f1, r.final_loss
        ));
    }
    out.write_all(table.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    if let Some(p) = report {
        let json = serde_json::to_string_pretty(rows).expect("rows serialize");
        fs::write(p, json).map_err(|e| CliError::io(p, e))?;
    }
    Ok(())
}
