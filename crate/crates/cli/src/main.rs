//! `qapairgen` command-line tool.
//!
//! Exit codes: 0 success, 1 usage, 2 data or I/O error, 3 numeric failure
//! (divergence, failed gradient check).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qapairgen::checkpoint::{Checkpoint, ModelKind};
use qapairgen::config::{ExperimentConfig, Variant};
use qapairgen::corpus::{parse_squad, prepare, read_corpus, write_corpus, write_prepared, PrepareOptions, VocabSet};
use qapairgen::evalmetrics::{evaluate_corpus, human_eval_aggregate, parse_judgements, read_token_lines, MetricOptions};
use qapairgen::gradsuite::{format_table, run_suite};
use qapairgen::parallel::Execution;
use qapairgen::pipeline::{apply_selections, generate_questions, read_pretrained, select_answers, train_model};
use qapairgen::{Error, Result};

#[derive(Parser)]
#[command(name = "qapairgen", version, about = "Answer selection and question generation")]
struct Cli {
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align SQuAD records with annotated sentences and write splits.
    Prepare {
        #[arg(long)]
        squad: PathBuf,
        #[arg(long)]
        annotated: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 13)]
        seed: u64,
        #[arg(long, default_value_t = 0.15)]
        valid_fraction: f64,
        #[arg(long, default_value_t = 0.15)]
        test_fraction: f64,
    },
    /// Train one model and write a run directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// qg, boundary, sequence or ne
        #[arg(long, default_value = "qg")]
        model: ModelKind,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides data.train
        #[arg(long)]
        train: Option<PathBuf>,
        /// Overrides data.valid
        #[arg(long)]
        valid: Option<PathBuf>,
        /// section.key=value, repeatable
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mark an answer span in every sentence of a tagged file.
    SelectAnswer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pointer checkpoint used when the NE selector finds no entity.
        #[arg(long)]
        fallback: Option<PathBuf>,
        /// One JSON record per line with the chosen span and its source.
        #[arg(long)]
        spans: Option<PathBuf>,
    },
    /// Generate one question per sentence.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        beam: usize,
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Score generated questions.
    Evaluate {
        #[arg(long)]
        candidates: PathBuf,
        /// Plain text, one question per line, or a `.tagged` file. Repeat for
        /// several references per sentence.
        #[arg(long, required = true)]
        references: Vec<PathBuf>,
        /// Add-one smoothing for BLEU-2..4.
        #[arg(long)]
        smooth: bool,
        /// Allow stem matches in METEOR.
        #[arg(long)]
        stem: bool,
        #[arg(long)]
        json: bool,
        /// Human judgements (rater, question, criterion, yes).
        #[arg(long)]
        human: Option<PathBuf>,
        /// Question-generator checkpoint for perplexity on --data.
        #[arg(long, requires = "data")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Finite-difference check of every op and model loss.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Data(Error),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } => Failure::Numeric(e.to_string()),
            e => Failure::Data(e),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QAPAIRGEN_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match run(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| serde_json::to_string(x).expect("record serializes") + "\n")
        .collect()
}

fn run(command: Command, exec: Execution) -> std::result::Result<(), Failure> {
    match command {
        Command::Prepare {
            squad,
            annotated,
            out,
            seed,
            valid_fraction,
            test_fraction,
        } => {
            let (records, skipped) = parse_squad(&read_text(&squad)?)?;
            let opts = PrepareOptions {
                seed,
                valid_fraction,
                test_fraction,
                ..Default::default()
            };
            let (splits, vocabs, report) = prepare(&records, &skipped, &read_text(&annotated)?, &opts)?;
            write_prepared(&out, &splits, &vocabs, &report)?;
            for m in &report.misaligned {
                log::warn!("{}: {m}", annotated.display());
            }
            println!(
                "{} records: {} train, {} valid, {} test, {} misaligned",
                report.records,
                report.train,
                report.valid,
                report.test,
                report.misaligned.len()
            );
            if report.failure_rate() > 0.01 {
                return Err(Failure::Data(Error::Contract(format!(
                    "{} of {} annotated lines failed to align (see {})",
                    report.misaligned.len(),
                    report.records,
                    out.join("report.json").display()
                ))));
            }
            Ok(())
        }
        Command::Train {
            config,
            model,
            variant,
            seed,
            train,
            valid,
            sets,
            out,
        } => train_cmd(config, model, variant, seed, train, valid, &sets, &out, exec),
        Command::SelectAnswer {
            checkpoint,
            input,
            out,
            fallback,
            spans,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let fb = fallback.as_deref().map(Checkpoint::load).transpose()?;
            let examples = read_corpus(&input)?;
            let sel = select_answers(&ckpt, fb.as_ref(), &examples, exec)?;
            write_corpus(&out, &apply_selections(&examples, &sel)?)?;
            if let Some(p) = spans {
                write_text(&p, &jsonl(&sel))?;
            }
            let found = sel.iter().filter(|s| s.span.is_some()).count();
            println!("{found} of {} sentences got a span", sel.len());
            Ok(())
        }
        Command::Generate {
            checkpoint,
            input,
            out,
            beam,
            meta,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let examples = read_corpus(&input)?;
            let (generated, records) = generate_questions(&ckpt, &examples, beam, exec)?;
            let text: String = generated.iter().map(|g| g.words.join(" ") + "\n").collect();
            write_text(&out, &text)?;
            if let Some(p) = meta {
                write_text(&p, &jsonl(&records))?;
            }
            println!("{} questions written to {}", generated.len(), out.display());
            Ok(())
        }
        Command::Evaluate {
            candidates,
            references,
            smooth,
            stem,
            json,
            human,
            checkpoint,
            data,
        } => {
            let cands = read_token_lines(&read_text(&candidates)?);
            let mut refs: Vec<Vec<Vec<String>>> = vec![Vec::new(); cands.len()];
            for path in &references {
                let lines = read_references(path)?;
                if lines.len() != cands.len() {
                    return Err(Failure::Data(Error::Contract(format!(
                        "{} has {} lines but {} has {}",
                        path.display(),
                        lines.len(),
                        candidates.display(),
                        cands.len()
                    ))));
                }
                for (r, l) in refs.iter_mut().zip(lines) {
                    r.push(l);
                }
            }
            let opts = MetricOptions {
                smooth_bleu: smooth,
                meteor_stem: stem,
            };
            let report = evaluate_corpus(&cands, &refs, opts, exec)?;
            let mut extra = serde_json::Map::new();
            if let (Some(c), Some(d)) = (checkpoint, data) {
                let model = Checkpoint::load(&c)?.qg_model()?;
                let ppl = model.perplexity(&read_corpus(&d)?, exec)?;
                extra.insert("perplexity".into(), ppl.into());
            }
            if let Some(h) = human {
                let agg = human_eval_aggregate(&parse_judgements(&read_text(&h)?)?)?;
                extra.insert("human".into(), serde_json::to_value(agg).expect("map serializes"));
            }
            if json {
                let mut v = serde_json::to_value(&report).expect("report serializes");
                if let serde_json::Value::Object(m) = &mut v {
                    m.extend(extra);
                }
                println!("{}", serde_json::to_string_pretty(&v).expect("value serializes"));
            } else {
                print!("{}", report.to_pretty());
                if let Some(p) = extra.get("perplexity") {
                    println!("perplexity       {:.3}", p.as_f64().unwrap_or(f64::NAN));
                }
                if let Some(serde_json::Value::Object(h)) = extra.get("human") {
                    for (k, v) in h {
                        println!("human {k:<10} {:.2}", v.as_f64().unwrap_or(f64::NAN));
                    }
                }
            }
            Ok(())
        }
        Command::Gradcheck { seeds, json } => {
            let reports = run_suite(seeds, exec)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialize"));
            } else {
                print!("{}", format_table(&reports));
            }
            let failed: Vec<&str> = reports.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Numeric(format!("gradient check failed for {}", failed.join(", "))))
            }
        }
    }
}

/// Question column of a `.tagged` file, otherwise whitespace-tokenized lines.
fn read_references(path: &Path) -> Result<Vec<Vec<String>>> {
    if path.extension().is_some_and(|e| e == "tagged") {
        Ok(read_corpus(path)?.into_iter().map(|e| e.question).collect())
    } else {
        let mut lines = read_token_lines(&read_text(path)?);
        // a trailing newline does not make an extra reference
        while lines.last().is_some_and(Vec::is_empty) {
            lines.pop();
        }
        Ok(lines)
    }
}

fn resolve(base: Option<&Path>, p: Option<PathBuf>) -> Option<PathBuf> {
    match (base, p) {
        (Some(b), Some(p)) if p.is_relative() => Some(b.join(p)),
        (_, p) => p,
    }
}

#[allow(clippy::too_many_arguments)]
fn train_cmd(
    config: Option<PathBuf>,
    kind: ModelKind,
    variant: Option<Variant>,
    seed: Option<u64>,
    train: Option<PathBuf>,
    valid: Option<PathBuf>,
    sets: &[String],
    out: &Path,
    exec: Execution,
) -> std::result::Result<(), Failure> {
    let mut cfg = match &config {
        Some(p) => ExperimentConfig::from_text(&read_text(p)?)?,
        None => ExperimentConfig::desk(variant.unwrap_or(Variant::QgFGae)),
    };
    if let Some(v) = variant {
        cfg.variant = v;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    for s in sets {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set `{s}` is not section.key=value")))?;
        let (section, key) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("--set `{s}` is not section.key=value")))?;
        cfg.set(section, key, value.trim())
            .map_err(|m| Error::Config(format!("--set {s}: {m}")))?;
    }
    // paths in a config file are relative to that file
    let base = config.as_deref().and_then(Path::parent);
    let d = &mut cfg.data;
    d.train = train.or_else(|| resolve(base, d.train.take()));
    d.valid = valid.or_else(|| resolve(base, d.valid.take()));
    d.vocab_dir = resolve(base, d.vocab_dir.take());
    d.embeddings = resolve(base, d.embeddings.take());

    let train_path = cfg
        .data
        .train
        .clone()
        .ok_or_else(|| Error::Config("no training data: set data.train or pass --train".into()))?;
    let train_set = read_corpus(&train_path)?;
    let valid_set = match &cfg.data.valid {
        Some(p) => read_corpus(p)?,
        None => Vec::new(),
    };
    let vocabs = match &cfg.data.vocab_dir {
        Some(dir) => VocabSet::read_dir(dir)?,
        None => VocabSet::build(&train_set, Some(cfg.model.word_vocab_size))?,
    };
    let pretrained = cfg.data.embeddings.as_deref().map(read_pretrained).transpose()?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("config.ini"), &cfg.to_text())?;
    let log_path = out.join("train_log.jsonl");
    let mut log_file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut write_err = None;
    let trained = train_model(
        &cfg,
        kind,
        &train_set,
        &valid_set,
        &vocabs,
        pretrained.as_ref(),
        exec,
        |e| {
            log::info!("epoch {} loss {:.4} ppl {:.3}", e.epoch, e.train_loss, e.selection_perplexity());
            let line = serde_json::to_string(e).expect("log serializes");
            if let Err(err) = writeln!(log_file, "{line}") {
                write_err.get_or_insert(err);
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(Error::io(&log_path, e).into());
    }
    let ckpt_path = out.join(format!("{kind}.ckpt"));
    trained.checkpoint.save(&ckpt_path)?;
    let best = &trained.log[trained.best_epoch - 1];
    println!(
        "trained {kind} ({}) for {} epochs; kept epoch {} (ppl {:.3}) in {}",
        cfg.variant,
        trained.log.len(),
        trained.best_epoch,
        best.selection_perplexity(),
        ckpt_path.display()
    );
    Ok(())
}
