//! Orchestration shared by the command-line tool and the end-to-end tests:
//! training any of the four models into a checkpoint, picking answer spans
//! and generating questions.

use std::path::Path;

use serde::Serialize;

use crate::answersel::{NeConfig, NeItem, NeSelector, PointerConfig, PointerItem, PointerNet};
use crate::checkpoint::{Checkpoint, ModelKind};
use crate::config::{AnswerSource, ExperimentConfig};
use crate::corpus::{AnswerSpan, Example, VocabSet};
use crate::error::{Error, Result};
use crate::features::load_pretrained;
use crate::kernel::PretrainedVectors;
use crate::parallel::{try_map_indexed, Execution};
use crate::qgmodel::{generate_all, Generated, QgConfig, QgModel};
use crate::training::{fit, EpochLog, FitOptions, FitOutcome};

/// Rejects config/data combinations that cannot train, before any work.
pub fn validate_training(config: &ExperimentConfig, kind: ModelKind, train: &[Example]) -> Result<()> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let needs_answers = match kind {
        ModelKind::Qg => config.variant.uses_answer_encoding(),
        _ => true,
    };
    if needs_answers {
        if let Some(i) = train.iter().position(|e| e.answer.is_none()) {
            let why = match kind {
                ModelKind::Qg => format!("variant {} encodes the answer", config.variant.name()),
                _ => format!("the {kind} model is trained on gold spans"),
            };
            return Err(Error::Config(format!(
                "training example {} has no answer column but {why}",
                i + 1
            )));
        }
    }
    if kind == ModelKind::NeSelector && !train.iter().any(|e| NeItem::from_example(e).is_some()) {
        return Err(Error::Config(
            "no training answer coincides with a named-entity candidate".into(),
        ));
    }
    Ok(())
}

pub struct Trained {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

fn finish(kind: ModelKind, config: &ExperimentConfig, vocabs: &VocabSet, out: FitOutcome<f32>) -> Trained {
    Trained {
        checkpoint: Checkpoint::new(kind, config, vocabs.clone(), out.best_params),
        log: out.log,
        best_epoch: out.best_epoch,
    }
}

/// Builds the model for `kind` from `config.seed`, trains it and returns the
/// best-epoch checkpoint. Pretrained vectors, when given, seed the word table.
pub fn train_model(
    config: &ExperimentConfig,
    kind: ModelKind,
    train: &[Example],
    valid: &[Example],
    vocabs: &VocabSet,
    pretrained: Option<&PretrainedVectors>,
    exec: Execution,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<Trained> {
    validate_training(config, kind, train)?;
    let mut opts = FitOptions::from_config(config);
    opts.exec = exec;
    let seed = config.seed;
    let load = |params: &mut crate::kernel::ParamSet<f32>, table| -> Result<()> {
        if let Some(v) = pretrained {
            let found = load_pretrained(params, table, &vocabs.words, v)?;
            log::info!("pretrained vectors for {found} of {} words", vocabs.words.len());
        }
        Ok(())
    };
    match kind {
        ModelKind::Qg => {
            let mut m: QgModel = QgModel::new(QgConfig::from_experiment(config), vocabs.clone(), seed)?;
            let table = m.word_table();
            load(&mut m.params, table)?;
            let out = fit(&mut m, train, valid, &opts, on_epoch)?;
            Ok(finish(kind, config, vocabs, out))
        }
        ModelKind::SequencePointer | ModelKind::BoundaryPointer => {
            let mode = kind.pointer_mode().expect("pointer kind");
            let mut m: PointerNet = PointerNet::new(PointerConfig::from_experiment(config, mode), vocabs.clone(), seed)?;
            let items = |xs: &[Example]| -> Vec<PointerItem> { xs.iter().filter_map(PointerItem::from_example).collect() };
            let out = fit(&mut m, &items(train), &items(valid), &opts, on_epoch)?;
            Ok(finish(kind, config, vocabs, out))
        }
        ModelKind::NeSelector => {
            let mut m: NeSelector = NeSelector::new(NeConfig::from_experiment(config), vocabs.clone(), seed)?;
            let items = |xs: &[Example]| -> Vec<NeItem> { xs.iter().filter_map(NeItem::from_example).collect() };
            let (tr, va) = (items(train), items(valid));
            log::info!("{} of {} training answers are entity candidates", tr.len(), train.len());
            let out = fit(&mut m, &tr, &va, &opts, on_epoch)?;
            Ok(finish(kind, config, vocabs, out))
        }
    }
}

/// The model kind that produces answer spans for a variant, if any.
pub fn selector_kind(source: AnswerSource) -> Option<ModelKind> {
    match source {
        AnswerSource::NeSelector => Some(ModelKind::NeSelector),
        AnswerSource::SequencePointer => Some(ModelKind::SequencePointer),
        AnswerSource::BoundaryPointer => Some(ModelKind::BoundaryPointer),
        AnswerSource::None | AnswerSource::GroundTruth => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Selection {
    /// 1-based inclusive span, or `None` when nothing usable was produced.
    pub span: Option<AnswerSpan>,
    /// Which model produced the span: `ne`, `sequence`, `boundary`, or
    /// `boundary-fallback` when the NE selector had no candidates.
    pub source: String,
}

/// Runs a selector checkpoint over `examples`. An NE checkpoint falls back to
/// `fallback` (a pointer checkpoint) for sentences without entities; without
/// one such sentences are an error.
pub fn select_answers(
    ckpt: &Checkpoint,
    fallback: Option<&Checkpoint>,
    examples: &[Example],
    exec: Execution,
) -> Result<Vec<Selection>> {
    let fb = fallback.map(Checkpoint::pointer_net).transpose()?;
    match ckpt.kind {
        ModelKind::NeSelector => {
            let sel = ckpt.ne_selector()?;
            try_map_indexed(exec, examples, |i, ex| match sel.select(&ex.sentence) {
                Ok(c) => Ok(Selection {
                    span: Some(c.span),
                    source: "ne".into(),
                }),
                Err(Error::NoCandidates) => match &fb {
                    Some(p) => {
                        log::info!("line {}: no entities, using the {} pointer", i + 1, p.config.mode.name());
                        Ok(Selection {
                            span: p.select(&ex.sentence)?,
                            source: format!("{}-fallback", p.config.mode.name()),
                        })
                    }
                    None => Err(Error::contract(format!(
                        "line {}: sentence has no named-entity candidates and no fallback model was given",
                        i + 1
                    ))),
                },
                Err(e) => Err(e),
            })
        }
        ModelKind::SequencePointer | ModelKind::BoundaryPointer => {
            let net = ckpt.pointer_net()?;
            let source = net.config.mode.name().to_string();
            try_map_indexed(exec, examples, |_, ex| {
                Ok(Selection {
                    span: net.select(&ex.sentence)?,
                    source: source.clone(),
                })
            })
        }
        ModelKind::Qg => Err(Error::Checkpoint("a question generator cannot select answers".into())),
    }
}

/// Copies of `examples` with BIO tags and the answer column set from
/// `selections`.
pub fn apply_selections(examples: &[Example], selections: &[Selection]) -> Result<Vec<Example>> {
    examples
        .iter()
        .zip(selections)
        .map(|(ex, s)| {
            let mut e = ex.clone();
            e.set_answer(s.span)?;
            Ok(e)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerationMeta {
    pub line: usize,
    pub span: Option<AnswerSpan>,
    pub beam: usize,
    pub score: f64,
}

/// Questions for every example, plus one metadata record per line.
pub fn generate_questions(
    ckpt: &Checkpoint,
    examples: &[Example],
    beam: usize,
    exec: Execution,
) -> Result<(Vec<Generated>, Vec<GenerationMeta>)> {
    let model = ckpt.qg_model()?;
    let sentences: Vec<_> = examples.iter().map(|e| e.sentence.clone()).collect();
    let out = generate_all(&model, &sentences, beam, exec)?;
    let meta = out
        .iter()
        .zip(examples)
        .enumerate()
        .map(|(i, (g, e))| GenerationMeta {
            line: i + 1,
            span: e.answer,
            beam: beam.max(1),
            score: g.score,
        })
        .collect();
    Ok((out, meta))
}

/// Reads pretrained vectors from a text file.
pub fn read_pretrained(path: &Path) -> Result<PretrainedVectors> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    PretrainedVectors::read(std::io::BufReader::new(f))
}
