//! Turns SQuAD records plus their annotated sentences into seeded
//! train/valid/test splits in the tagged format, with vocabularies.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::bio::locate_answer;
use super::squad::{SkipReport, SquadRecord};
use super::tagged::{is_comment, parse_example, write_corpus};
use super::tokenize::tokenize;
use super::vocab::VocabSet;
use super::Example;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct PrepareOptions {
    pub seed: u64,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub word_vocab_size: usize,
    pub max_source_len: usize,
    pub max_question_len: usize,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            seed: 13,
            valid_fraction: 0.15,
            test_fraction: 0.15,
            word_vocab_size: 45_000,
            max_source_len: 100,
            max_question_len: 30,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct PrepareReport {
    pub records: usize,
    pub squad_skipped_offset: usize,
    pub squad_skipped_no_answer: usize,
    /// `line: message` for annotated lines that did not align.
    pub misaligned: Vec<String>,
    pub answer_not_found: usize,
    pub source_too_long: usize,
    pub questions_truncated: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl PrepareReport {
    /// Fraction of annotated lines that failed to align.
    pub fn failure_rate(&self) -> f64 {
        if self.records == 0 {
            0.0
        } else {
            self.misaligned.len() as f64 / self.records as f64
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Splits {
    pub train: Vec<Example>,
    pub valid: Vec<Example>,
    pub test: Vec<Example>,
}

/// Aligns annotated lines (one per record, in record order) with the
/// records, encodes answers and splits.
pub fn prepare(
    records: &[SquadRecord],
    squad_skipped: &SkipReport,
    annotated: &str,
    opts: &PrepareOptions,
) -> Result<(Splits, VocabSet, PrepareReport)> {
    let mut report = PrepareReport {
        records: records.len(),
        squad_skipped_offset: squad_skipped.offset_outside_context,
        squad_skipped_no_answer: squad_skipped.no_answer,
        ..Default::default()
    };
    let lines: Vec<(usize, &str)> = annotated
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !is_comment(l))
        .map(|(i, l)| (i + 1, l))
        .collect();

    let mut examples = Vec::new();
    for (k, rec) in records.iter().enumerate() {
        let Some(&(line_no, line)) = lines.get(k) else {
            report.misaligned.push(format!("record {}: no annotated line", k + 1));
            continue;
        };
        let mut ex = match parse_example(line, line_no) {
            Ok(ex) => ex,
            Err(e) => {
                report.misaligned.push(format!("{line_no}: {e}"));
                continue;
            }
        };
        let words = tokenize(&rec.sentence);
        if ex.words() != words {
            report.misaligned.push(format!(
                "{line_no}: annotated tokens do not match the tokenized sentence `{}`",
                rec.sentence
            ));
            continue;
        }
        if words.len() > opts.max_source_len {
            report.source_too_long += 1;
            continue;
        }
        let Some(span) = locate_answer(&words, &tokenize(&rec.answer)) else {
            report.answer_not_found += 1;
            continue;
        };
        let mut question = tokenize(&rec.question);
        if question.is_empty() {
            report.answer_not_found += 1;
            continue;
        }
        if question.len() > opts.max_question_len {
            question.truncate(opts.max_question_len);
            report.questions_truncated += 1;
        }
        ex.question = question;
        ex.source_id = rec.id.clone();
        ex.set_answer(Some(span))?;
        examples.push(ex);
    }
    if lines.len() > records.len() {
        for &(line_no, _) in &lines[records.len()..] {
            report.misaligned.push(format!("{line_no}: no matching SQuAD record"));
        }
    }

    let splits = split(examples, opts)?;
    report.train = splits.train.len();
    report.valid = splits.valid.len();
    report.test = splits.test.len();
    let vocabs = VocabSet::build(&splits.train, Some(opts.word_vocab_size))?;
    Ok((splits, vocabs, report))
}

/// Seeded shuffle, then valid and test take `round(n * fraction)` each; every
/// split keeps the original relative order.
pub fn split(examples: Vec<Example>, opts: &PrepareOptions) -> Result<Splits> {
    let n = examples.len();
    let n_valid = (n as f64 * opts.valid_fraction).round() as usize;
    let n_test = (n as f64 * opts.test_fraction).round() as usize;
    if n_valid + n_test > n {
        return Err(Error::Config(format!(
            "split fractions {} + {} exceed the corpus",
            opts.valid_fraction, opts.test_fraction
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let n_train = n - n_valid - n_test;
    let pick = |ids: &[usize]| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.into_iter().map(|i| examples[i].clone()).collect::<Vec<_>>()
    };
    Ok(Splits {
        train: pick(&order[..n_train]),
        valid: pick(&order[n_train..n_train + n_valid]),
        test: pick(&order[n_train + n_valid..]),
    })
}

/// Writes `{train,valid,test}.tagged`, the vocabulary files and
/// `report.json` into `dir`.
pub fn write_prepared(dir: &Path, splits: &Splits, vocabs: &VocabSet, report: &PrepareReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_corpus(&dir.join("train.tagged"), &splits.train)?;
    write_corpus(&dir.join("valid.tagged"), &splits.valid)?;
    write_corpus(&dir.join("test.tagged"), &splits.test)?;
    vocabs.write_dir(dir)?;
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::format_tagged_line;
    use crate::corpus::TaggedToken;

    fn record(sentence: &str, question: &str, answer: &str) -> SquadRecord {
        SquadRecord {
            id: format!("id-{question}"),
            sentence: sentence.into(),
            question: question.into(),
            answer: answer.into(),
            answer_offset: 0,
        }
    }

    fn annotate(sentence: &str) -> String {
        let toks: Vec<TaggedToken> = tokenize(sentence).into_iter().map(TaggedToken::plain).collect();
        format!("{}\t\t-", format_tagged_line(&toks))
    }

    #[test]
    fn aligns_and_encodes_answers() {
        let recs = vec![record("Ada wrote code.", "Who wrote code?", "Ada")];
        let ann = annotate("Ada wrote code.");
        let opts = PrepareOptions {
            valid_fraction: 0.0,
            test_fraction: 0.0,
            ..Default::default()
        };
        let (splits, vocabs, report) = prepare(&recs, &SkipReport::default(), &ann, &opts).unwrap();
        assert!(report.misaligned.is_empty());
        assert_eq!(splits.train.len(), 1);
        let ex = &splits.train[0];
        assert_eq!(ex.answer.unwrap().to_string(), "1-1");
        assert_eq!(ex.question, vec!["who", "wrote", "code", "?"]);
        assert!(vocabs.words.contains("who"));
    }

    #[test]
    fn misaligned_lines_are_reported() {
        let recs = vec![record("Ada wrote code.", "Who?", "Ada")];
        let ann = annotate("Bob wrote code.");
        let (splits, _, report) = prepare(&recs, &SkipReport::default(), &ann, &PrepareOptions::default()).unwrap();
        assert_eq!(report.misaligned.len(), 1);
        assert_eq!(report.failure_rate(), 1.0);
        assert!(splits.train.is_empty());
    }

    #[test]
    fn missing_answers_are_dropped() {
        let recs = vec![record("Ada wrote code.", "Who?", "Grace")];
        let (_, _, report) =
            prepare(&recs, &SkipReport::default(), &annotate("Ada wrote code."), &PrepareOptions::default()).unwrap();
        assert_eq!(report.answer_not_found, 1);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ex: Vec<Example> = (0..12)
            .map(|i| Example {
                sentence: vec![TaggedToken::plain(format!("w{i}"))],
                question: vec!["q".into()],
                answer: None,
                source_id: i.to_string(),
            })
            .collect();
        let opts = PrepareOptions::default();
        let a = split(ex.clone(), &opts).unwrap();
        let b = split(ex, &opts).unwrap();
        assert_eq!((a.train.len(), a.valid.len(), a.test.len()), (8, 2, 2));
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }
}
