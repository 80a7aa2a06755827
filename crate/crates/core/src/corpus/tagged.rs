//! The tagged corpus format.
//!
//! One example per line, three TAB-separated columns:
//!
//! ```text
//! william|NNP|PERSON|compound|B henry|NNP|PERSON|compound|I ...<TAB>who was ... ?<TAB>1-2
//! ```
//!
//! The first column holds `word|POS|NER|DEP|BIO` tokens joined by single
//! spaces, the second the space-separated question (may be empty for
//! inference input), the third the 1-based answer span `start-end` or `-`.
//! Lines starting with `# ` are comments (annotator headers).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::bio::{decode_bio, valid_bio_sequence};
use super::types::{field_problem, AnswerSpan, Bio, Example, TaggedToken};
use crate::error::{Error, Result};

pub fn format_tagged_line(tokens: &[TaggedToken]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&t.word);
        out.push('|');
        out.push_str(&t.pos);
        out.push('|');
        out.push_str(&t.ner);
        out.push('|');
        out.push_str(&t.dep);
        out.push('|');
        out.push_str(t.bio.as_str());
    }
    out
}

/// Parses a token column. Errors name `line` and the 1-based field.
pub fn parse_tagged_line_at(line: &str, line_no: usize) -> Result<Vec<TaggedToken>> {
    let err = |column: usize, message: String| Error::Parse {
        line: line_no,
        column,
        message,
    };
    let mut tokens = Vec::new();
    for (i, field) in line.split(' ').enumerate() {
        let column = i + 1;
        let parts: Vec<&str> = field.split('|').collect();
        if parts.len() != 5 {
            return Err(err(
                column,
                format!("expected word|POS|NER|DEP|BIO, found {} part(s) in `{field}`", parts.len()),
            ));
        }
        for (what, p) in ["word", "POS", "NER", "DEP"].iter().zip(&parts) {
            if let Some(problem) = field_problem(p) {
                return Err(err(column, format!("{what} `{p}` {problem}")));
            }
        }
        let bio: Bio = parts[4].parse().map_err(|m| err(column, m))?;
        if bio == Bio::I && tokens.last().is_none_or(|t: &TaggedToken| t.bio == Bio::O) {
            return Err(err(column, "`I` does not continue a B/I run".into()));
        }
        tokens.push(TaggedToken {
            word: parts[0].to_string(),
            pos: parts[1].to_string(),
            ner: parts[2].to_string(),
            dep: parts[3].to_string(),
            bio,
        });
    }
    Ok(tokens)
}

pub fn parse_tagged_line(line: &str) -> Result<Vec<TaggedToken>> {
    parse_tagged_line_at(line, 1)
}

pub fn format_example(ex: &Example) -> String {
    let answer = ex.answer.map_or_else(|| "-".to_string(), |s| s.to_string());
    format!("{}\t{}\t{}", format_tagged_line(&ex.sentence), ex.question.join(" "), answer)
}

/// Parses one corpus line. `source_id` is set to `line:<n>`.
pub fn parse_example(line: &str, line_no: usize) -> Result<Example> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 3 {
        return Err(Error::Parse {
            line: line_no,
            column: 0,
            message: format!("expected 3 TAB-separated columns, found {}", cols.len()),
        });
    }
    let sentence = parse_tagged_line_at(cols[0], line_no)?;
    let question: Vec<String> = cols[1].split_whitespace().map(str::to_string).collect();
    let answer = match cols[2].trim() {
        "-" => None,
        s => Some(s.parse::<AnswerSpan>().map_err(|m| Error::Parse {
            line: line_no,
            column: 0,
            message: m,
        })?),
    };
    let bad = |message: String| Error::Parse {
        line: line_no,
        column: 0,
        message,
    };
    if let Some(span) = answer {
        span.check(sentence.len()).map_err(|e| bad(e.to_string()))?;
    }
    let tags: Vec<Bio> = sentence.iter().map(|t| t.bio).collect();
    debug_assert!(valid_bio_sequence(&tags));
    let from_tags = decode_bio(&tags).map_err(|e| bad(e.to_string()))?;
    if from_tags != answer {
        return Err(bad(format!(
            "answer column `{}` disagrees with the BIO tags",
            cols[2].trim()
        )));
    }
    Ok(Example {
        sentence,
        question,
        answer,
        source_id: format!("line:{line_no}"),
    })
}

/// Parses a whole corpus text, skipping blank and `# ` comment lines.
pub fn parse_corpus(text: &str) -> Result<Vec<Example>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !is_comment(l))
        .map(|(i, l)| parse_example(l, i + 1))
        .collect()
}

pub fn is_comment(line: &str) -> bool {
    line == "#" || line.starts_with("# ")
}

pub fn read_corpus(path: &Path) -> Result<Vec<Example>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn format_corpus(examples: &[Example]) -> String {
    let mut out = String::new();
    for ex in examples {
        out.push_str(&format_example(ex));
        out.push('\n');
    }
    out
}

pub fn write_corpus(path: &Path, examples: &[Example]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(format_corpus(examples).as_bytes())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_a_token() {
        let t = parse_tagged_line("william|NNP|PERSON|compound|B").unwrap();
        assert_eq!(
            t,
            vec![TaggedToken::new("william", "NNP", "PERSON", "compound", Bio::B).unwrap()]
        );
    }

    #[test]
    fn wrong_arity_names_the_field() {
        match parse_tagged_line("word|NN|O|nsubj") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 1)),
            other => panic!("unexpected {other:?}"),
        }
        match parse_tagged_line_at("a|DT|O|det|O word|NN|O|nsubj", 7) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (7, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stray_inside_tag_is_rejected() {
        assert!(parse_tagged_line("a|DT|O|det|I").is_err());
        assert!(parse_tagged_line("a|DT|O|det|Q").is_err());
    }

    #[test]
    fn example_round_trip() {
        let line = "the|DT|O|det|O cat|NN|O|nsubj|B sat|VBD|O|ROOT|O\twhat sat ?\t2-2";
        let ex = parse_example(line, 3).unwrap();
        assert_eq!(ex.answer, Some(AnswerSpan { start: 2, end: 2 }));
        assert_eq!(ex.question, vec!["what", "sat", "?"]);
        assert_eq!(ex.source_id, "line:3");
        assert_eq!(format_example(&ex), line);
    }

    #[test]
    fn unlabeled_examples_parse() {
        let ex = parse_example("the|DT|O|det|O cat|NN|O|ROOT|O\t\t-", 1).unwrap();
        assert!(ex.question.is_empty());
        assert_eq!(ex.answer, None);
    }

    #[test]
    fn answer_column_must_agree_with_bio() {
        assert!(parse_example("the|DT|O|det|O cat|NN|O|ROOT|B\tq\t-", 1).is_err());
        assert!(parse_example("the|DT|O|det|B cat|NN|O|ROOT|O\tq\t2-2", 1).is_err());
        assert!(parse_example("the|DT|O|det|B cat|NN|O|ROOT|O\tq\t1-3", 1).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# annotator: fake 1.0\n\nthe|DT|O|ROOT|O\t\t-\n";
        let c = parse_corpus(text).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].source_id, "line:3");
    }

    fn field() -> impl Strategy<Value = String> {
        // anything printable except whitespace and the delimiter
        "[^\\s|\\p{C}]{1,8}"
    }

    fn token_list() -> impl Strategy<Value = Vec<TaggedToken>> {
        proptest::collection::vec(
            (field(), field(), field(), field(), prop_oneof![Just(Bio::B), Just(Bio::I), Just(Bio::O)]),
            1..30,
        )
        .prop_map(|raw| {
            let mut prev = Bio::O;
            raw.into_iter()
                .map(|(w, p, n, d, mut b)| {
                    if b == Bio::I && prev == Bio::O {
                        b = Bio::B;
                    }
                    prev = b;
                    TaggedToken { word: w, pos: p, ner: n, dep: d, bio: b }
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn format_then_parse_is_identity(tokens in token_list()) {
            let line = format_tagged_line(&tokens);
            prop_assert_eq!(parse_tagged_line(&line).unwrap(), tokens);
        }
    }
}
