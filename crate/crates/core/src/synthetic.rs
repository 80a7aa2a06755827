//! Seeded toy tasks for checking that the answer selectors can learn.
//!
//! * sentinel spans: a random span is marked in the NER column with
//!   `ANS-B`/`ANS-I`/`ANS-L` (or `ANS-U` for one token); the target is that span.
//! * first person: sentences hold several typed entities; the target is the
//!   first `PERSON` entity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnswerSpan, Bio, Example, TaggedToken};

const FILLER: usize = 40;
const ENTITY_TYPES: [&str; 4] = ["PERSON", "ORG", "LOC", "DATE"];

fn token(word: String, ner: &str, bio: Bio) -> TaggedToken {
    TaggedToken {
        word,
        pos: "X".into(),
        ner: ner.into(),
        dep: "dep".into(),
        bio,
    }
}

fn with_gold(mut sentence: Vec<TaggedToken>, span: AnswerSpan, id: String) -> Example {
    for (i, t) in sentence.iter_mut().enumerate() {
        t.bio = if i + 1 == span.start {
            Bio::B
        } else if span.range().contains(&i) {
            Bio::I
        } else {
            Bio::O
        };
    }
    Example {
        sentence,
        question: vec!["which".into(), "span".into(), "?".into()],
        answer: Some(span),
        source_id: id,
    }
}

/// Sentences of 6 to 14 tokens with one marked span of 1 to 4 tokens.
pub fn sentinel_spans(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let len = rng.gen_range(6..=14);
            let span_len = rng.gen_range(1..=4);
            let start = rng.gen_range(1..=len - span_len + 1);
            let span = AnswerSpan {
                start,
                end: start + span_len - 1,
            };
            let sentence = (1..=len)
                .map(|i| {
                    let tag = if !span.range().contains(&(i - 1)) {
                        "O"
                    } else if span_len == 1 {
                        "ANS-U"
                    } else if i == span.start {
                        "ANS-B"
                    } else if i == span.end {
                        "ANS-L"
                    } else {
                        "ANS-I"
                    };
                    token(format!("w{}", rng.gen_range(0..FILLER)), tag, Bio::O)
                })
                .collect();
            with_gold(sentence, span, format!("sentinel-{k}"))
        })
        .collect()
}

/// Two to four entities (one to three tokens each) separated by filler; at
/// least one is a `PERSON`.
pub fn first_person(n: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let count = rng.gen_range(2..=4);
            let mut types: Vec<&str> = (0..count).map(|_| *ENTITY_TYPES.choose(&mut rng).unwrap()).collect();
            if !types.contains(&"PERSON") {
                let i = rng.gen_range(0..count);
                types[i] = "PERSON";
            }
            let mut sentence = Vec::new();
            let mut gold = None;
            for ty in types {
                for _ in 0..rng.gen_range(1..=2) {
                    sentence.push(token(format!("w{}", rng.gen_range(0..FILLER)), "O", Bio::O));
                }
                let start = sentence.len() + 1;
                for _ in 0..rng.gen_range(1..=3) {
                    sentence.push(token(format!("{}{}", ty.to_lowercase(), rng.gen_range(0..10)), ty, Bio::O));
                }
                if ty == "PERSON" && gold.is_none() {
                    gold = Some(AnswerSpan {
                        start,
                        end: sentence.len(),
                    });
                }
            }
            if rng.gen_bool(0.5) {
                sentence.push(token(format!("w{}", rng.gen_range(0..FILLER)), "O", Bio::O));
            }
            with_gold(sentence, gold.expect("a PERSON is always present"), format!("person-{k}"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answersel::candidate_entities;
    use crate::corpus::decode_bio;

    #[test]
    fn sentinel_markers_agree_with_gold() {
        for ex in sentinel_spans(300, 1) {
            let span = ex.answer.unwrap();
            let marked: Vec<usize> = (0..ex.sentence.len())
                .filter(|&i| ex.sentence[i].ner != "O")
                .map(|i| i + 1)
                .collect();
            assert_eq!(marked, span.range().map(|i| i + 1).collect::<Vec<_>>());
            let bio: Vec<Bio> = ex.sentence.iter().map(|t| t.bio).collect();
            assert_eq!(decode_bio(&bio).unwrap(), Some(span));
        }
    }

    #[test]
    fn first_person_gold_is_a_candidate() {
        for ex in first_person(300, 2) {
            let span = ex.answer.unwrap();
            let cands = candidate_entities(&ex.sentence);
            let first = cands.iter().find(|c| ex.sentence[c.start - 1].ner == "PERSON").unwrap();
            assert_eq!(*first, span);
            assert!(cands.len() >= 2);
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(sentinel_spans(5, 9), sentinel_spans(5, 9));
        assert_ne!(first_person(5, 9), first_person(5, 10));
    }
}
