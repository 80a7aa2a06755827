use super::types::{AnswerSpan, Bio};
use crate::error::{Error, Result};

/// B at the span start, I through its end, O elsewhere; all O without a span.
pub fn encode_bio(length: usize, span: Option<AnswerSpan>) -> Result<Vec<Bio>> {
    let mut tags = vec![Bio::O; length];
    if let Some(span) = span {
        span.check(length)?;
        tags[span.start - 1] = Bio::B;
        for t in &mut tags[span.start..span.end] {
            *t = Bio::I;
        }
    }
    Ok(tags)
}

/// Inverse of [`encode_bio`]. Errors if the tags hold more than one span or
/// an `I` that does not continue a span.
pub fn decode_bio(tags: &[Bio]) -> Result<Option<AnswerSpan>> {
    let mut span: Option<AnswerSpan> = None;
    let mut open = false;
    for (i, &t) in tags.iter().enumerate() {
        let pos = i + 1;
        match t {
            Bio::B => {
                if span.is_some() {
                    return Err(Error::contract(format!("second span begins at token {pos}")));
                }
                span = Some(AnswerSpan { start: pos, end: pos });
                open = true;
            }
            Bio::I => {
                if !open {
                    return Err(Error::contract(format!("`I` at token {pos} does not continue a span")));
                }
                if let Some(s) = span.as_mut() {
                    s.end = pos;
                }
            }
            Bio::O => open = false,
        }
    }
    Ok(span)
}

/// Checks the sequence invariant: `I` only after `B` or `I`.
pub fn valid_bio_sequence(tags: &[Bio]) -> bool {
    let mut prev = Bio::O;
    for &t in tags {
        if t == Bio::I && prev == Bio::O {
            return false;
        }
        prev = t;
    }
    true
}

/// First exact contiguous occurrence of `answer` in `sentence`.
pub fn locate_answer<S: AsRef<str>, T: AsRef<str>>(sentence: &[S], answer: &[T]) -> Option<AnswerSpan> {
    let m = answer.len();
    if m == 0 || m > sentence.len() {
        return None;
    }
    (0..=sentence.len() - m)
        .find(|&i| {
            sentence[i..i + m]
                .iter()
                .zip(answer)
                .all(|(a, b)| a.as_ref() == b.as_ref())
        })
        .map(|i| AnswerSpan { start: i + 1, end: i + m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use proptest::prelude::*;

    const WILLS_SENTENCE: &str = "other past residents include composer journalist and newspaper editor william henry wills , ron goodwin , and journalist angela rippon and comedian dawn french";

    #[test]
    fn encode_examples() {
        use Bio::*;
        assert_eq!(encode_bio(5, Some(AnswerSpan { start: 2, end: 3 })).unwrap(), vec![O, B, I, O, O]);
        assert_eq!(encode_bio(3, None).unwrap(), vec![O, O, O]);
        assert_eq!(encode_bio(1, Some(AnswerSpan { start: 1, end: 1 })).unwrap(), vec![B]);
    }

    #[test]
    fn encode_rejects_out_of_range_spans() {
        assert!(encode_bio(3, Some(AnswerSpan { start: 2, end: 4 })).is_err());
    }

    #[test]
    fn decode_rejects_stray_inside_tags() {
        use Bio::*;
        assert!(decode_bio(&[O, I]).is_err());
        assert!(decode_bio(&[B, O, B]).is_err());
        assert!(decode_bio(&[B, O, I]).is_err());
        assert_eq!(decode_bio(&[O, O]).unwrap(), None);
    }

    #[test]
    fn locates_the_worked_example() {
        let s = tokenize(WILLS_SENTENCE);
        let span = locate_answer(&s, &["william", "henry", "wills"]).unwrap();
        assert_eq!(span, AnswerSpan { start: 10, end: 12 });
    }

    #[test]
    fn locate_whole_sentence_and_misses() {
        let s = ["a", "b", "c"];
        assert_eq!(locate_answer(&s, &s), Some(AnswerSpan { start: 1, end: 3 }));
        assert_eq!(locate_answer(&s, &["d"]), None);
        assert_eq!(locate_answer(&s, &[] as &[&str]), None);
    }

    #[test]
    fn first_match_wins() {
        let s = ["x", "a", "b", "a", "b"];
        assert_eq!(locate_answer(&s, &["a", "b"]), Some(AnswerSpan { start: 2, end: 3 }));
    }

    proptest! {
        #[test]
        fn bio_round_trip(len in 1usize..=50, a in 0usize..50, b in 0usize..50) {
            let (lo, hi) = (a.min(b) % len, a.max(b) % len);
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let span = AnswerSpan { start: lo + 1, end: hi + 1 };
            let tags = encode_bio(len, Some(span)).unwrap();
            prop_assert!(valid_bio_sequence(&tags));
            prop_assert_eq!(decode_bio(&tags).unwrap(), Some(span));
        }

        #[test]
        fn located_spans_cover_the_answer(
            sentence in proptest::collection::vec("[abc]", 1..20),
            start in 0usize..20,
            len in 1usize..5,
        ) {
            let start = start % sentence.len();
            let end = (start + len).min(sentence.len());
            let answer = sentence[start..end].to_vec();
            let span = locate_answer(&sentence, &answer).unwrap();
            prop_assert_eq!(span.words(&sentence), answer.iter().map(String::as_str).collect::<Vec<_>>());
            prop_assert!(span.start <= start + 1);
        }
    }
}
