use crate::corpus::{AnswerSpan, TaggedToken};

/// Maximal runs of identical non-`O` NER tags, in sentence order.
pub fn candidate_entities(sentence: &[TaggedToken]) -> Vec<AnswerSpan> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < sentence.len() {
        let tag = &sentence[i].ner;
        if tag == "O" {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < sentence.len() && &sentence[j].ner == tag {
            j += 1;
        }
        out.push(AnswerSpan { start: i + 1, end: j });
        i = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sent(tags: &[&str]) -> Vec<TaggedToken> {
        tags.iter()
            .map(|t| TaggedToken {
                ner: t.to_string(),
                ..TaggedToken::plain("w")
            })
            .collect()
    }

    fn spans(v: &[(usize, usize)]) -> Vec<AnswerSpan> {
        v.iter().map(|&(start, end)| AnswerSpan { start, end }).collect()
    }

    #[test]
    fn runs() {
        assert_eq!(
            candidate_entities(&sent(&["O", "PERSON", "PERSON", "O", "DATE"])),
            spans(&[(2, 3), (5, 5)])
        );
        assert!(candidate_entities(&sent(&["O", "O"])).is_empty());
        assert_eq!(candidate_entities(&sent(&["PERSON", "DATE"])), spans(&[(1, 1), (2, 2)]));
    }

    proptest! {
        #[test]
        fn runs_partition_the_tagged_positions(tags in proptest::collection::vec(prop_oneof!["O", "PER", "LOC"], 0..30)) {
            let s: Vec<&str> = tags.iter().map(String::as_str).collect();
            let c = candidate_entities(&sent(&s));
            let mut covered = vec![false; s.len()];
            for w in c.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
            for sp in &c {
                for k in sp.range() {
                    covered[k] = true;
                    prop_assert_eq!(s[k], s[sp.start - 1]);
                }
                // maximal: the neighbours carry a different tag
                if sp.start > 1 { prop_assert_ne!(s[sp.start - 2], s[sp.start - 1]); }
                if sp.end < s.len() { prop_assert_ne!(s[sp.end], s[sp.end - 1]); }
            }
            for (k, t) in s.iter().enumerate() {
                prop_assert_eq!(covered[k], *t != "O");
            }
        }
    }
}
