use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bio {
    B,
    I,
    O,
}

impl Bio {
    pub const ALL: [Bio; 3] = [Bio::B, Bio::I, Bio::O];

    /// Column of this tag inside the 3-wide one-hot block.
    pub fn index(self) -> usize {
        match self {
            Bio::B => 0,
            Bio::I => 1,
            Bio::O => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Bio::B => "B",
            Bio::I => "I",
            Bio::O => "O",
        }
    }
}

impl FromStr for Bio {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "B" => Ok(Bio::B),
            "I" => Ok(Bio::I),
            "O" => Ok(Bio::O),
            other => Err(format!("BIO tag must be B, I or O, found `{other}`")),
        }
    }
}

impl fmt::Display for Bio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotated sentence token.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TaggedToken {
    pub word: String,
    pub pos: String,
    pub ner: String,
    pub dep: String,
    pub bio: Bio,
}

impl TaggedToken {
    pub fn new(
        word: impl Into<String>,
        pos: impl Into<String>,
        ner: impl Into<String>,
        dep: impl Into<String>,
        bio: Bio,
    ) -> Result<Self> {
        let t = TaggedToken {
            word: word.into(),
            pos: pos.into(),
            ner: ner.into(),
            dep: dep.into(),
            bio,
        };
        for (what, f) in [("word", &t.word), ("POS", &t.pos), ("NER", &t.ner), ("DEP", &t.dep)] {
            if let Some(problem) = field_problem(f) {
                return Err(Error::contract(format!("{what} `{f}` {problem}")));
            }
        }
        Ok(t)
    }

    /// A token with placeholder tags, for plain-text input.
    pub fn plain(word: impl Into<String>) -> Self {
        TaggedToken {
            word: word.into(),
            pos: "X".into(),
            ner: "O".into(),
            dep: "dep".into(),
            bio: Bio::O,
        }
    }
}

pub(crate) fn field_problem(f: &str) -> Option<&'static str> {
    if f.is_empty() {
        Some("is empty")
    } else if f.contains('|') {
        Some("contains the `|` delimiter")
    } else if f.chars().any(|c| c.is_whitespace() || c.is_control()) {
        Some("contains whitespace or control characters")
    } else {
        None
    }
}

/// A 1-based inclusive token span.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub start: usize,
    pub end: usize,
}

impl AnswerSpan {
    /// Validates `1 <= start <= end <= len`.
    pub fn new(start: usize, end: usize, len: usize) -> Result<Self> {
        let span = AnswerSpan { start, end };
        span.check(len)?;
        Ok(span)
    }

    pub fn check(&self, len: usize) -> Result<()> {
        if self.start >= 1 && self.start <= self.end && self.end <= len {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "span {}-{} invalid for a sentence of {len} tokens",
                self.start, self.end
            )))
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Zero-based half-open range over the tokens.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start - 1..self.end
    }

    /// The words covered by the span.
    pub fn words<'a, S: AsRef<str>>(&self, tokens: &'a [S]) -> Vec<&'a str> {
        tokens[self.range()].iter().map(AsRef::as_ref).collect()
    }
}

impl fmt::Display for AnswerSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

impl FromStr for AnswerSpan {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| format!("span `{s}` is not of the form start-end"))?;
        let start: usize = a.parse().map_err(|_| format!("bad span start `{a}`"))?;
        let end: usize = b.parse().map_err(|_| format!("bad span end `{b}`"))?;
        if start == 0 || start > end {
            return Err(format!("span `{s}` must satisfy 1 <= start <= end"));
        }
        Ok(AnswerSpan { start, end })
    }
}

/// An aligned sentence / question / answer instance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub sentence: Vec<TaggedToken>,
    pub question: Vec<String>,
    pub answer: Option<AnswerSpan>,
    pub source_id: String,
}

impl Example {
    pub fn words(&self) -> Vec<&str> {
        self.sentence.iter().map(|t| t.word.as_str()).collect()
    }

    /// Sets the answer span and rewrites the BIO column to match.
    pub fn set_answer(&mut self, span: Option<AnswerSpan>) -> Result<()> {
        let tags = super::bio::encode_bio(self.sentence.len(), span)?;
        for (t, b) in self.sentence.iter_mut().zip(tags) {
            t.bio = b;
        }
        self.answer = span;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_parsing() {
        assert_eq!("10-12".parse::<AnswerSpan>(), Ok(AnswerSpan { start: 10, end: 12 }));
        assert!("0-2".parse::<AnswerSpan>().is_err());
        assert!("5-2".parse::<AnswerSpan>().is_err());
        assert!("-".parse::<AnswerSpan>().is_err());
        assert_eq!(AnswerSpan { start: 3, end: 3 }.to_string(), "3-3");
    }

    #[test]
    fn span_bounds() {
        assert!(AnswerSpan::new(1, 1, 1).is_ok());
        assert!(AnswerSpan::new(2, 4, 3).is_err());
        assert!(AnswerSpan::new(0, 1, 3).is_err());
    }

    #[test]
    fn tokens_reject_delimiters() {
        assert!(TaggedToken::new("a|b", "NN", "O", "dep", Bio::O).is_err());
        assert!(TaggedToken::new("a b", "NN", "O", "dep", Bio::O).is_err());
        assert!(TaggedToken::new("", "NN", "O", "dep", Bio::O).is_err());
        assert!(TaggedToken::new("ab", "NN", "O", "dep", Bio::O).is_ok());
    }
}
