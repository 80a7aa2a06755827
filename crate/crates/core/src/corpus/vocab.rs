use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token/id maps with the four specials fixed at ids 0-3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_of: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocabulary {
    /// Specials followed by `tokens` in order; duplicates and specials are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            token_of: Vec::new(),
            id_of: HashMap::new(),
        };
        for s in SPECIALS {
            v.push(s.to_string());
        }
        for t in tokens {
            let t = t.into();
            if !v.id_of.contains_key(&t) {
                v.push(t);
            }
        }
        v
    }

    fn push(&mut self, t: String) {
        self.id_of.insert(t.clone(), self.token_of.len());
        self.token_of.push(t);
    }

    /// The four specials plus up to `max_size - 4` most frequent tokens; ties
    /// are broken lexicographically. `None` keeps every token.
    pub fn build<'a, I>(tokens: I, max_size: Option<usize>) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        if let Some(m) = max_size {
            if m < SPECIALS.len() {
                return Err(Error::contract(format!("vocabulary size {m} below the 4 specials")));
            }
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in tokens {
            if !SPECIALS.contains(&t) {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let keep = max_size.map_or(ranked.len(), |m| (m - SPECIALS.len()).min(ranked.len()));
        Ok(Self::from_tokens(ranked[..keep].iter().map(|(t, _)| t.to_string())))
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of.len() == SPECIALS.len()
    }

    /// Id of `token`, or [`UNK`].
    pub fn id(&self, token: &str) -> usize {
        self.id_of.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.id_of.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.token_of[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.token_of
    }

    /// One token per line; line number (from 0) is the id.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.token_of {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        for (i, s) in SPECIALS.iter().enumerate() {
            if lines.get(i) != Some(s) {
                return Err(Error::Parse {
                    line: i + 1,
                    column: 1,
                    message: format!("vocabulary must start with {s}"),
                });
            }
        }
        let mut v = Vocabulary::default();
        for (i, l) in lines.iter().enumerate().skip(SPECIALS.len()) {
            if l.is_empty() || v.contains(l) {
                return Err(Error::Parse {
                    line: i + 1,
                    column: 1,
                    message: format!("empty or duplicate vocabulary entry `{l}`"),
                });
            }
            v.push(l.to_string());
        }
        Ok(v)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// The word vocabulary plus one vocabulary per feature channel.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct VocabSet {
    pub words: Vocabulary,
    pub pos: Vocabulary,
    pub ner: Vocabulary,
    pub dep: Vocabulary,
}

impl VocabSet {
    pub const NAMES: [&'static str; 4] = ["words", "pos", "ner", "dep"];

    /// Words come from sentences and questions and are capped at
    /// `word_cap`; feature vocabularies keep every observed tag.
    pub fn build(examples: &[super::Example], word_cap: Option<usize>) -> Result<Self> {
        let words = Vocabulary::build(
            examples.iter().flat_map(|e| {
                e.sentence
                    .iter()
                    .map(|t| t.word.as_str())
                    .chain(e.question.iter().map(String::as_str))
            }),
            word_cap,
        )?;
        let tags = |f: fn(&super::TaggedToken) -> &str| {
            Vocabulary::build(examples.iter().flat_map(|e| e.sentence.iter().map(f)), None)
        };
        Ok(VocabSet {
            words,
            pos: tags(|t| t.pos.as_str())?,
            ner: tags(|t| t.ner.as_str())?,
            dep: tags(|t| t.dep.as_str())?,
        })
    }

    pub fn named(&self) -> [(&'static str, &Vocabulary); 4] {
        [
            ("words", &self.words),
            ("pos", &self.pos),
            ("ner", &self.ner),
            ("dep", &self.dep),
        ]
    }

    pub fn from_named(mut named: Vec<(String, Vocabulary)>) -> Result<Self> {
        let mut take = |name: &str| -> Result<Vocabulary> {
            let i = named
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing vocabulary `{name}`")))?;
            Ok(named.swap_remove(i).1)
        };
        Ok(VocabSet {
            words: take("words")?,
            pos: take("pos")?,
            ner: take("ner")?,
            dep: take("dep")?,
        })
    }

    /// Writes `<name>.vocab` files into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        for (name, v) in self.named() {
            v.write(&dir.join(format!("{name}.vocab")))?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        Ok(VocabSet {
            words: Vocabulary::read(&dir.join("words.vocab"))?,
            pos: Vocabulary::read(&dir.join("pos.vocab"))?,
            ner: Vocabulary::read(&dir.join("ner.vocab"))?,
            dep: Vocabulary::read(&dir.join("dep.vocab"))?,
        })
    }
}
