//! Token input vectors: a word embedding followed by one-hot feature blocks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::corpus::{Bio, TaggedToken, VocabSet, Vocabulary};
use crate::error::{Error, Result};
use crate::kernel::{Graph, ParamId, ParamSet, PretrainedVectors, Real, Var};

/// Feature channels in their fixed concatenation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Pos,
    Ner,
    Dep,
    Bio,
}

impl Channel {
    pub const ORDER: [Channel; 4] = [Channel::Pos, Channel::Ner, Channel::Dep, Channel::Bio];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Pos => "pos",
            Channel::Ner => "ner",
            Channel::Dep => "dep",
            Channel::Bio => "bio",
        }
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pos" => Ok(Channel::Pos),
            "ner" => Ok(Channel::Ner),
            "dep" => Ok(Channel::Dep),
            "bio" => Ok(Channel::Bio),
            other => Err(Error::Config(format!("unknown feature channel `{other}`"))),
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn parse_channels(s: &str) -> Result<Vec<Channel>> {
    let mut out: Vec<Channel> = s
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    Ok(out)
}

pub fn format_channels(channels: &[Channel]) -> String {
    channels.iter().map(|c| c.name()).collect::<Vec<_>>().join(",")
}

/// Width of the one-hot block for a tag vocabulary: column 0 is reserved
/// for unknown tags, the observed tags follow in vocabulary order.
pub fn tag_width(v: &Vocabulary) -> usize {
    v.len() - 3
}

fn tag_column(v: &Vocabulary, tag: &str) -> Option<usize> {
    v.get(tag).filter(|&id| id >= 4).map(|id| id - 3)
}

/// Per-token input layout.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureEmbeddingSpec {
    pub word_dim: usize,
    /// Enabled channels with their one-hot widths, in [`Channel::ORDER`].
    pub channels: Vec<(Channel, usize)>,
}

impl FeatureEmbeddingSpec {
    pub fn new(word_dim: usize, channels: &[Channel], vocabs: &VocabSet) -> Self {
        let mut chans: Vec<Channel> = channels.to_vec();
        chans.sort();
        chans.dedup();
        let channels = chans
            .into_iter()
            .map(|c| {
                let w = match c {
                    Channel::Pos => tag_width(&vocabs.pos),
                    Channel::Ner => tag_width(&vocabs.ner),
                    Channel::Dep => tag_width(&vocabs.dep),
                    Channel::Bio => 3,
                };
                (c, w)
            })
            .collect();
        FeatureEmbeddingSpec { word_dim, channels }
    }

    pub fn feature_width(&self) -> usize {
        self.channels.iter().map(|(_, w)| w).sum()
    }

    pub fn total_width(&self) -> usize {
        self.word_dim + self.feature_width()
    }

    pub fn has(&self, c: Channel) -> bool {
        self.channels.iter().any(|(ch, _)| *ch == c)
    }
}

/// Count of tags that fell into the reserved unknown column, per channel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UnknownTagReport {
    pub counts: BTreeMap<Channel, usize>,
}

impl UnknownTagReport {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn merge(&mut self, other: &UnknownTagReport) {
        for (c, n) in &other.counts {
            *self.counts.entry(*c).or_default() += n;
        }
    }
}

/// The one-hot feature part of one token's input vector.
pub fn feature_vector<F: Real>(
    token: &TaggedToken,
    spec: &FeatureEmbeddingSpec,
    vocabs: &VocabSet,
    report: &mut UnknownTagReport,
) -> Vec<F> {
    let mut out = vec![F::zero(); spec.feature_width()];
    let mut offset = 0;
    for &(c, width) in &spec.channels {
        let col = match c {
            Channel::Pos => tag_column(&vocabs.pos, &token.pos),
            Channel::Ner => tag_column(&vocabs.ner, &token.ner),
            Channel::Dep => tag_column(&vocabs.dep, &token.dep),
            Channel::Bio => Some(token.bio.index()),
        };
        let col = col.filter(|&k| k < width).unwrap_or_else(|| {
            *report.counts.entry(c).or_default() += 1;
            0
        });
        out[offset + col] = F::one();
        offset += width;
    }
    out
}

/// Word embedding concatenated with the POS, NER, DEP and BIO one-hot
/// blocks (those enabled in `spec`), one vector per token.
pub fn embed_with_features<F: Real>(
    g: &mut Graph<'_, F>,
    word_table: ParamId,
    tokens: &[TaggedToken],
    spec: &FeatureEmbeddingSpec,
    vocabs: &VocabSet,
) -> (Vec<Var>, UnknownTagReport) {
    let mut report = UnknownTagReport::default();
    let vars = tokens
        .iter()
        .map(|t| {
            let w = g.gather(word_table, vocabs.words.id(&t.word));
            if spec.channels.is_empty() {
                return w;
            }
            let feats = feature_vector::<F>(t, spec, vocabs, &mut report);
            let f = g.constant(feats);
            g.concat(&[w, f])
        })
        .collect();
    (vars, report)
}

/// Word table plus layout, shared by all models.
#[derive(Clone, Debug)]
pub struct InputEmbedder {
    pub spec: FeatureEmbeddingSpec,
    pub word_table: ParamId,
}

impl InputEmbedder {
    pub fn register<F: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<F>,
        name: &str,
        spec: FeatureEmbeddingSpec,
        vocab_size: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let word_table = params.register_uniform(name, &[vocab_size, spec.word_dim], init_scale, rng)?;
        Ok(InputEmbedder { spec, word_table })
    }

    pub fn lookup<F: Real>(params: &ParamSet<F>, name: &str, spec: FeatureEmbeddingSpec, vocab_size: usize) -> Result<Self> {
        let word_table = params
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
        let shape = params.get(word_table).shape();
        if shape != [vocab_size, spec.word_dim] {
            return Err(Error::Shape {
                param: name.into(),
                expected: vec![vocab_size, spec.word_dim],
                got: shape.to_vec(),
            });
        }
        Ok(InputEmbedder { spec, word_table })
    }

    pub fn embed<F: Real>(
        &self,
        g: &mut Graph<'_, F>,
        tokens: &[TaggedToken],
        vocabs: &VocabSet,
    ) -> (Vec<Var>, UnknownTagReport) {
        embed_with_features(g, self.word_table, tokens, &self.spec, vocabs)
    }
}

/// Copies pretrained vectors into the rows of a word table; returns how many
/// vocabulary entries were found. Missing words keep their random init.
pub fn load_pretrained<F: Real>(
    params: &mut ParamSet<F>,
    table: ParamId,
    vocab: &Vocabulary,
    vectors: &PretrainedVectors,
) -> Result<usize> {
    let t = params.get_mut(table);
    let (_, dim) = t.dims2();
    if vectors.dim != dim && !vectors.vectors.is_empty() {
        return Err(Error::Config(format!(
            "pretrained vectors have {} dims, word_dim is {dim}",
            vectors.dim
        )));
    }
    let mut found = 0;
    for (id, tok) in vocab.tokens().iter().enumerate() {
        if let Some(v) = vectors.get(tok) {
            for (dst, &src) in t.row_mut(id).iter_mut().zip(v) {
                *dst = F::lit(src as f64);
            }
            found += 1;
        }
    }
    Ok(found)
}

/// BIO tags are always present in the data; models without the BIO channel
/// never look at them.
pub fn strip_bio(tokens: &[TaggedToken]) -> Vec<TaggedToken> {
    tokens
        .iter()
        .map(|t| TaggedToken { bio: Bio::O, ..t.clone() })
        .collect()
}
