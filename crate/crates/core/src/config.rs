//! Experiment configuration: the seven system variants, model dimensions,
//! optimiser settings and data paths, read from a flat `key = value` file
//! with `[section]` headers.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{format_channels, parse_channels, Channel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Words only.
    Qg,
    /// Words plus POS, NER and dependency features.
    QgF,
    /// Features plus BIO tags from the named-entity selector.
    QgFNe,
    /// Words plus ground-truth BIO tags.
    QgGae,
    /// Features plus BIO tags from the sequence pointer network.
    QgFAes,
    /// Features plus BIO tags from the boundary pointer network.
    QgFAeb,
    /// Features plus ground-truth BIO tags.
    QgFGae,
}

/// Where the BIO answer channel comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnswerSource {
    None,
    NeSelector,
    SequencePointer,
    BoundaryPointer,
    GroundTruth,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Qg,
        Variant::QgF,
        Variant::QgFNe,
        Variant::QgGae,
        Variant::QgFAes,
        Variant::QgFAeb,
        Variant::QgFGae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Qg => "QG",
            Variant::QgF => "QG+F",
            Variant::QgFNe => "QG+F+NE",
            Variant::QgGae => "QG+GAE",
            Variant::QgFAes => "QG+F+AES",
            Variant::QgFAeb => "QG+F+AEB",
            Variant::QgFGae => "QG+F+GAE",
        }
    }

    pub fn uses_linguistic_features(self) -> bool {
        !matches!(self, Variant::Qg | Variant::QgGae)
    }

    pub fn answer_source(self) -> AnswerSource {
        match self {
            Variant::Qg | Variant::QgF => AnswerSource::None,
            Variant::QgFNe => AnswerSource::NeSelector,
            Variant::QgFAes => AnswerSource::SequencePointer,
            Variant::QgFAeb => AnswerSource::BoundaryPointer,
            Variant::QgGae | Variant::QgFGae => AnswerSource::GroundTruth,
        }
    }

    pub fn uses_answer_encoding(self) -> bool {
        self.answer_source() != AnswerSource::None
    }

    /// Feature channels of the question generator's input.
    pub fn channels(self) -> Vec<Channel> {
        let mut c = Vec::new();
        if self.uses_linguistic_features() {
            c.extend([Channel::Pos, Channel::Ner, Channel::Dep]);
        }
        if self.uses_answer_encoding() {
            c.push(Channel::Bio);
        }
        c
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub hidden_size: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub word_vocab_size: usize,
    pub max_source_len: usize,
    pub max_question_len: usize,
    pub init_scale: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectorConfig {
    /// Hidden width of the pointer networks and the NE encoder.
    pub hidden_size: usize,
    pub ne_layers: usize,
    /// Width of the NE scorer's hidden layer; 0 scores R linearly.
    pub ne_mlp_hidden: usize,
    pub features: Vec<Channel>,
    pub pointer_step_cap: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub lr_decay: f64,
    /// Decay applies from the epoch after this one.
    pub lr_decay_start_epoch: usize,
    /// Decay every epoch after the start (true) or once (false).
    pub lr_decay_repeat: bool,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub vocab_dir: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub seed: u64,
    pub model: ModelConfig,
    pub selector: SelectorConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::desk(Variant::QgFGae)
    }
}

impl ExperimentConfig {
    /// Small dimensions for CPU runs.
    pub fn desk(variant: Variant) -> Self {
        ExperimentConfig {
            variant,
            seed: 13,
            model: ModelConfig {
                word_dim: 32,
                hidden_size: 64,
                encoder_layers: 1,
                decoder_layers: 1,
                word_vocab_size: 45_000,
                max_source_len: 100,
                max_question_len: 30,
                init_scale: 0.1,
            },
            selector: SelectorConfig {
                hidden_size: 32,
                ne_layers: 2,
                ne_mlp_hidden: 32,
                features: vec![Channel::Pos, Channel::Ner, Channel::Dep],
                pointer_step_cap: 10,
            },
            train: TrainConfig {
                lr: 0.003,
                lr_decay: 0.5,
                lr_decay_start_epoch: 10,
                lr_decay_repeat: true,
                dropout: 0.3,
                epochs: 30,
                batch_size: 4,
                clip_norm: 5.0,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                adam_eps: 1e-8,
            },
            data: DataConfig::default(),
        }
    }

    /// Full-size dimensions, as in `configs/full.ini`.
    pub fn full(variant: Variant) -> Self {
        let mut c = Self::desk(variant);
        c.model.word_dim = 300;
        c.model.hidden_size = 600;
        c.model.encoder_layers = 3;
        c.model.decoder_layers = 2;
        c.selector.hidden_size = 300;
        c.selector.ne_mlp_hidden = 300;
        c.train.lr = 1.0;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let nonzero = [
            ("model.word_dim", m.word_dim),
            ("model.hidden_size", m.hidden_size),
            ("model.encoder_layers", m.encoder_layers),
            ("model.decoder_layers", m.decoder_layers),
            ("model.max_source_len", m.max_source_len),
            ("model.max_question_len", m.max_question_len),
            ("selector.hidden_size", self.selector.hidden_size),
            ("selector.ne_layers", self.selector.ne_layers),
            ("selector.pointer_step_cap", self.selector.pointer_step_cap),
            ("train.epochs", self.train.epochs),
            ("train.batch_size", self.train.batch_size),
        ];
        for (k, v) in nonzero {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if m.word_vocab_size < 4 {
            return Err(Error::Config("model.word_vocab_size must be at least 4".into()));
        }
        if !(0.0..1.0).contains(&self.train.dropout) {
            return Err(Error::Config(format!("train.dropout {} outside [0, 1)", self.train.dropout)));
        }
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) || !(t.lr_decay > 0.0) || !(t.clip_norm > 0.0) {
            return Err(Error::Config("train.lr, train.lr_decay and train.clip_norm must be positive".into()));
        }
        if self.selector.features.contains(&Channel::Bio) {
            return Err(Error::Config("selector.features cannot include bio".into()));
        }
        Ok(())
    }

    /// Learning rate for a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        crate::training::FitOptions::from_config(self).lr_at(epoch)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.model;
        let sel = &self.selector;
        let t = &self.train;
        let d = &self.data;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        // writing to a String cannot fail
        let _ = write!(
            s,
            "[experiment]\nvariant = {}\nseed = {}\n\n\
             [model]\nword_dim = {}\nhidden_size = {}\nencoder_layers = {}\ndecoder_layers = {}\n\
             word_vocab_size = {}\nmax_source_len = {}\nmax_question_len = {}\ninit_scale = {}\n\n\
             [selector]\nhidden_size = {}\nne_layers = {}\nne_mlp_hidden = {}\nfeatures = {}\npointer_step_cap = {}\n\n\
             [train]\nlr = {}\nlr_decay = {}\nlr_decay_start_epoch = {}\nlr_decay_repeat = {}\ndropout = {}\n\
             epochs = {}\nbatch_size = {}\nclip_norm = {}\nadam_beta1 = {}\nadam_beta2 = {}\nadam_eps = {}\n\n\
             [data]\ntrain = {}\nvalid = {}\nvocab_dir = {}\nembeddings = {}\n",
            self.variant,
            self.seed,
            m.word_dim,
            m.hidden_size,
            m.encoder_layers,
            m.decoder_layers,
            m.word_vocab_size,
            m.max_source_len,
            m.max_question_len,
            m.init_scale,
            sel.hidden_size,
            sel.ne_layers,
            sel.ne_mlp_hidden,
            format_channels(&sel.features),
            sel.pointer_step_cap,
            t.lr,
            t.lr_decay,
            t.lr_decay_start_epoch,
            t.lr_decay_repeat,
            t.dropout,
            t.epochs,
            t.batch_size,
            t.clip_norm,
            t.adam_beta1,
            t.adam_beta2,
            t.adam_eps,
            path(&d.train),
            path(&d.valid),
            path(&d.vocab_dir),
            path(&d.embeddings),
        );
        s
    }

    /// Hex SHA-256 of [`to_text`](Self::to_text).
    pub fn fingerprint(&self) -> String {
        fingerprint_text(&self.to_text())
    }

    /// Parses a config file. Keys not given keep the desk defaults of the
    /// file's variant; unknown sections or keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let entries = parse_ini(text)?;
        let variant = entries
            .iter()
            .find(|e| e.section == "experiment" && e.key == "variant")
            .map(|e| e.value.parse())
            .transpose()?
            .unwrap_or(Variant::QgFGae);
        let mut c = Self::desk(variant);
        for e in &entries {
            c.set(&e.section, &e.key, &e.value)
                .map_err(|msg| Error::Config(format!("line {}: {msg}", e.line)))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Sets `section.key` from its text form.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        fn path(v: &str) -> Option<PathBuf> {
            (!v.is_empty()).then(|| PathBuf::from(v))
        }
        let m = &mut self.model;
        let sel = &mut self.selector;
        let t = &mut self.train;
        let d = &mut self.data;
        match (section, key) {
            ("experiment", "variant") => self.variant = value.parse().map_err(|e: Error| e.to_string())?,
            ("experiment", "seed") => self.seed = num(value)?,
            ("model", "word_dim") => m.word_dim = num(value)?,
            ("model", "hidden_size") => m.hidden_size = num(value)?,
            ("model", "encoder_layers") => m.encoder_layers = num(value)?,
            ("model", "decoder_layers") => m.decoder_layers = num(value)?,
            ("model", "word_vocab_size") => m.word_vocab_size = num(value)?,
            ("model", "max_source_len") => m.max_source_len = num(value)?,
            ("model", "max_question_len") => m.max_question_len = num(value)?,
            ("model", "init_scale") => m.init_scale = num(value)?,
            ("selector", "hidden_size") => sel.hidden_size = num(value)?,
            ("selector", "ne_layers") => sel.ne_layers = num(value)?,
            ("selector", "ne_mlp_hidden") => sel.ne_mlp_hidden = num(value)?,
            ("selector", "features") => sel.features = parse_channels(value).map_err(|e| e.to_string())?,
            ("selector", "pointer_step_cap") => sel.pointer_step_cap = num(value)?,
            ("train", "lr") => t.lr = num(value)?,
            ("train", "lr_decay") => t.lr_decay = num(value)?,
            ("train", "lr_decay_start_epoch") => t.lr_decay_start_epoch = num(value)?,
            ("train", "lr_decay_repeat") => t.lr_decay_repeat = num(value)?,
            ("train", "dropout") => t.dropout = num(value)?,
            ("train", "epochs") => t.epochs = num(value)?,
            ("train", "batch_size") => t.batch_size = num(value)?,
            ("train", "clip_norm") => t.clip_norm = num(value)?,
            ("train", "adam_beta1") => t.adam_beta1 = num(value)?,
            ("train", "adam_beta2") => t.adam_beta2 = num(value)?,
            ("train", "adam_eps") => t.adam_eps = num(value)?,
            ("data", "train") => d.train = path(value),
            ("data", "valid") => d.valid = path(value),
            ("data", "vocab_dir") => d.vocab_dir = path(value),
            ("data", "embeddings") => d.embeddings = path(value),
            _ => return Err(format!("unknown key `{key}` in section [{section}]")),
        }
        Ok(())
    }
}

pub fn fingerprint_text(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

fn parse_ini(text: &str) -> Result<Vec<Entry>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |message: String| Error::Parse {
            line: i + 1,
            column: 1,
            message,
        };
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("unterminated section header `{line}`")))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        if section.is_empty() {
            return Err(err("key outside of a [section]".into()));
        }
        out.push(Entry {
            line: i + 1,
            section: section.clone(),
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_table() {
        use AnswerSource::*;
        let expect = [
            ("QG", false, None),
            ("QG+F", true, None),
            ("QG+F+NE", true, NeSelector),
            ("QG+GAE", false, GroundTruth),
            ("QG+F+AES", true, SequencePointer),
            ("QG+F+AEB", true, BoundaryPointer),
            ("QG+F+GAE", true, GroundTruth),
        ];
        for (name, feats, src) in expect {
            let v: Variant = name.parse().unwrap();
            assert_eq!(v.name(), name);
            assert_eq!(v.uses_linguistic_features(), feats, "{name}");
            assert_eq!(v.answer_source(), src, "{name}");
            assert_eq!(v.channels().contains(&Channel::Bio), src != None, "{name}");
            assert_eq!(v.channels().contains(&Channel::Pos), feats, "{name}");
        }
        assert!(Variant::Qg.channels().is_empty());
        assert_eq!(Variant::QgFGae.channels(), Channel::ORDER.to_vec());
    }

    #[test]
    fn text_round_trip() {
        for v in Variant::ALL {
            for c in [ExperimentConfig::desk(v), ExperimentConfig::full(v)] {
                let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
                assert_eq!(back, c);
                assert_eq!(back.fingerprint(), c.fingerprint());
            }
        }
    }

    #[test]
    fn full_hyperparameters() {
        let c = ExperimentConfig::full(Variant::QgFGae);
        let text = c.to_text();
        for line in [
            "hidden_size = 600",
            "word_dim = 300",
            "lr = 1\n",
            "lr_decay = 0.5",
            "lr_decay_start_epoch = 10",
            "dropout = 0.3",
            "epochs = 30",
            "encoder_layers = 3",
            "decoder_layers = 2",
        ] {
            assert!(text.contains(line), "missing {line}");
        }
    }

    #[test]
    fn lr_schedule_readings() {
        let mut c = ExperimentConfig::desk(Variant::Qg);
        c.train.lr = 1.0;
        assert_eq!(c.lr_at(10), 1.0);
        assert_eq!(c.lr_at(11), 0.5);
        assert_eq!(c.lr_at(13), 0.125);
        c.train.lr_decay_repeat = false;
        assert_eq!(c.lr_at(13), 0.5);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(ExperimentConfig::from_text("[model]\nhidden = 3\n").is_err());
        assert!(ExperimentConfig::from_text("[train]\ndropout = 1.5\n").is_err());
        assert!(ExperimentConfig::from_text("seed = 1\n").is_err());
        assert!(ExperimentConfig::from_text("[experiment]\nvariant = QG+X\n").is_err());
        let c = ExperimentConfig::from_text("# comment\n[experiment]\nvariant = qg\n[train]\nepochs = 5\n").unwrap();
        assert_eq!(c.variant, Variant::Qg);
        assert_eq!(c.train.epochs, 5);
    }
}
