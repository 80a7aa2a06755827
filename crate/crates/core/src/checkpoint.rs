//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "QAPGCKPT"
//! version    u32
//! kind       str
//! config     str      (the config file text)
//! fingerprint str     (sha256 hex of the config text)
//! vocab count u32, then per vocabulary: name str, token count u32, tokens str*
//! tensor count u32, then per tensor: name str, rank u32, dims u64*, values f32*
//! ```
//!
//! A `str` is a u32 byte length followed by UTF-8 bytes. Tensors appear in
//! parameter registration order, so save/load/save is byte-identical.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::answersel::{NeConfig, NeSelector, PointerConfig, PointerMode, PointerNet};
use crate::config::{fingerprint_text, ExperimentConfig};
use crate::corpus::{VocabSet, Vocabulary};
use crate::error::{Error, Result};
use crate::kernel::{ParamSet, Tensor};
use crate::qgmodel::{QgConfig, QgModel};

pub const MAGIC: &[u8; 8] = b"QAPGCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Qg,
    NeSelector,
    SequencePointer,
    BoundaryPointer,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Qg => "qg",
            ModelKind::NeSelector => "ne",
            ModelKind::SequencePointer => "sequence",
            ModelKind::BoundaryPointer => "boundary",
        }
    }

    pub fn pointer_mode(self) -> Option<PointerMode> {
        match self {
            ModelKind::SequencePointer => Some(PointerMode::Sequence),
            ModelKind::BoundaryPointer => Some(PointerMode::Boundary),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "qg" => ModelKind::Qg,
            "ne" => ModelKind::NeSelector,
            "sequence" => ModelKind::SequencePointer,
            "boundary" => ModelKind::BoundaryPointer,
            _ => return Err(Error::Config(format!("unknown model kind `{s}`"))),
        })
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ExperimentConfig,
    /// The config text as stored; the fingerprint is taken over it.
    pub config_text: String,
    pub vocabs: VocabSet,
    pub params: ParamSet<f32>,
}

impl Checkpoint {
    pub fn new(kind: ModelKind, config: &ExperimentConfig, vocabs: VocabSet, params: ParamSet<f32>) -> Self {
        Checkpoint {
            kind,
            config: config.clone(),
            config_text: config.to_text(),
            vocabs,
            params,
        }
    }

    pub fn fingerprint(&self) -> String {
        fingerprint_text(&self.config_text)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, FORMAT_VERSION);
        put_str(&mut w, self.kind.name());
        put_str(&mut w, &self.config_text);
        put_str(&mut w, &self.fingerprint());
        let named = self.vocabs.named();
        put_u32(&mut w, named.len() as u32);
        for (name, v) in named {
            put_str(&mut w, name);
            put_u32(&mut w, v.len() as u32);
            for t in v.tokens() {
                put_str(&mut w, t);
            }
        }
        put_u32(&mut w, self.params.len() as u32);
        for (_, name, t) in self.params.iter() {
            put_str(&mut w, name);
            put_u32(&mut w, t.shape().len() as u32);
            for &d in t.shape() {
                w.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                w.extend_from_slice(&x.to_le_bytes());
            }
        }
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let kind: ModelKind = r.string()?.parse()?;
        let config_text = r.string()?;
        let fp = r.string()?;
        if fp != fingerprint_text(&config_text) {
            return Err(Error::Checkpoint("config fingerprint does not match the stored config".into()));
        }
        let config = ExperimentConfig::from_text(&config_text)?;
        let mut named = Vec::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let n = r.u32()? as usize;
            let mut tokens = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                tokens.push(r.string()?);
            }
            let v = Vocabulary::from_tokens(tokens.iter().skip(4).cloned());
            if v.tokens() != tokens.as_slice() {
                return Err(Error::Checkpoint(format!("vocabulary `{name}` is malformed")));
            }
            named.push((name, v));
        }
        let vocabs = VocabSet::from_named(named)?;
        let mut params = ParamSet::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                let d = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
                shape.push(usize::try_from(d).map_err(|_| Error::Checkpoint("dimension overflow".into()))?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
            params
                .register(name, t)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Checkpoint {
            kind,
            config,
            config_text,
            vocabs,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    fn expect(&self, kinds: &[ModelKind]) -> Result<()> {
        if kinds.contains(&self.kind) {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!(
                "checkpoint holds a `{}` model, expected {}",
                self.kind,
                kinds.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(" or ")
            )))
        }
    }

    /// Rebuilds the question generator; shapes are checked name by name.
    pub fn qg_model(&self) -> Result<QgModel> {
        self.expect(&[ModelKind::Qg])?;
        QgModel::with_params(QgConfig::from_experiment(&self.config), self.vocabs.clone(), &self.params)
    }

    pub fn pointer_net(&self) -> Result<PointerNet> {
        self.expect(&[ModelKind::SequencePointer, ModelKind::BoundaryPointer])?;
        let mode = self.kind.pointer_mode().expect("pointer kind");
        PointerNet::with_params(
            PointerConfig::from_experiment(&self.config, mode),
            self.vocabs.clone(),
            &self.params,
        )
    }

    pub fn ne_selector(&self) -> Result<NeSelector> {
        self.expect(&[ModelKind::NeSelector])?;
        NeSelector::with_params(NeConfig::from_experiment(&self.config), self.vocabs.clone(), &self.params)
    }
}

fn put_u32(w: &mut Vec<u8>, x: u32) {
    w.extend_from_slice(&x.to_le_bytes());
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    put_u32(w, s.len() as u32);
    w.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("invalid UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Variant;
    use crate::qgmodel::search::greedy;

    fn small() -> (ExperimentConfig, QgModel) {
        let mut c = ExperimentConfig::desk(Variant::QgFGae);
        c.model.word_dim = 6;
        c.model.hidden_size = 5;
        let vocabs = crate::qgmodel::tests::tiny_vocabs();
        let m = QgModel::new(QgConfig::from_experiment(&c), vocabs, 3).unwrap();
        (c, m)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (c, m) = small();
        let ck = Checkpoint::new(ModelKind::Qg, &c, m.vocabs.clone(), m.params.clone());
        let a = ck.to_bytes();
        let back = Checkpoint::from_bytes(&a).unwrap();
        assert_eq!(back.to_bytes(), a);
        let m2 = back.qg_model().unwrap();
        for ((_, n1, t1), (_, n2, t2)) in m.params.iter().zip(m2.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                       t2.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
        let s = crate::qgmodel::tests::sentence();
        assert_eq!(greedy(&m, &s, 8).unwrap(), greedy(&m2, &s, 8).unwrap());
    }

    #[test]
    fn rejects_damaged_files() {
        let (c, m) = small();
        let bytes = Checkpoint::new(ModelKind::Qg, &c, m.vocabs.clone(), m.params.clone()).to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad[8..12].copy_from_slice(&2u32.to_le_bytes());
        let e = Checkpoint::from_bytes(&bad).unwrap_err().to_string();
        assert!(e.contains("version 2"), "{e}");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        // flip one character of the stored config text
        let at = bytes.windows(8).position(|w| w == b"[model]\n").unwrap() + 1;
        let mut bad = bytes.clone();
        bad[at] = b'n';
        let e = Checkpoint::from_bytes(&bad).unwrap_err().to_string();
        assert!(e.contains("fingerprint"), "{e}");
    }

    #[test]
    fn wrong_kind_is_reported() {
        let (c, m) = small();
        let ck = Checkpoint::new(ModelKind::Qg, &c, m.vocabs.clone(), m.params.clone());
        assert!(ck.pointer_net().is_err());
        assert!(ck.ne_selector().is_err());
    }
}
