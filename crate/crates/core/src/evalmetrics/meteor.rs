//! A reduced METEOR: unigram matching on exact tokens (or on their English
//! stems), no synonym or paraphrase tables. Scores are not comparable with
//! the official tool.

use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};

/// Node budget for the fewest-chunks search; past it the best alignment
/// found so far is used.
const SEARCH_BUDGET: usize = 2_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

/// Scores one candidate against one reference from its alignment.
pub fn meteor_from_alignment(a: Alignment, cand_len: usize, ref_len: usize) -> f64 {
    if a.matches == 0 {
        return 0.0;
    }
    let m = a.matches as f64;
    let p = m / cand_len as f64;
    let r = m / ref_len as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

pub struct Matcher {
    stemmer: Option<Stemmer>,
}

impl Matcher {
    pub fn new(stem: bool) -> Self {
        Matcher {
            stemmer: stem.then(|| Stemmer::create(Algorithm::English)),
        }
    }

    fn key(&self, w: &str) -> String {
        match &self.stemmer {
            Some(s) => s.stem(w).into_owned(),
            None => w.to_string(),
        }
    }

    /// The alignment with the most matches, and among those the fewest
    /// chunks (runs of matches adjacent in both sentences).
    pub fn align(&self, candidate: &[String], reference: &[String]) -> Alignment {
        let ck: Vec<String> = candidate.iter().map(|w| self.key(w)).collect();
        let rk: Vec<String> = reference.iter().map(|w| self.key(w)).collect();
        align_keys(&ck, &rk)
    }

    /// Score in [0, 1]; errors on an empty reference.
    pub fn score(&self, candidate: &[String], reference: &[String]) -> Result<f64> {
        if reference.is_empty() {
            return Err(Error::Empty("reference"));
        }
        let a = self.align(candidate, reference);
        Ok(meteor_from_alignment(a, candidate.len(), reference.len()))
    }

    pub fn score_multi(&self, candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
        let mut best: Option<f64> = None;
        for r in references {
            let s = self.score(candidate, r)?;
            best = Some(best.map_or(s, |b| b.max(s)));
        }
        best.ok_or(Error::Empty("reference list"))
    }
}

/// Convenience wrapper around [`Matcher`].
pub fn meteor_lite(candidate: &[String], reference: &[String], stem: bool) -> Result<f64> {
    Matcher::new(stem).score(candidate, reference)
}

struct Search {
    /// Reference positions sharing each candidate position's key.
    options: Vec<Vec<usize>>,
    keys: Vec<usize>,
    /// Matches still to be made, per key.
    need: Vec<usize>,
    /// Unvisited candidate positions, per key.
    remaining_cands: Vec<usize>,
    used: Vec<bool>,
    best: usize,
    nodes: usize,
}

fn align_keys(cand: &[String], reference: &[String]) -> Alignment {
    let mut key_id: HashMap<&str, usize> = HashMap::new();
    for w in cand.iter().chain(reference) {
        let n = key_id.len();
        key_id.entry(w.as_str()).or_insert(n);
    }
    let nk = key_id.len();
    let mut c_count = vec![0usize; nk];
    let mut r_count = vec![0usize; nk];
    let keys: Vec<usize> = cand.iter().map(|w| key_id[w.as_str()]).collect();
    for &k in &keys {
        c_count[k] += 1;
    }
    for w in reference {
        r_count[key_id[w.as_str()]] += 1;
    }
    // maximum matching: every key matches min(candidate count, reference count)
    let need: Vec<usize> = (0..nk).map(|k| c_count[k].min(r_count[k])).collect();
    let matches: usize = need.iter().sum();
    if matches == 0 {
        return Alignment { matches: 0, chunks: 0 };
    }
    let options: Vec<Vec<usize>> = cand
        .iter()
        .map(|w| {
            reference
                .iter()
                .enumerate()
                .filter(|(_, r)| *r == w)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut s = Search {
        options,
        keys,
        need,
        remaining_cands: c_count,
        used: vec![false; reference.len()],
        best: matches + 1,
        nodes: 0,
    };
    s.dfs(0, None, 0);
    Alignment {
        matches,
        chunks: s.best.min(matches),
    }
}

impl Search {
    /// `prev` is the reference position matched by candidate `i - 1`.
    fn dfs(&mut self, i: usize, prev: Option<usize>, chunks: usize) {
        self.nodes += 1;
        if chunks >= self.best || self.nodes > SEARCH_BUDGET {
            return;
        }
        if i == self.options.len() {
            self.best = chunks;
            return;
        }
        let k = self.keys[i];
        self.remaining_cands[k] -= 1;
        if self.need[k] > 0 {
            // continuing the current chunk is tried first
            let mut opts: Vec<usize> = self.options[i].iter().copied().filter(|&j| !self.used[j]).collect();
            if let Some(p) = prev {
                if let Some(pos) = opts.iter().position(|&j| j == p + 1) {
                    opts.swap(0, pos);
                }
            }
            for j in opts {
                let extends = prev.is_some_and(|p| j == p + 1);
                self.used[j] = true;
                self.need[k] -= 1;
                self.dfs(i + 1, Some(j), chunks + usize::from(!extends));
                self.need[k] += 1;
                self.used[j] = false;
            }
        }
        // skipping is allowed only while enough candidates of this key remain
        if self.remaining_cands[k] >= self.need[k] {
            self.dfs(i + 1, None, chunks);
        }
        self.remaining_cands[k] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_three_tokens() {
        let s = meteor_lite(&t("a b c"), &t("a b c"), false).unwrap();
        assert!((100.0 * s - 98.148148).abs() < 1e-4, "{s}");
    }

    #[test]
    fn no_matches_is_zero() {
        assert_eq!(meteor_lite(&t("a b"), &t("c d"), false).unwrap(), 0.0);
        assert!(meteor_lite(&t("a"), &[], false).is_err());
    }

    #[test]
    fn fewest_chunks_among_ambiguous_alignments() {
        // "the cat" can align to the second "the" to make one chunk
        let a = Matcher::new(false).align(&t("the cat"), &t("the dog saw the cat"));
        assert_eq!(a, Alignment { matches: 2, chunks: 1 });
        let a = Matcher::new(false).align(&t("b a"), &t("a b"));
        assert_eq!(a, Alignment { matches: 2, chunks: 2 });
    }

    #[test]
    fn stemming_stage() {
        let exact = Matcher::new(false).align(&t("running dogs"), &t("run dog"));
        let stem = Matcher::new(true).align(&t("running dogs"), &t("run dog"));
        assert_eq!(exact.matches, 0);
        assert_eq!(stem, Alignment { matches: 2, chunks: 1 });
    }
}
