use std::collections::HashMap;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Clipped n-gram matches and totals for one sentence, orders 1..=4, plus
/// the candidate length and the closest reference length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn add(&mut self, o: &BleuStats) {
        for k in 0..MAX_ORDER {
            self.matches[k] += o.matches[k];
            self.totals[k] += o.totals[k];
        }
        self.cand_len += o.cand_len;
        self.ref_len += o.ref_len;
    }

    /// Cumulative BLEU-1..4 in [0, 100].
    pub fn scores(&self, smooth: bool) -> [f64; MAX_ORDER] {
        let bp = if self.cand_len == 0 {
            0.0
        } else if self.cand_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        } else {
            1.0
        };
        let mut out = [0.0; MAX_ORDER];
        let mut log_sum = 0.0;
        for k in 0..MAX_ORDER {
            let (m, t) = (self.matches[k] as f64, self.totals[k] as f64);
            let p = if smooth && k > 0 { (m + 1.0) / (t + 1.0) } else if t > 0.0 { m / t } else { 0.0 };
            log_sum += if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
            out[k] = if bp == 0.0 || log_sum == f64::NEG_INFINITY {
                0.0
            } else {
                100.0 * bp * (log_sum / (k + 1) as f64).exp()
            };
        }
        out
    }
}

fn ngram_counts<'a>(tokens: &'a [String], n: usize) -> HashMap<&'a [String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Reference length closest to `c`; ties go to the shorter one.
fn closest_ref_len(c: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

pub fn sentence_stats(cand: &[String], refs: &[Vec<String>]) -> BleuStats {
    let mut s = BleuStats {
        cand_len: cand.len(),
        ref_len: closest_ref_len(cand.len(), refs),
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let c = ngram_counts(cand, n);
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in refs {
            for (g, k) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        s.totals[n - 1] = cand.len().saturating_sub(n - 1);
        s.matches[n - 1] = c.iter().map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0))).sum();
    }
    s
}

/// Corpus BLEU-1..4: clipped counts are summed over the corpus before the
/// precisions and the brevity penalty are taken.
pub fn bleu(candidates: &[Vec<String>], references: &[Vec<Vec<String>>], smooth: bool) -> Result<[f64; MAX_ORDER]> {
    check_corpus(candidates, references)?;
    let mut total = BleuStats::default();
    for (c, r) in candidates.iter().zip(references) {
        total.add(&sentence_stats(c, r));
    }
    Ok(total.scores(smooth))
}

pub fn sentence_bleu(candidate: &[String], references: &[Vec<String>], smooth: bool) -> [f64; MAX_ORDER] {
    sentence_stats(candidate, references).scores(smooth)
}

pub(crate) fn check_corpus<T>(candidates: &[Vec<String>], references: &[T]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    if candidates.len() != references.len() {
        return Err(Error::contract(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn identical_corpus_scores_100() {
        let c = vec![t("what is the capital of france ?"), t("who wrote the first program ?")];
        let r: Vec<_> = c.iter().map(|x| vec![x.clone()]).collect();
        for s in bleu(&c, &r, false).unwrap() {
            assert_eq!(s, 100.0);
        }
    }

    #[test]
    fn clipped_unigram_precision() {
        let s = bleu(&[t("the the the the")], &[vec![t("the cat")]], false).unwrap();
        assert!((s[0] - 25.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_is_zero() {
        let s = bleu(&[t("a b c d")], &[vec![t("w x y z")]], false).unwrap();
        assert_eq!(s, [0.0; 4]);
    }

    #[test]
    fn brevity_penalty_uses_the_closest_reference() {
        let st = sentence_stats(&t("a b"), &[t("a b c d e"), t("a b c")]);
        assert_eq!(st.ref_len, 3);
        let s = st.scores(false);
        assert!((s[0] - 100.0 * (1.0 - 1.5f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn smoothing_handles_short_and_empty_candidates() {
        assert_eq!(sentence_bleu(&[], &[t("a b")], true), [0.0; 4]);
        // empty higher orders smooth to 1/1
        assert_eq!(sentence_bleu(&t("a b"), &[t("a b")], true), [100.0; 4]);
        let s = sentence_bleu(&t("a b"), &[t("a c")], true);
        assert!(s[3] > 0.0 && s[3] < 100.0);
        assert_eq!(sentence_bleu(&t("a b"), &[t("a b")], false)[3], 0.0);
    }

    #[test]
    fn empty_or_ragged_corpus_is_rejected() {
        assert!(bleu(&[], &[], false).is_err());
        assert!(bleu(&[t("a")], &[], false).is_err());
    }
}
