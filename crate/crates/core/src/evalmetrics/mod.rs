//! Automatic metrics (BLEU-1..4, ROUGE-L, a reduced METEOR, perplexity) and
//! human-evaluation averaging.

pub mod bleu;
pub mod human;
pub mod meteor;
pub mod rouge;

use std::fmt::Write as _;

use serde::Serialize;

pub use bleu::{bleu, sentence_bleu, BleuStats};
pub use human::{human_eval_aggregate, parse_judgements, Judgement};
pub use meteor::{meteor_lite, Alignment, Matcher};
pub use rouge::{lcs_len, rouge_l, ROUGE_BETA};

use crate::error::{Error, Result};
use crate::parallel::{try_map_indexed, Execution};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MetricOptions {
    /// Add-one smoothing of the 2..4-gram precisions.
    pub smooth_bleu: bool,
    /// Let METEOR match English stems as well as exact tokens.
    pub meteor_stem: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub sentences: usize,
    pub candidate_tokens: usize,
    pub reference_tokens: usize,
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    pub meteor: f64,
    pub bleu_smoothing: bool,
    pub meteor_variant: &'static str,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_pretty(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sentences        {}", self.sentences);
        let _ = writeln!(s, "candidate tokens {}", self.candidate_tokens);
        let _ = writeln!(s, "reference tokens {}", self.reference_tokens);
        for (k, b) in self.bleu.iter().enumerate() {
            let _ = writeln!(s, "BLEU-{}           {b:.2}", k + 1);
        }
        let _ = writeln!(s, "ROUGE-L          {:.2}", self.rouge_l);
        let _ = writeln!(s, "METEOR ({})  {:.2}", self.meteor_variant, self.meteor);
        let _ = writeln!(
            s,
            "(BLEU smoothing {})",
            if self.bleu_smoothing { "on" } else { "off" }
        );
        s
    }
}

/// Scores every candidate against its references. Per-sentence work runs in
/// parallel; aggregation is in corpus order.
pub fn evaluate_corpus(
    candidates: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    opts: MetricOptions,
    exec: Execution,
) -> Result<MetricReport> {
    bleu::check_corpus(candidates, references)?;
    let matcher = Matcher::new(opts.meteor_stem);
    let pairs: Vec<(&Vec<String>, &Vec<Vec<String>>)> = candidates.iter().zip(references).collect();
    let per = try_map_indexed(exec, &pairs, |_, (c, r)| {
        if r.is_empty() {
            return Err(Error::Empty("reference list"));
        }
        Ok::<_, Error>((
            bleu::sentence_stats(c, r),
            rouge::rouge_l_multi(c, r)?,
            matcher.score_multi(c, r)?,
        ))
    })?;
    let mut stats = BleuStats::default();
    let (mut rouge, mut meteor) = (0.0, 0.0);
    for (b, r, m) in &per {
        stats.add(b);
        rouge += r;
        meteor += m;
    }
    let n = candidates.len() as f64;
    Ok(MetricReport {
        sentences: candidates.len(),
        candidate_tokens: candidates.iter().map(Vec::len).sum(),
        reference_tokens: references.iter().filter_map(|r| r.first()).map(Vec::len).sum(),
        bleu: stats.scores(opts.smooth_bleu),
        rouge_l: 100.0 * rouge / n,
        meteor: 100.0 * meteor / n,
        bleu_smoothing: opts.smooth_bleu,
        meteor_variant: if opts.meteor_stem { "exact+stem" } else { "exact" },
    })
}

/// `exp` of the mean per-token negative log-likelihood.
pub fn perplexity_from_nll(total_nll: f64, tokens: usize) -> Result<f64> {
    if tokens == 0 {
        return Err(Error::Empty("dataset"));
    }
    Ok((total_nll / tokens as f64).exp())
}

/// Whitespace-tokenized lines.
pub fn read_token_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect()
}
