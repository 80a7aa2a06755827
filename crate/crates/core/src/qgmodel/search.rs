//! Greedy and beam decoding.

use serde::Serialize;

use super::{Encoding, QgModel};
use crate::corpus::{TaggedToken, BOS, EOS};
use crate::error::{Error, Result};
use crate::kernel::{Graph, LstmState, Real};
use crate::parallel::{try_map_indexed, Execution};

#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: Vec<LstmState>,
    pub finished: bool,
}

impl Hypothesis {
    /// Mean log-probability per emitted token (EOS counts as a token).
    pub fn average(&self) -> f64 {
        self.log_prob / self.tokens.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Generated {
    pub words: Vec<String>,
    /// Mean log-probability per token of the returned hypothesis.
    pub score: f64,
}

fn step_log_probs<F: Real>(
    model: &QgModel<F>,
    g: &mut Graph<'_, F>,
    prev: usize,
    state: &mut [LstmState],
    enc: &Encoding,
) -> Result<Vec<f64>> {
    let out = model.decode_step(g, prev, state, enc)?;
    Ok(g.value(out.log_probs).iter().map(|x| x.as_f64()).collect())
}

/// Argmax decoding for at most `max_len` words.
pub fn greedy<F: Real>(model: &QgModel<F>, sentence: &[TaggedToken], max_len: usize) -> Result<Generated> {
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, sentence)?;
    let mut state = enc.bridge.clone();
    let mut ids = Vec::new();
    let mut log_prob = 0.0;
    let mut prev = BOS;
    while ids.len() < max_len {
        let lp = step_log_probs(model, &mut g, prev, &mut state, &enc)?;
        let next = crate::kernel::argmax(&lp);
        log_prob += lp[next];
        if next == EOS {
            return Ok(Generated {
                words: model.words(&ids),
                score: log_prob / (ids.len() + 1) as f64,
            });
        }
        ids.push(next);
        prev = next;
    }
    Ok(Generated {
        words: model.words(&ids),
        score: log_prob / ids.len().max(1) as f64,
    })
}

/// Beam search with width `k`. Hypotheses close at EOS or after `max_len`
/// words; the finished hypothesis with the best mean log-probability per
/// token wins. With `k = 1` this is exactly [`greedy`].
pub fn beam_search<F: Real>(model: &QgModel<F>, sentence: &[TaggedToken], k: usize, max_len: usize) -> Result<Generated> {
    if k == 0 {
        return Err(Error::contract("beam width must be at least 1"));
    }
    let mut g = Graph::new(&model.params);
    let enc = model.encode(&mut g, sentence)?;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: enc.bridge.clone(),
        finished: false,
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    while !live.is_empty() && done.len() < k {
        // (hypothesis, token, total log prob), in hypothesis then token order
        let mut pool: Vec<(usize, usize, f64, Vec<LstmState>)> = Vec::new();
        for (hi, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let mut state = hyp.state.clone();
            let lp = step_log_probs(model, &mut g, prev, &mut state, &enc)?;
            let mut order: Vec<usize> = (0..lp.len()).collect();
            order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]));
            for &t in order.iter().take(k) {
                pool.push((hi, t, hyp.log_prob + lp[t], state.clone()));
            }
        }
        pool.sort_by(|a, b| b.2.total_cmp(&a.2));
        let mut next = Vec::new();
        for (hi, t, lp, state) in pool.into_iter().take(k - done.len()) {
            let mut tokens = live[hi].tokens.clone();
            tokens.push(t);
            let finished = t == EOS;
            let words = tokens.len() - usize::from(finished);
            let hyp = Hypothesis {
                tokens,
                log_prob: lp,
                state,
                finished,
            };
            if finished || words >= max_len {
                done.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        live = next;
    }
    done.extend(live);
    let best = done
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.average().total_cmp(&b.average()).then(j.cmp(i)))
        .map(|(_, h)| h)
        .expect("beam keeps at least one hypothesis");
    Ok(Generated {
        words: model.words(&best.tokens),
        score: best.average(),
    })
}

/// Generates a question per sentence, in order; beam 1 is greedy.
pub fn generate_all<F: Real>(
    model: &QgModel<F>,
    sentences: &[Vec<TaggedToken>],
    beam: usize,
    exec: Execution,
) -> Result<Vec<Generated>> {
    let max_len = model.config.max_question_len;
    try_map_indexed(exec, sentences, |_, s| {
        if beam <= 1 {
            greedy(model, s, max_len)
        } else {
            beam_search(model, s, beam, max_len)
        }
    })
}
