//! Named-entity answer selection: encode the sentence with a unidirectional
//! LSTM stack, describe each candidate entity by
//! `R = [h_n; mean(H); mean(H over the entity)]`, score it with a small MLP
//! and normalise across candidates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::entities::candidate_entities;
use crate::config::ExperimentConfig;
use crate::corpus::{AnswerSpan, Example, TaggedToken, VocabSet};
use crate::error::{Error, Result};
use crate::features::{Channel, FeatureEmbeddingSpec, InputEmbedder};
use crate::kernel::{argmax, Graph, LstmStack, ParamId, ParamSet, Real, Var};
use crate::training::{Loss, Trainable};

#[derive(Clone, Debug, PartialEq)]
pub struct NeConfig {
    pub word_dim: usize,
    pub hidden_size: usize,
    pub layers: usize,
    /// 0 scores `R` with a single linear layer.
    pub mlp_hidden: usize,
    pub channels: Vec<Channel>,
    pub dropout: f64,
    pub init_scale: f64,
}

impl NeConfig {
    pub fn from_experiment(c: &ExperimentConfig) -> Self {
        NeConfig {
            word_dim: c.model.word_dim,
            hidden_size: c.selector.hidden_size,
            layers: c.selector.ne_layers,
            mlp_hidden: c.selector.ne_mlp_hidden,
            channels: c.selector.features.clone(),
            dropout: c.train.dropout,
            init_scale: c.model.init_scale,
        }
    }
}

#[derive(Clone, Debug)]
struct Mlp {
    hidden: Option<(ParamId, ParamId)>,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct NeSelector<F: Real = f32> {
    pub config: NeConfig,
    pub vocabs: VocabSet,
    pub params: ParamSet<F>,
    embed: InputEmbedder,
    encoder: LstmStack,
    mlp: Mlp,
}

/// The chosen candidate with the full distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct NeChoice {
    pub index: usize,
    pub span: AnswerSpan,
    pub candidates: Vec<AnswerSpan>,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct NeItem {
    pub sentence: Vec<TaggedToken>,
    pub candidates: Vec<AnswerSpan>,
    pub gold: usize,
}

impl NeItem {
    /// `None` when the gold answer is not one of the sentence's entities.
    pub fn from_example(ex: &Example) -> Option<Self> {
        let span = ex.answer?;
        let candidates = candidate_entities(&ex.sentence);
        let gold = candidates.iter().position(|c| *c == span)?;
        Some(NeItem {
            sentence: ex.sentence.clone(),
            candidates,
            gold,
        })
    }
}

impl<F: Real> NeSelector<F> {
    pub fn new(config: NeConfig, vocabs: VocabSet, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let s = config.init_scale;
        let h = config.hidden_size;
        let spec = FeatureEmbeddingSpec::new(config.word_dim, &config.channels, &vocabs);
        let input = spec.total_width();
        let embed = InputEmbedder::register(&mut params, "ne.embed", spec, vocabs.words.len(), s, &mut rng)?;
        let encoder = LstmStack::register(&mut params, "ne.encoder", input, h, config.layers, s, &mut rng)?;
        let (hidden, score_in) = if config.mlp_hidden > 0 {
            let m = config.mlp_hidden;
            let w = params.register_uniform("ne.mlp.W", &[m, 3 * h], s, &mut rng)?;
            let b = params.register_uniform("ne.mlp.b", &[m], s, &mut rng)?;
            (Some((w, b)), m)
        } else {
            (None, 3 * h)
        };
        let out_w = params.register_uniform("ne.score.W", &[score_in], s, &mut rng)?;
        let out_b = params.register_uniform("ne.score.b", &[1], s, &mut rng)?;
        Ok(NeSelector {
            config,
            vocabs,
            params,
            embed,
            encoder,
            mlp: Mlp { hidden, out_w, out_b },
        })
    }

    pub fn with_params(config: NeConfig, vocabs: VocabSet, params: &ParamSet<F>) -> Result<Self> {
        let mut m = Self::new(config, vocabs, 0)?;
        m.params.load_from(params)?;
        Ok(m)
    }

    /// `R_i` for every candidate; each has width `3 * hidden`.
    pub fn representations(
        &self,
        g: &mut Graph<'_, F>,
        sentence: &[TaggedToken],
        candidates: &[AnswerSpan],
    ) -> Result<Vec<Var>> {
        if sentence.is_empty() {
            return Err(Error::contract("NE selector needs a non-empty sentence"));
        }
        let (inputs, _) = self.embed.embed(g, sentence, &self.vocabs);
        let inputs: Vec<Var> = inputs.into_iter().map(|x| g.dropout(x, self.config.dropout)).collect();
        let hs = self.encoder.run(g, &inputs, self.config.dropout)?;
        let last = *hs.last().expect("non-empty");
        let mean_all = g.mean(&hs);
        candidates
            .iter()
            .map(|c| {
                c.check(sentence.len())?;
                let mean_span = g.mean(&hs[c.range()]);
                Ok(g.concat(&[last, mean_all, mean_span]))
            })
            .collect()
    }

    /// One logit per candidate.
    pub fn logits(&self, g: &mut Graph<'_, F>, sentence: &[TaggedToken], candidates: &[AnswerSpan]) -> Result<Var> {
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        let reps = self.representations(g, sentence, candidates)?;
        let w = g.param(self.mlp.out_w);
        let b = g.param(self.mlp.out_b);
        let hidden = self.mlp.hidden.map(|(w, b)| (g.param(w), g.param(b)));
        let scores: Vec<Var> = reps
            .into_iter()
            .map(|r| {
                let z = match hidden {
                    Some((hw, hb)) => {
                        let a = g.matvec(hw, r);
                        let a = g.add(a, hb);
                        let a = g.tanh(a);
                        g.dropout(a, self.config.dropout)
                    }
                    None => r,
                };
                let s = g.dot(z, w);
                g.add(s, b)
            })
            .collect();
        Ok(g.concat(&scores))
    }

    /// `P(candidate_i | sentence)`, softmax across candidates.
    pub fn probabilities(&self, sentence: &[TaggedToken], candidates: &[AnswerSpan]) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.params);
        let u = self.logits(&mut g, sentence, candidates)?;
        let p = g.softmax(u);
        Ok(g.value(p).iter().map(|x| x.as_f64()).collect())
    }

    /// Picks the most probable entity (lowest index on ties).
    pub fn select(&self, sentence: &[TaggedToken]) -> Result<NeChoice> {
        let candidates = candidate_entities(sentence);
        let probabilities = self.probabilities(sentence, &candidates)?;
        let index = argmax(&probabilities);
        Ok(NeChoice {
            index,
            span: candidates[index],
            candidates,
            probabilities,
        })
    }
}

impl<F: Real> Trainable<F> for NeSelector<F> {
    type Item = NeItem;

    fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    fn loss(&self, g: &mut Graph<'_, F>, item: &NeItem) -> Result<Loss> {
        let u = self.logits(g, &item.sentence, &item.candidates)?;
        let lp = g.log_softmax(u);
        Ok(Loss {
            value: g.nll(&[lp], &[item.gold], None),
            count: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::kernel::gradcheck;

    fn vocabs() -> VocabSet {
        VocabSet {
            words: Vocabulary::from_tokens(["ada", "met", "bob", "in", "may"]),
            pos: Vocabulary::from_tokens(["NNP", "VBD", "IN"]),
            ner: Vocabulary::from_tokens(["PERSON", "DATE"]),
            dep: Vocabulary::from_tokens(["nsubj", "ROOT", "obj"]),
        }
    }

    fn config(mlp_hidden: usize) -> NeConfig {
        NeConfig {
            word_dim: 3,
            hidden_size: 3,
            layers: 2,
            mlp_hidden,
            channels: vec![Channel::Pos, Channel::Ner],
            dropout: 0.0,
            init_scale: 0.5,
        }
    }

    fn sentence() -> Vec<TaggedToken> {
        [
            ("ada", "NNP", "PERSON"),
            ("met", "VBD", "O"),
            ("bob", "NNP", "PERSON"),
            ("in", "IN", "O"),
            ("may", "NNP", "DATE"),
        ]
        .iter()
        .map(|(w, p, n)| TaggedToken {
            pos: p.to_string(),
            ner: n.to_string(),
            ..TaggedToken::plain(*w)
        })
        .collect()
    }

    #[test]
    fn representation_width() {
        let m = NeSelector::<f64>::new(config(4), vocabs(), 1).unwrap();
        let mut g = Graph::new(&m.params);
        let reps = m
            .representations(&mut g, &sentence(), &candidate_entities(&sentence()))
            .unwrap();
        assert_eq!(reps.len(), 3);
        assert!(reps.iter().all(|&r| g.size(r) == 9));
    }

    #[test]
    fn singleton_and_zero_weight_cases() {
        let mut m = NeSelector::<f64>::new(config(4), vocabs(), 1).unwrap();
        let s = sentence();
        assert_eq!(m.probabilities(&s, &[AnswerSpan { start: 1, end: 1 }]).unwrap(), vec![1.0]);
        let out = m.mlp.out_w;
        m.params.get_mut(out).data_mut().fill(0.0);
        let p = m
            .probabilities(&s, &[AnswerSpan { start: 1, end: 1 }, AnswerSpan { start: 3, end: 3 }])
            .unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn no_candidates_is_an_error() {
        let m = NeSelector::<f32>::new(config(0), vocabs(), 1).unwrap();
        let s: Vec<TaggedToken> = ["ada", "met"].iter().map(|w| TaggedToken::plain(*w)).collect();
        assert!(matches!(m.select(&s), Err(Error::NoCandidates)));
    }

    #[test]
    fn probabilities_sum_to_one_and_ignore_the_output_bias() {
        let mut m = NeSelector::<f64>::new(config(4), vocabs(), 7).unwrap();
        let s = sentence();
        let a = m.select(&s).unwrap();
        assert!((a.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let b = m.mlp.out_b;
        m.params.get_mut(b).data_mut()[0] += 3.0;
        let c = m.select(&s).unwrap();
        assert_eq!(a.index, c.index);
        for (x, y) in a.probabilities.iter().zip(&c.probabilities) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        for h in [0, 3] {
            let m = NeSelector::<f64>::new(config(h), vocabs(), 4).unwrap();
            let item = NeItem {
                sentence: sentence(),
                candidates: candidate_entities(&sentence()),
                gold: 1,
            };
            let err = gradcheck::check(&m.params, 2, |g| Ok(m.loss(g, &item)?.value)).unwrap();
            assert!(err < 1e-4, "mlp {h}: {err}");
        }
    }
}
