//! Stage two: a feature-augmented bidirectional LSTM encoder and an LSTM
//! decoder with dot-product global attention.
//!
//! Encoder outputs are projected to the decoder width,
//! `ĥ_t = tanh(U [f_t; b_t] + c)`, so the attention score is a plain dot
//! product. The final forward and backward states are bridged into the
//! initial state of every decoder layer. Each decoder step predicts
//! `softmax(W_s tanh(W_r [h_t; c_t] + b_r) + b_s)` with PAD and BOS masked.

pub mod search;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::corpus::{Example, TaggedToken, VocabSet, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::features::{Channel, FeatureEmbeddingSpec, InputEmbedder};
use crate::kernel::{Graph, LstmCell, LstmStack, LstmState, ParamId, ParamSet, Real, Var};
use crate::parallel::Execution;
use crate::training::{evaluate, Loss, Trainable};

pub use search::{beam_search, generate_all, greedy, Generated, Hypothesis};

/// Added to masked output logits; large enough that `exp` underflows to 0.
const MASKED: f64 = -1e30;

#[derive(Clone, Debug, PartialEq)]
pub struct QgConfig {
    pub word_dim: usize,
    pub hidden_size: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub channels: Vec<Channel>,
    pub dropout: f64,
    pub max_source_len: usize,
    pub max_question_len: usize,
    pub init_scale: f64,
}

impl QgConfig {
    pub fn from_experiment(c: &ExperimentConfig) -> Self {
        QgConfig {
            word_dim: c.model.word_dim,
            hidden_size: c.model.hidden_size,
            encoder_layers: c.model.encoder_layers,
            decoder_layers: c.model.decoder_layers,
            channels: c.variant.channels(),
            dropout: c.train.dropout,
            max_source_len: c.model.max_source_len,
            max_question_len: c.model.max_question_len,
            init_scale: c.model.init_scale,
        }
    }
}

#[derive(Clone, Debug)]
struct BiLayer {
    fwd: LstmCell,
    bwd: LstmCell,
}

#[derive(Clone, Debug)]
struct Bridge {
    wh: ParamId,
    bh: ParamId,
    wc: ParamId,
    bc: ParamId,
}

#[derive(Clone, Debug)]
struct Output {
    wr: ParamId,
    br: ParamId,
    ws: ParamId,
    bs: ParamId,
}

#[derive(Clone, Debug)]
pub struct QgModel<F: Real = f32> {
    pub config: QgConfig,
    pub vocabs: VocabSet,
    pub params: ParamSet<F>,
    embed: InputEmbedder,
    encoder: Vec<BiLayer>,
    proj_u: ParamId,
    proj_c: ParamId,
    bridge: Vec<Bridge>,
    decoder: LstmStack,
    output: Output,
    mask: Vec<F>,
}

/// Projected encoder outputs and the decoder's initial state.
#[derive(Clone, Debug)]
pub struct Encoding {
    /// `ĥ_1 .. ĥ_n`, each of decoder width.
    pub outputs: Vec<Var>,
    /// The same states stacked as an `n x hidden` matrix.
    pub memory: Var,
    /// One initial state per decoder layer.
    pub bridge: Vec<LstmState>,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionResult {
    /// Alignment weights over source positions.
    pub alpha: Var,
    /// `Σ_i alpha_i ĥ_i`.
    pub context: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// Log-probabilities over the word vocabulary.
    pub log_probs: Var,
    pub attention: AttentionResult,
}

/// Dot-product attention of `h` over the rows of `memory`.
pub fn attend<F: Real>(g: &mut Graph<'_, F>, h: Var, memory: Var) -> Result<AttentionResult> {
    let (_, width) = g.dims(memory);
    if g.size(h) != width {
        return Err(Error::contract(format!(
            "attention: decoder state has width {}, encoder states {width}",
            g.size(h)
        )));
    }
    let scores = g.matvec(memory, h);
    let alpha = g.softmax(scores);
    let context = g.mat_t_vec(memory, alpha);
    Ok(AttentionResult { alpha, context })
}

impl<F: Real> QgModel<F> {
    pub fn new(config: QgConfig, vocabs: VocabSet, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let s = config.init_scale;
        let h = config.hidden_size;
        let v = vocabs.words.len();
        let spec = FeatureEmbeddingSpec::new(config.word_dim, &config.channels, &vocabs);
        let input = spec.total_width();
        let embed = InputEmbedder::register(&mut params, "qg.embed", spec, v, s, &mut rng)?;
        let encoder = (0..config.encoder_layers)
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * h };
                let p = format!("qg.encoder.layer{l}");
                Ok(BiLayer {
                    fwd: LstmCell::register(&mut params, &format!("{p}.fwd"), inp, h, s, &mut rng)?,
                    bwd: LstmCell::register(&mut params, &format!("{p}.bwd"), inp, h, s, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let proj_u = params.register_uniform("qg.encoder.U", &[h, 2 * h], s, &mut rng)?;
        let proj_c = params.register_uniform("qg.encoder.c", &[h], s, &mut rng)?;
        let bridge = (0..config.decoder_layers)
            .map(|l| {
                let p = format!("qg.bridge.layer{l}");
                Ok(Bridge {
                    wh: params.register_uniform(format!("{p}.Wh"), &[h, 2 * h], s, &mut rng)?,
                    bh: params.register_uniform(format!("{p}.bh"), &[h], s, &mut rng)?,
                    wc: params.register_uniform(format!("{p}.Wc"), &[h, 2 * h], s, &mut rng)?,
                    bc: params.register_uniform(format!("{p}.bc"), &[h], s, &mut rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let decoder = LstmStack::register(
            &mut params,
            "qg.decoder",
            config.word_dim,
            h,
            config.decoder_layers,
            s,
            &mut rng,
        )?;
        let output = Output {
            wr: params.register_uniform("qg.output.Wr", &[h, 2 * h], s, &mut rng)?,
            br: params.register_uniform("qg.output.br", &[h], s, &mut rng)?,
            ws: params.register_uniform("qg.output.Ws", &[v, h], s, &mut rng)?,
            bs: params.register_uniform("qg.output.bs", &[v], s, &mut rng)?,
        };
        let mut mask = vec![F::zero(); v];
        mask[PAD] = F::lit(MASKED);
        mask[BOS] = F::lit(MASKED);
        Ok(QgModel {
            config,
            vocabs,
            params,
            embed,
            encoder,
            proj_u,
            proj_c,
            bridge,
            decoder,
            output,
            mask,
        })
    }

    pub fn with_params(config: QgConfig, vocabs: VocabSet, params: &ParamSet<F>) -> Result<Self> {
        let mut m = Self::new(config, vocabs, 0)?;
        m.params.load_from(params)?;
        Ok(m)
    }

    pub fn word_table(&self) -> ParamId {
        self.embed.word_table
    }

    /// Runs the bidirectional stack over `sentence` (truncated to the
    /// maximum source length).
    pub fn encode(&self, g: &mut Graph<'_, F>, sentence: &[TaggedToken]) -> Result<Encoding> {
        if sentence.is_empty() {
            return Err(Error::contract("cannot encode an empty sentence"));
        }
        let sentence = &sentence[..sentence.len().min(self.config.max_source_len)];
        let (mut xs, _) = self.embed.embed(g, sentence, &self.vocabs);
        let n = xs.len();
        let mut finals = None;
        for (l, layer) in self.encoder.iter().enumerate() {
            if l > 0 {
                xs = xs.into_iter().map(|x| g.dropout(x, self.config.dropout)).collect();
            }
            let mut f = layer.fwd.zero_state(g);
            let mut fwd = Vec::with_capacity(n);
            for &x in &xs {
                f = layer.fwd.step(g, x, f)?;
                fwd.push(f);
            }
            let mut b = layer.bwd.zero_state(g);
            let mut bwd = vec![b; n];
            for t in (0..n).rev() {
                b = layer.bwd.step(g, xs[t], b)?;
                bwd[t] = b;
            }
            finals = Some((fwd[n - 1], bwd[0]));
            xs = (0..n).map(|t| g.concat(&[fwd[t].h, bwd[t].h])).collect();
        }
        let (f_last, b_first) = finals.expect("at least one encoder layer");
        let u = g.param(self.proj_u);
        let c = g.param(self.proj_c);
        let outputs: Vec<Var> = xs
            .into_iter()
            .map(|x| {
                let p = g.matvec(u, x);
                let p = g.add(p, c);
                g.tanh(p)
            })
            .collect();
        let memory = g.stack(&outputs);
        let sh = g.concat(&[f_last.h, b_first.h]);
        let sc = g.concat(&[f_last.c, b_first.c]);
        let bridge = self
            .bridge
            .iter()
            .map(|br| {
                let (wh, bh, wc, bc) = (g.param(br.wh), g.param(br.bh), g.param(br.wc), g.param(br.bc));
                let h = g.matvec(wh, sh);
                let h = g.add(h, bh);
                let h = g.tanh(h);
                let c = g.matvec(wc, sc);
                let c = g.add(c, bc);
                LstmState { h, c }
            })
            .collect();
        Ok(Encoding {
            outputs,
            memory,
            bridge,
        })
    }

    /// Feeds `prev` (a word id) through the decoder, attends and predicts the
    /// next word. `state` is advanced in place.
    pub fn decode_step(
        &self,
        g: &mut Graph<'_, F>,
        prev: usize,
        state: &mut [LstmState],
        enc: &Encoding,
    ) -> Result<StepOutput> {
        let x = g.gather(self.embed.word_table, prev);
        let h = self.decoder.step(g, x, state, self.config.dropout)?;
        let attention = attend(g, h, enc.memory)?;
        let o = &self.output;
        let (wr, br, ws, bs) = (g.param(o.wr), g.param(o.br), g.param(o.ws), g.param(o.bs));
        let hc = g.concat(&[h, attention.context]);
        let z = g.matvec(wr, hc);
        let z = g.add(z, br);
        let z = g.tanh(z);
        let z = g.dropout(z, self.config.dropout);
        let logits = g.matvec(ws, z);
        let logits = g.add(logits, bs);
        let logits = g.add_const(logits, &self.mask);
        Ok(StepOutput {
            log_probs: g.log_softmax(logits),
            attention,
        })
    }

    /// Word ids of the (truncated) question followed by EOS.
    pub fn targets(&self, question: &[String]) -> Vec<usize> {
        question
            .iter()
            .take(self.config.max_question_len)
            .map(|w| self.vocabs.words.id(w))
            .chain([EOS])
            .collect()
    }

    /// Teacher-forced summed NLL of `question` + EOS.
    pub fn loss_on(&self, g: &mut Graph<'_, F>, sentence: &[TaggedToken], question: &[String]) -> Result<Loss> {
        if question.is_empty() {
            return Err(Error::contract("training examples need a non-empty question"));
        }
        let targets = self.targets(question);
        let enc = self.encode(g, sentence)?;
        let mut state = enc.bridge.clone();
        let mut prev = BOS;
        let mut log_probs = Vec::with_capacity(targets.len());
        for &t in &targets {
            log_probs.push(self.decode_step(g, prev, &mut state, &enc)?.log_probs);
            prev = t;
        }
        Ok(Loss {
            value: g.nll(&log_probs, &targets, Some(PAD)),
            count: targets.len(),
        })
    }

    /// `exp` of the mean per-token NLL over `examples`, EOS included.
    pub fn perplexity(&self, examples: &[Example], exec: Execution) -> Result<f64> {
        let (sum, n) = evaluate(self, examples, exec)?;
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        Ok((sum / n as f64).exp())
    }

    /// Strips specials and maps ids to words.
    pub fn words(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| !matches!(i, PAD | BOS | EOS))
            .map(|&i| self.vocabs.words.token(i).to_string())
            .collect()
    }
}

impl<F: Real> Trainable<F> for QgModel<F> {
    type Item = Example;

    fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    fn loss(&self, g: &mut Graph<'_, F>, ex: &Example) -> Result<Loss> {
        self.loss_on(g, &ex.sentence, &ex.question)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{Bio, Vocabulary};
    use crate::kernel::gradcheck;

    pub(crate) fn tiny_vocabs() -> VocabSet {
        VocabSet {
            words: Vocabulary::from_tokens(["who", "wrote", "ada", "code", "?"]),
            pos: Vocabulary::from_tokens(["NNP", "VBD", "NN"]),
            ner: Vocabulary::from_tokens(["PERSON"]),
            dep: Vocabulary::from_tokens(["nsubj", "ROOT", "obj"]),
        }
    }

    pub(crate) fn tiny_config(layers: (usize, usize), channels: &[Channel]) -> QgConfig {
        QgConfig {
            word_dim: 3,
            hidden_size: 3,
            encoder_layers: layers.0,
            decoder_layers: layers.1,
            channels: channels.to_vec(),
            dropout: 0.0,
            max_source_len: 100,
            max_question_len: 30,
            init_scale: 0.5,
        }
    }

    pub(crate) fn sentence() -> Vec<TaggedToken> {
        vec![
            TaggedToken::new("ada", "NNP", "PERSON", "nsubj", Bio::B).unwrap(),
            TaggedToken::new("wrote", "VBD", "O", "ROOT", Bio::O).unwrap(),
            TaggedToken::new("code", "NN", "O", "obj", Bio::O).unwrap(),
        ]
    }

    fn q(words: &str) -> Vec<String> {
        words.split(' ').map(String::from).collect()
    }

    #[test]
    fn single_token_input() {
        let m = QgModel::<f64>::new(tiny_config((2, 2), &Channel::ORDER), tiny_vocabs(), 1).unwrap();
        let mut g = Graph::new(&m.params);
        let enc = m.encode(&mut g, &sentence()[..1]).unwrap();
        assert_eq!(enc.outputs.len(), 1);
        assert_eq!(g.dims(enc.memory), (1, 3));
        assert_eq!(enc.bridge.len(), 2);
    }

    #[test]
    fn empty_sentence_is_rejected() {
        let m = QgModel::<f64>::new(tiny_config((1, 1), &[]), tiny_vocabs(), 1).unwrap();
        let mut g = Graph::new(&m.params);
        assert!(m.encode(&mut g, &[]).is_err());
    }

    #[test]
    fn reversal_symmetry_with_swapped_directions() {
        let m = QgModel::<f64>::new(tiny_config((1, 1), &[Channel::Pos]), tiny_vocabs(), 3).unwrap();
        // swap forward/backward cells and the two column halves of U
        let mut swapped = m.clone();
        let layer = &m.encoder[0];
        for (a, b) in [(layer.fwd.weight, layer.bwd.weight), (layer.fwd.bias, layer.bwd.bias)] {
            let ta = m.params.get(a).clone();
            let tb = m.params.get(b).clone();
            *swapped.params.get_mut(a) = tb;
            *swapped.params.get_mut(b) = ta;
        }
        let u = swapped.params.get_mut(m.proj_u);
        for r in 0..3 {
            let row = u.row_mut(r);
            let (l, rt) = row.split_at_mut(3);
            l.swap_with_slice(rt);
        }
        let s = sentence();
        let rev: Vec<TaggedToken> = s.iter().rev().cloned().collect();
        let mut g1 = Graph::new(&m.params);
        let e1 = m.encode(&mut g1, &s).unwrap();
        let mut g2 = Graph::new(&swapped.params);
        let e2 = swapped.encode(&mut g2, &rev).unwrap();
        for t in 0..3 {
            let a = g1.value(e1.outputs[t]);
            let b = g2.value(e2.outputs[2 - t]);
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_cases() {
        let p = ParamSet::<f64>::new();
        let mut g = Graph::new(&p);
        let mem = g.constant_matrix(1, 2, vec![0.3, -0.2]);
        let h = g.constant(vec![1.0, 2.0]);
        let a = attend(&mut g, h, mem).unwrap();
        assert_eq!(g.value(a.alpha), &[1.0]);
        assert_eq!(g.value(a.context), &[0.3, -0.2]);

        let mem = g.constant_matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let h = g.constant(vec![0.5, 0.5]);
        let a = attend(&mut g, h, mem).unwrap();
        assert_eq!(g.value(a.alpha), &[0.5, 0.5]);
        assert_eq!(g.value(a.context), &[0.5, 0.5]);

        // scores [0, ln 3]
        let mem = g.constant_matrix(2, 1, vec![0.0, 3f64.ln()]);
        let h = g.constant(vec![1.0]);
        let a = attend(&mut g, h, mem).unwrap();
        let al = g.value(a.alpha);
        assert!((al[0] - 0.25).abs() < 1e-12 && (al[1] - 0.75).abs() < 1e-12);

        let h = g.constant(vec![1.0, 2.0, 3.0]);
        assert!(attend(&mut g, h, mem).is_err());
    }

    #[test]
    fn step_distribution_is_normalised_and_masks_pad() {
        let m = QgModel::<f64>::new(tiny_config((1, 2), &Channel::ORDER), tiny_vocabs(), 5).unwrap();
        let mut g = Graph::new(&m.params);
        let enc = m.encode(&mut g, &sentence()).unwrap();
        let mut state = enc.bridge.clone();
        let mut prev = BOS;
        for _ in 0..4 {
            let out = m.decode_step(&mut g, prev, &mut state, &enc).unwrap();
            let p: Vec<f64> = g.value(out.log_probs).iter().map(|x| x.exp()).collect();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert_eq!(p[PAD], 0.0);
            assert_eq!(p[BOS], 0.0);
            let alpha = g.value(out.attention.alpha);
            assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            // context is exactly the alpha-weighted sum of the outputs
            let ctx = g.value(out.attention.context).to_vec();
            for k in 0..3 {
                let want: f64 = (0..3).map(|i| alpha[i] * g.value(enc.outputs[i])[k]).sum();
                assert!((ctx[k] - want).abs() < 1e-15);
            }
            prev = 4;
        }
    }

    #[test]
    fn loss_is_finite_for_in_vocab_examples() {
        let m = QgModel::<f32>::new(tiny_config((1, 1), &Channel::ORDER), tiny_vocabs(), 5).unwrap();
        let mut g = Graph::new(&m.params);
        let l = m.loss_on(&mut g, &sentence(), &q("who wrote code ?")).unwrap();
        assert!(g.scalar(l.value).is_finite());
        assert_eq!(l.count, 5);
        assert!(m.loss_on(&mut g, &sentence(), &[]).is_err());
    }

    #[test]
    fn question_truncation() {
        let mut c = tiny_config((1, 1), &[]);
        c.max_question_len = 2;
        let m = QgModel::<f32>::new(c, tiny_vocabs(), 5).unwrap();
        assert_eq!(m.targets(&q("who wrote code ?")), vec![4, 5, EOS]);
    }

    #[test]
    fn full_loss_gradients_match_finite_differences() {
        let mut c = tiny_config((2, 2), &Channel::ORDER);
        c.dropout = 0.2;
        let m = QgModel::<f64>::new(c, tiny_vocabs(), 11).unwrap();
        let s = sentence();
        let question = q("who wrote ?");
        let err = gradcheck::check(&m.params, 3, |g| Ok(m.loss_on(g, &s, &question)?.value)).unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
