//! Pointer networks over token positions. The encoder appends a zero
//! "end" state to its outputs; each decoder step scores every position with
//! `u = vᵀ tanh(W^e Ĥ + W^d D)` and feeds the attention-weighted read
//! `softmax(u) Ĥ` together with its previous state into the next step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::corpus::{AnswerSpan, Example, TaggedToken, VocabSet};
use crate::error::{Error, Result};
use crate::features::{Channel, FeatureEmbeddingSpec, InputEmbedder};
use crate::kernel::{argmax, Graph, LstmCell, LstmState, ParamId, ParamSet, Real, Var};
use crate::training::{Loss, Trainable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PointerMode {
    /// Emits a list of positions, then the end position.
    Sequence,
    /// Emits a start and an end position.
    Boundary,
}

impl PointerMode {
    pub fn name(self) -> &'static str {
        match self {
            PointerMode::Sequence => "sequence",
            PointerMode::Boundary => "boundary",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointerConfig {
    pub mode: PointerMode,
    pub word_dim: usize,
    pub hidden_size: usize,
    pub channels: Vec<Channel>,
    /// Dropout on the input vectors while training.
    pub dropout: f64,
    pub step_cap: usize,
    pub init_scale: f64,
}

impl PointerConfig {
    pub fn from_experiment(c: &ExperimentConfig, mode: PointerMode) -> Self {
        PointerConfig {
            mode,
            word_dim: c.model.word_dim,
            hidden_size: c.selector.hidden_size,
            channels: c.selector.features.clone(),
            dropout: c.train.dropout,
            step_cap: c.selector.pointer_step_cap,
            init_scale: c.model.init_scale,
        }
    }
}

/// Encoder outputs `H`, the last state, and `Ĥ` = `H` plus a zero end row.
#[derive(Clone, Debug)]
pub struct EncoderStates {
    pub states: Vec<Var>,
    pub last: Var,
    /// `(n + 1) x hidden`; row `n` is all zeros.
    pub augmented: Var,
}

/// `W^e` is stored as `hidden x attention` so that a whole memory projects
/// with one product `Ĥ W^e`.
#[derive(Clone, Copy, Debug)]
pub struct PointerWeights {
    pub w_enc: ParamId,
    pub w_dec: ParamId,
    pub v: ParamId,
}

/// `Ĥ W^e`, shared by every decode step of one sentence.
pub fn project_memory<F: Real>(g: &mut Graph<'_, F>, augmented: Var, w: &PointerWeights) -> Result<Var> {
    let we = g.param(w.w_enc);
    let (_, width) = g.dims(augmented);
    let (rows, att) = g.dims(we);
    if width != rows {
        return Err(Error::Shape {
            param: g.params().name(w.w_enc).to_string(),
            expected: vec![width, att],
            got: vec![rows, att],
        });
    }
    Ok(g.matmul(augmented, we))
}

/// Logits over the `n` token positions and the end position, given the
/// projected memory from [`project_memory`].
pub fn pn_scores_projected<F: Real>(g: &mut Graph<'_, F>, projected: Var, d: Var, w: &PointerWeights) -> Result<Var> {
    let wd = g.param(w.w_dec);
    let v = g.param(w.v);
    let (_, att) = g.dims(projected);
    let (wd_rows, wd_cols) = g.dims(wd);
    if wd_rows != att || wd_cols != g.size(d) {
        return Err(Error::Shape {
            param: g.params().name(w.w_dec).to_string(),
            expected: vec![att, g.size(d)],
            got: vec![wd_rows, wd_cols],
        });
    }
    if g.size(v) != att {
        return Err(Error::Shape {
            param: g.params().name(w.v).to_string(),
            expected: vec![att],
            got: vec![g.size(v)],
        });
    }
    let dd = g.matvec(wd, d);
    let pre = g.add_row_broadcast(projected, dd);
    let act = g.tanh(pre);
    Ok(g.matvec(act, v))
}

/// `u = vᵀ tanh(W^e Ĥ + W^d D)`: one logit per row of `augmented`.
pub fn pn_scores<F: Real>(g: &mut Graph<'_, F>, augmented: Var, d: Var, w: &PointerWeights) -> Result<Var> {
    let p = project_memory(g, augmented, w)?;
    pn_scores_projected(g, p, d, w)
}

/// Anything that yields pointer logits one decode step at a time.
pub trait PointerScorer {
    /// Sentence length `n`; every step yields `n + 1` logits, the last one
    /// for the end position.
    fn positions(&self) -> usize;
    fn next_scores(&mut self) -> Result<Vec<f64>>;
}

/// Greedy sequence decode: 1-based positions until the end position wins or
/// `cap` steps have run.
pub fn decode_sequence<S: PointerScorer + ?Sized>(scorer: &mut S, cap: usize) -> Result<Vec<usize>> {
    let n = scorer.positions();
    let mut out = Vec::new();
    for _ in 0..cap {
        let u = scorer.next_scores()?;
        check_arity(&u, n)?;
        let j = argmax(&u);
        if j == n {
            break;
        }
        out.push(j + 1);
    }
    Ok(out)
}

/// Two steps: the start is the best token position (end masked), the end is
/// the best position at or after the start.
pub fn decode_boundary<S: PointerScorer + ?Sized>(scorer: &mut S) -> Result<AnswerSpan> {
    let n = scorer.positions();
    if n == 0 {
        return Err(Error::contract("boundary decode over an empty sentence"));
    }
    let u1 = scorer.next_scores()?;
    check_arity(&u1, n)?;
    let start = argmax(&u1[..n]);
    let u2 = scorer.next_scores()?;
    check_arity(&u2, n)?;
    let end = start + argmax(&u2[start..n]);
    Ok(AnswerSpan {
        start: start + 1,
        end: end + 1,
    })
}

fn check_arity(u: &[f64], n: usize) -> Result<()> {
    if u.len() == n + 1 {
        Ok(())
    } else {
        Err(Error::contract(format!("scorer gave {} logits for {n} positions", u.len())))
    }
}

/// Replays fixed choices as one-hot logits. A `None` choice selects the end
/// position. Useful for checking index-to-token mapping without a model.
#[derive(Clone, Debug)]
pub struct FixedScorer {
    n: usize,
    choices: Vec<Option<usize>>,
    step: usize,
}

impl FixedScorer {
    /// `choices` are 1-based positions.
    pub fn new(n: usize, choices: Vec<Option<usize>>) -> Self {
        FixedScorer { n, choices, step: 0 }
    }
}

impl PointerScorer for FixedScorer {
    fn positions(&self) -> usize {
        self.n
    }

    fn next_scores(&mut self) -> Result<Vec<f64>> {
        let pick = self.choices.get(self.step).copied().flatten().map_or(self.n, |p| p - 1);
        self.step += 1;
        let mut u = vec![0.0; self.n + 1];
        u[pick] = 1.0;
        Ok(u)
    }
}

/// Target positions (0-based, `n` = end) for a gold span.
pub fn pointer_targets(mode: PointerMode, span: AnswerSpan, n: usize) -> Result<Vec<usize>> {
    span.check(n)?;
    Ok(match mode {
        PointerMode::Boundary => vec![span.start - 1, span.end - 1],
        PointerMode::Sequence => span.range().chain([n]).collect(),
    })
}

#[derive(Clone, Debug)]
pub struct PointerNet<F: Real = f32> {
    pub config: PointerConfig,
    pub vocabs: VocabSet,
    pub params: ParamSet<F>,
    embed: InputEmbedder,
    encoder: LstmCell,
    decoder: LstmCell,
    weights: PointerWeights,
}

/// A training pair for the pointer network.
#[derive(Clone, Debug)]
pub struct PointerItem {
    pub sentence: Vec<TaggedToken>,
    pub span: AnswerSpan,
}

impl PointerItem {
    pub fn from_example(ex: &Example) -> Option<Self> {
        ex.answer.map(|span| PointerItem {
            sentence: ex.sentence.clone(),
            span,
        })
    }
}

impl<F: Real> PointerNet<F> {
    pub fn new(config: PointerConfig, vocabs: VocabSet, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let h = config.hidden_size;
        let spec = FeatureEmbeddingSpec::new(config.word_dim, &config.channels, &vocabs);
        let input = spec.total_width();
        let s = config.init_scale;
        let embed = InputEmbedder::register(&mut params, "pointer.embed", spec, vocabs.words.len(), s, &mut rng)?;
        let encoder = LstmCell::register(&mut params, "pointer.encoder", input, h, s, &mut rng)?;
        let decoder = LstmCell::register(&mut params, "pointer.decoder", 2 * h, h, s, &mut rng)?;
        let weights = PointerWeights {
            w_enc: params.register_uniform("pointer.We", &[h, h], s, &mut rng)?,
            w_dec: params.register_uniform("pointer.Wd", &[h, h], s, &mut rng)?,
            v: params.register_uniform("pointer.v", &[h], s, &mut rng)?,
        };
        Ok(PointerNet {
            config,
            vocabs,
            params,
            embed,
            encoder,
            decoder,
            weights,
        })
    }

    /// Rebuilds the architecture and takes its parameters from `params`.
    pub fn with_params(config: PointerConfig, vocabs: VocabSet, params: &ParamSet<F>) -> Result<Self> {
        let mut net = Self::new(config, vocabs, 0)?;
        net.params.load_from(params)?;
        Ok(net)
    }

    pub fn weights(&self) -> PointerWeights {
        self.weights
    }

    pub fn encode(&self, g: &mut Graph<'_, F>, sentence: &[TaggedToken]) -> Result<EncoderStates> {
        if sentence.is_empty() {
            return Err(Error::contract("pointer encoder needs a non-empty sentence"));
        }
        let (inputs, _) = self.embed.embed(g, sentence, &self.vocabs);
        let mut state = self.encoder.zero_state(g);
        let mut states = Vec::with_capacity(inputs.len());
        for x in inputs {
            let x = g.dropout(x, self.config.dropout);
            state = self.encoder.step(g, x, state)?;
            states.push(state.h);
        }
        let end = g.zeros(self.config.hidden_size);
        let mut rows = states.clone();
        rows.push(end);
        let augmented = g.stack(&rows);
        Ok(EncoderStates {
            last: *states.last().expect("non-empty"),
            states,
            augmented,
        })
    }

    /// Starts a decoder over `sentence`.
    pub fn start<'g, 'p, 'n>(
        &'n self,
        g: &'g mut Graph<'p, F>,
        sentence: &[TaggedToken],
    ) -> Result<PointerRun<'g, 'p, 'n, F>> {
        let enc = self.encode(g, sentence)?;
        let projected = project_memory(g, enc.augmented, &self.weights)?;
        let state = self.decoder.zero_state(g);
        let read = g.zeros(self.config.hidden_size);
        Ok(PointerRun {
            net: self,
            g,
            n: sentence.len(),
            augmented: enc.augmented,
            projected,
            state,
            read,
        })
    }

    /// Summed NLL of the gold pointer targets, teacher-forced.
    pub fn loss_on(&self, g: &mut Graph<'_, F>, sentence: &[TaggedToken], span: AnswerSpan) -> Result<Loss> {
        let targets = pointer_targets(self.config.mode, span, sentence.len())?;
        let mut run = self.start(g, sentence)?;
        let mut log_probs = Vec::with_capacity(targets.len());
        for _ in &targets {
            let u = run.step()?;
            log_probs.push(run.g.log_softmax(u));
        }
        let value = run.g.nll(&log_probs, &targets, None);
        Ok(Loss {
            value,
            count: targets.len(),
        })
    }

    /// Decoded 1-based positions (sequence mode) or `[start, end]`.
    pub fn decode(&self, sentence: &[TaggedToken]) -> Result<Vec<usize>> {
        let mut g = Graph::new(&self.params);
        let mut run = self.start(&mut g, sentence)?;
        match self.config.mode {
            PointerMode::Sequence => decode_sequence(&mut run, self.config.step_cap),
            PointerMode::Boundary => decode_boundary(&mut run).map(|s| vec![s.start, s.end]),
        }
    }

    /// The selected answer span. Sequence output becomes the span from its
    /// smallest to its largest position; `None` when nothing was emitted.
    pub fn select(&self, sentence: &[TaggedToken]) -> Result<Option<AnswerSpan>> {
        let pos = self.decode(sentence)?;
        Ok(match self.config.mode {
            PointerMode::Boundary => Some(AnswerSpan {
                start: pos[0],
                end: pos[1],
            }),
            PointerMode::Sequence => positions_to_span(&pos),
        })
    }
}

/// Bounding span of a set of positions.
pub fn positions_to_span(pos: &[usize]) -> Option<AnswerSpan> {
    let start = *pos.iter().min()?;
    let end = *pos.iter().max()?;
    Some(AnswerSpan { start, end })
}

/// True when `pos` is a strictly increasing run of consecutive positions.
pub fn is_contiguous(pos: &[usize]) -> bool {
    !pos.is_empty() && pos.windows(2).all(|w| w[1] == w[0] + 1)
}

/// A decoder in progress over one encoded sentence.
pub struct PointerRun<'g, 'p, 'n, F: Real> {
    net: &'n PointerNet<F>,
    pub g: &'g mut Graph<'p, F>,
    n: usize,
    augmented: Var,
    projected: Var,
    state: LstmState,
    read: Var,
}

impl<F: Real> PointerRun<'_, '_, '_, F> {
    /// Advances the decoder and returns the logits node `u`.
    pub fn step(&mut self) -> Result<Var> {
        let input = self.g.concat(&[self.read, self.state.h]);
        self.state = self.net.decoder.step(self.g, input, self.state)?;
        let u = pn_scores_projected(self.g, self.projected, self.state.h, &self.net.weights)?;
        let p = self.g.softmax(u);
        self.read = self.g.mat_t_vec(self.augmented, p);
        Ok(u)
    }
}

impl<F: Real> PointerScorer for PointerRun<'_, '_, '_, F> {
    fn positions(&self) -> usize {
        self.n
    }

    fn next_scores(&mut self) -> Result<Vec<f64>> {
        let u = self.step()?;
        Ok(self.g.value(u).iter().map(|x| x.as_f64()).collect())
    }
}

impl<F: Real> Trainable<F> for PointerNet<F> {
    type Item = PointerItem;

    fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    fn loss(&self, g: &mut Graph<'_, F>, item: &PointerItem) -> Result<Loss> {
        self.loss_on(g, &item.sentence, item.span)
    }
}
