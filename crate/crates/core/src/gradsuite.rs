//! Finite-difference checks over every primitive op and the composed model
//! losses, in f64 with dropout on.

use serde::Serialize;

use crate::answersel::{candidate_entities, NeConfig, NeSelector, PointerConfig, PointerMode, PointerNet};
use crate::corpus::{AnswerSpan, Bio, TaggedToken, VocabSet, Vocabulary};
use crate::error::Result;
use crate::features::Channel;
use crate::kernel::gradcheck::{check, grad_check, project, PRIMITIVE_OPS};
use crate::kernel::Var;
use crate::parallel::{try_map_indexed, Execution};
use crate::qgmodel::{attend, QgConfig, QgModel};

pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, Serialize)]
pub struct GradReport {
    pub name: String,
    pub seeds: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

/// Input shapes used for each primitive op.
pub fn primitive_shapes(op: &str) -> Vec<Vec<usize>> {
    let s: &[&[usize]] = match op {
        "add" | "sub" | "mul" => &[&[4], &[4]],
        "matvec" => &[&[3, 4], &[4]],
        "mat_t_vec" => &[&[3, 4], &[3]],
        "matmul" => &[&[3, 4], &[4, 2]],
        "add_row_broadcast" => &[&[3, 4], &[4]],
        "dot" => &[&[5], &[5]],
        "concat" => &[&[2], &[3], &[1]],
        "slice" => &[&[9]],
        "stack" | "mean" => &[&[3], &[3], &[3]],
        "nll_masked" => &[&[3, 5]],
        "gather" => &[&[4, 3]],
        "lstm_step" => &[&[12, 5], &[12], &[2], &[3], &[3]],
        _ => &[&[6]],
    };
    s.iter().map(|x| x.to_vec()).collect()
}

/// Names of the composed checks, in report order.
pub const COMPOSITE_CHECKS: &[&str] = &[
    "lstm_stack",
    "attention",
    "qg_encoder",
    "qg_decode_step",
    "qg_loss",
    "pointer_sequence_loss",
    "pointer_boundary_loss",
    "ne_loss",
];

fn vocabs() -> VocabSet {
    VocabSet {
        words: Vocabulary::from_tokens(["who", "wrote", "ada", "code", "in", "1843", "?"]),
        pos: Vocabulary::from_tokens(["NNP", "VBD", "NN", "IN", "CD"]),
        ner: Vocabulary::from_tokens(["PERSON", "DATE"]),
        dep: Vocabulary::from_tokens(["nsubj", "ROOT", "obj", "prep", "pobj"]),
    }
}

fn sentence() -> Vec<TaggedToken> {
    let t = |w: &str, p: &str, n: &str, d: &str, b| TaggedToken::new(w, p, n, d, b).expect("valid token");
    vec![
        t("ada", "NNP", "PERSON", "nsubj", Bio::B),
        t("wrote", "VBD", "O", "ROOT", Bio::O),
        t("code", "NN", "O", "obj", Bio::O),
        t("in", "IN", "O", "prep", Bio::O),
        t("1843", "CD", "DATE", "pobj", Bio::O),
    ]
}

fn question() -> Vec<String> {
    ["who", "wrote", "code", "?"].iter().map(|s| s.to_string()).collect()
}

fn qg_config() -> QgConfig {
    QgConfig {
        word_dim: 3,
        hidden_size: 4,
        encoder_layers: 2,
        decoder_layers: 2,
        channels: vec![Channel::Pos, Channel::Ner, Channel::Dep, Channel::Bio],
        dropout: 0.2,
        max_source_len: 100,
        max_question_len: 30,
        init_scale: 1.0,
    }
}

fn pointer_net(mode: PointerMode, seed: u64) -> Result<PointerNet<f64>> {
    let c = PointerConfig {
        mode,
        word_dim: 3,
        hidden_size: 4,
        channels: vec![Channel::Pos, Channel::Ner],
        dropout: 0.2,
        step_cap: 10,
        init_scale: 1.0,
    };
    PointerNet::new(c, vocabs(), seed)
}

/// The loss as training sees it: divided by its prediction count. This also
/// keeps the loss value near 1, which bounds the rounding noise of the
/// central differences.
fn per_token(g: &mut crate::kernel::Graph<'_, f64>, l: crate::training::Loss) -> Result<Var> {
    Ok(g.scale(l.value, 1.0 / l.count as f64))
}

/// Max relative error of one composed check at one seed.
pub fn composite_check(name: &str, seed: u64) -> Result<f64> {
    let s = sentence();
    match name {
        "lstm_stack" => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut params = crate::kernel::ParamSet::<f64>::new();
            let stack = crate::kernel::LstmStack::register(&mut params, "stack", 2, 3, 2, 0.8, &mut rng)?;
            let xs = params.register_uniform("xs", &[4, 2], 1.0, &mut rng)?;
            check(&params, seed, |g| {
                let m = g.param(xs);
                let inputs: Vec<Var> = (0..4).map(|i| g.slice(m, 2 * i, 2)).collect();
                let out = stack.run(g, &inputs, 0.2)?;
                let all = g.concat(&out);
                Ok(project(g, all, seed ^ 1))
            })
        }
        "attention" => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut params = crate::kernel::ParamSet::<f64>::new();
            let h = params.register_uniform("h", &[3], 1.0, &mut rng)?;
            let mem = params.register_uniform("memory", &[4, 3], 1.0, &mut rng)?;
            check(&params, seed, |g| {
                let (h, mem) = (g.param(h), g.param(mem));
                let a = attend(g, h, mem)?;
                let all = g.concat(&[a.alpha, a.context]);
                Ok(project(g, all, seed ^ 2))
            })
        }
        "qg_encoder" => {
            let m = QgModel::<f64>::new(qg_config(), vocabs(), seed)?;
            check(&m.params, seed, |g| {
                let enc = m.encode(g, &s)?;
                let mut parts = enc.outputs.clone();
                for st in &enc.bridge {
                    parts.push(st.h);
                    parts.push(st.c);
                }
                let all = g.concat(&parts);
                Ok(project(g, all, seed ^ 3))
            })
        }
        "qg_decode_step" => {
            let m = QgModel::<f64>::new(qg_config(), vocabs(), seed)?;
            let prev = m.vocabs.words.id("wrote");
            check(&m.params, seed, |g| {
                let enc = m.encode(g, &s)?;
                let mut state = enc.bridge.clone();
                let out = m.decode_step(g, prev, &mut state, &enc)?;
                // probabilities rather than log-probabilities: the masked
                // entries sit near -1e30 and would swamp the differences
                let p = g.softmax(out.log_probs);
                let all = g.concat(&[p, out.attention.alpha, state[1].h]);
                Ok(project(g, all, seed ^ 4))
            })
        }
        "qg_loss" => {
            let m = QgModel::<f64>::new(qg_config(), vocabs(), seed)?;
            let q = question();
            check(&m.params, seed, |g| {
                let l = m.loss_on(g, &s, &q)?;
                per_token(g, l)
            })
        }
        "pointer_sequence_loss" | "pointer_boundary_loss" => {
            let mode = if name == "pointer_sequence_loss" {
                PointerMode::Sequence
            } else {
                PointerMode::Boundary
            };
            let net = pointer_net(mode, seed)?;
            let span = AnswerSpan { start: 2, end: 4 };
            check(&net.params, seed, |g| {
                let l = net.loss_on(g, &s, span)?;
                per_token(g, l)
            })
        }
        "ne_loss" => {
            let c = NeConfig {
                word_dim: 3,
                hidden_size: 4,
                layers: 2,
                mlp_hidden: 3,
                channels: vec![Channel::Pos, Channel::Ner, Channel::Dep],
                dropout: 0.2,
                init_scale: 1.0,
            };
            let sel = NeSelector::<f64>::new(c, vocabs(), seed)?;
            let cands = candidate_entities(&s);
            check(&sel.params, seed, |g| {
                let logits = sel.logits(g, &s, &cands)?;
                let lp = g.log_softmax(logits);
                Ok(g.nll(&[lp], &[1], None))
            })
        }
        other => Err(crate::error::Error::NoGradient(other.to_string())),
    }
}

fn run_named(name: &str, seeds: usize, primitive: bool) -> Result<GradReport> {
    let mut worst: f64 = 0.0;
    for seed in 0..seeds as u64 {
        let err = if primitive {
            let shapes = primitive_shapes(name);
            let refs: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
            grad_check(name, &refs, seed)?
        } else {
            composite_check(name, seed)?
        };
        worst = worst.max(err);
    }
    Ok(GradReport {
        name: name.to_string(),
        seeds,
        max_rel_err: worst,
        passed: worst < TOLERANCE,
    })
}

/// Every primitive op, then every composed check, each over `seeds` seeds.
pub fn run_suite(seeds: usize, exec: Execution) -> Result<Vec<GradReport>> {
    let names: Vec<(&str, bool)> = PRIMITIVE_OPS
        .iter()
        .map(|&n| (n, true))
        .chain(COMPOSITE_CHECKS.iter().map(|&n| (n, false)))
        .collect();
    try_map_indexed(exec, &names, |_, &(n, p)| run_named(n, seeds, p))
}

/// Fixed-width table, one line per check.
pub fn format_table(reports: &[GradReport]) -> String {
    let mut s = format!("{:<24} {:>5} {:>12}  result\n", "check", "seeds", "max rel err");
    for r in reports {
        s.push_str(&format!(
            "{:<24} {:>5} {:>12.3e}  {}\n",
            r.name,
            r.seeds,
            r.max_rel_err,
            if r.passed { "PASS" } else { "FAIL" }
        ));
    }
    s
}
