//! Finite-difference verification of reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::lstm::{LstmCell, LstmState};
use super::params::{ParamId, ParamSet};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compares the reverse-mode gradient of `loss` with central differences
/// over every parameter value and returns the max elementwise relative error.
///
/// `loss` is re-run for every perturbation, each time on a fresh training
/// graph seeded with `seed`, so dropout masks are identical across runs.
pub fn check<L>(params: &ParamSet<f64>, seed: u64, loss: L) -> Result<f64>
where
    L: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    let eval = |p: &ParamSet<f64>| -> Result<f64> {
        let mut g = Graph::training(p, seed);
        let v = loss(&mut g)?;
        Ok(g.scalar(v))
    };

    let analytic = {
        let mut g = Graph::training(params, seed);
        let v = loss(&mut g)?;
        g.backward(v)
    };

    let mut work = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let id = ParamId(i);
        let a = analytic.to_dense(id);
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            work.get_mut(id).data_mut()[k] = orig + FD_STEP;
            let plus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig - FD_STEP;
            let minus = eval(&work)?;
            work.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(a[k], numeric);
            if !err.is_finite() {
                return Err(Error::contract(format!(
                    "non-finite gradient for `{}`[{k}]",
                    params.name(id)
                )));
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Names of the primitive ops [`grad_check`] knows how to exercise.
pub const PRIMITIVE_OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "scale",
    "tanh",
    "sigmoid",
    "matvec",
    "mat_t_vec",
    "matmul",
    "add_row_broadcast",
    "dot",
    "sum",
    "concat",
    "slice",
    "stack",
    "mean",
    "softmax",
    "log_softmax",
    "softmax_nll",
    "nll_masked",
    "gather",
    "dropout",
    "lstm_step",
];

/// Checks a single primitive op on seeded random inputs of the given shapes.
///
/// Inputs are registered as parameters drawn from uniform(-1, 1) and the op's
/// output is reduced to a scalar by a fixed random projection.
pub fn grad_check(op: &str, shapes: &[&[usize]], seed: u64) -> Result<f64> {
    if !PRIMITIVE_OPS.contains(&op) {
        return Err(Error::NoGradient(op.to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::<f64>::new();
    let ids: Vec<ParamId> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| params.register_uniform(format!("input{i}"), s, 1.0, &mut rng))
        .collect::<Result<_>>()?;
    let need = |n: usize| -> Result<()> {
        if ids.len() < n {
            Err(Error::contract(format!("`{op}` needs {n} inputs, got {}", ids.len())))
        } else {
            Ok(())
        }
    };
    need(match op {
        "add" | "sub" | "mul" | "matvec" | "mat_t_vec" | "matmul" | "add_row_broadcast" | "dot" => 2,
        "lstm_step" => 5,
        _ => 1,
    })?;
    let proj_seed = rng.gen::<u64>();
    let op = op.to_string();

    check(&params, seed, |g| {
        let xs: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
        let out = match op.as_str() {
            "add" => g.add(xs[0], xs[1]),
            "sub" => g.sub(xs[0], xs[1]),
            "mul" => g.mul(xs[0], xs[1]),
            "scale" => g.scale(xs[0], -1.7),
            "tanh" => g.tanh(xs[0]),
            "sigmoid" => g.sigmoid(xs[0]),
            "matvec" => g.matvec(xs[0], xs[1]),
            "mat_t_vec" => g.mat_t_vec(xs[0], xs[1]),
            "matmul" => g.matmul(xs[0], xs[1]),
            "add_row_broadcast" => g.add_row_broadcast(xs[0], xs[1]),
            "dot" => g.dot(xs[0], xs[1]),
            "sum" => g.sum(xs[0]),
            "concat" => g.concat(&xs),
            "slice" => {
                let n = g.size(xs[0]);
                g.slice(xs[0], n / 3, n - n / 3)
            }
            "stack" => g.stack(&xs),
            "mean" => g.mean(&xs),
            "softmax" => g.softmax(xs[0]),
            "log_softmax" => g.log_softmax(xs[0]),
            "softmax_nll" => {
                let n = g.size(xs[0]);
                let lp = g.log_softmax(xs[0]);
                return Ok(g.nll(&[lp], &[n / 2], None));
            }
            "nll_masked" => {
                // rows are steps; the target of step 1 is padding (id 0)
                let (r, c) = g.dims(xs[0]);
                let steps: Vec<Var> = (0..r)
                    .map(|i| {
                        let row = g.slice(xs[0], i * c, c);
                        g.log_softmax(row)
                    })
                    .collect();
                let targets: Vec<usize> = (0..r).map(|i| if i == 1 { 0 } else { 1 + i % (c - 1) }).collect();
                return Ok(g.nll(&steps, &targets, Some(0)));
            }
            "gather" => {
                let rows = g.dims(xs[0]).0;
                let a = g.gather(ids[0], rows - 1);
                let b = g.gather(ids[0], 0);
                let c = g.gather(ids[0], rows - 1);
                let ab = g.mul(a, b);
                g.add(ab, c)
            }
            "dropout" => {
                let t = g.tanh(xs[0]);
                g.dropout(t, 0.3)
            }
            "lstm_step" => {
                // inputs: W (4h x (n+h)), b (4h), x (n), h (h), c (h)
                let hidden = g.size(xs[4]);
                let cell = LstmCell {
                    weight: ids[0],
                    bias: ids[1],
                    input_size: g.size(xs[2]),
                    hidden_size: hidden,
                };
                let s = cell.step(g, xs[2], LstmState { h: xs[3], c: xs[4] })?;
                g.concat(&[s.h, s.c])
            }
            _ => unreachable!(),
        };
        Ok(project(g, out, proj_seed))
    })
}

/// Reduces a node to a scalar with fixed uniform(-1, 1) weights.
pub fn project(g: &mut Graph<'_, f64>, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.size(out);
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // nodes are row-major, so the whole node is one contiguous slice
    let flat = g.slice(out, 0, n);
    let wv = g.constant(w);
    g.dot(flat, wv)
}

/// Builds a parameter set from explicit tensors; used by composite checks.
pub fn params_from(tensors: Vec<(&str, Tensor<f64>)>) -> Result<ParamSet<f64>> {
    let mut p = ParamSet::new();
    for (name, t) in tensors {
        p.register(name, t)?;
    }
    Ok(p)
}
