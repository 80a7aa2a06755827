//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation eagerly: values are computed when an
//! op is added and the op is kept on the tape so [`Graph::backward`] can walk
//! it in reverse. Every node is viewed as a `rows x cols` matrix; vectors are
//! a single row. Parameters are borrowed from a [`ParamSet`] and never copied.
//!
//! Shape errors inside the graph are programming errors and panic with a
//! "contract violation" message; model-level entry points validate shapes
//! up front and return [`crate::Error::Shape`] instead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamId, ParamSet};
use super::real::{axpy, dot, sigmoid, Real};
use super::tensor::{log_softmax_in_place, softmax_in_place};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Value<F> {
    Owned(Vec<F>),
    Param(ParamId),
}

#[derive(Debug)]
enum Op<F> {
    Constant,
    Param(ParamId),
    Gather { table: ParamId, row: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    AddConst(Var),
    AddRowBroadcast(Var, Var),
    MatVec(Var, Var),
    MatTVec(Var, Var),
    MatMul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Stack(Vec<Var>),
    Mean(Vec<Var>),
    Dot(Var, Var),
    Sum(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
    Nll(Vec<(Var, usize)>),
    Dropout(Var, Vec<F>),
}

#[derive(Debug)]
struct Node<F> {
    value: Value<F>,
    rows: usize,
    cols: usize,
    op: Op<F>,
}

pub struct Graph<'p, F: Real> {
    params: &'p ParamSet<F>,
    nodes: Vec<Node<F>>,
    param_vars: Vec<Option<Var>>,
    training: bool,
    rng: ChaCha8Rng,
}

macro_rules! contract {
    ($cond:expr, $($arg:tt)*) => {
        assert!($cond, "contract violation: {}", format!($($arg)*))
    };
}

impl<'p, F: Real> Graph<'p, F> {
    /// Inference graph: dropout is the identity.
    pub fn new(params: &'p ParamSet<F>) -> Self {
        Self::with_mode(params, false, 0)
    }

    /// Training graph whose dropout masks are drawn from a generator seeded
    /// with `seed`.
    pub fn training(params: &'p ParamSet<F>, seed: u64) -> Self {
        Self::with_mode(params, true, seed)
    }

    pub fn with_mode(params: &'p ParamSet<F>, training: bool, seed: u64) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
            training,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn params(&self) -> &'p ParamSet<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[F] {
        match &self.nodes[v.0].value {
            Value::Owned(x) => x,
            Value::Param(id) => self.params.get(*id).data(),
        }
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn size(&self, v: Var) -> usize {
        let (r, c) = self.dims(v);
        r * c
    }

    pub fn scalar(&self, v: Var) -> F {
        contract!(self.size(v) == 1, "scalar() on a node of size {}", self.size(v));
        self.value(v)[0]
    }

    fn push(&mut self, value: Vec<F>, rows: usize, cols: usize, op: Op<F>) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node {
            value: Value::Owned(value),
            rows,
            cols,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    // ----- leaves -------------------------------------------------------

    pub fn constant(&mut self, value: Vec<F>) -> Var {
        let n = value.len();
        contract!(n > 0, "empty constant");
        self.push(value, 1, n, Op::Constant)
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, value: Vec<F>) -> Var {
        contract!(
            rows * cols == value.len() && rows * cols > 0,
            "constant matrix {rows}x{cols} with {} values",
            value.len()
        );
        self.push(value, rows, cols, Op::Constant)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![F::zero(); n])
    }

    /// The parameter as a node; repeated calls return the same node so its
    /// gradient accumulates in one buffer.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let (rows, cols) = self.params.get(id).dims2();
        self.nodes.push(Node {
            value: Value::Param(id),
            rows,
            cols,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Row `row` of an embedding table; its gradient is recorded sparsely.
    pub fn gather(&mut self, table: ParamId, row: usize) -> Var {
        let t = self.params.get(table);
        let (rows, cols) = t.dims2();
        contract!(
            row < rows,
            "row {row} out of range for `{}` with {rows} rows",
            self.params.name(table)
        );
        let value = t.row(row).to_vec();
        self.push(value, 1, cols, Op::Gather { table, row })
    }

    // ----- elementwise --------------------------------------------------

    fn same_shape(&self, a: Var, b: Var, what: &str) {
        contract!(
            self.dims(a) == self.dims(b),
            "{what}: shapes {:?} and {:?} differ",
            self.dims(a),
            self.dims(b)
        );
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "add");
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "sub");
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x - y).collect();
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape(a, b, "mul");
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: F) -> Var {
        let out = self.value(a).iter().map(|&x| x * s).collect();
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::Scale(a, s))
    }

    /// `a + k` for a constant `k`; used for additive output masks.
    pub fn add_const(&mut self, a: Var, k: &[F]) -> Var {
        contract!(k.len() == self.size(a), "add_const: {} vs {}", k.len(), self.size(a));
        let out = self.value(a).iter().zip(k).map(|(&x, &y)| x + y).collect();
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::AddConst(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::Sigmoid(a))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`; otherwise
    /// the input is returned unchanged.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        contract!((0.0..1.0).contains(&p), "dropout probability {p} outside [0, 1)");
        if !self.training || p == 0.0 {
            return a;
        }
        let keep = F::lit(1.0 / (1.0 - p));
        let n = self.size(a);
        let mask: Vec<F> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < p { F::zero() } else { keep })
            .collect();
        let out = self.value(a).iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::Dropout(a, mask))
    }

    // ----- linear algebra -----------------------------------------------

    /// `w x` for a `rows x cols` matrix and a length-`cols` vector.
    pub fn matvec(&mut self, w: Var, x: Var) -> Var {
        let (r, c) = self.dims(w);
        contract!(self.size(x) == c, "matvec: {r}x{c} matrix times length-{} vector", self.size(x));
        let wv = self.value(w);
        let xv = self.value(x);
        let out = (0..r).map(|i| dot(&wv[i * c..(i + 1) * c], xv)).collect();
        self.push(out, 1, r, Op::MatVec(w, x))
    }

    /// `mᵀ a` for a `rows x cols` matrix and a length-`rows` vector.
    pub fn mat_t_vec(&mut self, m: Var, a: Var) -> Var {
        let (r, c) = self.dims(m);
        contract!(self.size(a) == r, "mat_t_vec: {r}x{c} matrix with length-{} weights", self.size(a));
        let mv = self.value(m);
        let av = self.value(a);
        let mut out = vec![F::zero(); c];
        for i in 0..r {
            axpy(av[i], &mv[i * c..(i + 1) * c], &mut out);
        }
        self.push(out, 1, c, Op::MatTVec(m, a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        contract!(k == k2, "matmul: {m}x{k} times {k2}x{n}");
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            for p in 0..k {
                axpy(av[i * k + p], &bv[p * n..(p + 1) * n], &mut out[i * n..(i + 1) * n]);
            }
        }
        self.push(out, m, n, Op::MatMul(a, b))
    }

    /// Adds vector `v` to every row of matrix `m`.
    pub fn add_row_broadcast(&mut self, m: Var, v: Var) -> Var {
        let (r, c) = self.dims(m);
        contract!(self.size(v) == c, "add_row_broadcast: {r}x{c} with length {}", self.size(v));
        let mv = self.value(m);
        let vv = self.value(v);
        let mut out = mv.to_vec();
        for i in 0..r {
            axpy(F::one(), vv, &mut out[i * c..(i + 1) * c]);
        }
        self.push(out, r, c, Op::AddRowBroadcast(m, v))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        contract!(self.size(a) == self.size(b), "dot: lengths {} and {}", self.size(a), self.size(b));
        let out = dot(self.value(a), self.value(b));
        self.push(vec![out], 1, 1, Op::Dot(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().copied().sum();
        self.push(vec![out], 1, 1, Op::Sum(a))
    }

    // ----- structure ----------------------------------------------------

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        contract!(!parts.is_empty(), "concat of nothing");
        let mut out = Vec::with_capacity(parts.iter().map(|&p| self.size(p)).sum());
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        let n = out.len();
        self.push(out, 1, n, Op::Concat(parts.to_vec()))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        contract!(
            len > 0 && start + len <= self.size(a),
            "slice [{start}, {}) of length-{} node",
            start + len,
            self.size(a)
        );
        let out = self.value(a)[start..start + len].to_vec();
        self.push(out, 1, len, Op::Slice(a, start))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Var {
        contract!(!rows.is_empty(), "stack of nothing");
        let c = self.size(rows[0]);
        let mut out = Vec::with_capacity(rows.len() * c);
        for &r in rows {
            contract!(self.size(r) == c, "stack: row lengths {} and {}", c, self.size(r));
            out.extend_from_slice(self.value(r));
        }
        self.push(out, rows.len(), c, Op::Stack(rows.to_vec()))
    }

    /// Elementwise mean of equal-shaped nodes.
    pub fn mean(&mut self, parts: &[Var]) -> Var {
        contract!(!parts.is_empty(), "mean of nothing");
        let n = self.size(parts[0]);
        let mut out = vec![F::zero(); n];
        for &p in parts {
            contract!(self.size(p) == n, "mean: sizes {} and {}", n, self.size(p));
            axpy(F::one(), self.value(p), &mut out);
        }
        let inv = F::one() / F::lit(parts.len() as f64);
        out.iter_mut().for_each(|x| *x *= inv);
        let (r, c) = self.dims(parts[0]);
        self.push(out, r, c, Op::Mean(parts.to_vec()))
    }

    pub fn pick(&mut self, a: Var, i: usize) -> Var {
        contract!(i < self.size(a), "pick {i} from length {}", self.size(a));
        let out = self.value(a)[i];
        self.push(vec![out], 1, 1, Op::Pick(a, i))
    }

    // ----- normalisation and losses ---------------------------------------

    /// Softmax over all elements of a vector.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).to_vec();
        contract!(!out.is_empty(), "softmax over an empty axis");
        softmax_in_place(&mut out);
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).to_vec();
        contract!(!out.is_empty(), "log-softmax over an empty axis");
        log_softmax_in_place(&mut out);
        let (r, c) = self.dims(a);
        self.push(out, r, c, Op::LogSoftmax(a))
    }

    /// Summed negative log likelihood of `targets` under per-step
    /// log-probability vectors. Steps whose target is `pad` are skipped, so
    /// they contribute nothing to the loss or the gradient.
    pub fn nll(&mut self, log_probs: &[Var], targets: &[usize], pad: Option<usize>) -> Var {
        contract!(
            log_probs.len() == targets.len(),
            "nll: {} steps, {} targets",
            log_probs.len(),
            targets.len()
        );
        let mut terms = Vec::with_capacity(targets.len());
        let mut loss = F::zero();
        for (&lp, &t) in log_probs.iter().zip(targets) {
            if Some(t) == pad {
                continue;
            }
            contract!(t < self.size(lp), "nll target {t} outside {} classes", self.size(lp));
            loss -= self.value(lp)[t];
            terms.push((lp, t));
        }
        self.push(vec![loss], 1, 1, Op::Nll(terms))
    }

    // ----- backward -------------------------------------------------------

    /// Gradients of scalar `loss` with respect to every parameter it reaches.
    pub fn backward(&self, loss: Var) -> Gradients<F> {
        contract!(self.size(loss) == 1, "backward from a non-scalar node");
        let mut grads: Vec<Option<Vec<F>>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(vec![F::one()]);
        let mut out = Gradients::for_params(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let y = self.value(Var(idx));
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.add_dense(*id, &g),
                Op::Gather { table, row } => out.add_row(*table, *row, &g),
                Op::Add(a, b) => {
                    acc(&mut grads, self, *a, |ga| axpy(F::one(), &g, ga));
                    acc(&mut grads, self, *b, |gb| axpy(F::one(), &g, gb));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, self, *a, |ga| axpy(F::one(), &g, ga));
                    acc(&mut grads, self, *b, |gb| axpy(-F::one(), &g, gb));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, self, *a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[i] * bv[i];
                        }
                    });
                    acc(&mut grads, self, *b, |gb| {
                        for i in 0..gb.len() {
                            gb[i] += g[i] * av[i];
                        }
                    });
                }
                Op::Scale(a, s) => acc(&mut grads, self, *a, |ga| axpy(*s, &g, ga)),
                Op::AddConst(a) => acc(&mut grads, self, *a, |ga| axpy(F::one(), &g, ga)),
                Op::Dropout(a, mask) => acc(&mut grads, self, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * mask[i];
                    }
                }),
                Op::Tanh(a) => acc(&mut grads, self, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * (F::one() - y[i] * y[i]);
                    }
                }),
                Op::Sigmoid(a) => acc(&mut grads, self, *a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * y[i] * (F::one() - y[i]);
                    }
                }),
                Op::MatVec(w, x) => {
                    let (r, c) = self.dims(*w);
                    let (wv, xv) = (self.value(*w), self.value(*x));
                    if needs_grad(self, *w) {
                        acc(&mut grads, self, *w, |gw| {
                            for i in 0..r {
                                axpy(g[i], xv, &mut gw[i * c..(i + 1) * c]);
                            }
                        });
                    }
                    if needs_grad(self, *x) {
                        acc(&mut grads, self, *x, |gx| {
                            for i in 0..r {
                                axpy(g[i], &wv[i * c..(i + 1) * c], gx);
                            }
                        });
                    }
                }
                Op::MatTVec(m, a) => {
                    let (r, c) = self.dims(*m);
                    let (mv, av) = (self.value(*m), self.value(*a));
                    if needs_grad(self, *m) {
                        acc(&mut grads, self, *m, |gm| {
                            for i in 0..r {
                                axpy(av[i], &g, &mut gm[i * c..(i + 1) * c]);
                            }
                        });
                    }
                    if needs_grad(self, *a) {
                        acc(&mut grads, self, *a, |ga| {
                            for i in 0..r {
                                ga[i] += dot(&mv[i * c..(i + 1) * c], &g);
                            }
                        });
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(*a);
                    let (_, n) = self.dims(*b);
                    let (av, bv) = (self.value(*a), self.value(*b));
                    // dA = G Bᵀ, dB = Aᵀ G
                    acc(&mut grads, self, *a, |ga| {
                        for i in 0..m {
                            for p in 0..k {
                                ga[i * k + p] += dot(&g[i * n..(i + 1) * n], &bv[p * n..(p + 1) * n]);
                            }
                        }
                    });
                    acc(&mut grads, self, *b, |gb| {
                        for i in 0..m {
                            for p in 0..k {
                                axpy(av[i * k + p], &g[i * n..(i + 1) * n], &mut gb[p * n..(p + 1) * n]);
                            }
                        }
                    });
                }
                Op::AddRowBroadcast(m, v) => {
                    let (r, c) = self.dims(*m);
                    acc(&mut grads, self, *m, |gm| axpy(F::one(), &g, gm));
                    acc(&mut grads, self, *v, |gv| {
                        for i in 0..r {
                            axpy(F::one(), &g[i * c..(i + 1) * c], gv);
                        }
                    });
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    acc(&mut grads, self, *a, |ga| axpy(g[0], bv, ga));
                    acc(&mut grads, self, *b, |gb| axpy(g[0], av, gb));
                }
                Op::Sum(a) => acc(&mut grads, self, *a, |ga| ga.iter_mut().for_each(|x| *x += g[0])),
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.size(p);
                        acc(&mut grads, self, p, |gp| axpy(F::one(), &g[off..off + n], gp));
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = g.len();
                    acc(&mut grads, self, *a, |ga| axpy(F::one(), &g, &mut ga[*start..*start + n]));
                }
                Op::Stack(rows) => {
                    let c = node.cols;
                    for (i, &r) in rows.iter().enumerate() {
                        acc(&mut grads, self, r, |gr| axpy(F::one(), &g[i * c..(i + 1) * c], gr));
                    }
                }
                Op::Mean(parts) => {
                    let inv = F::one() / F::lit(parts.len() as f64);
                    for &p in parts {
                        acc(&mut grads, self, p, |gp| axpy(inv, &g, gp));
                    }
                }
                Op::Pick(a, i) => acc(&mut grads, self, *a, |ga| ga[*i] += g[0]),
                Op::Softmax(a) => {
                    let gy = dot(&g, y);
                    acc(&mut grads, self, *a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += y[i] * (g[i] - gy);
                        }
                    });
                }
                Op::LogSoftmax(a) => {
                    let gsum: F = g.iter().copied().sum();
                    acc(&mut grads, self, *a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[i] - y[i].exp() * gsum;
                        }
                    });
                }
                Op::Nll(terms) => {
                    for &(lp, t) in terms {
                        acc(&mut grads, self, lp, |gl| gl[t] -= g[0]);
                    }
                }
            }
        }
        out
    }
}

fn needs_grad<F: Real>(g: &Graph<'_, F>, v: Var) -> bool {
    !matches!(g.nodes[v.0].op, Op::Constant)
}

fn acc<F: Real>(
    grads: &mut [Option<Vec<F>>],
    graph: &Graph<'_, F>,
    v: Var,
    f: impl FnOnce(&mut [F]),
) {
    if !needs_grad(graph, v) {
        return;
    }
    let n = graph.size(v);
    let slot = grads[v.0].get_or_insert_with(|| vec![F::zero(); n]);
    f(slot);
}
