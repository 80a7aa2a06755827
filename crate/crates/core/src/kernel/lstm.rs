use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamSet};
use super::real::Real;
use crate::error::{Error, Result};

/// One LSTM layer. The fused weight matrix maps `[x; h]` to the four gate
/// pre-activations stacked in the order input, forget, candidate, output.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmCell {
    /// Registers `{prefix}.W` (4h x (in + h)) and `{prefix}.b` (4h).
    pub fn register<F: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<F>,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = params.register_uniform(
            format!("{prefix}.W"),
            &[4 * hidden_size, input_size + hidden_size],
            init_scale,
            rng,
        )?;
        let bias = params.register_uniform(format!("{prefix}.b"), &[4 * hidden_size], init_scale, rng)?;
        Ok(LstmCell {
            weight,
            bias,
            input_size,
            hidden_size,
        })
    }

    /// Looks up an already registered cell by prefix and checks its shapes.
    pub fn lookup<F: Real>(params: &ParamSet<F>, prefix: &str, input_size: usize, hidden_size: usize) -> Result<Self> {
        let weight_name = format!("{prefix}.W");
        let bias_name = format!("{prefix}.b");
        let weight = params
            .id(&weight_name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{weight_name}`")))?;
        let bias = params
            .id(&bias_name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{bias_name}`")))?;
        let cell = LstmCell {
            weight,
            bias,
            input_size,
            hidden_size,
        };
        cell.check(params)?;
        Ok(cell)
    }

    pub fn check<F: Real>(&self, params: &ParamSet<F>) -> Result<()> {
        let expect_w = vec![4 * self.hidden_size, self.input_size + self.hidden_size];
        let w = params.get(self.weight);
        if w.shape() != expect_w.as_slice() {
            return Err(Error::Shape {
                param: params.name(self.weight).to_string(),
                expected: expect_w,
                got: w.shape().to_vec(),
            });
        }
        let b = params.get(self.bias);
        if b.shape() != [4 * self.hidden_size] {
            return Err(Error::Shape {
                param: params.name(self.bias).to_string(),
                expected: vec![4 * self.hidden_size],
                got: b.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn zero_state<F: Real>(&self, g: &mut Graph<'_, F>) -> LstmState {
        LstmState {
            h: g.zeros(self.hidden_size),
            c: g.zeros(self.hidden_size),
        }
    }

    /// One time step. Returns an error naming the offending parameter if `x`
    /// or the state does not fit this cell.
    pub fn step<F: Real>(&self, g: &mut Graph<'_, F>, x: Var, state: LstmState) -> Result<LstmState> {
        let params = g.params();
        if g.size(x) != self.input_size {
            return Err(Error::Shape {
                param: params.name(self.weight).to_string(),
                expected: vec![self.input_size],
                got: vec![g.size(x)],
            });
        }
        for v in [state.h, state.c] {
            if g.size(v) != self.hidden_size {
                return Err(Error::Shape {
                    param: params.name(self.weight).to_string(),
                    expected: vec![self.hidden_size],
                    got: vec![g.size(v)],
                });
            }
        }
        Ok(self.step_unchecked(g, x, state))
    }

    pub(crate) fn step_unchecked<F: Real>(&self, g: &mut Graph<'_, F>, x: Var, state: LstmState) -> LstmState {
        let h = self.hidden_size;
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xh = g.concat(&[x, state.h]);
        let z = g.matvec(w, xh);
        let z = g.add(z, b);
        let i = g.slice(z, 0, h);
        let f = g.slice(z, h, h);
        let cand = g.slice(z, 2 * h, h);
        let o = g.slice(z, 3 * h, h);
        let i = g.sigmoid(i);
        let f = g.sigmoid(f);
        let cand = g.tanh(cand);
        let o = g.sigmoid(o);
        let keep = g.mul(f, state.c);
        let write = g.mul(i, cand);
        let c = g.add(keep, write);
        let tc = g.tanh(c);
        let h = g.mul(o, tc);
        LstmState { h, c }
    }
}

/// A stack of unidirectional LSTM layers with dropout between layers.
#[derive(Clone, Debug)]
pub struct LstmStack {
    pub layers: Vec<LstmCell>,
}

impl LstmStack {
    pub fn register<F: Real, R: Rng + ?Sized>(
        params: &mut ParamSet<F>,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        layers: usize,
        init_scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input_size } else { hidden_size };
                LstmCell::register(params, &format!("{prefix}.layer{l}"), inp, hidden_size, init_scale, rng)
            })
            .collect::<Result<_>>()?;
        Ok(LstmStack { layers })
    }

    pub fn lookup<F: Real>(
        params: &ParamSet<F>,
        prefix: &str,
        input_size: usize,
        hidden_size: usize,
        layers: usize,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input_size } else { hidden_size };
                LstmCell::lookup(params, &format!("{prefix}.layer{l}"), inp, hidden_size)
            })
            .collect::<Result<_>>()?;
        Ok(LstmStack { layers })
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size
    }

    pub fn zero_state<F: Real>(&self, g: &mut Graph<'_, F>) -> Vec<LstmState> {
        self.layers.iter().map(|l| l.zero_state(g)).collect()
    }

    /// Advances every layer by one step; returns the top layer output.
    pub fn step<F: Real>(
        &self,
        g: &mut Graph<'_, F>,
        x: Var,
        states: &mut [LstmState],
        dropout: f64,
    ) -> Result<Var> {
        let mut input = x;
        for (l, cell) in self.layers.iter().enumerate() {
            if l > 0 {
                input = g.dropout(input, dropout);
            }
            states[l] = cell.step(g, input, states[l])?;
            input = states[l].h;
        }
        Ok(input)
    }

    /// Runs the whole sequence from zero state; returns per-step top outputs.
    pub fn run<F: Real>(&self, g: &mut Graph<'_, F>, inputs: &[Var], dropout: f64) -> Result<Vec<Var>> {
        let mut states = self.zero_state(g);
        inputs
            .iter()
            .map(|&x| self.step(g, x, &mut states, dropout))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_cell(n_in: usize, n_h: usize) -> (ParamSet<f64>, LstmCell) {
        let mut p = ParamSet::new();
        let weight = p.register("cell.W", Tensor::zeros(&[4 * n_h, n_in + n_h])).unwrap();
        let bias = p.register("cell.b", Tensor::zeros(&[4 * n_h])).unwrap();
        (
            p,
            LstmCell {
                weight,
                bias,
                input_size: n_in,
                hidden_size: n_h,
            },
        )
    }

    #[test]
    fn zero_params_halve_the_cell() {
        let (p, cell) = zero_cell(2, 3);
        let mut g = Graph::new(&p);
        let x = g.constant(vec![0.7, -0.4]);
        let h = g.constant(vec![0.1, 0.2, 0.3]);
        let c0 = [0.8, -1.5, 2.0];
        let c = g.constant(c0.to_vec());
        let s = cell.step(&mut g, x, LstmState { h, c }).unwrap();
        for k in 0..3 {
            assert!((g.value(s.c)[k] - 0.5 * c0[k]).abs() < 1e-15);
            assert!((g.value(s.h)[k] - 0.5 * (0.5 * c0[k]).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_everything_stays_zero() {
        let (p, cell) = zero_cell(2, 3);
        let mut g = Graph::new(&p);
        let x = g.zeros(2);
        let st = cell.zero_state(&mut g);
        let s = cell.step(&mut g, x, st).unwrap();
        assert!(g.value(s.h).iter().all(|&v| v == 0.0));
        assert!(g.value(s.c).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_names_the_parameter() {
        let (p, cell) = zero_cell(2, 3);
        let mut g = Graph::new(&p);
        let x = g.zeros(5);
        let st = cell.zero_state(&mut g);
        match cell.step(&mut g, x, st) {
            Err(Error::Shape { param, .. }) => assert_eq!(param, "cell.W"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn lookup_rejects_wrong_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = ParamSet::<f32>::new();
        LstmCell::register(&mut p, "enc", 4, 3, 0.1, &mut rng).unwrap();
        assert!(LstmCell::lookup(&p, "enc", 4, 3).is_ok());
        assert!(matches!(LstmCell::lookup(&p, "enc", 5, 3), Err(Error::Shape { .. })));
    }
}
