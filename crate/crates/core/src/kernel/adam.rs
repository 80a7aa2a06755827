use super::params::{Gradients, ParamId, ParamSet};
use super::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers start at zero and are kept in
/// `f64` regardless of the parameter type.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new<F: Real>(params: &ParamSet<F>, config: AdamConfig) -> Self {
        let m: Vec<Vec<f64>> = params.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Adam {
            config,
            v: m.clone(),
            m,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update with learning rate `lr`. Gradients are densified
    /// first; parameters without a gradient see a zero gradient.
    pub fn step<F: Real>(&mut self, params: &mut ParamSet<F>, grads: &mut Gradients<F>, lr: f64) {
        assert_eq!(params.len(), self.m.len(), "optimizer built for a different parameter set");
        grads.densify();
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.t as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..params.len() {
            let id = ParamId(i);
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let g = grads.dense(id);
            let values = params.get_mut(id).data_mut();
            for k in 0..values.len() {
                let gk = g.map_or(0.0, |g| g[k].as_f64());
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                let upd = lr * m_hat / (v_hat.sqrt() + eps);
                values[k] = F::lit(values[k].as_f64() - upd);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::tensor::Tensor;

    fn scalar_set(x: f64) -> (ParamSet<f64>, ParamId) {
        let mut p = ParamSet::new();
        let id = p.register("x", Tensor::from_vec(vec![x])).unwrap();
        (p, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut p, id) = scalar_set(1.5);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut g = Gradients::for_params(&p);
        adam.step(&mut p, &mut g, 0.1);
        assert_eq!(p.get(id).data(), &[1.5]);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_sign() {
        for grad in [3.0, -0.25] {
            let (mut p, id) = scalar_set(0.0);
            let mut adam = Adam::new(&p, AdamConfig::default());
            let mut g = Gradients::for_params(&p);
            g.add_dense(id, &[grad]);
            adam.step(&mut p, &mut g, 0.01);
            let moved = p.get(id).data()[0];
            assert!((moved + 0.01 * f64::signum(grad)).abs() < 1e-9, "moved {moved}");
        }
    }

    #[test]
    fn two_steps_match_hand_recursion() {
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.05);
        let grads = [0.4, -1.3];
        let (mut p, id) = scalar_set(0.2);
        let mut adam = Adam::new(&p, AdamConfig::default());
        for &gv in &grads {
            let mut g = Gradients::for_params(&p);
            g.add_dense(id, &[gv]);
            adam.step(&mut p, &mut g, lr);
        }

        let (mut x, mut m, mut v) = (0.2f64, 0.0f64, 0.0f64);
        for (t, &gv) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = b1 * m + (1.0 - b1) * gv;
            v = b2 * v + (1.0 - b2) * gv * gv;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
        }
        assert!((p.get(id).data()[0] - x).abs() < 1e-12);
    }
}
