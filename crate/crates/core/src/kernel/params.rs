use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::real::{axpy, Real};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamSet<F> {
    names: Vec<String>,
    tensors: Vec<Tensor<F>>,
    index: HashMap<String, ParamId>,
}

impl<F: Real> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor<F>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::contract(format!("parameter `{name}` registered twice")));
        }
        let id = ParamId(self.tensors.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(id)
    }

    /// Registers a tensor drawn from uniform(-scale, scale).
    pub fn register_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Result<ParamId> {
        self.register(name, Tensor::uniform(shape, scale, rng))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<F> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.tensors[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<F>> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<F>)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamSet<G> {
        ParamSet {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Replaces every tensor with the same-named tensor from `other`. Both sets
    /// must hold exactly the same names and shapes.
    pub fn load_from(&mut self, other: &ParamSet<F>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                self.len(),
                other.len()
            )));
        }
        for i in 0..self.tensors.len() {
            let name = &self.names[i];
            let src = other
                .by_name(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if src.shape() != self.tensors[i].shape() {
                return Err(Error::Shape {
                    param: name.clone(),
                    expected: self.tensors[i].shape().to_vec(),
                    got: src.shape().to_vec(),
                });
            }
            self.tensors[i] = src.clone();
        }
        Ok(())
    }
}

/// Gradient accumulator shaped like a [`ParamSet`]. Embedding lookups
/// accumulate per-row sparse gradients that are merged on [`Gradients::densify`].
#[derive(Clone, Debug)]
pub struct Gradients<F> {
    dense: Vec<Option<Vec<F>>>,
    sparse: Vec<BTreeMap<usize, Vec<F>>>,
    sizes: Vec<usize>,
    row_width: Vec<usize>,
}

impl<F: Real> Gradients<F> {
    pub fn for_params(params: &ParamSet<F>) -> Self {
        Gradients {
            dense: vec![None; params.len()],
            sparse: vec![BTreeMap::new(); params.len()],
            sizes: params.tensors.iter().map(Tensor::len).collect(),
            row_width: params.tensors.iter().map(|t| t.dims2().1).collect(),
        }
    }

    pub fn add_dense(&mut self, id: ParamId, g: &[F]) {
        let slot = self.dense[id.0].get_or_insert_with(|| vec![F::zero(); self.sizes[id.0]]);
        axpy(F::one(), g, slot);
    }

    pub fn add_row(&mut self, id: ParamId, row: usize, g: &[F]) {
        let width = self.row_width[id.0];
        let slot = self.sparse[id.0]
            .entry(row)
            .or_insert_with(|| vec![F::zero(); width]);
        axpy(F::one(), g, slot);
    }

    /// Row ids with a sparse gradient for `id`.
    pub fn sparse_rows(&self, id: ParamId) -> impl Iterator<Item = usize> + '_ {
        self.sparse[id.0].keys().copied()
    }

    /// Folds sparse row gradients into dense buffers.
    pub fn densify(&mut self) {
        for i in 0..self.dense.len() {
            if self.sparse[i].is_empty() {
                continue;
            }
            let rows = std::mem::take(&mut self.sparse[i]);
            let width = self.row_width[i];
            let slot = self.dense[i].get_or_insert_with(|| vec![F::zero(); self.sizes[i]]);
            for (r, g) in rows {
                axpy(F::one(), &g, &mut slot[r * width..(r + 1) * width]);
            }
        }
    }

    /// Dense gradient of one parameter (zeros if untouched). Call after
    /// [`Gradients::densify`] to include sparse contributions.
    pub fn dense(&self, id: ParamId) -> Option<&[F]> {
        self.dense[id.0].as_deref()
    }

    /// Full dense gradient including sparse rows, without mutating.
    pub fn to_dense(&self, id: ParamId) -> Vec<F> {
        let mut out = self.dense[id.0]
            .clone()
            .unwrap_or_else(|| vec![F::zero(); self.sizes[id.0]]);
        let width = self.row_width[id.0];
        for (r, g) in &self.sparse[id.0] {
            axpy(F::one(), g, &mut out[r * width..(r + 1) * width]);
        }
        out
    }

    pub fn accumulate(&mut self, other: &Gradients<F>) {
        for i in 0..self.dense.len() {
            if let Some(g) = &other.dense[i] {
                self.add_dense(ParamId(i), g);
            }
            for (r, g) in &other.sparse[i] {
                self.add_row(ParamId(i), *r, g);
            }
        }
    }

    pub fn scale(&mut self, s: F) {
        for g in self.dense.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x *= s);
        }
        for rows in &mut self.sparse {
            for g in rows.values_mut() {
                g.iter_mut().for_each(|x| *x *= s);
            }
        }
    }

    pub fn global_norm(&self) -> F {
        let mut sq = F::zero();
        for i in 0..self.dense.len() {
            let g = self.to_dense(ParamId(i));
            sq += g.iter().map(|&x| x * x).sum::<F>();
        }
        sq.sqrt()
    }

    /// Rescales so the global norm is at most `max_norm`; returns the norm
    /// before clipping.
    pub fn clip_global_norm(&mut self, max_norm: F) -> F {
        let norm = self.global_norm();
        if norm > max_norm && norm > F::zero() {
            self.scale(max_norm / norm);
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.dense.iter().flatten().all(|g| g.iter().all(|x| x.is_finite()))
            && self
                .sparse
                .iter()
                .all(|rows| rows.values().all(|g| g.iter().all(|x| x.is_finite())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut p = ParamSet::<f32>::new();
        p.register("w", Tensor::zeros(&[2])).unwrap();
        assert!(p.register("w", Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn sparse_rows_fold_into_dense() {
        let mut p = ParamSet::<f64>::new();
        let id = p.register("emb", Tensor::zeros(&[3, 2])).unwrap();
        let mut g = Gradients::for_params(&p);
        g.add_row(id, 2, &[1.0, 2.0]);
        g.add_row(id, 2, &[1.0, 1.0]);
        assert_eq!(g.sparse_rows(id).collect::<Vec<_>>(), vec![2]);
        assert_eq!(g.to_dense(id), vec![0.0, 0.0, 0.0, 0.0, 2.0, 3.0]);
        g.densify();
        assert_eq!(g.dense(id).unwrap(), &[0.0, 0.0, 0.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut p = ParamSet::<f64>::new();
        let a = p.register("a", Tensor::zeros(&[2])).unwrap();
        let mut g = Gradients::for_params(&p);
        g.add_dense(a, &[30.0, 40.0]);
        let before = g.clip_global_norm(5.0);
        assert_eq!(before, 50.0);
        assert!((g.global_norm() - 5.0).abs() < 1e-12);
    }
}
