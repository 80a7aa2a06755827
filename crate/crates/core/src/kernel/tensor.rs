use rand::Rng;

use super::real::Real;
use crate::error::{Error, Result};

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::contract(format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::contract(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![F::zero(); n],
        }
    }

    pub fn from_vec(data: Vec<F>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| F::lit(rng.gen_range(-scale..scale)))
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Rows and columns when viewed as a matrix; 1-D tensors are one row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => {
                let c = *s.last().unwrap();
                (self.data.len() / c, c)
            }
        }
    }

    pub fn row(&self, r: usize) -> &[F] {
        let (_, c) = self.dims2();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [F] {
        let (_, c) = self.dims2();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn cast<G: Real>(&self) -> Tensor<G> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| G::lit(x.as_f64())).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Numerically stable softmax along `axis` of a 1-D or 2-D tensor.
pub fn softmax<F: Real>(x: &Tensor<F>, axis: usize) -> Result<Tensor<F>> {
    let (rows, cols) = x.dims2();
    let out = match (x.shape().len(), axis) {
        (1, 0) | (2, 1) => {
            let mut out = x.data().to_vec();
            for r in 0..rows {
                softmax_in_place(&mut out[r * cols..(r + 1) * cols]);
            }
            out
        }
        (2, 0) => {
            let mut out = x.data().to_vec();
            let mut col = vec![F::zero(); rows];
            for c in 0..cols {
                for r in 0..rows {
                    col[r] = out[r * cols + c];
                }
                softmax_in_place(&mut col);
                for r in 0..rows {
                    out[r * cols + c] = col[r];
                }
            }
            out
        }
        _ => {
            return Err(Error::contract(format!(
                "softmax axis {axis} out of range for shape {:?}",
                x.shape()
            )))
        }
    };
    Tensor::new(x.shape().to_vec(), out)
}

/// Softmax over the whole slice, subtracting the max first.
pub fn softmax_in_place<F: Real>(xs: &mut [F]) {
    assert!(!xs.is_empty(), "softmax over an empty axis");
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// `log(softmax(xs))`, computed as `x - max - log(sum(exp(x - max)))`.
pub fn log_softmax_in_place<F: Real>(xs: &mut [F]) {
    assert!(!xs.is_empty(), "log-softmax over an empty axis");
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    let sum: F = xs.iter().map(|&x| (x - max).exp()).sum();
    let lse = max + sum.ln();
    for x in xs.iter_mut() {
        *x = *x - lse;
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax<F: Real>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let t = Tensor::from_vec(vec![0.0f64; 3]);
        let s = softmax(&t, 0).unwrap();
        for &p in s.data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_exp_algebra() {
        let t = Tensor::from_vec(vec![0.0f64, 3f64.ln()]);
        let s = softmax(&t, 0).unwrap();
        assert!((s.data()[0] - 0.25).abs() < 1e-12);
        assert!((s.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let x = Tensor::from_vec(vec![0.3f64, -1.2, 2.5, 0.0]);
        let shifted = Tensor::from_vec(x.data().iter().map(|v| v + 7.0).collect());
        let a = softmax(&x, 0).unwrap();
        let b = softmax(&shifted, 0).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_stays_finite_for_large_inputs() {
        let t = Tensor::from_vec(vec![1000.0f32, 999.0, -1000.0]);
        let s = softmax(&t, 0).unwrap();
        assert!(s.is_finite());
        assert!((s.data().iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_rows_and_columns() {
        let t = Tensor::new(vec![2, 2], vec![0.0f64, 0.0, 1.0, 1.0]).unwrap();
        let rows = softmax(&t, 1).unwrap();
        assert_eq!(rows.data(), &[0.5, 0.5, 0.5, 0.5]);
        let cols = softmax(&t, 0).unwrap();
        assert!((cols.data()[0] + cols.data()[2] - 1.0).abs() < 1e-15);
        assert!(softmax(&t, 2).is_err());
    }

    #[test]
    fn zero_sized_tensors_are_rejected() {
        assert!(Tensor::<f32>::new(vec![0], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 2], vec![1.0]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0f32, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f32; 4]), 0);
    }
}
