use ndarray::Array2;

use super::{Real, Rng};

/// Glorot-uniform half-width `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// A named trainable matrix and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMatrix<T> {
    pub name: String,
    pub values: Array2<T>,
    pub grad: Array2<T>,
}

impl<T: Real> ParamMatrix<T> {
    pub fn zeros(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            values: Array2::zeros((rows, cols)),
            grad: Array2::zeros((rows, cols)),
        }
    }

    pub fn from_values(name: impl Into<String>, values: Array2<T>) -> Self {
        let grad = Array2::zeros(values.raw_dim());
        Self {
            name: name.into(),
            values,
            grad,
        }
    }

    pub fn filled(name: impl Into<String>, rows: usize, cols: usize, value: T) -> Self {
        Self::from_values(name, Array2::from_elem((rows, cols), value))
    }

    /// Uniform in `[-r, r]` with `r = glorot_limit(fan_in, fan_out)`, drawn row-major.
    pub fn glorot(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> Self {
        let r = glorot_limit(fan_in, fan_out);
        let values = Array2::from_shape_simple_fn((rows, cols), || T::of(rng.uniform_in(-r, r)));
        Self::from_values(name, values)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Real>(&self) -> ParamMatrix<U> {
        ParamMatrix {
            name: self.name.clone(),
            values: self.values.mapv(|v| U::of(v.as_f64())),
            grad: self.grad.mapv(|v| U::of(v.as_f64())),
        }
    }
}

/// Models exposing their trainable matrices in a fixed order.
pub trait Parameterized<T: Real> {
    fn params(&self) -> Vec<&ParamMatrix<T>>;
    fn params_mut(&mut self) -> Vec<&mut ParamMatrix<T>>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
