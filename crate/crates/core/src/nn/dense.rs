use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::{ParamMatrix, Parameterized, Real, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Sigmoid => z.sigmoid(),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    pub fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone)]
struct DenseCache<T> {
    input: Array2<T>,
    output: Array2<T>,
}

/// Fully connected layer `y = act(W x + b)` with `W` of shape `out x in`.
///
/// Batched calls take one sample per row.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: ParamMatrix<T>,
    pub bias: ParamMatrix<T>,
    pub activation: Activation,
    cache: Option<DenseCache<T>>,
}

impl<T: Real> Dense<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn new(name: &str, input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        Self {
            weight: ParamMatrix::glorot(format!("{name}.weight"), output, input, input, output, rng),
            bias: ParamMatrix::zeros(format!("{name}.bias"), output, 1),
            activation,
            cache: None,
        }
    }

    pub fn from_params(weight: ParamMatrix<T>, bias: ParamMatrix<T>, activation: Activation) -> Result<Self> {
        if bias.rows() != weight.rows() || bias.cols() != 1 {
            return Err(Error::shape(
                format!("bias of {}", weight.name),
                format!("{}x1", weight.rows()),
                format!("{}x{}", bias.rows(), bias.cols()),
            ));
        }
        Ok(Self {
            weight,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::shape(
                format!("{} input", self.weight.name),
                format!(
                    "length {} (W is {}x{})",
                    self.input_dim(),
                    self.output_dim(),
                    self.input_dim()
                ),
                format!("length {cols}"),
            ));
        }
        Ok(())
    }

    /// Single-vector forward pass; does not touch the cache.
    pub fn forward(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        self.check_input(x.len())?;
        let mut z = self.weight.values.dot(&x);
        z += &self.bias.values.column(0);
        z.mapv_inplace(|v| self.activation.apply(v));
        Ok(z)
    }

    /// Batched forward pass; does not touch the cache.
    pub fn forward_batch(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(x.ncols())?;
        let mut z = x.dot(&self.weight.values.t());
        z += &self.bias.values.t();
        z.mapv_inplace(|v| self.activation.apply(v));
        Ok(z)
    }

    /// Batched forward pass that keeps input and output for [`Dense::backward`].
    pub fn forward_train(&mut self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let y = self.forward_batch(x)?;
        self.cache = Some(DenseCache {
            input: x.to_owned(),
            output: y.clone(),
        });
        Ok(y)
    }

    /// Accumulates `dL/dW`, `dL/db` and returns `dL/dx`. Consumes the cache.
    pub fn backward(&mut self, upstream: ArrayView2<T>) -> Result<Array2<T>> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::State(format!(
                "backward on {} without a cached forward pass",
                self.weight.name
            ))
        })?;
        if upstream.dim() != cache.output.dim() {
            return Err(Error::shape(
                format!("{} upstream gradient", self.weight.name),
                format!("{:?}", cache.output.dim()),
                format!("{:?}", upstream.dim()),
            ));
        }
        let act = self.activation;
        let mut dz = upstream.to_owned();
        dz.zip_mut_with(&cache.output, |g, &y| *g *= act.derivative_from_output(y));

        self.weight.grad += &dz.t().dot(&cache.input);
        let db = dz.sum_axis(Axis(0));
        self.bias.grad.column_mut(0).zip_mut_with(&db, |g, &d| *g += d);
        Ok(dz.dot(&self.weight.values))
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    pub fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.cast(),
            bias: self.bias.cast(),
            activation: self.activation,
            cache: None,
        }
    }
}

impl<T: Real> Parameterized<T> for Dense<T> {
    fn params(&self) -> Vec<&ParamMatrix<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut ParamMatrix<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
