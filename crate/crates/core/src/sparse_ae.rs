//! Single-hidden-layer sparse autoencoder.
//!
//! The objective is `mse + lambda * l2 + beta * kl`:
//!
//! * `mse`: squared reconstruction error averaged over samples and input units,
//! * `l2`: half the sum of squared encoder and decoder weights (biases excluded),
//! * `kl`: `sum_j rho ln(rho / rho_j) + (1 - rho) ln((1 - rho) / (1 - rho_j))`
//!   where `rho_j` is the batch-mean activation of code unit `j`, clamped to
//!   `[KL_CLAMP, 1 - KL_CLAMP]`.
//!
//! Encoder and decoder both use a logistic sigmoid, so codes live in `(0, 1)`
//! and reconstructions match `[0, 1]`-normalized inputs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::nn::{Activation, Dense, OptimizerKind, OptimizerState, ParamMatrix, Parameterized, Real, Rng};
use crate::{Error, Result};

/// Lower clamp applied to mean code activations inside the KL term.
pub const KL_CLAMP: f64 = 1e-7;

/// Sparsity and weight-decay settings of one autoencoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityParams {
    /// Target mean activation per code unit.
    pub rho: f64,
    /// Weight of the KL sparsity penalty.
    pub beta: f64,
    /// L2 weight regularization.
    pub lambda: f64,
}

impl Default for SparsityParams {
    fn default() -> Self {
        Self {
            rho: 0.05,
            beta: 4.0,
            lambda: 0.004,
        }
    }
}

impl SparsityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config("rho", format!("must lie in (0, 1), got {}", self.rho)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", format!("must be >= 0, got {}", self.beta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeTrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 400,
            batch_size: 32,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-4,
            seed: 0,
        }
    }
}

impl AeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("ae_epochs", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("ae_batch_size", "must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "ae_lr",
                format!("must be > 0, got {}", self.learning_rate),
            ));
        }
        Ok(())
    }
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeLoss {
    pub total: f64,
    pub mse: f64,
    pub l2: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct SparseAe<T> {
    pub encoder: Dense<T>,
    pub decoder: Dense<T>,
    pub sparsity: SparsityParams,
}

impl<T: Real> SparseAe<T> {
    pub fn new(input_dim: usize, code_dim: usize, sparsity: SparsityParams, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || code_dim == 0 {
            return Err(Error::Usage(format!(
                "autoencoder dimensions must be positive, got {input_dim} -> {code_dim}"
            )));
        }
        sparsity.validate()?;
        Ok(Self {
            encoder: Dense::new("encoder", input_dim, code_dim, Activation::Sigmoid, rng),
            decoder: Dense::new("decoder", code_dim, input_dim, Activation::Sigmoid, rng),
            sparsity,
        })
    }

    pub fn from_parts(encoder: Dense<T>, decoder: Dense<T>, sparsity: SparsityParams) -> Result<Self> {
        sparsity.validate()?;
        if decoder.input_dim() != encoder.output_dim() || decoder.output_dim() != encoder.input_dim() {
            return Err(Error::shape(
                "autoencoder decoder",
                format!("{}x{}", encoder.input_dim(), encoder.output_dim()),
                format!("{}x{}", decoder.output_dim(), decoder.input_dim()),
            ));
        }
        Ok(Self {
            encoder,
            decoder,
            sparsity,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn encode(&self, x: ArrayView1<T>) -> Result<Array1<T>> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, code: ArrayView1<T>) -> Result<Array1<T>> {
        self.decoder.forward(code)
    }

    /// Encodes every row of `batch`.
    pub fn encode_batch(&self, batch: ArrayView2<T>) -> Result<Array2<T>> {
        self.encoder.forward_batch(batch)
    }

    pub fn reconstruct_batch(&self, batch: ArrayView2<T>) -> Result<Array2<T>> {
        let codes = self.encoder.forward_batch(batch)?;
        self.decoder.forward_batch(codes.view())
    }

    fn check_batch(&self, batch: &ArrayView2<T>) -> Result<()> {
        if batch.nrows() == 0 {
            return Err(Error::Usage("autoencoder loss on an empty batch".into()));
        }
        if batch.ncols() != self.input_dim() {
            return Err(Error::shape(
                "autoencoder batch",
                format!("rows of length {}", self.input_dim()),
                format!("rows of length {}", batch.ncols()),
            ));
        }
        Ok(())
    }

    fn l2(&self) -> f64 {
        let sq = |w: &ParamMatrix<T>| w.values.iter().map(|&v| v.as_f64() * v.as_f64()).sum::<f64>();
        0.5 * (sq(&self.encoder.weight) + sq(&self.decoder.weight))
    }

    fn components(&self, batch: &ArrayView2<T>, codes: &Array2<T>, recon: &Array2<T>) -> AeLoss {
        let n = batch.len() as f64;
        let mse = batch
            .iter()
            .zip(recon.iter())
            .map(|(&x, &r)| {
                let d = (x - r).as_f64();
                d * d
            })
            .sum::<f64>()
            / n;
        let kl = kl_divergence(self.sparsity.rho, &mean_activation(codes));
        let l2 = self.l2();
        AeLoss {
            total: mse + self.sparsity.lambda * l2 + self.sparsity.beta * kl,
            mse,
            l2,
            kl,
        }
    }

    /// Evaluates the objective on a batch (one sample per row).
    pub fn loss(&self, batch: ArrayView2<T>) -> Result<AeLoss> {
        self.check_batch(&batch)?;
        let codes = self.encoder.forward_batch(batch)?;
        let recon = self.decoder.forward_batch(codes.view())?;
        Ok(self.components(&batch, &codes, &recon))
    }

    /// Evaluates the objective and accumulates its gradient into every parameter.
    pub fn loss_and_grad(&mut self, batch: ArrayView2<T>) -> Result<AeLoss> {
        self.check_batch(&batch)?;
        let codes = self.encoder.forward_train(batch)?;
        let recon = self.decoder.forward_train(codes.view())?;
        let loss = self.components(&batch, &codes, &recon);

        let scale = T::of(2.0 / batch.len() as f64);
        let mut d_recon = recon;
        d_recon.zip_mut_with(&batch, |r, &x| *r = scale * (*r - x));
        let mut d_codes = self.decoder.backward(d_recon.view())?;

        let SparsityParams { rho, beta, lambda } = self.sparsity;
        if beta != 0.0 {
            let n = batch.nrows() as f64;
            let kl_grad: Array1<T> = mean_activation(&codes)
                .iter()
                .map(|&m| {
                    if !(KL_CLAMP..=1.0 - KL_CLAMP).contains(&m) {
                        T::zero()
                    } else {
                        T::of(beta * (-rho / m + (1.0 - rho) / (1.0 - m)) / n)
                    }
                })
                .collect();
            d_codes += &kl_grad;
        }
        self.encoder.backward(d_codes.view())?;

        if lambda != 0.0 {
            let lam = T::of(lambda);
            for dense in [&mut self.encoder, &mut self.decoder] {
                let w = &mut dense.weight;
                w.grad.zip_mut_with(&w.values, |g, &v| *g += lam * v);
            }
        }
        Ok(loss)
    }

    /// Mini-batch training on the rows of `data`; returns one total loss per
    /// epoch (sample-weighted mean of that epoch's mini-batch losses).
    pub fn train(&mut self, data: ArrayView2<T>, config: &AeTrainConfig) -> Result<Vec<f64>> {
        config.validate()?;
        self.check_batch(&data)?;
        let mut rng = Rng::new(config.seed);
        let mut opt = OptimizerState::<T>::new(config.optimizer, config.learning_rate);
        let mut order: Vec<usize> = (0..data.nrows()).collect();
        let mut trace = Vec::with_capacity(config.max_epochs);
        self.zero_grads();

        for epoch in 1..=config.max_epochs {
            rng.shuffle(&mut order);
            let mut weighted = 0.0;
            for chunk in order.chunks(config.batch_size) {
                let batch = data.select(Axis(0), chunk);
                let loss = self.loss_and_grad(batch.view())?;
                if !loss.total.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        detail: format!("non-finite autoencoder loss {}", loss.total),
                    });
                }
                weighted += loss.total * chunk.len() as f64;
                opt.step(self.params_mut()).map_err(|e| Error::Training {
                    epoch,
                    detail: e.to_string(),
                })?;
            }
            trace.push(weighted / data.nrows() as f64);
        }
        Ok(trace)
    }

    pub fn cast<U: Real>(&self) -> SparseAe<U> {
        SparseAe {
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            sparsity: self.sparsity,
        }
    }
}

impl<T: Real> Parameterized<T> for SparseAe<T> {
    fn params(&self) -> Vec<&ParamMatrix<T>> {
        let mut p = self.encoder.params();
        p.extend(self.decoder.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut ParamMatrix<T>> {
        let mut p = self.encoder.params_mut();
        p.extend(self.decoder.params_mut());
        p
    }
}

/// Per-unit mean activation over the rows of `codes`, in `f64`.
pub fn mean_activation<T: Real>(codes: &Array2<T>) -> Vec<f64> {
    let n = codes.nrows() as f64;
    codes
        .columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.as_f64()).sum::<f64>() / n)
        .collect()
}

/// Bernoulli KL divergence summed over units, with clamped mean activations.
pub fn kl_divergence(rho: f64, mean_activations: &[f64]) -> f64 {
    mean_activations
        .iter()
        .map(|&m| {
            let m = m.clamp(KL_CLAMP, 1.0 - KL_CLAMP);
            rho * (rho / m).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - m)).ln()
        })
        .sum()
}
