use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::{ParamMatrix, Real};
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::config(
                "optimizer",
                format!("expected sgd or adam, got `{other}`"),
            )),
        }
    }
}

/// Optimizer hyperparameters plus per-parameter Adam moments.
///
/// Moments are allocated on the first step and must keep mirroring the
/// shapes of the parameter list passed to every later step.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    moments: Vec<(Array2<T>, Array2<T>)>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
            step: 0,
            moments: Vec::new(),
        }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// Every gradient is checked before any parameter is touched, so a
    /// non-finite gradient leaves the whole set unchanged.
    pub fn step(&mut self, mut params: Vec<&mut ParamMatrix<T>>) -> Result<()> {
        for p in &params {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient { param: p.name.clone() });
            }
        }
        self.step += 1;
        let lr = T::of(self.learning_rate);
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    let ParamMatrix { values, grad, .. } = &mut **p;
                    Zip::from(values).and(&*grad).for_each(|v, &g| *v -= lr * g);
                }
            }
            OptimizerKind::Adam => {
                if self.moments.is_empty() {
                    self.moments = params
                        .iter()
                        .map(|p| (Array2::zeros(p.values.raw_dim()), Array2::zeros(p.values.raw_dim())))
                        .collect();
                }
                if self.moments.len() != params.len() {
                    return Err(Error::State(format!(
                        "optimizer tracks {} parameters, got {}",
                        self.moments.len(),
                        params.len()
                    )));
                }
                let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
                let eps = T::of(self.epsilon);
                let t = self.step as i32;
                let bc1 = T::of(1.0 - self.beta1.powi(t));
                let bc2 = T::of(1.0 - self.beta2.powi(t));
                for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
                    if m.dim() != p.values.dim() {
                        return Err(Error::State(format!(
                            "optimizer moment shape {:?} does not match `{}` {:?}",
                            m.dim(),
                            p.name,
                            p.values.dim()
                        )));
                    }
                    let ParamMatrix { values, grad, .. } = &mut **p;
                    Zip::from(values).and(&*grad).and(m).and(v).for_each(|w, &g, m, v| {
                        *m = b1 * *m + (T::one() - b1) * g;
                        *v = b2 * *v + (T::one() - b2) * g * g;
                        let m_hat = *m / bc1;
                        let v_hat = *v / bc2;
                        *w -= lr * m_hat / (v_hat.sqrt() + eps);
                    });
                }
            }
        }
        for p in params.iter_mut() {
            p.zero_grad();
        }
        Ok(())
    }
}
