//! Hand-differentiated building blocks shared by every model: parameter
//! matrices, a dense layer, losses, optimizers, a seedable generator and a
//! finite-difference gradient checker.
//!
//! All numeric code is generic over [`Real`] so that models train in `f32`
//! while gradient checks re-run the same code in `f64`.

mod dense;
mod gradcheck;
mod optim;
mod param;
mod real;
pub(crate) mod rng;

pub use dense::{Activation, Dense};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use optim::{OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use param::{glorot_limit, ParamMatrix, Parameterized};
pub use real::Real;
pub use rng::Rng;

/// Half mean squared error `(1/2N) Σ (p - y)^2`.
pub fn half_mse<T: Real>(predictions: &[T], targets: &[T]) -> crate::Result<T> {
    if predictions.len() != targets.len() {
        return Err(crate::Error::Usage(format!(
            "{} predictions but {} labels",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(crate::Error::Usage("empty prediction list".into()));
    }
    let n = T::from_usize(predictions.len()).unwrap();
    let sum = predictions
        .iter()
        .zip(targets)
        .fold(T::zero(), |acc, (&p, &y)| acc + (p - y) * (p - y));
    Ok(sum / (n + n))
}
