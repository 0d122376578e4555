use super::{Parameterized, Rng};

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
    /// Infinite when any compared value was non-finite.
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub entries_checked: usize,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Entries whose analytic or numeric value was not finite.
    pub non_finite: Vec<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.non_finite.is_empty() && self.max_relative_error < self.tolerance
    }
}

/// Denominator floor for near-zero gradients: below it the comparison is absolute.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Compares analytic gradients to central differences `(L(p+h) - L(p-h)) / 2h`.
///
/// `loss(model, true)` must run forward and backward, accumulating gradients
/// into the model; `loss(model, false)` must only evaluate the loss. Checks
/// every entry when `samples_per_param == 0`, otherwise that many entries per
/// parameter matrix drawn with `seed`.
pub fn gradient_check<M, F>(
    model: &mut M,
    mut loss: F,
    step: f64,
    tolerance: f64,
    samples_per_param: usize,
    seed: u64,
) -> GradCheckReport
where
    M: Parameterized<f64>,
    F: FnMut(&mut M, bool) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    model.zero_grads();
    loss(model, true);
    let analytic: Vec<_> = model.params().iter().map(|p| p.grad.clone()).collect();
    let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();

    let mut rng = Rng::new(seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        tolerance,
        entries_checked: 0,
        worst: None,
        non_finite: Vec::new(),
    };

    for (pi, grad) in analytic.iter().enumerate() {
        let n = grad.len();
        let indices: Vec<usize> = if samples_per_param == 0 || samples_per_param >= n {
            (0..n).collect()
        } else {
            let mut all: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut all);
            all.truncate(samples_per_param);
            all
        };
        let cols = grad.ncols();
        for flat in indices {
            let idx = (flat / cols, flat % cols);
            let original = model.params()[pi].values[idx];
            model.params_mut()[pi].values[idx] = original + step;
            let plus = loss(model, false);
            model.params_mut()[pi].values[idx] = original - step;
            let minus = loss(model, false);
            model.params_mut()[pi].values[idx] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let a = grad[idx];
            report.entries_checked += 1;
            if !numeric.is_finite() || !a.is_finite() {
                report.non_finite.push((names[pi].clone(), flat));
                report.max_relative_error = f64::INFINITY;
                continue;
            }
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
            let rel = (a - numeric).abs() / denom;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((names[pi].clone(), flat));
            }
        }
    }
    model.zero_grads();
    report
}
