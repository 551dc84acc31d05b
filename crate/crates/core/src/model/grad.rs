//! Central finite-difference verification of the analytic gradients.
//!
//! Used by tests and the acceptance suite on tiny configurations: each
//! parameter is perturbed by ±epsilon, the loss is re-evaluated, and the
//! symmetric difference quotient is compared to the analytic value.

use super::{Gradients, ModelParams};

#[derive(Debug, Clone)]
pub struct FdReport {
    /// Worst relative error per tensor, canonical order.
    pub per_tensor: Vec<(String, f64)>,
    pub max_rel_err: f64,
}

impl FdReport {
    pub fn worst_tensor(&self) -> &(String, f64) {
        self.per_tensor
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one tensor")
    }
}

/// Compare `analytic` to central finite differences of `loss_fn` around
/// `params`. Relative error per coordinate is
/// `|fd - analytic| / max(1e-8, |fd|, |analytic|)`; coordinates where both
/// sides are below 1e-12 count as zero error.
pub fn finite_difference_errors(
    params: &ModelParams,
    analytic: &Gradients,
    loss_fn: &mut dyn FnMut(&ModelParams) -> f64,
    epsilon: f64,
) -> FdReport {
    let base = params.flatten();
    let an = analytic.flatten();
    assert_eq!(
        base.len(),
        an.len(),
        "gradient layout must mirror parameters"
    );
    let specs = params.tensor_specs();

    let mut scratch = params.clone();
    let mut flat = base.clone();
    let mut per_tensor: Vec<(String, f64)> = Vec::with_capacity(specs.len());
    let mut idx = 0usize;
    for (name, shape) in specs {
        let size: usize = shape.iter().product();
        let mut worst = 0.0f64;
        for k in idx..idx + size {
            flat[k] = base[k] + epsilon;
            scratch.assign_from_flat(&flat);
            let plus = loss_fn(&scratch);
            flat[k] = base[k] - epsilon;
            scratch.assign_from_flat(&flat);
            let minus = loss_fn(&scratch);
            flat[k] = base[k];
            let fd = (plus - minus) / (2.0 * epsilon);
            let a = an[k];
            let err = if fd.abs() < 1e-12 && a.abs() < 1e-12 {
                0.0
            } else {
                (fd - a).abs() / (1e-8f64).max(fd.abs()).max(a.abs())
            };
            worst = worst.max(err);
        }
        per_tensor.push((name, worst));
        idx += size;
    }
    scratch.assign_from_flat(&base);
    let max_rel_err = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    FdReport {
        per_tensor,
        max_rel_err,
    }
}
