use serde::Serialize;

use super::dataset::ToyExample;
use super::model::{ParamGroup, ToyModel};
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Largest relative error between `analytic` and central differences of `f`
/// around `x`, using `|a - n| / max(1e-8, |a| + |n|)`.
pub fn check_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> Result<f64> {
    assert_eq!(x.len(), analytic.len());
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        probe[i] = x[i] + FD_STEP;
        let up = f(&probe);
        probe[i] = x[i] - FD_STEP;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite loss probing parameter {i}"
            )));
        }
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * FD_STEP)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub worst_group: ParamGroup,
    pub n_params: usize,
}

/// Compares the model's backpropagated gradient on `example` with central
/// differences over every parameter, reference-encoder weights included.
pub fn grad_check(model: &ToyModel, example: &ToyExample) -> Result<GradCheckReport> {
    let (loss, analytic) =
        model.loss_and_grad(&example.text, &example.gs_normalized, &example.target)?;
    if !loss.is_finite() {
        return Err(Error::Numerical(
            "non-finite loss at the check point".into(),
        ));
    }
    let mut probe = model.clone();
    let mut eval = |i: usize, value: f64| -> Result<f64> {
        probe.params_mut()[i] = value;
        probe
            .forward(&example.text, &example.gs_normalized)?
            .loss(&example.target)
    };
    let mut worst = (0.0f64, 0usize);
    for i in 0..model.n_params() {
        let x = model.params()[i];
        let up = eval(i, x + FD_STEP)?;
        let down = eval(i, x - FD_STEP)?;
        eval(i, x)?;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite loss probing parameter {i}"
            )));
        }
        let err = relative_error(analytic[i], (up - down) / (2.0 * FD_STEP));
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        worst_group: model.group_of(worst.1),
        n_params: model.n_params(),
    })
}
