//! Global prosody conditioning of a text encoder.
//!
//! A linear reference encoder maps the normalized 7-dimensional GS vector to
//! the encoder width `d`, and the result is added to every encoder output
//! step. The rest of this module is a deliberately small text-to-mel model
//! built around that mechanism, with hand-written gradients, a finite
//! difference checker and a synthetic one-to-many training task.

mod dataset;
mod gradcheck;
mod model;
mod train;

pub use dataset::{
    make_synthetic_prosody_dataset, GsGenerator, SyntheticConfig, SyntheticCorpus, ToyExample,
};
pub use gradcheck::{check_gradient, grad_check, GradCheckReport, FD_STEP};
pub use model::{Checkpoint, Forward, ParamGroup, ToyModel, ToyModelConfig, CHECKPOINT_FORMAT};
pub use train::{
    evaluate_mse, loss_history_csv, read_loss_history_csv, train_toy, LossRecord, OptimizerKind,
    TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::GS_DIM;

/// Width of the conditioning site in the full-size model.
pub const PAPER_ENCODER_WIDTH: usize = 512;

/// Weights of the linear reference encoder: `out = weightᵀ · gs + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningParams {
    /// `GS_DIM x width`, row-major: `weight[k * width + j]` maps input
    /// feature `k` to output unit `j`.
    weight: Vec<f64>,
    bias: Vec<f64>,
    width: usize,
}

impl ConditioningParams {
    pub fn new(weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let width = bias.len();
        if width == 0 {
            return Err(Error::invalid("conditioning width must be at least 1"));
        }
        if weight.len() != GS_DIM * width {
            return Err(Error::invalid(format!(
                "weight has {} entries, expected {GS_DIM} x {width}",
                weight.len()
            )));
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("conditioning parameters must be finite"));
        }
        Ok(Self {
            weight,
            bias,
            width,
        })
    }

    pub fn zeros(width: usize) -> Result<Self> {
        Self::new(vec![0.0; GS_DIM * width], vec![0.0; width])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

pub(crate) fn ref_encode_into(weight: &[f64], bias: &[f64], gs: &[f64; GS_DIM], out: &mut [f64]) {
    let width = bias.len();
    out.copy_from_slice(bias);
    for (k, &g) in gs.iter().enumerate() {
        let row = &weight[k * width..(k + 1) * width];
        for (o, &w) in out.iter_mut().zip(row) {
            *o += w * g;
        }
    }
}

/// Reference-encoder output for a normalized GS vector.
pub fn ref_encode(gs_normalized: &[f64; GS_DIM], params: &ConditioningParams) -> Vec<f64> {
    let mut out = vec![0.0; params.width];
    ref_encode_into(&params.weight, &params.bias, gs_normalized, &mut out);
    out
}

/// Encoder outputs, `steps x width`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderStates {
    data: Vec<f64>,
    width: usize,
}

impl EncoderStates {
    pub fn new(data: Vec<f64>, width: usize) -> Result<Self> {
        if width == 0 || data.is_empty() || !data.len().is_multiple_of(width) {
            return Err(Error::invalid(format!(
                "{} values do not form at least one step of width {width}",
                data.len()
            )));
        }
        Ok(Self { data, width })
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Adds `ref_vec` to every step of `states`.
pub fn condition_encoder(states: &EncoderStates, ref_vec: &[f64]) -> Result<EncoderStates> {
    if ref_vec.len() != states.width {
        return Err(Error::invalid(format!(
            "reference vector width {} does not match encoder width {}",
            ref_vec.len(),
            states.width
        )));
    }
    let mut data = states.data.clone();
    for row in data.chunks_exact_mut(states.width) {
        for (x, r) in row.iter_mut().zip(ref_vec) {
            *x += r;
        }
    }
    Ok(EncoderStates {
        data,
        width: states.width,
    })
}
