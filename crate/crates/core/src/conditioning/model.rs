//! A minimal conditioned text-to-mel model.
//!
//! ```text
//! e_t = embed[x_t]                                  symbol embedding
//! h_t = tanh(b_enc + sum_k e_{t+k-1} · conv_k)      width-3 convolution, zero padded
//! s_t = h_t + (W_refᵀ g + b_ref)                    global conditioning
//! z_t = tanh(b_dec + s_t · W_dec)
//! y_t = b_out + z_t · W_out                         frames_per_symbol x n_mels values
//! ```
//!
//! The loss is the mean squared error over every predicted mel cell. All
//! parameters live in one flat vector; [`ParamGroup`] names its segments.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::OptimizerKind;
use super::{ref_encode_into, ConditioningParams, EncoderStates};
use crate::error::{Error, Result};
use crate::features::GS_DIM;

pub const CHECKPOINT_FORMAT: &str = "prosody-gs/toy-model";
const CHECKPOINT_VERSION: u32 = 1;

const CONV_TAPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    /// 26 lower-case letters plus normalized punctuation and space.
    pub charset_size: usize,
    /// Embedding and encoder width.
    pub width: usize,
    pub n_mels: usize,
    /// Mel frames emitted per input symbol.
    pub frames_per_symbol: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Validation MSE is logged every this many steps (and at the last one).
    pub eval_every: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self {
            charset_size: 37,
            width: 32,
            n_mels: 80,
            frames_per_symbol: 2,
            learning_rate: 1e-3,
            batch_size: 32,
            max_steps: 2000,
            eval_every: 100,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.charset_size == 0
            || self.width == 0
            || self.n_mels == 0
            || self.frames_per_symbol == 0
            || self.batch_size == 0
            || self.eval_every == 0
        {
            return Err(Error::invalid("toy model sizes must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }

    fn out_width(&self) -> usize {
        self.frames_per_symbol * self.n_mels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Embedding,
    EncoderConv,
    EncoderBias,
    RefWeight,
    RefBias,
    DecoderWeight,
    DecoderBias,
    OutputWeight,
    OutputBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 9] = [
        ParamGroup::Embedding,
        ParamGroup::EncoderConv,
        ParamGroup::EncoderBias,
        ParamGroup::RefWeight,
        ParamGroup::RefBias,
        ParamGroup::DecoderWeight,
        ParamGroup::DecoderBias,
        ParamGroup::OutputWeight,
        ParamGroup::OutputBias,
    ];

    fn size(self, cfg: &ToyModelConfig) -> usize {
        let d = cfg.width;
        match self {
            ParamGroup::Embedding => cfg.charset_size * d,
            ParamGroup::EncoderConv => CONV_TAPS * d * d,
            ParamGroup::EncoderBias | ParamGroup::RefBias | ParamGroup::DecoderBias => d,
            ParamGroup::RefWeight => GS_DIM * d,
            ParamGroup::DecoderWeight => d * d,
            ParamGroup::OutputWeight => d * cfg.out_width(),
            ParamGroup::OutputBias => cfg.out_width(),
        }
    }
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    text: Vec<usize>,
    gs: [f64; GS_DIM],
    hidden: Vec<f64>,
    conditioned: Vec<f64>,
    decoder: Vec<f64>,
    output: Vec<f64>,
    n_mels: usize,
}

impl Forward {
    /// Predicted mel frames, `(steps * frames_per_symbol) x n_mels`, row-major.
    pub fn prediction(&self) -> &[f64] {
        &self.output
    }

    pub fn n_frames(&self) -> usize {
        self.output.len() / self.n_mels
    }

    /// Conditioned encoder states `s_t`.
    pub fn encoder_states(&self) -> EncoderStates {
        EncoderStates::new(
            self.conditioned.clone(),
            self.conditioned.len() / self.text.len(),
        )
        .expect("non-empty encoder states")
    }

    /// Mean squared error against `target`, which must have the prediction's
    /// shape.
    pub fn loss(&self, target: &[f64]) -> Result<f64> {
        if target.len() != self.output.len() {
            return Err(Error::invalid(format!(
                "target has {} values, prediction {}",
                target.len(),
                self.output.len()
            )));
        }
        Ok(mse(&self.output, target))
    }
}

pub(crate) fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

/// `out[j] += sum_i x[i] * w[i * cols + j]`
fn accumulate_row_times(x: &[f64], w: &[f64], cols: usize, out: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * cols..(i + 1) * cols];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// `out[i] += sum_j w[i * cols + j] * g[j]`
fn accumulate_times_col(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = g.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * cols..(i + 1) * cols];
        *o += row.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `w[i * cols + j] += x[i] * g[j]`
fn accumulate_outer(x: &[f64], g: &[f64], w: &mut [f64]) {
    let cols = g.len();
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &mut w[i * cols..(i + 1) * cols];
        for (r, &gj) in row.iter_mut().zip(g) {
            *r += xi * gj;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    cfg: ToyModelConfig,
    params: Vec<f64>,
    offsets: [usize; 10],
}

fn offsets(cfg: &ToyModelConfig) -> [usize; 10] {
    let mut out = [0; 10];
    for (i, g) in ParamGroup::ALL.iter().enumerate() {
        out[i + 1] = out[i] + g.size(cfg);
    }
    out
}

impl ToyModel {
    /// Seeded uniform initialization scaled by fan-in; biases start at 0.
    pub fn new(cfg: ToyModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut model = Self::zeroed(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.width as f64;
        for group in ParamGroup::ALL {
            let limit = match group {
                ParamGroup::Embedding => 1.0,
                ParamGroup::EncoderConv => (3.0 / (CONV_TAPS as f64 * d)).sqrt(),
                ParamGroup::RefWeight => (3.0 / GS_DIM as f64).sqrt() * 0.5,
                ParamGroup::DecoderWeight | ParamGroup::OutputWeight => (3.0 / d).sqrt(),
                _ => continue,
            };
            for p in model.group_mut(group) {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(model)
    }

    /// Every parameter set to zero.
    pub fn zeroed(cfg: ToyModelConfig) -> Result<Self> {
        cfg.validate()?;
        let offsets = offsets(&cfg);
        Ok(Self {
            cfg,
            params: vec![0.0; offsets[9]],
            offsets,
        })
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.cfg
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn group_range(&self, group: ParamGroup) -> std::ops::Range<usize> {
        let i = ParamGroup::ALL.iter().position(|&g| g == group).unwrap();
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn group_of(&self, index: usize) -> ParamGroup {
        let i = self.offsets[1..]
            .iter()
            .position(|&end| index < end)
            .unwrap();
        ParamGroup::ALL[i]
    }

    pub fn group(&self, group: ParamGroup) -> &[f64] {
        &self.params[self.group_range(group)]
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let r = self.group_range(group);
        &mut self.params[r]
    }

    /// The reference-encoder weights.
    pub fn conditioning(&self) -> ConditioningParams {
        ConditioningParams::new(
            self.group(ParamGroup::RefWeight).to_vec(),
            self.group(ParamGroup::RefBias).to_vec(),
        )
        .expect("model holds finite reference-encoder weights")
    }

    fn check_text(&self, text: &[usize]) -> Result<()> {
        if text.is_empty() {
            return Err(Error::invalid("text must contain at least one symbol"));
        }
        if let Some(&bad) = text.iter().find(|&&s| s >= self.cfg.charset_size) {
            return Err(Error::invalid(format!(
                "symbol id {bad} out of range for charset of {}",
                self.cfg.charset_size
            )));
        }
        Ok(())
    }

    pub fn forward(&self, text: &[usize], gs_normalized: &[f64; GS_DIM]) -> Result<Forward> {
        self.check_text(text)?;
        let d = self.cfg.width;
        let ow = self.cfg.out_width();
        let steps = text.len();
        let embed = self.group(ParamGroup::Embedding);
        let conv = self.group(ParamGroup::EncoderConv);

        let mut hidden = vec![0.0; steps * d];
        for t in 0..steps {
            let a = &mut hidden[t * d..(t + 1) * d];
            a.copy_from_slice(self.group(ParamGroup::EncoderBias));
            for k in 0..CONV_TAPS {
                let Some(src) = (t + k).checked_sub(1).filter(|&s| s < steps) else {
                    continue;
                };
                let e = &embed[text[src] * d..(text[src] + 1) * d];
                accumulate_row_times(e, &conv[k * d * d..(k + 1) * d * d], d, a);
            }
            a.iter_mut().for_each(|v| *v = v.tanh());
        }

        let mut reference = vec![0.0; d];
        ref_encode_into(
            self.group(ParamGroup::RefWeight),
            self.group(ParamGroup::RefBias),
            gs_normalized,
            &mut reference,
        );
        let mut conditioned = hidden.clone();
        for row in conditioned.chunks_exact_mut(d) {
            for (x, r) in row.iter_mut().zip(&reference) {
                *x += r;
            }
        }

        let mut decoder = vec![0.0; steps * d];
        let mut output = vec![0.0; steps * ow];
        for t in 0..steps {
            let z = &mut decoder[t * d..(t + 1) * d];
            z.copy_from_slice(self.group(ParamGroup::DecoderBias));
            accumulate_row_times(
                &conditioned[t * d..(t + 1) * d],
                self.group(ParamGroup::DecoderWeight),
                d,
                z,
            );
            z.iter_mut().for_each(|v| *v = v.tanh());
            let y = &mut output[t * ow..(t + 1) * ow];
            y.copy_from_slice(self.group(ParamGroup::OutputBias));
            accumulate_row_times(z, self.group(ParamGroup::OutputWeight), ow, y);
        }

        Ok(Forward {
            text: text.to_vec(),
            gs: *gs_normalized,
            hidden,
            conditioned,
            decoder,
            output,
            n_mels: self.cfg.n_mels,
        })
    }

    /// Adds `scale * dLoss/dθ` for the MSE loss of `fwd` against `target`
    /// into `grad`.
    pub fn backward(
        &self,
        fwd: &Forward,
        target: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> Result<()> {
        if target.len() != fwd.output.len() {
            return Err(Error::invalid("target shape does not match prediction"));
        }
        if grad.len() != self.params.len() {
            return Err(Error::invalid("gradient buffer has the wrong length"));
        }
        let d = self.cfg.width;
        let ow = self.cfg.out_width();
        let steps = fwd.text.len();
        let r = |g: ParamGroup| self.group_range(g);

        let coeff = 2.0 * scale / fwd.output.len() as f64;
        let mut d_cond_total = vec![0.0; d];
        let mut d_hidden = vec![0.0; steps * d];
        let mut dz = vec![0.0; d];
        let mut du = vec![0.0; d];
        for t in 0..steps {
            let dy: Vec<f64> = fwd.output[t * ow..(t + 1) * ow]
                .iter()
                .zip(&target[t * ow..(t + 1) * ow])
                .map(|(p, q)| coeff * (p - q))
                .collect();
            let z = &fwd.decoder[t * d..(t + 1) * d];
            for (g, v) in grad[r(ParamGroup::OutputBias)].iter_mut().zip(&dy) {
                *g += v;
            }
            accumulate_outer(z, &dy, &mut grad[r(ParamGroup::OutputWeight)]);

            dz.iter_mut().for_each(|v| *v = 0.0);
            accumulate_times_col(self.group(ParamGroup::OutputWeight), &dy, &mut dz);
            for ((u, &dzi), &zi) in du.iter_mut().zip(&dz).zip(z) {
                *u = dzi * (1.0 - zi * zi);
            }
            for (g, v) in grad[r(ParamGroup::DecoderBias)].iter_mut().zip(&du) {
                *g += v;
            }
            let s = &fwd.conditioned[t * d..(t + 1) * d];
            accumulate_outer(s, &du, &mut grad[r(ParamGroup::DecoderWeight)]);

            let ds = &mut d_hidden[t * d..(t + 1) * d];
            accumulate_times_col(self.group(ParamGroup::DecoderWeight), &du, ds);
            for (c, v) in d_cond_total.iter_mut().zip(ds.iter()) {
                *c += v;
            }
        }

        for (g, v) in grad[r(ParamGroup::RefBias)].iter_mut().zip(&d_cond_total) {
            *g += v;
        }
        accumulate_outer(&fwd.gs, &d_cond_total, &mut grad[r(ParamGroup::RefWeight)]);

        let embed_range = r(ParamGroup::Embedding);
        let conv_range = r(ParamGroup::EncoderConv);
        let conv = self.group(ParamGroup::EncoderConv);
        let embed = self.group(ParamGroup::Embedding);
        let mut de = vec![0.0; d];
        for t in 0..steps {
            let h = &fwd.hidden[t * d..(t + 1) * d];
            let da: Vec<f64> = d_hidden[t * d..(t + 1) * d]
                .iter()
                .zip(h)
                .map(|(g, hv)| g * (1.0 - hv * hv))
                .collect();
            for (g, v) in grad[r(ParamGroup::EncoderBias)].iter_mut().zip(&da) {
                *g += v;
            }
            for k in 0..CONV_TAPS {
                let Some(src) = (t + k).checked_sub(1).filter(|&s| s < steps) else {
                    continue;
                };
                let sym = fwd.text[src];
                let e = &embed[sym * d..(sym + 1) * d];
                let kernel = conv_range.start + k * d * d..conv_range.start + (k + 1) * d * d;
                accumulate_outer(e, &da, &mut grad[kernel]);
                de.iter_mut().for_each(|v| *v = 0.0);
                accumulate_times_col(&conv[k * d * d..(k + 1) * d * d], &da, &mut de);
                let slot = embed_range.start + sym * d;
                for (g, v) in grad[slot..slot + d].iter_mut().zip(&de) {
                    *g += v;
                }
            }
        }
        Ok(())
    }

    /// Loss and full gradient for one example.
    pub fn loss_and_grad(
        &self,
        text: &[usize],
        gs_normalized: &[f64; GS_DIM],
        target: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        let fwd = self.forward(text, gs_normalized)?;
        let loss = fwd.loss(target)?;
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&fwd, target, 1.0, &mut grad)?;
        Ok((loss, grad))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.cfg,
            groups: ParamGroup::ALL
                .iter()
                .map(|&g| CheckpointGroup {
                    name: g,
                    len: g.size(&self.cfg),
                    values: self.group(g).to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let mut model = Self::zeroed(ck.config)?;
        if ck.groups.len() != ParamGroup::ALL.len() {
            return Err(Error::Parse(
                "checkpoint has the wrong number of groups".into(),
            ));
        }
        for (entry, &group) in ck.groups.iter().zip(&ParamGroup::ALL) {
            let expected = group.size(&ck.config);
            if entry.name != group || entry.len != expected || entry.values.len() != expected {
                return Err(Error::Parse(format!(
                    "checkpoint group {group:?} has the wrong shape"
                )));
            }
            if entry.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!(
                    "checkpoint group {group:?} is not finite"
                )));
            }
            model.group_mut(group).copy_from_slice(&entry.values);
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_checkpoint())? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

/// Versioned JSON checkpoint with explicit shapes; the seed is in `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ToyModelConfig,
    pub groups: Vec<CheckpointGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointGroup {
    pub name: ParamGroup,
    pub len: usize,
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyModelConfig {
        ToyModelConfig {
            width: 8,
            n_mels: 5,
            ..Default::default()
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = ToyModel::new(small()).unwrap();
        let g = [0.1, -0.2, 0.3, 0.0, 1.0, -1.0, 0.5];
        let a = m.forward(&[1, 2, 3], &g).unwrap();
        let b = m.forward(&[1, 2, 3], &g).unwrap();
        assert_eq!(a.prediction(), b.prediction());
        assert_eq!(a.n_frames(), 6);
        let target = vec![0.3; 30];
        assert_eq!(a.loss(&target).unwrap(), b.loss(&target).unwrap());
    }

    #[test]
    fn own_prediction_has_zero_loss() {
        let m = ToyModel::new(small()).unwrap();
        let f = m.forward(&[4, 0, 36], &[0.0; GS_DIM]).unwrap();
        assert_eq!(f.loss(&f.prediction().to_vec()).unwrap(), 0.0);
        assert!(f.loss(&[0.0; 3]).is_err());
    }

    #[test]
    fn out_of_range_symbol_is_rejected() {
        let m = ToyModel::new(small()).unwrap();
        assert!(matches!(
            m.forward(&[37], &[0.0; GS_DIM]),
            Err(Error::InvalidInput(_))
        ));
        assert!(m.forward(&[], &[0.0; GS_DIM]).is_err());
    }

    #[test]
    fn conditioning_shifts_every_encoder_step_equally() {
        let m = ToyModel::new(small()).unwrap();
        let text = [3, 1, 4, 1, 5];
        let g = [1.0, 0.5, -0.25, 2.0, -1.0, 0.0, 0.75];
        let a = m.forward(&text, &g).unwrap();
        let r = super::super::ref_encode(&g, &m.conditioning());
        let states = a.encoder_states();
        for t in 0..text.len() {
            for j in 0..8 {
                assert_eq!(states.step(t)[j], a.hidden[t * 8 + j] + r[j]);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = ToyModel::new(small()).unwrap();
        m.save(&path).unwrap();
        assert_eq!(ToyModel::load(&path).unwrap(), m);

        let mut ck = m.to_checkpoint();
        ck.groups[2].values.pop();
        assert!(ToyModel::from_checkpoint(&ck).is_err());
    }

    #[test]
    fn group_lookup() {
        let m = ToyModel::new(small()).unwrap();
        assert_eq!(m.group_of(0), ParamGroup::Embedding);
        assert_eq!(m.group_of(m.n_params() - 1), ParamGroup::OutputBias);
        let r = m.group_range(ParamGroup::RefWeight);
        assert_eq!(r.len(), GS_DIM * 8);
        assert_eq!(m.group_of(r.start), ParamGroup::RefWeight);
    }
}
