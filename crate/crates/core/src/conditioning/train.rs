use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{SyntheticCorpus, ToyExample};
use super::model::{ToyModel, ToyModelConfig};
use crate::error::{Error, Result};
use crate::features::GS_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    /// Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
    Adam,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        t: i32,
    },
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam { lr, m, v, t } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t);
                let c2 = 1.0 - BETA2.powi(*t);
                for i in 0..params.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    params[i] -= *lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub history: Vec<LossRecord>,
    pub final_val_mse: f64,
    pub conditioned: bool,
}

/// The prosody input actually fed to the model; the unconditioned ablation
/// always sees the zero vector (the normalized corpus mean).
fn model_input(ex: &ToyExample, conditioned: bool) -> [f64; GS_DIM] {
    if conditioned {
        ex.gs_normalized
    } else {
        [0.0; GS_DIM]
    }
}

/// Mean per-example MSE over `examples`.
pub fn evaluate_mse<'a>(
    model: &ToyModel,
    examples: impl IntoIterator<Item = &'a ToyExample>,
    conditioned: bool,
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ex in examples {
        total += model
            .forward(&ex.text, &model_input(ex, conditioned))?
            .loss(&ex.target)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no examples to evaluate"));
    }
    Ok(total / n as f64)
}

/// Mini-batch training from a seeded initialization. Each epoch visits the
/// training examples in a seeded shuffled order; a batch is the next
/// `min(batch_size, n_train)` examples, wrapping into a fresh epoch. With
/// `conditioned = false` the prosody input is replaced by a constant.
pub fn train_toy(
    corpus: &SyntheticCorpus,
    cfg: &ToyModelConfig,
    conditioned: bool,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.train.is_empty() || corpus.validation.is_empty() {
        return Err(Error::invalid(
            "corpus needs training and validation examples",
        ));
    }
    let mut model = ToyModel::new(*cfg)?;
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5ee_d0fb_a7c4);
    let batch = cfg.batch_size.min(corpus.train.len());

    let mut order: Vec<usize> = corpus.train.clone();
    let mut cursor = order.len();
    let mut grad = vec![0.0; model.n_params()];
    let mut history = Vec::with_capacity(cfg.max_steps);

    for step in 1..=cfg.max_steps {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut batch_loss = 0.0;
        for _ in 0..batch {
            if cursor == order.len() {
                for i in (1..order.len()).rev() {
                    order.swap(i, rng.random_range(0..=i));
                }
                cursor = 0;
            }
            let ex = &corpus.examples[order[cursor]];
            cursor += 1;
            let fwd = model.forward(&ex.text, &model_input(ex, conditioned))?;
            batch_loss += fwd.loss(&ex.target)?;
            model.backward(&fwd, &ex.target, 1.0 / batch as f64, &mut grad)?;
        }
        let train_mse = batch_loss / batch as f64;
        if !train_mse.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::TrainingFailed {
                step,
                reason: format!("loss became {train_mse}"),
            });
        }
        optimizer.step(model.params_mut(), &grad);

        let val_mse = if step % cfg.eval_every == 0 || step == cfg.max_steps {
            Some(evaluate_mse(
                &model,
                corpus.validation_examples(),
                conditioned,
            )?)
        } else {
            None
        };
        history.push(LossRecord {
            step,
            train_mse,
            val_mse,
        });
    }

    let final_val_mse = match history.last().and_then(|r| r.val_mse) {
        Some(v) => v,
        None => evaluate_mse(&model, corpus.validation_examples(), conditioned)?,
    };
    if !final_val_mse.is_finite() {
        return Err(Error::TrainingFailed {
            step: cfg.max_steps,
            reason: "validation loss is not finite".into(),
        });
    }
    Ok(TrainOutcome {
        model,
        history,
        final_val_mse,
        conditioned,
    })
}

/// `step,train_mse,val_mse`; `val_mse` is empty on steps without an
/// evaluation.
pub fn loss_history_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("step,train_mse,val_mse\n");
    for r in history {
        match r.val_mse {
            Some(v) => writeln!(out, "{},{},{v}", r.step, r.train_mse),
            None => writeln!(out, "{},{},", r.step, r.train_mse),
        }
        .unwrap();
    }
    out
}

pub fn read_loss_history_csv(text: &str) -> Result<Vec<LossRecord>> {
    let mut lines = text.lines().filter(|l| !l.is_empty());
    if lines.next() != Some("step,train_mse,val_mse") {
        return Err(Error::Parse("unexpected loss history header".into()));
    }
    lines
        .map(|line| {
            let bad = || Error::Parse(format!("loss history line {line:?}"));
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(bad());
            }
            Ok(LossRecord {
                step: cols[0].parse().map_err(|_| bad())?,
                train_mse: cols[1].parse().map_err(|_| bad())?,
                val_mse: match cols[2] {
                    "" => None,
                    v => Some(v.parse().map_err(|_| bad())?),
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::dataset::{make_synthetic_prosody_dataset, SyntheticConfig};

    fn small_corpus() -> SyntheticCorpus {
        make_synthetic_prosody_dataset(&SyntheticConfig {
            n_texts: 6,
            variants_per_text: 4,
            n_mels: 10,
            ..Default::default()
        })
        .unwrap()
    }

    fn small_cfg(max_steps: usize) -> ToyModelConfig {
        ToyModelConfig {
            width: 8,
            n_mels: 10,
            max_steps,
            eval_every: 5,
            batch_size: 4,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_history() {
        let corpus = small_corpus();
        let a = train_toy(&corpus, &small_cfg(20), true).unwrap();
        let b = train_toy(&corpus, &small_cfg(20), true).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn zero_steps_returns_initial_model() {
        let corpus = small_corpus();
        let out = train_toy(&corpus, &small_cfg(0), true).unwrap();
        assert!(out.history.is_empty());
        assert_eq!(out.model, ToyModel::new(small_cfg(0)).unwrap());
        assert!(out.final_val_mse.is_finite());
    }

    #[test]
    fn divergence_is_reported() {
        let corpus = small_corpus();
        let cfg = ToyModelConfig {
            learning_rate: 1e200,
            optimizer: OptimizerKind::Sgd,
            ..small_cfg(50)
        };
        assert!(matches!(
            train_toy(&corpus, &cfg, true),
            Err(Error::TrainingFailed { .. })
        ));
    }

    #[test]
    fn history_csv_round_trip() {
        let corpus = small_corpus();
        let out = train_toy(&corpus, &small_cfg(12), true).unwrap();
        let text = loss_history_csv(&out.history);
        assert!(text.contains("\n5,"));
        assert_eq!(read_loss_history_csv(&text).unwrap(), out.history);
        assert_eq!(loss_history_csv(&[]), "step,train_mse,val_mse\n");
    }
}
