//! Minibatch training with early stopping on a validation signal.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ingest::N_CHANNELS;
use crate::metrics::auc_of_scores;
use crate::seed::{derive_seed, SplitMix64};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::lstm::{loss_and_grad, mean_bce, predict, LstmModel, SampleRef, DEFAULT_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Monitor {
    #[default]
    ValLoss,
    ValAuc,
}

impl Monitor {
    pub fn name(self) -> &'static str {
        match self {
            Monitor::ValLoss => "val_loss",
            Monitor::ValAuc => "val_auc",
        }
    }
}

impl fmt::Display for Monitor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Monitor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val_loss" => Ok(Monitor::ValLoss),
            "val_auc" => Ok(Monitor::ValAuc),
            other => Err(Error::Config(format!(
                "unknown monitor `{other}` (expected val_loss or val_auc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub hidden: usize,
    pub input_size: usize,
    pub adam: AdamConfig,
    pub monitor: Monitor,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            batch_size: 32,
            max_epochs: 10,
            patience: 3,
            seed,
            shuffle: true,
            hidden: DEFAULT_HIDDEN,
            input_size: N_CHANNELS,
            adam: AdamConfig::default(),
            monitor: Monitor::ValLoss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// `None` when the validation set holds a single class.
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Tracks the best value of a lower-is-better signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: Option<f64>,
    pub best_epoch: usize,
    pub bad_epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            bad_epochs: 0,
        }
    }

    /// Only a strict improvement resets the counter.
    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        let improved = self.best.is_none_or(|b| value < b);
        if improved {
            self.best = Some(value);
            self.best_epoch = epoch;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        StopDecision {
            improved,
            stop: !improved && self.bad_epochs >= self.patience,
        }
    }
}

fn labels_of(samples: &[SampleRef<'_>]) -> Vec<f64> {
    samples.iter().map(|s| s.label).collect()
}

fn validation(model: &LstmModel, val: &[SampleRef<'_>]) -> Result<(f64, Option<f64>)> {
    let probs = predict(model, val)?;
    let labels = labels_of(val);
    let loss = mean_bce(&probs, &labels);
    let bools: Vec<bool> = labels.iter().map(|&y| y > 0.5).collect();
    let auc = auc_of_scores(&probs, &bools).ok();
    Ok((loss, auc))
}

/// Trains from a seeded initialization; see [`train_from`].
pub fn train(
    train_set: &[SampleRef<'_>],
    val_set: &[SampleRef<'_>],
    config: &TrainConfig,
) -> Result<(LstmModel, History)> {
    config.validate()?;
    let static_size = train_set
        .first()
        .ok_or_else(|| Error::Input("empty training set".into()))?
        .static_features
        .len();
    let model = LstmModel::init(
        config.input_size,
        config.hidden,
        static_size,
        derive_seed(config.seed, "train.init", &[]),
    )?;
    train_from(model, train_set, val_set, config)
}

/// Runs the epoch loop from `model` and returns the weights of the best epoch.
pub fn train_from(
    mut model: LstmModel,
    train_set: &[SampleRef<'_>],
    val_set: &[SampleRef<'_>],
    config: &TrainConfig,
) -> Result<(LstmModel, History)> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Input(format!(
            "training needs nonempty splits (train {}, val {})",
            train_set.len(),
            val_set.len()
        )));
    }
    let lengths: Vec<usize> = model.tensors().iter().map(|(_, t)| t.len()).collect();
    let mut adam = AdamState::new(&lengths, config.adam);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        if config.shuffle {
            order.sort_unstable();
            SplitMix64::keyed(config.seed, "train.shuffle", &[epoch as u64]).shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<SampleRef<'_>> = idx.iter().map(|&i| train_set[i]).collect();
            let (loss, grad) = loss_and_grad(&model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}, batch {}",
                    b + 1
                )));
            }
            loss_sum += loss * batch.len() as f64;
            let grads = grad.tensors();
            let mut params = model.tensors_mut();
            adam_step(&mut params, &grads, &mut adam).map_err(|e| match e {
                Error::Training(msg) => {
                    Error::Training(format!("epoch {epoch}, batch {}: {msg}", b + 1))
                }
                other => other,
            })?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_auc) = validation(&model, val_set)?;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_auc,
        });
        let signal = match config.monitor {
            Monitor::ValLoss => val_loss,
            Monitor::ValAuc => -val_auc.ok_or_else(|| {
                Error::Training("val_auc monitor needs both classes in validation".into())
            })?,
        };
        let decision = stopper.observe(epoch, signal);
        if decision.improved {
            best = model.clone();
        }
        if decision.stop {
            stopped_early = epoch < config.max_epochs;
            break;
        }
    }
    Ok((
        best,
        History {
            epochs,
            best_epoch: stopper.best_epoch,
            stopped_early,
        },
    ))
}
