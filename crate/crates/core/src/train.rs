//! Mini-batch training with Adam and the epoch learning-rate schedule.

use std::fmt;
use std::str::FromStr;

use fragnet_tensor::ops::Mode;
use fragnet_tensor::{Scalar, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Network;
use crate::data::WordSet;
use crate::error::{FragError, Result};
use crate::eval::{evaluate_words, predict_word_probs};
use crate::optim::{adam_step, lr_at, word_loss, AdamConfig, AdamState, TrainPlan};

/// One metric-log line: `epoch step loss lr [val_top1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    pub lr: f64,
    pub val_top1: Option<f64>,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {:e}", self.epoch, self.step, self.loss, self.lr)?;
        if let Some(v) = self.val_top1 {
            write!(f, " {v}")?;
        }
        Ok(())
    }
}

impl FromStr for LogRecord {
    type Err = FragError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || FragError::Invalid(format!("bad log line {s:?}"));
        let f: Vec<&str> = s.split_whitespace().collect();
        if !(4..=5).contains(&f.len()) {
            return Err(bad());
        }
        Ok(LogRecord {
            epoch: f[0].parse().map_err(|_| bad())?,
            step: f[1].parse().map_err(|_| bad())?,
            loss: f[2].parse().map_err(|_| bad())?,
            lr: f[3].parse().map_err(|_| bad())?,
            val_top1: f.get(4).map(|v| v.parse()).transpose().map_err(|_| bad())?,
        })
    }
}

/// Network, optimizer state and progress through a [`TrainPlan`].
#[derive(Debug, Clone)]
pub struct Trainer<T: Scalar = f32> {
    pub network: Network<T>,
    pub adam: AdamState<T>,
    pub plan: TrainPlan,
    /// Next epoch to run.
    pub epoch: usize,
    pub step: u64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(network: Network<T>, plan: TrainPlan) -> Result<Self> {
        plan.validate()?;
        let adam = AdamState::new(network.params(), AdamConfig::default());
        Ok(Trainer {
            network,
            adam,
            plan,
            epoch: 0,
            step: 0,
        })
    }

    /// Forward and backward pass of one batch; gradients are left on the
    /// parameters. Returns the batch loss.
    pub fn compute_gradients(&self, images: &Tensor<T>, labels: &[usize]) -> Result<f64> {
        let writers = self.network.config().writers;
        if let Some(&bad) = labels.iter().find(|&&l| l >= writers) {
            return Err(FragError::Config(format!("label {bad} out of range for {writers} writers")));
        }
        let out = self.network.forward(images, Mode::Train)?;
        let loss = word_loss(&out.logits, out.fragments, labels)?;
        let value = loss.item().as_f64();
        if !value.is_finite() {
            return Err(FragError::NonFinite(format!("training loss at step {}", self.step + 1)));
        }
        loss.backward()?;
        Ok(value)
    }

    /// One optimizer step on a batch at the given rate.
    pub fn train_step(&mut self, images: &Tensor<T>, labels: &[usize], rate: f64) -> Result<f64> {
        let loss = self.compute_gradients(images, labels)?;
        adam_step(self.network.params(), &mut self.adam, rate)?;
        self.step += 1;
        Ok(loss)
    }

    /// Shuffled item order for an epoch, a pure function of seed and epoch.
    pub fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        let seed = self.plan.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        order
    }

    /// Runs the next epoch; returns its log record (without validation).
    pub fn run_epoch(&mut self, data: &WordSet) -> Result<LogRecord> {
        if data.is_empty() {
            return Err(FragError::Invalid("training set is empty".into()));
        }
        let epoch = self.epoch;
        let lr = lr_at(&self.plan, epoch)?;
        let order = self.epoch_order(data.len(), epoch);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.plan.batch_size) {
            let (images, labels) = data.batch::<T>(chunk);
            total += self.train_step(&images, &labels, lr)?;
            batches += 1;
        }
        self.epoch += 1;
        Ok(LogRecord {
            epoch,
            step: self.step,
            loss: total / batches as f64,
            lr,
            val_top1: None,
        })
    }

    /// Trains the remaining epochs of the plan. `on_epoch` sees each record
    /// after validation, e.g. to log it or write a checkpoint.
    pub fn fit<F>(&mut self, data: &WordSet, validation: Option<&WordSet>, mut on_epoch: F) -> Result<Vec<LogRecord>>
    where
        F: FnMut(&Trainer<T>, &LogRecord) -> Result<()>,
    {
        let mut log = Vec::new();
        while self.epoch < self.plan.epochs {
            let mut record = self.run_epoch(data)?;
            if let Some(val) = validation {
                let probs = predict_word_probs(&self.network, val, self.plan.batch_size)?;
                record.val_top1 = Some(evaluate_words(&probs, val)?.top1);
            }
            on_epoch(self, &record)?;
            log.push(record);
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_line_round_trip() {
        let r = LogRecord {
            epoch: 3,
            step: 40,
            loss: 1.25,
            lr: 5e-5,
            val_top1: Some(87.5),
        };
        assert_eq!(r.to_string(), "3 40 1.25 5e-5 87.5");
        assert_eq!(r.to_string().parse::<LogRecord>().unwrap(), r);
        let r = LogRecord { val_top1: None, ..r };
        assert_eq!(r.to_string().parse::<LogRecord>().unwrap(), r);
        assert!("1 2 x 3".parse::<LogRecord>().is_err());
    }
}
